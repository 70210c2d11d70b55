#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "lpr/buffer.hpp"
#include "lpr/rng.hpp"

using namespace lpr;

namespace {

// One-row batch whose single feature encodes the item id.
Matrix tagged_row(double id) {
    Matrix x(1, 1);
    x(0, 0) = id;
    return x;
}

}  // namespace

TEST_CASE("buffer fills up to capacity in arrival order") {
    ReplayBuffer buf(4);
    SplitMix64 rng(31);
    for (int i = 0; i < 4; ++i) buf.update(tagged_row(i), {i}, rng);
    REQUIRE(buf.size() == 4);
    REQUIRE(buf.seen() == 4);
    for (int i = 0; i < 4; ++i) {
        REQUIRE(buf.items()[i].features[0] == static_cast<double>(i));
        REQUIRE(buf.items()[i].label == i);
    }
}

TEST_CASE("buffer never exceeds capacity") {
    ReplayBuffer buf(8);
    SplitMix64 rng(32);
    for (int i = 0; i < 500; ++i) buf.update(tagged_row(i), {0}, rng);
    REQUIRE(buf.size() == 8);
    REQUIRE(buf.seen() == 500);
}

TEST_CASE("unlimited buffer keeps everything in order") {
    ReplayBuffer buf(unlimited_capacity);
    SplitMix64 rng(33);
    for (int i = 0; i < 200; ++i) buf.update(tagged_row(i), {i % 3}, rng);
    REQUIRE(buf.size() == 200);
    for (int i = 0; i < 200; ++i) REQUIRE(buf.items()[i].features[0] == static_cast<double>(i));
}

TEST_CASE("buffer rejects zero capacity and mismatched widths") {
    REQUIRE_THROWS_AS(ReplayBuffer(0), input_error);
    ReplayBuffer buf(4);
    SplitMix64 rng(34);
    buf.update(Matrix(1, 3), {0}, rng);
    REQUIRE_THROWS_AS(buf.update(Matrix(1, 2), {0}, rng), shape_error);
    REQUIRE_THROWS_AS(buf.update(Matrix(2, 3), {0}, rng), shape_error);
}

TEST_CASE("long-run inclusion probability matches capacity over stream length") {
    // Offer N items to a capacity-c reservoir many times and track how often
    // one fixed item survives. The survival rate must sit within three
    // standard errors of c/N.
    const std::size_t c = 10;
    const int N = 100;
    const int trials = 20000;
    const double p = static_cast<double>(c) / N;
    const double sigma = std::sqrt(p * (1.0 - p) / trials);
    int hits = 0;
    for (int t = 0; t < trials; ++t) {
        SplitMix64 rng(derive_seed(777, static_cast<std::uint64_t>(t)));
        ReplayBuffer buf(c);
        for (int i = 0; i < N; ++i) buf.update(tagged_row(i), {0}, rng);
        for (const BufferItem& item : buf.items())
            if (item.features[0] == 17.0) {
                ++hits;
                break;
            }
    }
    const double rate = static_cast<double>(hits) / trials;
    INFO("rate=" << rate << " expected=" << p << " 3sigma=" << 3.0 * sigma);
    REQUIRE(std::abs(rate - p) < 3.0 * sigma);
}

TEST_CASE("sample draws distinct items and clamps to size") {
    ReplayBuffer buf(16);
    SplitMix64 rng(35);
    for (int i = 0; i < 16; ++i) buf.update(tagged_row(i), {i}, rng);

    const BufferSample s = buf.sample(8, rng);
    REQUIRE(s.x.rows == 8);
    REQUIRE(s.y.size() == 8);
    std::set<double> distinct;
    for (std::size_t i = 0; i < 8; ++i) {
        distinct.insert(s.x(i, 0));
        REQUIRE(s.y[i] == static_cast<int>(s.x(i, 0)));  // labels travel with features
    }
    REQUIRE(distinct.size() == 8);

    const BufferSample all = buf.sample(100, rng);  // more than stored -> everything
    REQUIRE(all.x.rows == 16);

    const BufferSample none = buf.sample(0, rng);
    REQUIRE(none.x.rows == 0);
}

TEST_CASE("sample on an empty buffer returns zero rows") {
    ReplayBuffer buf(4);
    SplitMix64 rng(36);
    const BufferSample s = buf.sample(5, rng);
    REQUIRE(s.x.rows == 0);
    REQUIRE(s.y.empty());
}

TEST_CASE("sample is uniform enough over many draws") {
    ReplayBuffer buf(10);
    SplitMix64 fill(37);
    for (int i = 0; i < 10; ++i) buf.update(tagged_row(i), {0}, fill);
    SplitMix64 rng(38);
    std::vector<int> counts(10, 0);
    const int draws = 20000;
    for (int t = 0; t < draws; ++t) {
        const BufferSample s = buf.sample(3, rng);
        for (std::size_t i = 0; i < s.x.rows; ++i) ++counts[static_cast<int>(s.x(i, 0))];
    }
    const double expect = draws * 3.0 / 10.0;  // 6000 per item
    for (int cnt : counts) REQUIRE(std::abs(cnt - expect) < 5.0 * std::sqrt(expect));
}

TEST_CASE("same seed reproduces buffer contents and samples") {
    auto run = [](std::uint64_t seed) {
        ReplayBuffer buf(6);
        SplitMix64 rng(seed);
        for (int i = 0; i < 50; ++i) buf.update(tagged_row(i), {i}, rng);
        return buf.sample(4, rng);
    };
    const BufferSample a = run(99), b = run(99);
    REQUIRE(max_abs_diff(a.x, b.x) == 0.0);
    REQUIRE(a.y == b.y);
}

TEST_CASE("sample_for_preconditioner full fraction returns storage order without rng") {
    ReplayBuffer buf(5);
    SplitMix64 rng(40);
    for (int i = 0; i < 5; ++i) buf.update(tagged_row(i), {0}, rng);
    SplitMix64 probe_a(41), probe_b(41);
    const Matrix rows = buf.sample_for_preconditioner(1.0, probe_a);
    REQUIRE(rows.rows == 5);
    for (int i = 0; i < 5; ++i) REQUIRE(rows(i, 0) == static_cast<double>(i));
    REQUIRE(probe_a.next_u64() == probe_b.next_u64());  // generator untouched
}

TEST_CASE("sample_for_preconditioner fractional row count rounds up") {
    ReplayBuffer buf(10);
    SplitMix64 rng(42);
    for (int i = 0; i < 10; ++i) buf.update(tagged_row(i), {0}, rng);
    REQUIRE(buf.sample_for_preconditioner(0.25, rng).rows == 3);  // ceil(2.5)
    REQUIRE(buf.sample_for_preconditioner(0.05, rng).rows == 1);
    REQUIRE_THROWS_AS(buf.sample_for_preconditioner(0.0, rng), input_error);
    REQUIRE_THROWS_AS(buf.sample_for_preconditioner(1.5, rng), input_error);
    REQUIRE_THROWS_AS(buf.sample_for_preconditioner(-0.1, rng), input_error);
}

TEST_CASE("sample_for_preconditioner on empty buffer returns zero rows") {
    ReplayBuffer buf(4);
    SplitMix64 rng(43);
    REQUIRE(buf.sample_for_preconditioner(0.5, rng).rows == 0);
}
