#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "lpr/metrics.hpp"
#include "lpr/rng.hpp"

using namespace lpr;

namespace {

EvalRecord rec(long tau, std::vector<double> acc) {
    EvalRecord r;
    r.tau = tau;
    r.per_task_acc = std::move(acc);
    return r;
}

// Independent straightforward reimplementations used as oracles for
// randomized logs. Written as directly as possible from the definitions.
double oracle_final(const RunLog& log) {
    double s = 0.0;
    for (double a : log.records.back().per_task_acc) s += a;
    return s / log.records.back().per_task_acc.size();
}

double oracle_aaa(const RunLog& log) {
    double s = 0.0;
    for (const auto& r : log.records) {
        double m = 0.0;
        for (double a : r.per_task_acc) m += a;
        s += m / r.per_task_acc.size();
    }
    return s / log.records.size();
}

double oracle_wc(const RunLog& log) {
    const std::size_t k = log.records.back().per_task_acc.size();
    double total = log.records.back().per_task_acc[k - 1];
    for (std::size_t i = 0; i + 1 < k; ++i) {
        double worst = 2.0;
        for (const auto& r : log.records)
            if (r.tau > log.task_boundaries[i] && r.per_task_acc.size() > i)
                worst = std::min(worst, r.per_task_acc[i]);
        total += worst;
    }
    return total / k;
}

RunLog random_log(SplitMix64& rng) {
    RunLog log;
    const int k = 2 + static_cast<int>(rng.next_below(3));  // 2..4 tasks
    long tau = 0;
    for (int task = 0; task < k; ++task) {
        const int segment = 1 + static_cast<int>(rng.next_below(4));  // records while this task is newest
        for (int s = 0; s < segment; ++s) {
            std::vector<double> acc(task + 1);
            for (double& a : acc) a = rng.next_double();
            log.records.push_back(rec(++tau, std::move(acc)));
        }
        log.task_boundaries.push_back(tau);
    }
    log.eval_cadence = 1;
    return log;
}

}  // namespace

TEST_CASE("final_acc hand fixtures") {
    RunLog one;
    one.records.push_back(rec(1, {0.8}));
    REQUIRE(final_acc(one) == 0.8);

    RunLog two;
    two.records.push_back(rec(1, {0.5}));
    two.records.push_back(rec(2, {0.6, 0.8}));
    REQUIRE(final_acc(two) == Catch::Approx(0.7).margin(1e-15));

    RunLog perfect;
    perfect.records.push_back(rec(1, {1.0, 1.0, 1.0}));
    REQUIRE(final_acc(perfect) == 1.0);

    REQUIRE_THROWS_AS(final_acc(RunLog{}), input_error);
}

TEST_CASE("average_anytime_acc hand fixtures") {
    RunLog single;
    single.records.push_back(rec(1, {0.5}));
    single.records.push_back(rec(2, {0.7}));
    REQUIRE(average_anytime_acc(single) == Catch::Approx(0.6).margin(1e-15));

    RunLog constant;
    for (long t = 1; t <= 5; ++t) constant.records.push_back(rec(t, {0.3, 0.3}));
    REQUIRE(average_anytime_acc(constant) == Catch::Approx(0.3).margin(1e-15));

    RunLog nested;
    nested.records.push_back(rec(1, {0.5}));
    nested.records.push_back(rec(2, {0.4, 0.8}));
    REQUIRE(average_anytime_acc(nested) == Catch::Approx(0.55).margin(1e-15));
}

TEST_CASE("log validation catches malformed records") {
    RunLog bad;
    bad.records.push_back(rec(1, {0.5, 0.5}));
    bad.records.push_back(rec(2, {0.5}));  // a task disappeared
    REQUIRE_THROWS_AS(average_anytime_acc(bad), input_error);

    RunLog unsorted;
    unsorted.records.push_back(rec(2, {0.5}));
    unsorted.records.push_back(rec(1, {0.5}));
    REQUIRE_THROWS_AS(final_acc(unsorted), input_error);

    RunLog out_of_range;
    out_of_range.records.push_back(rec(1, {1.5}));
    REQUIRE_THROWS_AS(final_acc(out_of_range), input_error);

    RunLog empty_acc;
    empty_acc.records.push_back(rec(1, {}));
    REQUIRE_THROWS_AS(final_acc(empty_acc), input_error);
}

TEST_CASE("worst_case_acc single task equals final accuracy") {
    RunLog log;
    log.records.push_back(rec(1, {0.4}));
    log.records.push_back(rec(2, {0.9}));
    log.task_boundaries = {2};
    REQUIRE(worst_case_acc(log) == final_acc(log));
}

TEST_CASE("worst_case_acc two-task hand fixture") {
    RunLog log;
    log.records.push_back(rec(1, {0.7}));
    log.records.push_back(rec(2, {0.9}));       // end of task 1
    log.records.push_back(rec(3, {0.5, 0.6}));
    log.records.push_back(rec(4, {0.4, 0.8}));  // task-1 worst after its boundary: 0.4
    log.task_boundaries = {2, 4};
    REQUIRE(worst_case_acc(log) == Catch::Approx(0.6).margin(1e-15));  // (0.8 + 0.4)/2
}

TEST_CASE("worst_case_acc window excludes the boundary point itself") {
    RunLog log;
    log.records.push_back(rec(2, {0.1}));       // AT the boundary: end-of-task measurement
    log.records.push_back(rec(3, {0.5, 0.6}));
    log.records.push_back(rec(4, {0.4, 0.8}));
    log.task_boundaries = {2, 4};
    // The 0.1 at tau == 2 is task 1's end-of-task accuracy, not part of its
    // forgetting window; the window starts strictly after the boundary.
    REQUIRE(worst_case_acc(log) == Catch::Approx(0.6).margin(1e-15));
}

TEST_CASE("worst_case_acc with nondecreasing accuracies uses each window's first point") {
    RunLog log;
    log.records.push_back(rec(1, {0.5}));
    log.records.push_back(rec(2, {0.3, 0.6}));
    log.records.push_back(rec(3, {0.4, 0.7}));
    log.records.push_back(rec(4, {0.5, 0.9}));
    log.task_boundaries = {1, 4};
    // Task-1 window covers tau 2..4 where its accuracy rises 0.3 -> 0.5.
    REQUIRE(worst_case_acc(log) == Catch::Approx((0.9 + 0.3) / 2.0).margin(1e-15));
}

TEST_CASE("worst_case_acc demands evaluation points after every boundary") {
    RunLog log;
    log.records.push_back(rec(1, {0.5}));
    log.records.push_back(rec(2, {0.4, 0.6}));
    log.task_boundaries = {2, 4};  // boundary of task 1 sits after the last record
    REQUIRE_THROWS_AS(worst_case_acc(log), input_error);

    RunLog missing;
    missing.records.push_back(rec(1, {0.5, 0.5}));
    missing.task_boundaries = {};  // no boundary recorded for the first task
    REQUIRE_THROWS_AS(worst_case_acc(missing), input_error);
}

TEST_CASE("metrics agree with independent oracles on randomized logs") {
    SplitMix64 rng(401);
    for (int t = 0; t < 50; ++t) {
        const RunLog log = random_log(rng);
        REQUIRE(final_acc(log) == Catch::Approx(oracle_final(log)).margin(1e-14));
        REQUIRE(average_anytime_acc(log) == Catch::Approx(oracle_aaa(log)).margin(1e-14));
        REQUIRE(worst_case_acc(log) == Catch::Approx(oracle_wc(log)).margin(1e-14));
    }
}

TEST_CASE("representation_drift fixtures") {
    const std::vector<double> base = {1.0, 2.0, 3.0};
    REQUIRE(representation_drift({base, base, base}) == 0.0);

    std::vector<double> moved = base;
    moved[1] += 1.0;
    REQUIRE(representation_drift({base, moved}) == Catch::Approx(1.0).margin(1e-15));

    // Triangle inequality: total path length bounds the direct displacement.
    SplitMix64 rng(402);
    std::vector<std::vector<double>> series;
    for (int s = 0; s < 6; ++s) {
        std::vector<double> v(4);
        for (double& x : v) x = rng.next_uniform(-2.0, 2.0);
        series.push_back(std::move(v));
    }
    double direct = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
        const double d = series.back()[c] - series.front()[c];
        direct += d * d;
    }
    REQUIRE(representation_drift(series) >= std::sqrt(direct) - 1e-12);

    REQUIRE_THROWS_AS(representation_drift({base}), input_error);
    REQUIRE_THROWS_AS(representation_drift({base, {1.0, 2.0}}), shape_error);
}

TEST_CASE("total_variation fixtures") {
    REQUIRE(total_variation({0.4, 0.4, 0.4}) == 0.0);
    REQUIRE(total_variation({0.2, 0.5, 0.3}) == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(total_variation({0.1, 0.2, 0.6, 0.9}) == Catch::Approx(0.8).margin(1e-15));  // monotone
    REQUIRE_THROWS_AS(total_variation({0.5}), input_error);
    REQUIRE_THROWS_AS(total_variation({}), input_error);
}

TEST_CASE("grad_norm_ratio with identity preconditioner is exactly 1") {
    SplitMix64 rng(403);
    const Network net = make_network({3, 4, 2}, rng);
    const PreconditionerState state = make_preconditioner_state(net, 10, 1.0);
    Gradients g = zeros_like(net);
    for (Matrix& m : g.g)
        for (double& v : m.data) v = rng.next_uniform(-1.0, 1.0);
    const GradNormRatio r = grad_norm_ratio(g, state);
    REQUIRE(r.valid);
    REQUIRE(r.aggregate == 1.0);
    for (double pl : r.per_layer) REQUIRE(pl == 1.0);
}

TEST_CASE("grad_norm_ratio hand case") {
    PreconditionerState state;
    state.lambdas.push_back(identity(2));
    state.lambdas[0](0, 0) = 0.5;
    Gradients g;
    g.g.emplace_back(2, 2);
    g.g[0](0, 0) = 2.0;
    g.g[0](1, 1) = 2.0;
    const GradNormRatio r = grad_norm_ratio(g, state);
    REQUIRE(r.valid);
    REQUIRE(r.aggregate == Catch::Approx(std::sqrt(5.0) / std::sqrt(8.0)).margin(1e-14));
    REQUIRE(r.per_layer[0] == Catch::Approx(std::sqrt(5.0 / 8.0)).margin(1e-14));
}

TEST_CASE("grad_norm_ratio flags zero gradients") {
    SplitMix64 rng(404);
    const Network net = make_network({3, 4, 2}, rng);
    const PreconditionerState state = make_preconditioner_state(net, 10, 1.0);
    const Gradients zero = zeros_like(net);
    const GradNormRatio r = grad_norm_ratio(zero, state);
    REQUIRE_FALSE(r.valid);
    REQUIRE(std::isnan(r.aggregate));
    for (double pl : r.per_layer) REQUIRE(std::isnan(pl));

    // One live layer keeps the aggregate valid; the dead layer stays NaN.
    Gradients mixed = zeros_like(net);
    mixed.g[0](0, 0) = 1.0;
    const GradNormRatio m = grad_norm_ratio(mixed, state);
    REQUIRE(m.valid);
    REQUIRE(m.per_layer[0] == 1.0);
    REQUIRE(std::isnan(m.per_layer[1]));
}

TEST_CASE("grad_norm_ratio stays in (0,1] for replay-built preconditioners") {
    SplitMix64 rng(405);
    for (int t = 0; t < 10; ++t) {
        const Network net = make_network({4, 6, 3}, rng);
        PreconditionerState state = make_preconditioner_state(net, 10, 1.0);
        Matrix x(8, 4);
        for (double& v : x.data) v = rng.next_uniform(-1.0, 1.0);
        const ForwardTrace trace = forward(net, x);
        const OmegaConfig cfg{rng.next_uniform(0.01, 10.0), 1.0};
        for (std::size_t l = 0; l < net.layers.size(); ++l)
            state.lambdas[l] = build_lambda(trace.z[l], layer_omega(cfg, 1, x.rows));
        Gradients g = zeros_like(net);
        for (Matrix& m : g.g)
            for (double& v : m.data) v = rng.next_uniform(-1.0, 1.0);
        const GradNormRatio r = grad_norm_ratio(g, state);
        REQUIRE(r.valid);
        REQUIRE(r.aggregate > 0.0);
        REQUIRE(r.aggregate <= 1.0);
        REQUIRE(r.aggregate < 1.0);  // random gradients always excite the sampled span
    }
}
