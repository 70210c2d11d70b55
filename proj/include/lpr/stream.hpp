#pragma once

// Deterministic synthetic data streams for online continual learning.
//
// A stream is an ordered list of small batches grouped into tasks. Within a
// task, batches are i.i.d. draws from fixed Gaussian class clusters; across
// tasks the distribution changes — either brand-new classes appear
// (class-incremental) or the same classes drift through input space
// (domain-incremental). Every draw comes from one SplitMix64 generator in a
// documented order, so a given spec+seed reproduces the stream bit for bit:
//   1. class means, in global class order (rejection-sampled for separation)
//   2. the task-order permutation (when shuffling is enabled)
//   3. per task position, every training batch (per sample: one label draw,
//      then input_dim normal draws)
//   4. per task position, the validation set then the test set (same
//      per-sample order)

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lpr/errors.hpp"
#include "lpr/matrix.hpp"
#include "lpr/rng.hpp"

namespace lpr {

struct SplitGaussianSpec {
    int num_tasks = 5;
    int classes_per_task = 2;
    std::size_t input_dim = 32;
    double cluster_separation = 3.0;  // minimum pairwise distance between class means
    double cluster_std = 1.0;         // isotropic within-class standard deviation
    int batches_per_task = 200;
    std::size_t n_tau = 10;           // samples per batch, constant across the stream
    std::uint64_t seed = 1;
    std::size_t eval_points_per_task = 200;
    bool shuffle_task_order = true;
    // Domain-incremental knobs: per task step, means rotate in the first two
    // coordinates and translate along a fixed random direction.
    double drift_magnitude = 0.0;
    double drift_rotation = 0.0;
};

struct TaskStream {
    std::vector<Matrix> batch_x;
    std::vector<std::vector<int>> batch_y;
    std::vector<int> task_of_batch;       // nondecreasing task position per batch
    std::vector<long> task_boundaries;    // 1-based index of each task's last batch
    std::size_t n_tau = 0;
    int total_classes = 0;

    std::size_t size() const { return batch_x.size(); }
};

struct EvalSet {
    Matrix x;
    std::vector<int> y;
};

struct StreamData {
    TaskStream stream;
    std::vector<EvalSet> val;   // drives accuracy tracking during the run
    std::vector<EvalSet> test;  // drives the final report
    std::vector<std::vector<std::vector<double>>> task_means;  // [task][slot] -> mean vector
    std::vector<std::vector<int>> task_labels;                 // [task][slot] -> class label
};

struct BatchView {
    const Matrix* x = nullptr;
    const std::vector<int>* y = nullptr;
    int task = 0;
    bool new_task = false;
    long tau = 0;  // 1-based batch index
};

inline void validate(const SplitGaussianSpec& spec) {
    if (spec.num_tasks < 1) throw input_error("stream spec: num_tasks must be >= 1");
    if (spec.classes_per_task < 1) throw input_error("stream spec: classes_per_task must be >= 1");
    if (spec.input_dim == 0) throw input_error("stream spec: input_dim must be >= 1");
    if (!(spec.cluster_separation > 0.0)) throw input_error("stream spec: cluster_separation must be > 0");
    if (!(spec.cluster_std > 0.0)) throw input_error("stream spec: cluster_std must be > 0");
    if (spec.batches_per_task < 1) throw input_error("stream spec: batches_per_task must be >= 1");
    if (spec.n_tau == 0) throw input_error("stream spec: n_tau must be >= 1");
    if (spec.eval_points_per_task == 0) throw input_error("stream spec: eval_points_per_task must be >= 1");
}

namespace detail {

// Means drawn uniformly in a box of half-width 3x the requested separation;
// candidates closer than the separation to an accepted mean are rejected and
// redrawn, up to a bounded number of attempts. The fixed box keeps the
// geometry predictable: many classes in a low dimension genuinely cannot be
// packed and fail fast with a clear error instead of degrading silently.
inline std::vector<std::vector<double>> draw_means(int count, const SplitGaussianSpec& spec,
                                                   SplitMix64& rng) {
    const double box = 3.0 * spec.cluster_separation;
    std::vector<std::vector<double>> means;
    means.reserve(count);
    long attempts = 0;
    const long max_attempts = 1000L * count + 1000L;
    while (static_cast<int>(means.size()) < count) {
        if (++attempts > max_attempts)
            throw generation_error("stream: could not place " + std::to_string(count) +
                                   " class means at separation " + std::to_string(spec.cluster_separation) +
                                   " in dimension " + std::to_string(spec.input_dim) + " after " +
                                   std::to_string(max_attempts) + " attempts");
        std::vector<double> cand(spec.input_dim);
        for (double& v : cand) v = rng.next_uniform(-box, box);
        bool ok = true;
        for (const auto& m : means) {
            double d2 = 0.0;
            for (std::size_t i = 0; i < cand.size(); ++i) {
                const double diff = cand[i] - m[i];
                d2 += diff * diff;
            }
            if (d2 < spec.cluster_separation * spec.cluster_separation) {
                ok = false;
                break;
            }
        }
        if (ok) means.push_back(std::move(cand));
    }
    return means;
}

inline void fill_samples(Matrix& x, std::vector<int>& y, std::size_t count,
                         const std::vector<std::vector<double>>& means, const std::vector<int>& labels,
                         double std_dev, SplitMix64& rng) {
    for (std::size_t s = 0; s < count; ++s) {
        const std::size_t slot = static_cast<std::size_t>(rng.next_below(means.size()));
        y[s] = labels[slot];
        for (std::size_t c = 0; c < x.cols; ++c)
            x(s, c) = means[slot][c] + std_dev * rng.next_normal();
    }
}

inline StreamData assemble(const SplitGaussianSpec& spec,
                           const std::vector<std::vector<std::vector<double>>>& task_means,
                           const std::vector<std::vector<int>>& task_labels, int total_classes,
                           SplitMix64& rng) {
    StreamData data;
    data.task_means = task_means;
    data.task_labels = task_labels;
    data.stream.n_tau = spec.n_tau;
    data.stream.total_classes = total_classes;
    const int K = spec.num_tasks;
    long tau = 0;
    for (int t = 0; t < K; ++t) {
        for (int b = 0; b < spec.batches_per_task; ++b) {
            Matrix x(spec.n_tau, spec.input_dim);
            std::vector<int> y(spec.n_tau);
            fill_samples(x, y, spec.n_tau, task_means[t], task_labels[t], spec.cluster_std, rng);
            data.stream.batch_x.push_back(std::move(x));
            data.stream.batch_y.push_back(std::move(y));
            data.stream.task_of_batch.push_back(t);
            ++tau;
        }
        data.stream.task_boundaries.push_back(tau);
    }
    for (int t = 0; t < K; ++t) {
        EvalSet val;
        val.x = Matrix(spec.eval_points_per_task, spec.input_dim);
        val.y.resize(spec.eval_points_per_task);
        fill_samples(val.x, val.y, spec.eval_points_per_task, task_means[t], task_labels[t],
                     spec.cluster_std, rng);
        data.val.push_back(std::move(val));
        EvalSet test;
        test.x = Matrix(spec.eval_points_per_task, spec.input_dim);
        test.y.resize(spec.eval_points_per_task);
        fill_samples(test.x, test.y, spec.eval_points_per_task, task_means[t], task_labels[t],
                     spec.cluster_std, rng);
        data.test.push_back(std::move(test));
    }
    return data;
}

}  // namespace detail

// Class-incremental stream: every task introduces classes_per_task brand-new
// labels, so the label sets are disjoint and their union covers
// num_tasks * classes_per_task classes.
inline StreamData generate_class_incremental(const SplitGaussianSpec& spec) {
    validate(spec);
    SplitMix64 rng(spec.seed);
    const int total = spec.num_tasks * spec.classes_per_task;
    const auto means = detail::draw_means(total, spec, rng);

    std::vector<int> order(spec.num_tasks);
    for (int t = 0; t < spec.num_tasks; ++t) order[t] = t;
    if (spec.shuffle_task_order && spec.num_tasks > 1) {
        for (int i = 0; i < spec.num_tasks - 1; ++i) {
            const int j = i + static_cast<int>(rng.next_below(spec.num_tasks - i));
            std::swap(order[i], order[j]);
        }
    }

    std::vector<std::vector<std::vector<double>>> task_means(spec.num_tasks);
    std::vector<std::vector<int>> task_labels(spec.num_tasks);
    for (int pos = 0; pos < spec.num_tasks; ++pos) {
        for (int c = 0; c < spec.classes_per_task; ++c) {
            const int cls = order[pos] * spec.classes_per_task + c;  // global label
            task_means[pos].push_back(means[cls]);
            task_labels[pos].push_back(cls);
        }
    }
    return detail::assemble(spec, task_means, task_labels, total, rng);
}

// Domain-incremental stream: a fixed label set whose class means move a
// deterministic step per task — a rotation in the first two coordinates plus
// a translation along one fixed random direction. Zero drift makes every
// task identical.
inline StreamData generate_domain_incremental(const SplitGaussianSpec& spec) {
    validate(spec);
    SplitMix64 rng(spec.seed);
    const int C = spec.classes_per_task;
    const auto base = detail::draw_means(C, spec, rng);

    std::vector<double> dir(spec.input_dim, 0.0);
    double norm = 0.0;
    for (double& v : dir) {
        v = rng.next_normal();
        norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0)
        for (double& v : dir) v /= norm;

    std::vector<std::vector<std::vector<double>>> task_means(spec.num_tasks);
    std::vector<std::vector<int>> task_labels(spec.num_tasks);
    for (int t = 0; t < spec.num_tasks; ++t) {
        const double angle = t * spec.drift_rotation;
        const double cs = std::cos(angle), sn = std::sin(angle);
        for (int c = 0; c < C; ++c) {
            std::vector<double> m = base[c];
            if (spec.input_dim >= 2) {
                const double x0 = m[0], x1 = m[1];
                m[0] = cs * x0 - sn * x1;
                m[1] = sn * x0 + cs * x1;
            }
            for (std::size_t i = 0; i < m.size(); ++i) m[i] += t * spec.drift_magnitude * dir[i];
            task_means[t].push_back(std::move(m));
            task_labels[t].push_back(c);
        }
    }
    return detail::assemble(spec, task_means, task_labels, C, rng);
}

// Single-consumer iteration: yields each batch exactly once, flags task
// boundaries for metric bookkeeping (never for the optimizer — methods must
// not condition on task identity), and signals exhaustion with nullopt.
inline std::optional<BatchView> next_batch(const TaskStream& stream, std::size_t& cursor) {
    if (cursor >= stream.size()) return std::nullopt;
    BatchView view;
    view.x = &stream.batch_x[cursor];
    view.y = &stream.batch_y[cursor];
    view.task = stream.task_of_batch[cursor];
    view.new_task = cursor == 0 || stream.task_of_batch[cursor] != stream.task_of_batch[cursor - 1];
    view.tau = static_cast<long>(cursor) + 1;
    ++cursor;
    return view;
}

// Text-table round trip: a commented header carrying the stream geometry,
// then one row per sample (task, 1-based batch index, label, features).
inline void export_stream(const TaskStream& stream, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw input_error("export_stream: cannot open " + path + " for writing");
    out << "# n_tau " << stream.n_tau << " total_classes " << stream.total_classes << " batches "
        << stream.size() << "\n";
    out.precision(17);
    for (std::size_t b = 0; b < stream.size(); ++b) {
        for (std::size_t s = 0; s < stream.batch_x[b].rows; ++s) {
            out << stream.task_of_batch[b] << ' ' << (b + 1) << ' ' << stream.batch_y[b][s];
            for (std::size_t c = 0; c < stream.batch_x[b].cols; ++c) out << ' ' << stream.batch_x[b](s, c);
            out << '\n';
        }
    }
    if (!out) throw input_error("export_stream: write to " + path + " failed");
}

inline TaskStream import_stream(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("import_stream: cannot open " + path);
    std::string line;
    TaskStream stream;
    std::size_t expected_batches = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream hs(line.substr(1));
            std::string key;
            while (hs >> key) {
                if (key == "n_tau")
                    hs >> stream.n_tau;
                else if (key == "total_classes")
                    hs >> stream.total_classes;
                else if (key == "batches")
                    hs >> expected_batches;
            }
            have_header = true;
            continue;
        }
        if (!have_header) throw input_error("import_stream: missing header line in " + path);
        std::istringstream ls(line);
        int task = 0;
        std::size_t batch = 0;
        int label = 0;
        if (!(ls >> task >> batch >> label))
            throw input_error("import_stream: malformed row in " + path + ": " + line);
        std::vector<double> feats;
        double v;
        while (ls >> v) feats.push_back(v);
        if (feats.empty()) throw input_error("import_stream: row without features in " + path);
        if (batch == 0 || batch > expected_batches)
            throw input_error("import_stream: batch index " + std::to_string(batch) + " out of range");
        while (stream.batch_x.size() < batch) {
            stream.batch_x.emplace_back(0, feats.size());
            stream.batch_y.emplace_back();
            stream.task_of_batch.push_back(task);
        }
        Matrix& bx = stream.batch_x[batch - 1];
        if (bx.cols != feats.size())
            throw input_error("import_stream: inconsistent feature width in " + path);
        Matrix grown(bx.rows + 1, bx.cols);
        std::copy(bx.data.begin(), bx.data.end(), grown.data.begin());
        for (std::size_t c = 0; c < feats.size(); ++c) grown(bx.rows, c) = feats[c];
        bx = std::move(grown);
        stream.batch_y[batch - 1].push_back(label);
        stream.task_of_batch[batch - 1] = task;
    }
    if (stream.batch_x.empty()) throw input_error("import_stream: no samples in " + path);
    for (std::size_t b = 0; b < stream.size(); ++b) {
        if (stream.batch_x[b].rows != stream.n_tau)
            throw input_error("import_stream: batch " + std::to_string(b + 1) + " has " +
                              std::to_string(stream.batch_x[b].rows) + " rows, expected " +
                              std::to_string(stream.n_tau));
    }
    for (std::size_t b = 1; b < stream.size(); ++b)
        if (stream.task_of_batch[b] < stream.task_of_batch[b - 1])
            throw input_error("import_stream: task indices must be nondecreasing");
    for (std::size_t b = 0; b < stream.size(); ++b) {
        const bool last = b + 1 == stream.size() || stream.task_of_batch[b + 1] != stream.task_of_batch[b];
        if (last) stream.task_boundaries.push_back(static_cast<long>(b) + 1);
    }
    return stream;
}

}  // namespace lpr
