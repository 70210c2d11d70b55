#pragma once

// Evaluation and analysis quantities for streaming runs.
//
// A run log is an append-only list of evaluation records, one per evaluation
// point: the stream position tau, per-task accuracies for every task seen so
// far, the training loss, gradient-norm ratios, and the cumulative
// representation drift of a fixed probe set. Three summary metrics condense
// it:
//   final accuracy   — mean per-task accuracy at the last evaluation point
//   anytime accuracy — that same mean, averaged over every evaluation point
//   worst-case acc   — the current task's final accuracy plus each earlier
//                      task's worst accuracy observed after that task ended,
//                      averaged; penalizes forget-then-relearn trajectories
//                      that the anytime average smooths over
// All three live in [0, 1]. Worst-case windows are strict: an evaluation at
// exactly a task's last batch measures end-of-task performance and is not
// part of that task's forgetting window.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "lpr/errors.hpp"
#include "lpr/net.hpp"
#include "lpr/precond.hpp"

namespace lpr {

struct EvalRecord {
    long tau = 0;                      // 1-based stream position of this evaluation
    std::vector<double> per_task_acc;  // accuracy on each task seen so far, task order
    double mean_loss = 0.0;
    double ratio_new = std::numeric_limits<double>::quiet_NaN();
    double ratio_replay = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> ratio_new_per_layer;
    std::vector<double> ratio_replay_per_layer;
    double cum_drift = 0.0;            // accumulated probe-representation movement
};

struct RunLog {
    std::vector<EvalRecord> records;
    std::vector<long> task_boundaries;  // 1-based last batch of each task
    int eval_cadence = 0;               // batches between evaluations (self-describing logs)
};

namespace detail {

inline void validate_log(const RunLog& log, const char* who) {
    if (log.records.empty()) throw input_error(std::string(who) + ": empty log");
    long prev_tau = 0;
    std::size_t prev_tasks = 0;
    for (const EvalRecord& r : log.records) {
        if (r.tau <= prev_tau)
            throw input_error(std::string(who) + ": record positions must strictly increase");
        if (r.per_task_acc.empty())
            throw input_error(std::string(who) + ": record at position " + std::to_string(r.tau) +
                              " has no per-task accuracies");
        if (r.per_task_acc.size() < prev_tasks)
            throw input_error(std::string(who) + ": record at position " + std::to_string(r.tau) +
                              " dropped a task");
        for (double a : r.per_task_acc)
            if (!(a >= 0.0 && a <= 1.0))
                throw input_error(std::string(who) + ": accuracy outside [0,1] at position " +
                                  std::to_string(r.tau));
        prev_tau = r.tau;
        prev_tasks = r.per_task_acc.size();
    }
}

}  // namespace detail

inline double final_acc(const RunLog& log) {
    detail::validate_log(log, "final_acc");
    const std::vector<double>& acc = log.records.back().per_task_acc;
    double sum = 0.0;
    for (double a : acc) sum += a;
    return sum / static_cast<double>(acc.size());
}

inline double average_anytime_acc(const RunLog& log) {
    detail::validate_log(log, "average_anytime_acc");
    double outer = 0.0;
    for (const EvalRecord& r : log.records) {
        double inner = 0.0;
        for (double a : r.per_task_acc) inner += a;
        outer += inner / static_cast<double>(r.per_task_acc.size());
    }
    return outer / static_cast<double>(log.records.size());
}

inline double worst_case_acc(const RunLog& log) {
    detail::validate_log(log, "worst_case_acc");
    const EvalRecord& last = log.records.back();
    const std::size_t k = last.per_task_acc.size();
    if (log.task_boundaries.size() + 1 < k)
        throw input_error("worst_case_acc: log covers " + std::to_string(k) + " tasks but only " +
                          std::to_string(log.task_boundaries.size()) + " boundaries are known");
    double total = last.per_task_acc[k - 1];  // current task contributes its final accuracy
    for (std::size_t i = 0; i + 1 < k; ++i) {
        const long boundary = log.task_boundaries[i];
        double worst = std::numeric_limits<double>::infinity();
        for (const EvalRecord& r : log.records)
            if (r.tau > boundary && r.per_task_acc.size() > i) worst = std::min(worst, r.per_task_acc[i]);
        if (!std::isfinite(worst))
            throw input_error("worst_case_acc: no evaluation points after task " + std::to_string(i + 1) +
                              "'s boundary at " + std::to_string(boundary));
        total += worst;
    }
    return total / static_cast<double>(k);
}

// Summed Euclidean movement of one probe representation across consecutive
// snapshots. The harness flattens a whole probe batch's hidden activations
// into one vector per snapshot, making this the total movement of the probe
// set under training.
inline double representation_drift(const std::vector<std::vector<double>>& series) {
    if (series.size() < 2)
        throw input_error("representation_drift: need at least 2 snapshots, got " +
                          std::to_string(series.size()));
    double total = 0.0;
    for (std::size_t j = 1; j < series.size(); ++j) {
        if (series[j].size() != series[j - 1].size())
            throw shape_error("representation_drift: snapshot " + std::to_string(j) + " has " +
                              std::to_string(series[j].size()) + " entries, previous has " +
                              std::to_string(series[j - 1].size()));
        double d2 = 0.0;
        for (std::size_t c = 0; c < series[j].size(); ++c) {
            const double diff = series[j][c] - series[j - 1][c];
            d2 += diff * diff;
        }
        total += std::sqrt(d2);
    }
    return total;
}

inline double total_variation(const std::vector<double>& series) {
    if (series.size() < 2)
        throw input_error("total_variation: need at least 2 points, got " + std::to_string(series.size()));
    double total = 0.0;
    for (std::size_t j = 1; j < series.size(); ++j) total += std::abs(series[j] - series[j - 1]);
    return total;
}

// Norm of the preconditioned gradient relative to the raw gradient, per layer
// and over the concatenation of all layers. Stays in (0, 1]; equals 1 exactly
// when every preconditioner is the identity. Zero gradients make the ratio
// undefined: those entries carry NaN and the aggregate is flagged invalid.
struct GradNormRatio {
    std::vector<double> per_layer;
    double aggregate = std::numeric_limits<double>::quiet_NaN();
    bool valid = false;
};

inline GradNormRatio grad_norm_ratio(const Gradients& grads, const PreconditionerState& state) {
    const Gradients pre = apply(state, grads);
    GradNormRatio out;
    out.per_layer.reserve(grads.g.size());
    for (std::size_t l = 0; l < grads.g.size(); ++l) {
        const double raw = frobenius_norm(grads.g[l]);
        out.per_layer.push_back(raw == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                                           : frobenius_norm(pre.g[l]) / raw);
    }
    const double raw_total = total_norm(grads);
    if (raw_total > 0.0) {
        out.aggregate = total_norm(pre) / raw_total;
        out.valid = true;
    }
    return out;
}

}  // namespace lpr
