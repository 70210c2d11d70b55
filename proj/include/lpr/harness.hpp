#pragma once

// Streaming training harness.
//
// One run wires the pieces into a single online loop. Per data batch tau:
//   1. S gradient steps — each samples a fixed number of replay exemplars,
//      forms loss(new) + alpha * loss(replay), and updates parameters by the
//      configured rule (plain SGD, preconditioned SGD, or soft projection);
//   2. the replay buffer absorbs the batch (strictly after the steps, so a
//      batch is never replayed against itself);
//   3. every refresh_interval batches the preconditioned method rebuilds its
//      layer inverses from the buffer through the current network.
// Task identity from the stream is used for metric bookkeeping only; no
// update rule ever reads it.
//
// Determinism: one config seed derives four independent generator streams —
// stream synthesis, network init, replay (sampling + reservoir updates), and
// preconditioner subsampling — so methods that skip a component still draw
// identical values for the components they share. In particular a
// preconditioned run with omega0 = 0 consumes replay draws in exactly the
// same order as plain replay, making the two trajectories comparable
// step by step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lpr/buffer.hpp"
#include "lpr/errors.hpp"
#include "lpr/matrix.hpp"
#include "lpr/metrics.hpp"
#include "lpr/net.hpp"
#include "lpr/optim.hpp"
#include "lpr/precond.hpp"
#include "lpr/rng.hpp"
#include "lpr/stream.hpp"

namespace lpr {

inline constexpr const char* out_dir_env_var = "LPRLAB_OUT_DIR";

// Seed-derivation tags; the numbering is part of the reproducibility recipe.
enum class SeedTag : std::uint64_t { stream = 0, net_init = 1, replay = 2, precond = 3 };

struct RunConfig {
    std::string method = "er";  // er | lpr | projection | sgd_no_replay
    std::string stream_kind = "class_incremental";  // or domain_incremental
    SplitGaussianSpec stream;                       // stream.seed is overridden from seed below
    std::vector<std::size_t> hidden_widths = {64, 64};
    double eta = 0.1;
    int steps_per_batch = 3;        // S
    double alpha = 1.0;             // replay loss weight
    std::size_t capacity = 200;     // replay buffer slots
    bool unlimited_buffer = false;
    double omega0 = 4.0;            // preconditioner strength (lpr only)
    double beta = 1.0;              // per-layer effective-count exponent
    int refresh_interval = 10;      // T
    double subsample_p = 1.0;       // p, buffer fraction per refresh
    std::size_t replay_sample_size = 10;
    double alpha_proj = 1.0;        // projection softness (projection only)
    std::size_t proj_max_rows = 128;
    std::uint64_t seed = 1;
    int eval_cadence = 10;          // E, batches between evaluations
    std::size_t drift_probes = 32;  // held-out first-task points tracked for drift (0 disables)
    std::string out_dir;            // empty: fall back to $LPRLAB_OUT_DIR, then no files
    std::string run_name;           // file stem; default method_seed<seed>
};

struct SummaryRow {
    std::string method;
    std::uint64_t seed = 0;
    double omega0 = 0.0;
    double beta = 0.0;
    int refresh_interval = 0;
    double subsample_p = 1.0;
    std::size_t capacity = 0;
    bool unlimited = false;
    double acc = 0.0;
    double aaa = 0.0;
    double wc_acc = 0.0;
    double mean_tv = 0.0;
    double mean_drift = 0.0;
};

struct RunResult {
    RunLog log;
    SummaryRow summary;
    std::vector<double> final_test_acc;  // per task, on held-out test sets
    Network net;                         // final parameters
};

// Test hook: observes every gradient step and every batch end. Default
// implementation ignores everything.
class StepObserver {
  public:
    virtual ~StepObserver() = default;
    virtual void on_step(long /*tau*/, int /*step*/, const Network& /*net*/,
                         const ReplayLossResult& /*loss*/, std::size_t /*replay_rows*/) {}
    virtual void on_batch_end(long /*tau*/, const Network& /*net*/, const PreconditionerState& /*state*/,
                              const ReplayBuffer& /*buf*/) {}
};

inline void validate(const RunConfig& cfg) {
    if (cfg.method != "er" && cfg.method != "lpr" && cfg.method != "projection" &&
        cfg.method != "sgd_no_replay")
        throw input_error("config: unknown method '" + cfg.method + "'");
    if (cfg.stream_kind != "class_incremental" && cfg.stream_kind != "domain_incremental")
        throw input_error("config: unknown stream kind '" + cfg.stream_kind + "'");
    if (!(cfg.eta > 0.0)) throw input_error("config: eta must be > 0");
    if (cfg.steps_per_batch < 1) throw input_error("config: steps_per_batch must be >= 1");
    if (cfg.alpha < 0.0) throw input_error("config: alpha must be >= 0");
    if (!cfg.unlimited_buffer && cfg.capacity == 0) throw input_error("config: capacity must be >= 1");
    if (cfg.omega0 < 0.0) throw input_error("config: omega0 must be >= 0");
    if (cfg.beta < 0.0) throw input_error("config: beta must be >= 0");
    if (cfg.refresh_interval < 1) throw input_error("config: refresh_interval must be >= 1");
    if (!(cfg.subsample_p > 0.0) || cfg.subsample_p > 1.0)
        throw input_error("config: subsample_p must be in (0, 1]");
    if (cfg.replay_sample_size == 0) throw input_error("config: replay_sample_size must be >= 1");
    if (!(cfg.alpha_proj > 0.0)) throw input_error("config: alpha_proj must be > 0");
    if (cfg.eval_cadence < 1) throw input_error("config: eval_cadence must be >= 1");
    if (cfg.hidden_widths.empty()) throw input_error("config: need at least one hidden layer width");
    for (std::size_t w : cfg.hidden_widths)
        if (w == 0) throw input_error("config: zero hidden width");
}

inline std::string resolve_out_dir(const RunConfig& cfg) {
    if (!cfg.out_dir.empty()) return cfg.out_dir;
    const char* env = std::getenv(out_dir_env_var);
    if (env != nullptr && *env != '\0') return env;
    return {};
}

inline std::string default_run_name(const RunConfig& cfg) {
    if (!cfg.run_name.empty()) return cfg.run_name;
    return cfg.method + "_seed" + std::to_string(cfg.seed);
}

namespace detail {

inline nlohmann::json record_to_json(const EvalRecord& r) {
    nlohmann::json j;
    j["tau"] = r.tau;
    j["per_task_acc"] = r.per_task_acc;
    j["loss"] = r.mean_loss;
    j["ratio_new"] = r.ratio_new;          // NaN serializes as null
    j["ratio_replay"] = r.ratio_replay;
    j["ratio_new_per_layer"] = r.ratio_new_per_layer;
    j["ratio_replay_per_layer"] = r.ratio_replay_per_layer;
    j["drift"] = r.cum_drift;
    return j;
}

inline std::string capacity_field(const SummaryRow& row) {
    return row.unlimited ? std::string("unlimited") : std::to_string(row.capacity);
}

inline std::vector<double> flat_probe_rep(const Network& net, const Matrix& probe_x) {
    const ForwardTrace trace = forward(net, probe_x);
    return trace.z.back().data;  // bias-augmented last-hidden activations, flattened
}

}  // namespace detail

inline const char* summary_csv_header() {
    return "method,seed,omega0,beta,T,p,capacity,acc,aaa,wc_acc,mean_tv,mean_drift";
}

inline std::string summary_csv_row(const SummaryRow& row) {
    std::ostringstream os;
    os.precision(10);
    os << row.method << ',' << row.seed << ',' << row.omega0 << ',' << row.beta << ','
       << row.refresh_interval << ',' << row.subsample_p << ',' << detail::capacity_field(row) << ','
       << row.acc << ',' << row.aaa << ',' << row.wc_acc << ',' << row.mean_tv << ',' << row.mean_drift;
    return os.str();
}

// Accuracy series of one task across the log (only records that include it).
inline std::vector<double> task_acc_series(const RunLog& log, std::size_t task_index) {
    std::vector<double> series;
    for (const EvalRecord& r : log.records)
        if (r.per_task_acc.size() > task_index) series.push_back(r.per_task_acc[task_index]);
    return series;
}

inline RunResult run(const RunConfig& cfg, StepObserver* observer = nullptr) {
    validate(cfg);

    SplitGaussianSpec spec = cfg.stream;
    spec.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(SeedTag::stream));
    const StreamData data = cfg.stream_kind == "class_incremental" ? generate_class_incremental(spec)
                                                                   : generate_domain_incremental(spec);

    SplitMix64 net_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(SeedTag::net_init)));
    SplitMix64 replay_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(SeedTag::replay)));
    SplitMix64 precond_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(SeedTag::precond)));

    std::vector<std::size_t> widths;
    widths.push_back(spec.input_dim);
    for (std::size_t w : cfg.hidden_widths) widths.push_back(w);
    widths.push_back(static_cast<std::size_t>(data.stream.total_classes));

    RunResult result;
    result.net = make_network(widths, net_rng);
    Network& net = result.net;

    ReplayBuffer buffer(cfg.unlimited_buffer ? unlimited_capacity : cfg.capacity);
    PreconditionerState state = make_preconditioner_state(net, cfg.refresh_interval, cfg.subsample_p);
    const OmegaConfig omega_cfg{cfg.omega0, cfg.beta};

    const bool uses_replay = cfg.method != "sgd_no_replay";
    const bool uses_precond = cfg.method == "lpr";
    const bool uses_projection = cfg.method == "projection";

    std::vector<Matrix> proj_basis;
    if (uses_projection)
        for (const Layer& l : net.layers) proj_basis.emplace_back(0, l.theta.rows);

    // Drift probes: a fixed slice of the first task's held-out test points.
    Matrix probe_x(0, spec.input_dim);
    std::vector<double> prev_rep;
    double cum_drift = 0.0;
    if (cfg.drift_probes > 0 && !data.test.empty()) {
        const std::size_t n = std::min(cfg.drift_probes, data.test[0].x.rows);
        probe_x = Matrix(n, spec.input_dim);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < spec.input_dim; ++c) probe_x(i, c) = data.test[0].x(i, c);
        prev_rep = detail::flat_probe_rep(net, probe_x);
    }

    result.log.task_boundaries = data.stream.task_boundaries;
    result.log.eval_cadence = cfg.eval_cadence;

    std::size_t cursor = 0;
    const long total_batches = static_cast<long>(data.stream.size());
    while (auto batch = next_batch(data.stream, cursor)) {
        const long tau = batch->tau;
        ReplayLossResult last_loss;
        for (int step = 0; step < cfg.steps_per_batch; ++step) {
            BufferSample replay;
            replay.x = Matrix(0, spec.input_dim);
            if (uses_replay && !buffer.empty())
                replay = buffer.sample(cfg.replay_sample_size, replay_rng);
            last_loss = combined_replay_loss(net, *batch->x, *batch->y, replay.x, replay.y, cfg.alpha);

            if (uses_precond) {
                lpr_step(net, last_loss.grads, state, cfg.eta);
            } else if (uses_projection) {
                projection_step(net, last_loss.grads, proj_basis, cfg.eta, cfg.alpha_proj);
            } else {
                sgd_step(net, last_loss.grads, cfg.eta);
            }

            if (probe_x.rows > 0) {
                std::vector<double> rep = detail::flat_probe_rep(net, probe_x);
                double d2 = 0.0;
                for (std::size_t i = 0; i < rep.size(); ++i) {
                    const double diff = rep[i] - prev_rep[i];
                    d2 += diff * diff;
                }
                cum_drift += std::sqrt(d2);
                prev_rep = std::move(rep);
            }
            if (observer != nullptr)
                observer->on_step(tau, step, net, last_loss, replay.x.rows);
        }

        buffer.update(*batch->x, *batch->y, replay_rng);

        if (uses_projection) {
            // Accumulate one averaged-activation row per layer per batch,
            // deliberately never revisited: the stored directions go stale as
            // the network moves, which is the weakness this baseline carries.
            const ForwardTrace trace = forward(net, *batch->x);
            for (std::size_t l = 0; l < proj_basis.size(); ++l) {
                if (proj_basis[l].rows >= cfg.proj_max_rows) continue;
                Matrix grown(proj_basis[l].rows + 1, proj_basis[l].cols);
                std::copy(proj_basis[l].data.begin(), proj_basis[l].data.end(), grown.data.begin());
                for (std::size_t c = 0; c < grown.cols; ++c) {
                    double mean = 0.0;
                    for (std::size_t r = 0; r < trace.z[l].rows; ++r) mean += trace.z[l](r, c);
                    grown(proj_basis[l].rows, c) = mean / static_cast<double>(trace.z[l].rows);
                }
                proj_basis[l] = std::move(grown);
            }
        }

        if (uses_precond && tau % cfg.refresh_interval == 0)
            refresh(state, net, buffer, omega_cfg, precond_rng, tau);

        if (observer != nullptr) observer->on_batch_end(tau, net, state, buffer);

        if (tau % cfg.eval_cadence == 0 || tau == total_batches) {
            EvalRecord rec;
            rec.tau = tau;
            const int seen = batch->task + 1;
            for (int t = 0; t < seen; ++t)
                rec.per_task_acc.push_back(accuracy(net, data.val[t].x, data.val[t].y));
            rec.mean_loss = last_loss.loss;

            const GradNormRatio rn = grad_norm_ratio(last_loss.grads_new, state);
            rec.ratio_new = rn.aggregate;
            rec.ratio_new_per_layer = rn.per_layer;
            if (last_loss.has_replay) {
                const GradNormRatio rr = grad_norm_ratio(last_loss.grads_replay, state);
                rec.ratio_replay = rr.aggregate;
                rec.ratio_replay_per_layer = rr.per_layer;
            }
            rec.cum_drift = cum_drift;
            result.log.records.push_back(std::move(rec));
        }
    }

    // Final report: held-out test accuracy per task, anytime metrics from the
    // validation-driven log, per-task accuracy total variation, total drift.
    for (std::size_t t = 0; t < data.test.size(); ++t)
        result.final_test_acc.push_back(accuracy(net, data.test[t].x, data.test[t].y));

    SummaryRow& row = result.summary;
    row.method = cfg.method;
    row.seed = cfg.seed;
    row.omega0 = cfg.omega0;
    row.beta = cfg.beta;
    row.refresh_interval = cfg.refresh_interval;
    row.subsample_p = cfg.subsample_p;
    row.capacity = cfg.capacity;
    row.unlimited = cfg.unlimited_buffer;
    double acc_sum = 0.0;
    for (double a : result.final_test_acc) acc_sum += a;
    row.acc = acc_sum / static_cast<double>(result.final_test_acc.size());
    row.aaa = average_anytime_acc(result.log);
    row.wc_acc = worst_case_acc(result.log);
    double tv_sum = 0.0;
    int tv_count = 0;
    for (std::size_t t = 0; t < data.test.size(); ++t) {
        const std::vector<double> series = task_acc_series(result.log, t);
        if (series.size() >= 2) {
            tv_sum += total_variation(series);
            ++tv_count;
        }
    }
    row.mean_tv = tv_count > 0 ? tv_sum / tv_count : 0.0;
    row.mean_drift = cum_drift;

    const std::string dir = resolve_out_dir(cfg);
    if (!dir.empty()) {
        std::filesystem::create_directories(dir);
        const std::string stem = default_run_name(cfg);
        const std::string log_path = dir + "/" + stem + ".jsonl";
        std::ofstream log_out(log_path);
        if (!log_out) throw input_error("run: cannot open " + log_path + " for writing");
        for (const EvalRecord& r : result.log.records) log_out << detail::record_to_json(r).dump() << '\n';
        const std::string csv_path = dir + "/" + stem + "_summary.csv";
        std::ofstream csv_out(csv_path);
        if (!csv_out) throw input_error("run: cannot open " + csv_path + " for writing");
        csv_out << summary_csv_header() << '\n' << summary_csv_row(row) << '\n';
    }
    return result;
}

// ---------------------------------------------------------------------------
// Sweeps: Cartesian grid over selected fields, one independent run per cell,
// aggregated as mean +- standard error across seeds per configuration.

struct SweepGrid {
    RunConfig base;
    std::vector<std::string> methods;
    std::vector<double> omega0s;
    std::vector<double> betas;
    std::vector<double> etas;
    std::vector<int> refresh_intervals;
    std::vector<double> subsample_ps;
    std::vector<std::size_t> capacities;
    std::vector<std::uint64_t> seeds;
};

struct SweepCell {
    RunConfig config;
    SummaryRow row;
    bool failed = false;
    std::string error;
};

struct SweepAggregate {
    std::string method;
    double omega0 = 0.0, beta = 0.0, eta = 0.0;
    int refresh_interval = 0;
    double subsample_p = 1.0;
    std::size_t capacity = 0;
    bool unlimited = false;
    int n = 0;  // successful seeds
    double acc_mean = 0.0, acc_se = 0.0;
    double aaa_mean = 0.0, aaa_se = 0.0;
    double wc_mean = 0.0, wc_se = 0.0;
    double tv_mean = 0.0, tv_se = 0.0;
    double drift_mean = 0.0, drift_se = 0.0;
};

struct SweepResult {
    std::vector<SweepCell> cells;
    std::vector<SweepAggregate> aggregates;
};

// Mean and standard error (sample standard deviation over sqrt(n)).
inline std::pair<double, double> mean_and_stderr(const std::vector<double>& xs) {
    if (xs.empty()) throw input_error("mean_and_stderr: empty sample");
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() == 1) return {mean, 0.0};
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size() - 1);
    return {mean, std::sqrt(var) / std::sqrt(static_cast<double>(xs.size()))};
}

inline SweepResult sweep(const SweepGrid& grid) {
    auto or_default = [](auto list, auto fallback) {
        if (list.empty()) list.push_back(fallback);
        return list;
    };
    const auto methods = or_default(grid.methods, grid.base.method);
    const auto omega0s = or_default(grid.omega0s, grid.base.omega0);
    const auto betas = or_default(grid.betas, grid.base.beta);
    const auto etas = or_default(grid.etas, grid.base.eta);
    const auto intervals = or_default(grid.refresh_intervals, grid.base.refresh_interval);
    const auto ps = or_default(grid.subsample_ps, grid.base.subsample_p);
    const auto capacities = or_default(grid.capacities, grid.base.capacity);
    const auto seeds = or_default(grid.seeds, grid.base.seed);

    SweepResult result;
    for (const std::string& method : methods)
        for (double omega0 : omega0s)
            for (double beta : betas)
                for (double eta : etas)
                    for (int interval : intervals)
                        for (double p : ps)
                            for (std::size_t capacity : capacities) {
                                std::map<std::string, std::vector<double>> pools;
                                SweepAggregate agg;
                                agg.method = method;
                                agg.omega0 = omega0;
                                agg.beta = beta;
                                agg.eta = eta;
                                agg.refresh_interval = interval;
                                agg.subsample_p = p;
                                agg.capacity = capacity;
                                agg.unlimited = grid.base.unlimited_buffer;
                                for (std::uint64_t seed : seeds) {
                                    SweepCell cell;
                                    cell.config = grid.base;
                                    cell.config.method = method;
                                    cell.config.omega0 = omega0;
                                    cell.config.beta = beta;
                                    cell.config.eta = eta;
                                    cell.config.refresh_interval = interval;
                                    cell.config.subsample_p = p;
                                    cell.config.capacity = capacity;
                                    cell.config.seed = seed;
                                    cell.config.out_dir.clear();  // cells never write files
                                    cell.config.run_name.clear();
                                    try {
                                        cell.row = run(cell.config).summary;
                                        pools["acc"].push_back(cell.row.acc);
                                        pools["aaa"].push_back(cell.row.aaa);
                                        pools["wc"].push_back(cell.row.wc_acc);
                                        pools["tv"].push_back(cell.row.mean_tv);
                                        pools["drift"].push_back(cell.row.mean_drift);
                                    } catch (const std::exception& e) {
                                        cell.failed = true;
                                        cell.error = e.what();
                                    }
                                    result.cells.push_back(std::move(cell));
                                }
                                if (!pools["acc"].empty()) {
                                    agg.n = static_cast<int>(pools["acc"].size());
                                    std::tie(agg.acc_mean, agg.acc_se) = mean_and_stderr(pools["acc"]);
                                    std::tie(agg.aaa_mean, agg.aaa_se) = mean_and_stderr(pools["aaa"]);
                                    std::tie(agg.wc_mean, agg.wc_se) = mean_and_stderr(pools["wc"]);
                                    std::tie(agg.tv_mean, agg.tv_se) = mean_and_stderr(pools["tv"]);
                                    std::tie(agg.drift_mean, agg.drift_se) =
                                        mean_and_stderr(pools["drift"]);
                                }
                                result.aggregates.push_back(std::move(agg));
                            }
    return result;
}

inline void write_sweep_files(const SweepResult& result, const std::string& dir,
                              const std::string& stem) {
    std::filesystem::create_directories(dir);
    const std::string raw_path = dir + "/" + stem + "_raw.csv";
    std::ofstream raw(raw_path);
    if (!raw) throw input_error("sweep: cannot open " + raw_path + " for writing");
    raw << summary_csv_header() << ",failed,error\n";
    for (const SweepCell& cell : result.cells) {
        if (cell.failed) {
            SummaryRow stub;
            stub.method = cell.config.method;
            stub.seed = cell.config.seed;
            stub.omega0 = cell.config.omega0;
            stub.beta = cell.config.beta;
            stub.refresh_interval = cell.config.refresh_interval;
            stub.subsample_p = cell.config.subsample_p;
            stub.capacity = cell.config.capacity;
            stub.unlimited = cell.config.unlimited_buffer;
            std::string msg = cell.error;
            for (char& ch : msg)
                if (ch == ',' || ch == '\n') ch = ';';
            raw << summary_csv_row(stub) << ",1," << msg << '\n';
        } else {
            raw << summary_csv_row(cell.row) << ",0,\n";
        }
    }
    const std::string agg_path = dir + "/" + stem + "_agg.csv";
    std::ofstream agg(agg_path);
    if (!agg) throw input_error("sweep: cannot open " + agg_path + " for writing");
    agg << "method,omega0,beta,eta,T,p,capacity,n,acc_mean,acc_se,aaa_mean,aaa_se,wc_mean,wc_se,"
           "tv_mean,tv_se,drift_mean,drift_se\n";
    agg.precision(10);
    for (const SweepAggregate& a : result.aggregates) {
        agg << a.method << ',' << a.omega0 << ',' << a.beta << ',' << a.eta << ',' << a.refresh_interval
            << ',' << a.subsample_p << ',' << (a.unlimited ? std::string("unlimited") : std::to_string(a.capacity))
            << ',' << a.n << ',' << a.acc_mean << ',' << a.acc_se << ',' << a.aaa_mean << ',' << a.aaa_se
            << ',' << a.wc_mean << ',' << a.wc_se << ',' << a.tv_mean << ',' << a.tv_se << ','
            << a.drift_mean << ',' << a.drift_se << '\n';
    }
}

}  // namespace lpr
