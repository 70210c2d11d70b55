// lprlab: command-line front end for the replay-learning laboratory.
//
//   lprlab run    --config cfg.json [flags...]   one training run
//   lprlab sweep  --config cfg.json [flags...]   grid of runs, aggregated
//   lprlab verify [--inject-fault name]          internal consistency checks
//   lprlab export-stream --out file [flags...]   write a stream as text
//   lprlab import-stream --in file               read a stream back, report shape
//
// Precedence everywhere: built-in defaults, then the JSON config file, then
// explicit command-line flags.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lpr/harness.hpp"
#include "lpr/stream.hpp"
#include "lpr/verify.hpp"

namespace {

using nlohmann::json;

void apply_stream_json(const json& j, lpr::SplitGaussianSpec& spec) {
    if (j.contains("num_tasks")) spec.num_tasks = j.at("num_tasks").get<int>();
    if (j.contains("classes_per_task")) spec.classes_per_task = j.at("classes_per_task").get<int>();
    if (j.contains("input_dim")) spec.input_dim = j.at("input_dim").get<std::size_t>();
    if (j.contains("cluster_separation")) spec.cluster_separation = j.at("cluster_separation").get<double>();
    if (j.contains("cluster_std")) spec.cluster_std = j.at("cluster_std").get<double>();
    if (j.contains("batches_per_task")) spec.batches_per_task = j.at("batches_per_task").get<int>();
    if (j.contains("batch_size")) spec.n_tau = j.at("batch_size").get<std::size_t>();
    if (j.contains("eval_points_per_task"))
        spec.eval_points_per_task = j.at("eval_points_per_task").get<std::size_t>();
    if (j.contains("shuffle_task_order")) spec.shuffle_task_order = j.at("shuffle_task_order").get<bool>();
    if (j.contains("drift_magnitude")) spec.drift_magnitude = j.at("drift_magnitude").get<double>();
    if (j.contains("drift_rotation")) spec.drift_rotation = j.at("drift_rotation").get<double>();
}

void apply_config_json(const json& j, lpr::RunConfig& cfg) {
    if (j.contains("method")) cfg.method = j.at("method").get<std::string>();
    if (j.contains("stream_kind")) cfg.stream_kind = j.at("stream_kind").get<std::string>();
    if (j.contains("stream")) apply_stream_json(j.at("stream"), cfg.stream);
    if (j.contains("hidden_widths")) cfg.hidden_widths = j.at("hidden_widths").get<std::vector<std::size_t>>();
    if (j.contains("eta")) cfg.eta = j.at("eta").get<double>();
    if (j.contains("steps_per_batch")) cfg.steps_per_batch = j.at("steps_per_batch").get<int>();
    if (j.contains("alpha")) cfg.alpha = j.at("alpha").get<double>();
    if (j.contains("capacity")) cfg.capacity = j.at("capacity").get<std::size_t>();
    if (j.contains("unlimited_buffer")) cfg.unlimited_buffer = j.at("unlimited_buffer").get<bool>();
    if (j.contains("omega0")) cfg.omega0 = j.at("omega0").get<double>();
    if (j.contains("beta")) cfg.beta = j.at("beta").get<double>();
    if (j.contains("refresh_interval")) cfg.refresh_interval = j.at("refresh_interval").get<int>();
    if (j.contains("subsample_p")) cfg.subsample_p = j.at("subsample_p").get<double>();
    if (j.contains("replay_sample_size"))
        cfg.replay_sample_size = j.at("replay_sample_size").get<std::size_t>();
    if (j.contains("alpha_proj")) cfg.alpha_proj = j.at("alpha_proj").get<double>();
    if (j.contains("proj_max_rows")) cfg.proj_max_rows = j.at("proj_max_rows").get<std::size_t>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("eval_cadence")) cfg.eval_cadence = j.at("eval_cadence").get<int>();
    if (j.contains("drift_probes")) cfg.drift_probes = j.at("drift_probes").get<std::size_t>();
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("run_name")) cfg.run_name = j.at("run_name").get<std::string>();
}

void apply_grid_json(const json& j, lpr::SweepGrid& grid) {
    if (j.contains("methods")) grid.methods = j.at("methods").get<std::vector<std::string>>();
    if (j.contains("omega0s")) grid.omega0s = j.at("omega0s").get<std::vector<double>>();
    if (j.contains("betas")) grid.betas = j.at("betas").get<std::vector<double>>();
    if (j.contains("etas")) grid.etas = j.at("etas").get<std::vector<double>>();
    if (j.contains("refresh_intervals"))
        grid.refresh_intervals = j.at("refresh_intervals").get<std::vector<int>>();
    if (j.contains("subsample_ps")) grid.subsample_ps = j.at("subsample_ps").get<std::vector<double>>();
    if (j.contains("capacities")) grid.capacities = j.at("capacities").get<std::vector<std::size_t>>();
    if (j.contains("seeds")) grid.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw lpr::input_error("cannot open config file " + path);
    json j;
    in >> j;
    return j;
}

// Flags shared by every subcommand that builds a RunConfig. Each option
// writes straight into cfg; because CLI11 parses after the JSON file has been
// applied, explicitly passed flags win.
void add_config_flags(CLI::App* cmd, lpr::RunConfig& cfg) {
    cmd->add_option("--method", cfg.method, "er | lpr | projection | sgd_no_replay");
    cmd->add_option("--stream-kind", cfg.stream_kind, "class_incremental | domain_incremental");
    cmd->add_option("--tasks", cfg.stream.num_tasks, "number of tasks");
    cmd->add_option("--classes-per-task", cfg.stream.classes_per_task, "classes introduced per task");
    cmd->add_option("--dim", cfg.stream.input_dim, "input dimension");
    cmd->add_option("--separation", cfg.stream.cluster_separation, "minimum distance between class means");
    cmd->add_option("--std", cfg.stream.cluster_std, "within-class standard deviation");
    cmd->add_option("--batches-per-task", cfg.stream.batches_per_task, "stream length per task");
    cmd->add_option("--batch-size", cfg.stream.n_tau, "samples per batch");
    cmd->add_option("--eval-points", cfg.stream.eval_points_per_task, "held-out points per task");
    cmd->add_flag("--no-shuffle{false},--shuffle{true}", cfg.stream.shuffle_task_order,
                  "shuffle task order (default on)");
    cmd->add_option("--drift-magnitude", cfg.stream.drift_magnitude, "per-task mean translation");
    cmd->add_option("--drift-rotation", cfg.stream.drift_rotation, "per-task rotation angle");
    cmd->add_option("--hidden", cfg.hidden_widths, "hidden layer widths")->delimiter(',');
    cmd->add_option("--eta", cfg.eta, "learning rate");
    cmd->add_option("--steps", cfg.steps_per_batch, "gradient steps per batch");
    cmd->add_option("--alpha", cfg.alpha, "replay loss weight");
    cmd->add_option("--capacity", cfg.capacity, "replay buffer capacity");
    cmd->add_flag("--unlimited-buffer", cfg.unlimited_buffer, "never evict from the buffer");
    cmd->add_option("--omega0", cfg.omega0, "preconditioner strength");
    cmd->add_option("--beta", cfg.beta, "effective-count exponent");
    cmd->add_option("-T,--refresh-interval", cfg.refresh_interval, "batches between operator refreshes");
    cmd->add_option("-p,--subsample-p", cfg.subsample_p, "buffer fraction used per refresh");
    cmd->add_option("--replay-sample", cfg.replay_sample_size, "replay exemplars per step");
    cmd->add_option("--alpha-proj", cfg.alpha_proj, "projection softness");
    cmd->add_option("--proj-max-rows", cfg.proj_max_rows, "stored activation rows for projection");
    cmd->add_option("--seed", cfg.seed, "master seed");
    cmd->add_option("-E,--eval-cadence", cfg.eval_cadence, "batches between evaluations");
    cmd->add_option("--drift-probes", cfg.drift_probes, "probe points tracked for drift (0 disables)");
    cmd->add_option("--out-dir", cfg.out_dir,
                    std::string("output directory (default: $") + lpr::out_dir_env_var + ")");
    cmd->add_option("--run-name", cfg.run_name, "output file stem");
}

void print_summary(const lpr::SummaryRow& row) {
    std::cout << lpr::summary_csv_header() << '\n' << lpr::summary_csv_row(row) << '\n';
}

int cmd_run(const lpr::RunConfig& cfg) {
    const lpr::RunResult res = lpr::run(cfg);
    print_summary(res.summary);
    const std::string dir = lpr::resolve_out_dir(cfg);
    if (!dir.empty())
        std::cout << "wrote " << dir << '/' << lpr::default_run_name(cfg) << ".jsonl and _summary.csv\n";
    return 0;
}

int cmd_sweep(const lpr::SweepGrid& grid, const std::string& stem) {
    const lpr::SweepResult res = lpr::sweep(grid);
    std::size_t failed = 0;
    for (const lpr::SweepCell& cell : res.cells)
        if (cell.failed) {
            ++failed;
            std::cerr << "cell failed (method=" << cell.config.method << " seed=" << cell.config.seed
                      << "): " << cell.error << '\n';
        }
    std::cout << "method,omega0,beta,eta,T,p,capacity,n,acc_mean,acc_se,aaa_mean,aaa_se,"
                 "wc_mean,wc_se,tv_mean,tv_se,drift_mean,drift_se\n";
    std::cout.precision(10);
    for (const lpr::SweepAggregate& a : res.aggregates)
        std::cout << a.method << ',' << a.omega0 << ',' << a.beta << ',' << a.eta << ','
                  << a.refresh_interval << ',' << a.subsample_p << ','
                  << (a.unlimited ? std::string("unlimited") : std::to_string(a.capacity)) << ',' << a.n
                  << ',' << a.acc_mean << ',' << a.acc_se << ',' << a.aaa_mean << ',' << a.aaa_se << ','
                  << a.wc_mean << ',' << a.wc_se << ',' << a.tv_mean << ',' << a.tv_se << ','
                  << a.drift_mean << ',' << a.drift_se << '\n';
    const std::string dir = lpr::resolve_out_dir(grid.base);
    if (!dir.empty()) {
        lpr::write_sweep_files(res, dir, stem);
        std::cout << "wrote " << dir << '/' << stem << "_raw.csv and _agg.csv\n";
    }
    std::cout << res.cells.size() - failed << '/' << res.cells.size() << " cells succeeded\n";
    return failed == 0 ? 0 : 1;
}

int cmd_verify(const std::string& fault_name) {
    const lpr::verify::FaultInjection fault = lpr::verify::parse_fault(fault_name);
    const std::vector<lpr::verify::CheckResult> results = lpr::verify::run_all_checks(fault);
    bool all_pass = true;
    for (const lpr::verify::CheckResult& r : results) {
        std::printf("[%s] %-32s (%6.2fs)  %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.seconds,
                    r.detail.c_str());
        all_pass = all_pass && r.pass;
    }
    std::printf("%s: %zu checks\n", all_pass ? "ALL PASS" : "FAILURES PRESENT", results.size());
    return all_pass ? 0 : 1;
}

lpr::StreamData generate_for(const lpr::RunConfig& cfg) {
    lpr::SplitGaussianSpec spec = cfg.stream;
    spec.seed = lpr::derive_seed(cfg.seed, static_cast<std::uint64_t>(lpr::SeedTag::stream));
    return cfg.stream_kind == "class_incremental" ? lpr::generate_class_incremental(spec)
                                                  : lpr::generate_domain_incremental(spec);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"replay-learning laboratory"};
    app.require_subcommand(1);

    lpr::RunConfig cfg;
    std::string config_path;
    std::string fault_name;
    std::string sweep_stem = "sweep";
    std::string export_path, import_path;
    lpr::SweepGrid grid;

    CLI::App* run_cmd = app.add_subcommand("run", "train once and report the summary");
    run_cmd->add_option("--config", config_path, "JSON config file (flags override it)");
    add_config_flags(run_cmd, cfg);

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "grid of runs, aggregated per configuration");
    sweep_cmd->add_option("--config", config_path, "JSON config file (flags override it)");
    add_config_flags(sweep_cmd, cfg);
    sweep_cmd->add_option("--methods", grid.methods, "methods to sweep")->delimiter(',');
    sweep_cmd->add_option("--omega0s", grid.omega0s, "preconditioner strengths to sweep")->delimiter(',');
    sweep_cmd->add_option("--betas", grid.betas, "exponents to sweep")->delimiter(',');
    sweep_cmd->add_option("--etas", grid.etas, "learning rates to sweep")->delimiter(',');
    sweep_cmd->add_option("--refresh-intervals", grid.refresh_intervals, "refresh cadences to sweep")->delimiter(',');
    sweep_cmd->add_option("--subsample-ps", grid.subsample_ps, "refresh fractions to sweep")->delimiter(',');
    sweep_cmd->add_option("--capacities", grid.capacities, "buffer capacities to sweep")->delimiter(',');
    sweep_cmd->add_option("--seeds", grid.seeds, "seeds to sweep")->delimiter(',');
    sweep_cmd->add_option("--stem", sweep_stem, "output file stem");

    CLI::App* verify_cmd = app.add_subcommand("verify", "run the internal consistency checks");
    verify_cmd->add_option("--inject-fault", fault_name,
                           "deliberately break an invariant (lambda-symmetry) to prove detection");

    CLI::App* export_cmd = app.add_subcommand("export-stream", "write a generated stream as a text table");
    export_cmd->add_option("--config", config_path, "JSON config file (flags override it)");
    add_config_flags(export_cmd, cfg);
    export_cmd->add_option("--out", export_path, "destination path")->required();

    CLI::App* import_cmd = app.add_subcommand("import-stream", "read a stream table and report its shape");
    import_cmd->add_option("--in", import_path, "source path")->required();

    // The config file must land in cfg before CLI11 assigns flag values, so
    // peek at --config ahead of the real parse.
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--config") {
            try {
                const nlohmann::json j = load_json(argv[i + 1]);
                apply_config_json(j, cfg);
                if (j.contains("grid")) apply_grid_json(j.at("grid"), grid);
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << '\n';
                return 1;
            }
        }

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return cmd_run(cfg);
        if (sweep_cmd->parsed()) {
            grid.base = cfg;
            return cmd_sweep(grid, sweep_stem);
        }
        if (verify_cmd->parsed()) return cmd_verify(fault_name);
        if (export_cmd->parsed()) {
            const lpr::StreamData data = generate_for(cfg);
            lpr::export_stream(data.stream, export_path);
            std::cout << "wrote " << data.stream.size() << " batches ("
                      << data.stream.task_boundaries.size() << " tasks, "
                      << data.stream.total_classes << " classes) to " << export_path << '\n';
            return 0;
        }
        if (import_cmd->parsed()) {
            const lpr::TaskStream stream = lpr::import_stream(import_path);
            std::cout << "read " << stream.size() << " batches of " << stream.n_tau << " samples, "
                      << stream.task_boundaries.size() << " tasks, " << stream.total_classes
                      << " classes\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
