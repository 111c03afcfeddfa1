#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "subnyq/config.hpp"
#include "subnyq/diagnostics.hpp"
#include "subnyq/errors.hpp"
#include "subnyq/io.hpp"
#include "subnyq/parallel.hpp"
#include "subnyq/pcd.hpp"
#include "subnyq/rng.hpp"
#include "subnyq/signal_model.hpp"
#include "subnyq/theory.hpp"
#include "subnyq/unfolding.hpp"

namespace {

namespace fs = std::filesystem;
using namespace subnyq;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Cli {
    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<int> workers_override;
    std::optional<std::string> out_override;
    std::string params_path;       // --params
    std::string measurement_path;  // --measurement
};

ExperimentConfig load_config(const Cli& cli) {
    ExperimentConfig cfg = parse_config_file(cli.config_path);
    if (cli.seed_override) cfg.master_seed = *cli.seed_override;
    if (cli.workers_override) {
        if (*cli.workers_override < 1) throw parse_error("--workers must be >= 1");
        cfg.workers = *cli.workers_override;
    }
    if (cli.out_override) cfg.out_dir = *cli.out_override;
    return cfg;
}

TrainedParams load_trained(const ExperimentConfig& cfg, const Cli& cli) {
    std::string path = !cli.params_path.empty() ? cli.params_path : cfg.params_path.value_or("");
    if (path.empty())
        throw parse_error("no trained parameters: pass --params FILE or set [unfold] params_path");
    TrainedParams trained = load_params(path);
    if (static_cast<long>(trained.layers.size()) != cfg.train.T)
        throw parse_error(path + ": parameter file has " + std::to_string(trained.layers.size()) +
                          " layers but [unfold] T=" + std::to_string(cfg.train.T));
    return trained;
}

std::string provenance_comment(const ExperimentConfig& cfg) {
    return "# config: " + config_summary(cfg) + "\n# master_seed: " + std::to_string(cfg.master_seed) +
           "\n";
}

int cmd_train(const Cli& cli) {
    const ExperimentConfig cfg = load_config(cli);
    const ObservationModel model = build_model(cfg);
    const TrainedParams trained = train_layerwise(model, cfg.train_scene, cfg.train);
    const fs::path out = fs::path(cfg.out_dir) / "params.json";
    save_params(trained, out);
    for (std::size_t t = 0; t < trained.layers.size(); ++t) {
        std::string line = "layer " + std::to_string(t + 1) +
                           ": sigma_w=" + fmt17(trained.layers[t].sigma_w) +
                           " theta=" + fmt17(trained.layers[t].theta);
        if (t < trained.final_loss.size()) line += " loss=" + fmt17(trained.final_loss[t]);
        std::puts(line.c_str());
    }
    for (const auto& w : trained.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::printf("wrote %s\n", out.string().c_str());
    return kExitOk;
}

RocCurve run_roc(const ExperimentConfig& cfg, const TrainedParams& trained) {
    const ObservationModel model = build_model(cfg);
    const PreparedModel prepared(model);
    return monte_carlo_roc(model, prepared, cfg.scene, trained, make_vamp_config(cfg), cfg.pcd,
                           cfg.presets, cfg.trials, cfg.master_seed, cfg.workers);
}

int cmd_roc(const Cli& cli) {
    const ExperimentConfig cfg = load_config(cli);
    const TrainedParams trained = load_trained(cfg, cli);
    const RocCurve curve = run_roc(cfg, trained);
    atomic_write_file(fs::path(cfg.out_dir) / "roc.csv", provenance_comment(cfg) + roc_csv(curve));
    atomic_write_file(fs::path(cfg.out_dir) / "metrics.csv", provenance_comment(cfg) + metrics_csv(curve));
    std::printf("wrote %s and %s (%ld trials, %ld failed)\n",
                (fs::path(cfg.out_dir) / "roc.csv").string().c_str(),
                (fs::path(cfg.out_dir) / "metrics.csv").string().c_str(), curve.trials_requested,
                curve.trials_failed);
    return kExitOk;
}

int cmd_pfa_control(const Cli& cli) {
    const ExperimentConfig cfg = load_config(cli);
    const TrainedParams trained = load_trained(cfg, cli);
    const RocCurve curve = run_roc(cfg, trained);
    CsvWriter csv;
    csv.header({"preset_pfa", "achieved_pfa", "rel_deviation", "variant", "trials"});
    for (const auto& r : curve.rows) {
        const double rel = (r.achieved_pfa - r.preset_pfa) / r.preset_pfa;
        csv.row({fmt17(r.preset_pfa), fmt17(r.achieved_pfa), fmt17(rel), r.variant,
                 std::to_string(r.trials)});
    }
    atomic_write_file(fs::path(cfg.out_dir) / "pfa_control.csv", provenance_comment(cfg) + csv.content());
    std::printf("wrote %s\n", (fs::path(cfg.out_dir) / "pfa_control.csv").string().c_str());
    return kExitOk;
}

int cmd_ecdf(const Cli& cli) {
    const ExperimentConfig cfg = load_config(cli);
    const TrainedParams trained = load_trained(cfg, cli);
    const ObservationModel model = build_model(cfg);
    const PreparedModel prepared(model);
    const VampConfig vamp_cfg = make_vamp_config(cfg);

    // Trials run in fixed-size blocks: each block computes results into
    // per-trial slots in parallel, then a sequential pass pools them, so
    // output never depends on the worker count.
    EcdfAccumulator acc;
    constexpr long kBlock = 256;
    for (long start = 0; start < cfg.trials; start += kBlock) {
        const long count = std::min(kBlock, cfg.trials - start);
        std::vector<TrialResult> slots(static_cast<std::size_t>(count));
        parallel_for(count, cfg.workers, [&](long i) {
            slots[static_cast<std::size_t>(i)] = run_trial(model, prepared, cfg.scene, trained, vamp_cfg,
                                                           cfg.pcd, cfg.master_seed, start + i);
        });
        for (const auto& tr : slots) acc.add(tr.vamp, tr.scene, tr.pcd);
    }
    const EcdfReport report = acc.report();
    atomic_write_file(fs::path(cfg.out_dir) / "ecdf.csv",
                      provenance_comment(cfg) + ecdf_csv(report, cfg.ecdf_dump_max_points));
    atomic_write_file(fs::path(cfg.out_dir) / "ecdf_summary.csv",
                      provenance_comment(cfg) + ecdf_summary_csv(report));
    std::printf("wrote %s and %s (%ld trials)\n", (fs::path(cfg.out_dir) / "ecdf.csv").string().c_str(),
                (fs::path(cfg.out_dir) / "ecdf_summary.csv").string().c_str(), acc.trials());
    return kExitOk;
}

int cmd_theory(const Cli& cli) {
    const ExperimentConfig cfg = load_config(cli);
    // Normalized study: sigma2_true = 1 (all quantities scale), first
    // estimate 0.5, refinement preset and stopping rule from [pcd].
    const double sigma2_true = 1.0, sigma2_init = 0.5;
    const FixedPointStudy study =
        iterate_fixed_point(sigma2_init, sigma2_true, cfg.pcd.pfa0, cfg.pcd.c_tol, cfg.pcd.m_max);
    const PfaWindow window = pfa_window(sigma2_init, sigma2_true, Eigen::VectorXd(), study.limit);
    atomic_write_file(fs::path(cfg.out_dir) / "theory.csv",
                      provenance_comment(cfg) + theory_csv(study, &window));
    std::printf("wrote %s (limit=%s approx=%s)\n", (fs::path(cfg.out_dir) / "theory.csv").string().c_str(),
                fmt17(study.limit).c_str(), fmt17(study.approx_limit).c_str());
    return kExitOk;
}

Eigen::VectorXd read_measurement(const fs::path& path, long M) {
    const CsvTable table = read_csv(path);
    if (table.columns != std::vector<std::string>{"index", "re", "im"})
        throw parse_error(path.string() + ": expected header index,re,im");
    if (static_cast<long>(table.rows.size()) != M)
        throw parse_error(path.string() + ": expected " + std::to_string(M) + " rows, got " +
                          std::to_string(table.rows.size()));
    Eigen::VectorXcd y(M);
    for (long i = 0; i < M; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        const std::string ctx = path.string() + " row " + std::to_string(i);
        if (parse_long(row[0], ctx + " index") != i)
            throw parse_error(ctx + ": indices must be 0.." + std::to_string(M - 1) + " in order");
        y[i] = std::complex<double>(parse_double(row[1], ctx + " re"), parse_double(row[2], ctx + " im"));
    }
    return realvec(y);
}

int cmd_detect(const Cli& cli) {
    const ExperimentConfig cfg = load_config(cli);
    const TrainedParams trained = load_trained(cfg, cli);
    const Eigen::VectorXd y_RI = read_measurement(cli.measurement_path, cfg.M);
    const ObservationModel model = build_model(cfg);
    const PreparedModel prepared(model);
    const VampOutput vamp = test_unfolded(y_RI, prepared, trained, make_vamp_config(cfg));
    const PcdResult pcd = run_pcd(vamp.x_hat_RI, vamp.r_RI, cfg.pcd);

    CsvWriter csv;
    csv.comment("sigma2_pcd=" + fmt17(pcd.sigma2_pcd) + " threshold=" + fmt17(pcd.threshold) +
                " iterations=" + std::to_string(pcd.iterations) +
                " converged=" + (pcd.converged ? std::string("1") : std::string("0")));
    csv.header({"index", "amplitude"});
    for (long i : pcd.detected_support) csv.row({std::to_string(i), fmt17(pcd.x_hat_pfa[i])});
    atomic_write_file(fs::path(cfg.out_dir) / "detections.csv", provenance_comment(cfg) + csv.content());
    std::printf("wrote %s (%zu detections, sigma2_pcd=%s)\n",
                (fs::path(cfg.out_dir) / "detections.csv").string().c_str(),
                pcd.detected_support.size(), fmt17(pcd.sigma2_pcd).c_str());
    return kExitOk;
}

int cmd_gen_measurement(const Cli& cli) {
    const ExperimentConfig cfg = load_config(cli);
    const ObservationModel model = build_model(cfg);
    const Scene scene = generate_scene(cfg.scene, derive_seed(cfg.master_seed, 0));
    const Measurement meas = measure(model, scene, derive_seed(cfg.master_seed, 1));
    atomic_write_file(fs::path(cfg.out_dir) / "measurement.csv",
                      provenance_comment(cfg) + measurement_csv(meas));
    atomic_write_file(fs::path(cfg.out_dir) / "scene.csv", provenance_comment(cfg) + scene_csv(scene));
    std::printf("wrote %s and %s (L0=%ld)\n",
                (fs::path(cfg.out_dir) / "measurement.csv").string().c_str(),
                (fs::path(cfg.out_dir) / "scene.csv").string().c_str(), scene.L0);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sub-Nyquist sparse recovery and convergence-detector experiment runner"};
    app.require_subcommand(1);

    Cli cli;
    app.add_option("--config", cli.config_path, "experiment config file (INI-style sections)")
        ->required()
        ->check(CLI::ExistingFile);
    std::uint64_t seed_val = 0;
    auto* seed_opt = app.add_option("--seed", seed_val, "override [run] seed");
    int workers_val = 1;
    auto* workers_opt = app.add_option("--workers", workers_val, "override [run] workers");
    std::string out_val;
    auto* out_opt = app.add_option("--out", out_val, "override [run] out_dir");

    auto* c_train = app.add_subcommand("train", "learn per-layer parameters, write params.json");
    auto* c_roc = app.add_subcommand("roc", "Monte Carlo detection/false-alarm sweep, write roc.csv");
    auto* c_pfa = app.add_subcommand("pfa-control", "preset-vs-achieved false-alarm table");
    auto* c_ecdf = app.add_subcommand("ecdf", "pooled residual-normality curves, write ecdf.csv");
    auto* c_theory = app.add_subcommand("theory", "fixed-point iteration study, write theory.csv");
    auto* c_detect = app.add_subcommand("detect", "detect targets in a measurement CSV");
    auto* c_gen = app.add_subcommand("gen-measurement", "generate a synthetic scene + measurement");

    // Let global flags (--config, --seed, ...) appear after the subcommand.
    for (auto* cmd : {c_train, c_roc, c_pfa, c_ecdf, c_theory, c_detect, c_gen}) cmd->fallthrough();

    for (auto* cmd : {c_roc, c_pfa, c_ecdf, c_detect})
        cmd->add_option("--params", cli.params_path, "trained parameter file (JSON)");
    c_detect->add_option("--measurement", cli.measurement_path, "measurement CSV (index,re,im)")
        ->required()
        ->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }
    if (*seed_opt) cli.seed_override = seed_val;
    if (*workers_opt) cli.workers_override = workers_val;
    if (*out_opt) cli.out_override = out_val;

    try {
        if (c_train->parsed()) return cmd_train(cli);
        if (c_roc->parsed()) return cmd_roc(cli);
        if (c_pfa->parsed()) return cmd_pfa_control(cli);
        if (c_ecdf->parsed()) return cmd_ecdf(cli);
        if (c_theory->parsed()) return cmd_theory(cli);
        if (c_detect->parsed()) return cmd_detect(cli);
        if (c_gen->parsed()) return cmd_gen_measurement(cli);
    } catch (const parse_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const invalid_parameter& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const invalid_dimensions& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitRuntime;  // unreachable: a subcommand is required
}
