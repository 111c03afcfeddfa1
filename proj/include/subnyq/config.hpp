#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "subnyq/pcd.hpp"
#include "subnyq/signal_model.hpp"
#include "subnyq/unfolding.hpp"
#include "subnyq/vamp.hpp"

namespace subnyq {

// Parsed experiment description. Sections: [model], [scene], optional
// [train_scene] (defaults to [scene]), [unfold], [pcd], [run].
struct ExperimentConfig {
    // [model]
    MatrixKind kind = MatrixKind::partial_fourier;
    long M = 0, N = 0;
    std::uint64_t model_seed = 0;
    std::optional<std::string> cache_dir;  // matrix cache location, optional

    SceneParams scene;        // evaluation scenes
    SceneParams train_scene;  // training scene ranges

    // [unfold]
    TrainConfig train;
    std::optional<std::string> params_path;  // load instead of training

    PcdConfig pcd;

    // [run]
    long trials = 1;
    std::vector<double> presets;
    std::string out_dir = "out";
    int workers = 1;
    std::uint64_t master_seed = 0;
    long ecdf_dump_max_points = 2048;
    double early_stop_tol = 0.0;
    double v_clamp_eps = 1e-6;
};

// Strict parser: unknown sections/keys, duplicate keys, and invalid values
// all raise parse_error with file:line context.
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);
ExperimentConfig parse_config_file(const std::filesystem::path& path);

// Build (or load from cache_dir, keyed by kind/M/N/seed) the observation
// matrix described by [model].
ObservationModel build_model(const ExperimentConfig& config);

// VampConfig implied by the experiment (T from [unfold], clamp/early-stop
// from [run]).
VampConfig make_vamp_config(const ExperimentConfig& config);

// One-line summary of the config for CSV header comments.
std::string config_summary(const ExperimentConfig& config);

}  // namespace subnyq
