#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "subnyq/signal_model.hpp"
#include "subnyq/vamp.hpp"

namespace subnyq {

enum class Optimizer { coordinate_grid_refine, nelder_mead };

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);

struct TrainConfig {
    long T = 7;
    long k_epoch = 8;     // batches averaged per candidate evaluation
    long batch_size = 32; // D scenes per batch
    // Per-layer init values; empty means the documented defaults
    // (sigma_w = noise sigma at the SNR-range midpoint, theta = 1).
    std::vector<VampLayerParams> init;
    Optimizer optimizer = Optimizer::coordinate_grid_refine;
    double sigma_w_lo = 1e-3, sigma_w_hi = 10.0;  // search bounds (log-scaled grid)
    double theta_lo = 1e-2, theta_hi = 10.0;
    std::uint64_t seed = 0;
};

void validate(const TrainConfig& c);

struct TrainedParams {
    std::vector<VampLayerParams> layers;
    // Provenance of the training run (marked unknown when absent on load).
    bool provenance_known = false;
    SceneParams train_scene;
    std::uint64_t model_seed = 0;
    std::uint64_t train_seed = 0;
    std::vector<double> final_loss;      // per layer; empty when never evaluated
    std::vector<std::string> warnings;   // layers where the search kept the init
};

// (1/D) sum_d || x_hat_d - x_true_d ||_2^2 over matching 2N x D batches.
double mse_loss(const Eigen::MatrixXd& x_hat_RI, const Eigen::MatrixXd& x_true_RI);

// Documented default init for a scene family: sigma_w from the SNR-range
// midpoint noise level, theta = 1.
VampLayerParams default_init(const SceneParams& scene);

// Greedy layer-wise search: for each layer in order, holding earlier layers
// fixed, pick the (sigma_w, theta) minimizing the empirical MSE of the
// truncated network on k_epoch freshly drawn batches. All candidates within
// one layer share the same batches (common random numbers), and the layer
// keeps its init when no candidate improves on it (recorded as a warning).
TrainedParams train_layerwise(const ObservationModel& model, const SceneParams& scene_params,
                              const TrainConfig& config);

// Run the unfolded network with trained parameters (exactly run_vamp).
VampOutput test_unfolded(const Eigen::VectorXd& y_RI, const PreparedModel& model,
                         const TrainedParams& trained, const VampConfig& config);

// JSON round trip with >= 17 significant digits; strict validation on load.
void save_params(const TrainedParams& trained, const std::filesystem::path& path);
TrainedParams load_params(const std::filesystem::path& path);

std::string params_to_json(const TrainedParams& trained);
TrainedParams params_from_json(const std::string& text, const std::string& origin);

}  // namespace subnyq
