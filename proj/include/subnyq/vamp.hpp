#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "subnyq/signal_model.hpp"

namespace subnyq {

// Per-layer scalars of the unfolded network: noise level feeding the LMMSE
// stage and the shrinkage threshold multiplier.
struct VampLayerParams {
    double sigma_w = 1.0;  // > 0
    double theta = 1.0;    // > 0
};

void validate(const VampLayerParams& p);

struct VampConfig {
    long T = 7;                                // iterations == layer count
    std::optional<Eigen::VectorXd> r1_init;    // default: A_RI^T y_RI
    std::optional<double> sigma1_init;         // default: max(var(y_RI), 1e-6)
    double v_clamp_eps = 1e-6;                 // in (0, 0.5)
    double early_stop_tol = 0.0;               // relative x_hat change; 0 = off
};

void validate(const VampConfig& c);

// One iteration's diagnostics. sigma_tilde2 is the extrinsic variance
// entering the iteration; sigma2 the one produced by the LMMSE stage.
// *_raw are the average derivatives before clamping into [eps, 1-eps].
struct VampIterStats {
    double v_tilde_raw = 0, v_tilde = 0;
    double v_raw = 0, v = 0;
    double sigma_tilde2 = 0;
    double sigma2 = 0;
};

struct VampOutput {
    Eigen::VectorXd x_hat_RI;  // sparse solution, length 2N
    Eigen::VectorXd r_RI;      // non-sparse noisy estimate, length 2N
    double sigma2_vamp = 0;    // traditional variance estimate (last sigma2)
    std::vector<VampIterStats> trace;
};

// Element-wise sgn(r_j) * max(|r_j| - lambda, 0).
Eigen::VectorXd soft_threshold(const Eigen::VectorXd& r, double lambda);

// Soft threshold at lambda = theta*sigma; v is the average derivative, i.e.
// the fraction of elements strictly above the threshold (pre-clamp).
std::pair<Eigen::VectorXd, double> shrink(const Eigen::VectorXd& r, double sigma, double theta);

// Immutable per-model factorization shared by all solves: thin SVD of A_RI.
// Each LMMSE solve is then two slim matrix products instead of a 2N x 2N
// factorization.
class PreparedModel {
  public:
    explicit PreparedModel(const ObservationModel& model);

    long m2() const { return A_RI_.rows(); }  // 2M
    long n2() const { return A_RI_.cols(); }  // 2N
    const Eigen::MatrixXd& V() const { return V_; }
    const Eigen::VectorXd& singular_values() const { return S_; }
    const Eigen::MatrixXd& A_RI() const { return A_RI_; }

    Eigen::VectorXd At_y(const Eigen::VectorXd& y_RI) const;
    Eigen::MatrixXd At_Y(const Eigen::MatrixXd& Y_RI) const;

  private:
    Eigen::MatrixXd A_RI_;  // 2M x 2N
    Eigen::MatrixXd V_;     // 2N x k right singular vectors
    Eigen::VectorXd S_;     // k singular values, k = min(2M, 2N)
};

// x_tilde = (sigma_w^-2 A^T A + sigma_tilde^-2 I)^-1 (sigma_w^-2 A^T y + sigma_tilde^-2 r_tilde)
// v_tilde = average diagonal of d(x_tilde)/d(r_tilde) (pre-clamp).
// sigma_tilde and sigma_w are standard deviations.
std::pair<Eigen::VectorXd, double> lmmse_denoise(const Eigen::VectorXd& r_tilde, double sigma_tilde,
                                                 double sigma_w, const PreparedModel& model,
                                                 const Eigen::VectorXd& y_RI);

// r_next = (x - v r) / (1 - v); sigma2_next = sigma2 v / (1 - v).
// Caller must have clamped v into [eps, 1-eps].
std::pair<Eigen::VectorXd, double> extrinsic_update(const Eigen::VectorXd& x, double v,
                                                    const Eigen::VectorXd& r, double sigma2);

VampOutput run_vamp(const Eigen::VectorXd& y_RI, const PreparedModel& model,
                    const std::vector<VampLayerParams>& layer_params, const VampConfig& config);

std::string trace_csv(const VampOutput& out);

// --- batched core (training fast path) ------------------------------------
// Runs the same recursion on D measurement columns at once with per-column
// extrinsic variances; one layer costs two k x D GEMMs. Matches run_vamp
// column-by-column to floating-point rounding (pinned by tests).
struct BatchState {
    Eigen::MatrixXd AtY;           // 2N x D, fixed for the batch
    Eigen::MatrixXd R_tilde;       // 2N x D
    Eigen::VectorXd sigma_tilde2;  // D
    Eigen::MatrixXd X_hat;         // 2N x D, last layer's sparse output
    Eigen::MatrixXd R;             // 2N x D, last layer's noisy estimate
    Eigen::VectorXd sigma2;        // D, last layer's LMMSE variance
};

BatchState batch_init(const PreparedModel& model, const Eigen::MatrixXd& Y_RI, const VampConfig& config);
void batch_layer(const PreparedModel& model, BatchState& state, const VampLayerParams& params,
                 double v_clamp_eps);

}  // namespace subnyq
