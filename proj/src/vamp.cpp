#include "subnyq/vamp.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "subnyq/errors.hpp"
#include "subnyq/io.hpp"

namespace subnyq {

void validate(const VampLayerParams& p) {
    if (!(p.sigma_w > 0.0) || !std::isfinite(p.sigma_w))
        throw invalid_parameter("sigma_w must be positive and finite");
    if (!(p.theta > 0.0) || !std::isfinite(p.theta))
        throw invalid_parameter("theta must be positive and finite");
}

void validate(const VampConfig& c) {
    if (c.T < 1) throw invalid_parameter("VampConfig.T must be >= 1");
    if (!(c.v_clamp_eps > 0.0) || !(c.v_clamp_eps < 0.5))
        throw invalid_parameter("v_clamp_eps must lie in (0, 0.5)");
    if (c.sigma1_init && !(*c.sigma1_init > 0.0))
        throw invalid_parameter("sigma1_init must be positive");
    if (c.early_stop_tol < 0.0) throw invalid_parameter("early_stop_tol must be >= 0");
}

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& r, double lambda) {
    if (lambda < 0.0) throw invalid_parameter("soft_threshold: negative lambda");
    Eigen::VectorXd out(r.size());
    for (long i = 0; i < r.size(); ++i) {
        const double mag = std::abs(r[i]) - lambda;
        out[i] = mag > 0.0 ? (r[i] > 0.0 ? mag : -mag) : 0.0;
    }
    return out;
}

std::pair<Eigen::VectorXd, double> shrink(const Eigen::VectorXd& r, double sigma, double theta) {
    if (!(sigma > 0.0)) throw invalid_parameter("shrink: sigma must be positive");
    if (!(theta > 0.0)) throw invalid_parameter("shrink: theta must be positive");
    const double lambda = theta * sigma;
    Eigen::VectorXd x_hat(r.size());
    long above = 0;
    for (long i = 0; i < r.size(); ++i) {
        const double mag = std::abs(r[i]) - lambda;
        if (mag > 0.0) {
            x_hat[i] = r[i] > 0.0 ? mag : -mag;
            ++above;
        } else {
            x_hat[i] = 0.0;
        }
    }
    // The soft threshold has derivative 1 above the kink and 0 below, so the
    // average derivative is just the fraction of surviving coordinates.
    const double v = static_cast<double>(above) / static_cast<double>(r.size());
    return {std::move(x_hat), v};
}

PreparedModel::PreparedModel(const ObservationModel& model) : A_RI_(model.A_RI) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(A_RI_, Eigen::ComputeThinV);
    V_ = svd.matrixV();
    S_ = svd.singularValues();
}

Eigen::VectorXd PreparedModel::At_y(const Eigen::VectorXd& y_RI) const {
    if (y_RI.size() != A_RI_.rows())
        throw invalid_dimensions("At_y: measurement length " + std::to_string(y_RI.size()) +
                                 " does not match 2M=" + std::to_string(A_RI_.rows()));
    return A_RI_.transpose() * y_RI;
}

Eigen::MatrixXd PreparedModel::At_Y(const Eigen::MatrixXd& Y_RI) const {
    if (Y_RI.rows() != A_RI_.rows()) throw invalid_dimensions("At_Y: row count does not match 2M");
    return A_RI_.transpose() * Y_RI;
}

namespace {

// Shared LMMSE math once A^T y is in hand. With the thin SVD A_RI = U S V^T,
//   (iw2 V S^2 V^T + ib2 I)^-1 = V diag(w) V^T + st2 (I - V V^T),
//   w_i = 1/(iw2 s_i^2 + ib2), st2 = 1/ib2,
// so the solve is two slim products plus a scaled residual term.
std::pair<Eigen::VectorXd, double> lmmse_with_Aty(const Eigen::VectorXd& r_tilde, double sigma_tilde,
                                                  double sigma_w, const PreparedModel& model,
                                                  const Eigen::VectorXd& Aty) {
    if (!(sigma_tilde > 0.0)) throw invalid_parameter("lmmse_denoise: sigma_tilde must be positive");
    if (!(sigma_w > 0.0)) throw invalid_parameter("lmmse_denoise: sigma_w must be positive");
    const long n2 = model.n2();
    if (r_tilde.size() != n2) throw invalid_dimensions("lmmse_denoise: r_tilde length != 2N");

    const double st2 = sigma_tilde * sigma_tilde;
    const double ib2 = 1.0 / st2;
    const double iw2 = 1.0 / (sigma_w * sigma_w);

    const Eigen::VectorXd& s = model.singular_values();
    const long k = s.size();

    Eigen::VectorXd b = iw2 * Aty + ib2 * r_tilde;
    Eigen::VectorXd c = model.V().transpose() * b;
    double diag_sum = 0.0;
    for (long i = 0; i < k; ++i) {
        const double w = 1.0 / (iw2 * s[i] * s[i] + ib2);
        diag_sum += ib2 * w;
        c[i] *= (w - st2);
    }
    Eigen::VectorXd x_tilde = model.V() * c + st2 * b;
    if (!x_tilde.allFinite()) throw numerical_failure("lmmse_denoise produced non-finite values");
    const double v_tilde = (diag_sum + static_cast<double>(n2 - k)) / static_cast<double>(n2);
    return {std::move(x_tilde), v_tilde};
}

double clamp_v(double v, double eps) { return std::min(std::max(v, eps), 1.0 - eps); }

double sample_variance(const Eigen::VectorXd& x) {
    if (x.size() < 2) return 0.0;
    const double mean = x.mean();
    return (x.array() - mean).square().sum() / static_cast<double>(x.size() - 1);
}

}  // namespace

std::pair<Eigen::VectorXd, double> lmmse_denoise(const Eigen::VectorXd& r_tilde, double sigma_tilde,
                                                 double sigma_w, const PreparedModel& model,
                                                 const Eigen::VectorXd& y_RI) {
    return lmmse_with_Aty(r_tilde, sigma_tilde, sigma_w, model, model.At_y(y_RI));
}

std::pair<Eigen::VectorXd, double> extrinsic_update(const Eigen::VectorXd& x, double v,
                                                    const Eigen::VectorXd& r, double sigma2) {
    if (!(v > 0.0) || !(v < 1.0))
        throw invalid_parameter("extrinsic_update: v must lie strictly inside (0, 1); caller must clamp");
    if (x.size() != r.size()) throw invalid_dimensions("extrinsic_update: length mismatch");
    Eigen::VectorXd r_next = (x - v * r) / (1.0 - v);
    const double sigma2_next = sigma2 * v / (1.0 - v);
    return {std::move(r_next), sigma2_next};
}

VampOutput run_vamp(const Eigen::VectorXd& y_RI, const PreparedModel& model,
                    const std::vector<VampLayerParams>& layer_params, const VampConfig& config) {
    validate(config);
    if (static_cast<long>(layer_params.size()) != config.T)
        throw invalid_parameter("run_vamp: layer_params size " + std::to_string(layer_params.size()) +
                                " != T=" + std::to_string(config.T));
    for (const auto& p : layer_params) validate(p);

    const Eigen::VectorXd Aty = model.At_y(y_RI);
    Eigen::VectorXd r_tilde = config.r1_init ? *config.r1_init : Aty;
    if (r_tilde.size() != model.n2()) throw invalid_dimensions("run_vamp: r1_init length != 2N");
    double sigma_tilde2 = config.sigma1_init ? (*config.sigma1_init) * (*config.sigma1_init)
                                             : std::max(sample_variance(y_RI), 1e-6);

    VampOutput out;
    out.trace.reserve(static_cast<std::size_t>(config.T));
    Eigen::VectorXd x_hat_prev;
    for (long t = 0; t < config.T; ++t) {
        const auto& lp = layer_params[static_cast<std::size_t>(t)];
        VampIterStats stats;
        stats.sigma_tilde2 = sigma_tilde2;

        auto [x_tilde, vt_raw] = lmmse_with_Aty(r_tilde, std::sqrt(sigma_tilde2), lp.sigma_w, model, Aty);
        stats.v_tilde_raw = vt_raw;
        stats.v_tilde = clamp_v(vt_raw, config.v_clamp_eps);
        auto [r, sigma2] = extrinsic_update(x_tilde, stats.v_tilde, r_tilde, sigma_tilde2);
        stats.sigma2 = sigma2;

        auto [x_hat, v_raw] = shrink(r, std::sqrt(sigma2), lp.theta);
        stats.v_raw = v_raw;
        stats.v = clamp_v(v_raw, config.v_clamp_eps);
        auto [r_tilde_next, sigma_tilde2_next] = extrinsic_update(x_hat, stats.v, r, sigma2);

        out.trace.push_back(stats);
        out.x_hat_RI = std::move(x_hat);
        out.r_RI = std::move(r);
        out.sigma2_vamp = sigma2;

        if (config.early_stop_tol > 0.0 && t > 0) {
            const double denom = std::max(x_hat_prev.norm(), 1e-30);
            if ((out.x_hat_RI - x_hat_prev).norm() / denom < config.early_stop_tol) break;
        }
        x_hat_prev = out.x_hat_RI;
        r_tilde = std::move(r_tilde_next);
        sigma_tilde2 = sigma_tilde2_next;
    }
    return out;
}

std::string trace_csv(const VampOutput& out) {
    CsvWriter csv;
    csv.header({"iteration", "v", "v_raw", "v_tilde", "v_tilde_raw", "sigma2", "sigma_tilde2"});
    for (std::size_t t = 0; t < out.trace.size(); ++t) {
        const auto& s = out.trace[t];
        csv.row({std::to_string(t + 1), fmt17(s.v), fmt17(s.v_raw), fmt17(s.v_tilde),
                 fmt17(s.v_tilde_raw), fmt17(s.sigma2), fmt17(s.sigma_tilde2)});
    }
    return csv.content();
}

BatchState batch_init(const PreparedModel& model, const Eigen::MatrixXd& Y_RI, const VampConfig& config) {
    validate(config);
    if (Y_RI.rows() != model.m2()) throw invalid_dimensions("batch_init: Y_RI rows != 2M");
    BatchState st;
    st.AtY = model.At_Y(Y_RI);
    st.R_tilde = st.AtY;
    const long D = Y_RI.cols();
    st.sigma_tilde2.resize(D);
    for (long j = 0; j < D; ++j)
        st.sigma_tilde2[j] = config.sigma1_init ? (*config.sigma1_init) * (*config.sigma1_init)
                                                : std::max(sample_variance(Y_RI.col(j)), 1e-6);
    return st;
}

void batch_layer(const PreparedModel& model, BatchState& st, const VampLayerParams& params,
                 double v_clamp_eps) {
    validate(params);
    const long n2 = model.n2();
    const long D = st.R_tilde.cols();
    const Eigen::VectorXd& s = model.singular_values();
    const long k = s.size();
    const double iw2 = 1.0 / (params.sigma_w * params.sigma_w);

    // LMMSE stage, all columns at once.
    Eigen::MatrixXd B = iw2 * st.AtY;
    for (long j = 0; j < D; ++j) B.col(j) += st.R_tilde.col(j) / st.sigma_tilde2[j];
    Eigen::MatrixXd C = model.V().transpose() * B;  // k x D
    Eigen::VectorXd v_tilde(D);
    for (long j = 0; j < D; ++j) {
        const double st2 = st.sigma_tilde2[j];
        const double ib2 = 1.0 / st2;
        double diag_sum = 0.0;
        for (long i = 0; i < k; ++i) {
            const double w = 1.0 / (iw2 * s[i] * s[i] + ib2);
            diag_sum += ib2 * w;
            C(i, j) *= (w - st2);
        }
        v_tilde[j] = clamp_v((diag_sum + static_cast<double>(n2 - k)) / static_cast<double>(n2), v_clamp_eps);
    }
    Eigen::MatrixXd X_tilde = model.V() * C;  // 2N x D
    for (long j = 0; j < D; ++j) X_tilde.col(j) += st.sigma_tilde2[j] * B.col(j);

    st.R.resize(n2, D);
    st.sigma2.resize(D);
    for (long j = 0; j < D; ++j) {
        const double vt = v_tilde[j];
        st.R.col(j) = (X_tilde.col(j) - vt * st.R_tilde.col(j)) / (1.0 - vt);
        st.sigma2[j] = st.sigma_tilde2[j] * vt / (1.0 - vt);
    }

    // Shrinkage stage.
    st.X_hat.resize(n2, D);
    for (long j = 0; j < D; ++j) {
        auto [x_hat, v_raw] = shrink(st.R.col(j), std::sqrt(st.sigma2[j]), params.theta);
        const double v = clamp_v(v_raw, v_clamp_eps);
        st.R_tilde.col(j) = (x_hat - v * st.R.col(j)) / (1.0 - v);
        st.sigma_tilde2[j] = st.sigma2[j] * v / (1.0 - v);
        st.X_hat.col(j) = std::move(x_hat);
    }
}

}  // namespace subnyq
