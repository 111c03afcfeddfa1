#include "subnyq/pcd.hpp"

#include <cmath>

#include "subnyq/errors.hpp"
#include "subnyq/io.hpp"
#include "subnyq/signal_model.hpp"

namespace subnyq {

void validate(const PcdConfig& c) {
    if (!(c.pfa0 > 0.0) || !(c.pfa0 < 1.0)) throw invalid_parameter("pfa0 must lie in (0, 1)");
    if (!(c.pfa > 0.0) || !(c.pfa <= 1.0)) throw invalid_parameter("pfa must lie in (0, 1]");
    if (!(c.c_tol > 0.0)) throw invalid_parameter("c_tol must be positive");
    if (c.m_max < 1) throw invalid_parameter("m_max must be >= 1");
}

namespace {

// Power series: all terms positive, no cancellation; converges fast for
// x <= 30 (worst case ~80 terms).
double i0_series(double x) {
    const double q = 0.25 * x * x;
    double term = 1.0, sum = 1.0;
    for (int n = 1; n < 200; ++n) {
        term *= q / (static_cast<double>(n) * static_cast<double>(n));
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return sum;
}

// Scaled asymptotic expansion exp(-x) I0(x) ~ (2 pi x)^{-1/2} sum_k a_k,
// a_k = ((2k-1)!!)^2 / (k! 8^k x^k). Truncation error < 1e-13 for x > 30.
double i0e_asymptotic(double x) {
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 20; ++k) {
        const double num = (2.0 * k - 1.0) * (2.0 * k - 1.0);
        const double next = term * num / (8.0 * static_cast<double>(k) * x);
        if (next >= term) break;  // asymptotic series started diverging
        term = next;
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return sum / std::sqrt(2.0 * M_PI * x);
}

constexpr double kI0SeriesCutoff = 30.0;

}  // namespace

double bessel_i0(double x) {
    if (x < 0.0) throw invalid_parameter("bessel_i0: negative argument");
    if (x <= kI0SeriesCutoff) return i0_series(x);
    return i0e_asymptotic(x) * std::exp(x);  // overflows to inf only past x ~ 709
}

double bessel_i0e(double x) {
    if (x < 0.0) throw invalid_parameter("bessel_i0e: negative argument");
    if (x <= kI0SeriesCutoff) return i0_series(x) * std::exp(-x);
    return i0e_asymptotic(x);
}

double rayleigh_pdf(double r, double sigma2) {
    if (!(sigma2 > 0.0)) throw invalid_parameter("rayleigh_pdf: sigma2 must be positive");
    if (r < 0.0) return 0.0;
    return r / sigma2 * std::exp(-r * r / (2.0 * sigma2));
}

double rician_pdf(double r, double mu, double sigma2) {
    if (!(sigma2 > 0.0)) throw invalid_parameter("rician_pdf: sigma2 must be positive");
    if (mu < 0.0) throw invalid_parameter("rician_pdf: mu must be >= 0");
    if (r < 0.0) return 0.0;
    // exp(-(r^2+mu^2)/(2s2)) I0(r mu/s2) = exp(-(r-mu)^2/(2s2)) [exp(-z) I0(z)]
    // with z = r mu / s2 -- no overflow even for large arguments.
    const double z = r * mu / sigma2;
    return r / sigma2 * std::exp(-(r - mu) * (r - mu) / (2.0 * sigma2)) * bessel_i0e(z);
}

double threshold_for_pfa(double sigma2, double pfa) {
    if (!(sigma2 > 0.0)) throw invalid_parameter("threshold_for_pfa: sigma2 must be positive");
    if (!(pfa > 0.0) || !(pfa <= 1.0)) throw invalid_parameter("threshold_for_pfa: pfa must lie in (0, 1]");
    return std::sqrt(-2.0 * sigma2 * std::log(pfa));
}

double pfa_for_threshold(double sigma2, double T) {
    if (!(sigma2 > 0.0)) throw invalid_parameter("pfa_for_threshold: sigma2 must be positive");
    return std::exp(-T * T / (2.0 * sigma2));
}

std::pair<double, long> residual_variance(const Eigen::VectorXd& r_RI,
                                          const std::vector<long>& detected_cells) {
    if (r_RI.size() % 2 != 0) throw invalid_shape("residual_variance: odd-length r_RI");
    const long N = r_RI.size() / 2;
    std::vector<char> detected(static_cast<std::size_t>(N), 0);
    for (long idx : detected_cells) {
        if (idx < 0 || idx >= N) throw invalid_parameter("residual_variance: cell index out of range");
        detected[static_cast<std::size_t>(idx)] = 1;
    }
    // Two-pass mean/variance over both coordinates of every non-detected cell.
    double sum = 0.0;
    long L = 0;
    for (long i = 0; i < N; ++i) {
        if (detected[static_cast<std::size_t>(i)]) continue;
        sum += r_RI[i] + r_RI[N + i];
        L += 2;
    }
    if (L < 2) throw degenerate_support("residual_variance: fewer than 2 residual coordinates remain");
    const double mean = sum / static_cast<double>(L);
    double ss = 0.0;
    for (long i = 0; i < N; ++i) {
        if (detected[static_cast<std::size_t>(i)]) continue;
        const double dr = r_RI[i] - mean;
        const double di = r_RI[N + i] - mean;
        ss += dr * dr + di * di;
    }
    return {ss / static_cast<double>(L - 1), L};
}

std::pair<Eigen::VectorXd, std::vector<long>> detect(const Eigen::VectorXd& r, double T) {
    if (T < 0.0) throw invalid_parameter("detect: negative threshold");
    Eigen::VectorXd kept = Eigen::VectorXd::Zero(r.size());
    std::vector<long> support;
    for (long i = 0; i < r.size(); ++i) {
        if (r[i] > T) {
            kept[i] = r[i];
            support.push_back(i);
        }
    }
    return {std::move(kept), std::move(support)};
}

PcdResult run_pcd(const Eigen::VectorXd& x_hat_RI, const Eigen::VectorXd& r_RI, const PcdConfig& config) {
    validate(config);
    if (x_hat_RI.size() != r_RI.size() || r_RI.size() % 2 != 0)
        throw invalid_shape("run_pcd: x_hat_RI and r_RI must share the same even length");
    const long N = r_RI.size() / 2;

    const Eigen::VectorXd amp = amplitude(r_RI);

    // Initial support: cells whose complex sparse solution is nonzero
    // (per-cell semantics; both coordinates count).
    std::vector<long> support;
    for (long i = 0; i < N; ++i)
        if (x_hat_RI[i] != 0.0 || x_hat_RI[N + i] != 0.0) support.push_back(i);

    PcdResult res;
    double sigma2_prev = 0.0;  // makes the m = 1 convergence test always fail
    for (long m = 1; m <= config.m_max; ++m) {
        auto [sigma2_hat, L] = residual_variance(r_RI, support);
        (void)L;
        const double t0 = threshold_for_pfa(sigma2_hat, config.pfa0);
        res.variance_trace.push_back(sigma2_hat);
        res.iters.push_back({sigma2_hat, t0, static_cast<long>(support.size())});
        res.iterations = m;
        res.sigma2_pcd = sigma2_hat;
        if (std::abs(sigma2_hat - sigma2_prev) < config.c_tol * sigma2_prev) {
            res.converged = true;
            break;
        }
        sigma2_prev = sigma2_hat;
        support = detect(amp, t0).second;
    }

    res.threshold = threshold_for_pfa(res.sigma2_pcd, config.pfa);
    auto [kept, final_support] = detect(amp, res.threshold);
    res.x_hat_pfa = std::move(kept);
    res.detected_support = std::move(final_support);
    return res;
}

std::string pcd_csv(const PcdResult& result) {
    CsvWriter csv;
    csv.header({"m", "sigma2_hat", "threshold", "detected_count"});
    for (std::size_t i = 0; i < result.iters.size(); ++i) {
        const auto& row = result.iters[i];
        csv.row({std::to_string(i + 1), fmt17(row.sigma2_hat), fmt17(row.threshold0),
                 std::to_string(row.detected_in)});
    }
    csv.row({"final", fmt17(result.sigma2_pcd), fmt17(result.threshold),
             std::to_string(static_cast<long>(result.detected_support.size()))});
    return csv.content();
}

}  // namespace subnyq
