#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace subnyq {

struct PcdConfig {
    double pfa0 = 1e-3;   // preset rate driving the variance-refinement loop, (0,1)
    double pfa = 1e-2;    // final desired false-alarm rate, (0,1]
    double c_tol = 1e-5;  // relative convergence tolerance, > 0
    long m_max = 50;      // iteration cap, >= 1
};

void validate(const PcdConfig& c);

struct PcdIterRow {
    double sigma2_hat = 0;   // variance estimate produced at this iteration
    double threshold0 = 0;   // refinement threshold implied by it (preset pfa0)
    long detected_in = 0;    // detections excluded when estimating it
};

struct PcdResult {
    double sigma2_pcd = 0;               // converged variance estimate
    double threshold = 0;                // final amplitude threshold at pfa
    Eigen::VectorXd x_hat_pfa;           // amplitudes kept above threshold, length N
    std::vector<long> detected_support;  // 0-based cell indices
    std::vector<double> variance_trace;  // sigma2_hat{1..m}
    std::vector<PcdIterRow> iters;
    long iterations = 0;
    bool converged = false;
};

// I0(x) = 1 + sum_{n>=1} (x/2)^{2n} / (n!)^2, relative error <= 1e-10.
// Power series for small x, scaled asymptotic expansion for large x.
double bessel_i0(double x);

// exp(-x) * I0(x); stays finite for all x >= 0.
double bessel_i0e(double x);

// (r/sigma2) exp(-r^2 / (2 sigma2)) for r >= 0.
double rayleigh_pdf(double r, double sigma2);

// (r/sigma2) exp(-(r^2 + mu^2) / (2 sigma2)) I0(r mu / sigma2); reduces to
// the Rayleigh density at mu = 0. Evaluated in overflow-safe form.
double rician_pdf(double r, double mu, double sigma2);

// T = sqrt(-2 sigma2 ln pfa); pfa in (0, 1] (pfa = 1 gives T = 0).
double threshold_for_pfa(double sigma2, double pfa);

// exp(-T^2 / (2 sigma2)); exact inverse of threshold_for_pfa.
double pfa_for_threshold(double sigma2, double T);

// Unbiased sample variance of both real-formulation coordinates of all cells
// NOT in detected_cells. Returns (sigma2_hat, L) with L the residual
// coordinate count 2*(N - |detected|). Throws degenerate_support when L < 2.
std::pair<double, long> residual_variance(const Eigen::VectorXd& r_RI,
                                          const std::vector<long>& detected_cells);

// x_hat_pfa = r element-wise where r_i > T (strict), zero otherwise.
std::pair<Eigen::VectorXd, std::vector<long>> detect(const Eigen::VectorXd& r, double T);

// Iterative variance refinement: start from the sparse solution's support,
// alternate residual-variance estimation and re-detection at pfa0 until the
// estimate moves by less than c_tol relative, then threshold at the final pfa.
PcdResult run_pcd(const Eigen::VectorXd& x_hat_RI, const Eigen::VectorXd& r_RI, const PcdConfig& config);

// One row per iteration (m, sigma2_hat, threshold, detected_count) plus a
// summary row with the final variance/threshold/detection count.
std::string pcd_csv(const PcdResult& result);

}  // namespace subnyq
