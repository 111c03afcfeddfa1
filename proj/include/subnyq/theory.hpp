#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace subnyq {

// Numerical study of the detector's variance-refinement map: iterates of
// g, the limit, its closed-form approximation, and the contraction bound.
struct FixedPointStudy {
    double sigma2_true = 0;
    double pfa0 = 0;
    std::vector<double> iterates;   // sigma2_hat{1..m}, sigma2_hat{1} = init
    double limit = 0;               // last iterate
    double approx_limit = 0;        // closed-form approximation
    double contraction_bound = 0;   // pfa0^{init/sigma2_true} * ln^2(pfa0)
    bool converged = false;
};

// Validity window endpoints. Any endpoint can be absent: pfa_max2 has no
// root when the contraction equation cannot reach 1 inside its bracket;
// pfa_min needs occupied-cell amplitudes.
struct PfaWindow {
    std::optional<double> pfa_min;
    std::optional<double> pfa_max1;
    std::optional<double> pfa_max2;
    std::string diagnostics;  // human-readable notes for absent endpoints
};

// Expected residual variance of amplitude-truncated noise cells:
// f(T) = sigma2 - 1/2 exp(-T^2/(2 sigma2)) (2 sigma2 + T^2).
double f_of_T(double T, double sigma2_true);

// d f / d T = exp(-T^2/(2 sigma2)) T^3 / (2 sigma2) >= 0.
double f_prime(double T, double sigma2_true);

// One refinement step expressed in variance space:
// g(s2) = f(sqrt(-2 s2 ln pfa0))
//       = sigma2_true - 1/2 exp(s2 ln(pfa0)/sigma2_true) (2 sigma2_true - 2 s2 ln(pfa0)).
double g_of_sigma2(double sigma2, double sigma2_true, double pfa0);

// d g / d s2 = pfa0^{s2/sigma2_true} s2 ln^2(pfa0) / sigma2_true.
double g_prime(double sigma2, double sigma2_true, double pfa0);

// Iterate g from sigma2_init (playing the role of the first estimate) until
// the relative step is below tol or max_iter. Asserts the monotone
// increasing chain bounded by sigma2_true; violations throw theory_violation.
FixedPointStudy iterate_fixed_point(double sigma2_init, double sigma2_true, double pfa0, double tol,
                                    long max_iter);

// sigma2_true (1 - pfa0) / (1 - pfa0 ln(pfa0)).
double approx_fixed_point(double sigma2_true, double pfa0);

// Window endpoints given a realized first estimate and (for pfa_min) the
// occupied-cell amplitudes of a scene:
//   pfa_max2: root of p^{s1/s2true} ln^2 p = 1 inside (0, exp(-2 s2true/s1));
//   pfa_max1: root of g(s1; p) = s1 in (0, 1);
//   pfa_min = exp(-min_amp^2 / (2 sigma2_pcd)).
PfaWindow pfa_window(double sigma2_hat_1, double sigma2_true,
                     const Eigen::VectorXd& scene_amplitudes_r_H1, double sigma2_pcd);

// Iteration rows (m, sigma2_iterate, step_ratio) plus summary comments
// (limit, approximate limit, contraction bound, window endpoints).
std::string theory_csv(const FixedPointStudy& study, const PfaWindow* window);

}  // namespace subnyq
