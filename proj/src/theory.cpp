#include "subnyq/theory.hpp"

#include <cmath>
#include <limits>

#include "subnyq/errors.hpp"
#include "subnyq/io.hpp"

namespace subnyq {

namespace {

void check_sigma2_true(double sigma2_true) {
    if (!(sigma2_true > 0.0)) throw invalid_parameter("sigma2_true must be positive");
}

void check_pfa0(double pfa0) {
    if (!(pfa0 > 0.0) || !(pfa0 < 1.0)) throw invalid_parameter("pfa0 must lie in (0, 1)");
}

// Bisection on [lo, hi] for a function known to be negative at lo and
// positive at hi. 200 halvings take the interval to machine resolution.
template <typename F>
double bisect(F fn, double lo, double hi) {
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (fn(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

double f_of_T(double T, double sigma2_true) {
    check_sigma2_true(sigma2_true);
    if (T < 0.0) throw invalid_parameter("f_of_T: T must be >= 0");
    return sigma2_true - 0.5 * std::exp(-T * T / (2.0 * sigma2_true)) * (2.0 * sigma2_true + T * T);
}

double f_prime(double T, double sigma2_true) {
    check_sigma2_true(sigma2_true);
    if (T < 0.0) throw invalid_parameter("f_prime: T must be >= 0");
    return std::exp(-T * T / (2.0 * sigma2_true)) * T * T * T / (2.0 * sigma2_true);
}

double g_of_sigma2(double sigma2, double sigma2_true, double pfa0) {
    check_sigma2_true(sigma2_true);
    check_pfa0(pfa0);
    if (sigma2 < 0.0) throw invalid_parameter("g_of_sigma2: sigma2 must be >= 0");
    const double lnp = std::log(pfa0);
    return sigma2_true -
           0.5 * std::exp(sigma2 * lnp / sigma2_true) * (2.0 * sigma2_true - 2.0 * sigma2 * lnp);
}

double g_prime(double sigma2, double sigma2_true, double pfa0) {
    check_sigma2_true(sigma2_true);
    check_pfa0(pfa0);
    if (sigma2 < 0.0) throw invalid_parameter("g_prime: sigma2 must be >= 0");
    const double lnp = std::log(pfa0);
    return std::exp(sigma2 * lnp / sigma2_true) * sigma2 * lnp * lnp / sigma2_true;
}

FixedPointStudy iterate_fixed_point(double sigma2_init, double sigma2_true, double pfa0, double tol,
                                    long max_iter) {
    check_sigma2_true(sigma2_true);
    check_pfa0(pfa0);
    if (!(sigma2_init > 0.0) || !(sigma2_init < sigma2_true))
        throw invalid_parameter("iterate_fixed_point needs 0 < sigma2_init < sigma2_true");
    if (!(tol > 0.0) || max_iter < 1) throw invalid_parameter("iterate_fixed_point: bad tol/max_iter");

    const double lnp = std::log(pfa0);
    FixedPointStudy study;
    study.sigma2_true = sigma2_true;
    study.pfa0 = pfa0;
    study.approx_limit = approx_fixed_point(sigma2_true, pfa0);
    study.contraction_bound = std::pow(pfa0, sigma2_init / sigma2_true) * lnp * lnp;

    double prev = sigma2_init;
    study.iterates.push_back(prev);
    for (long m = 1; m < max_iter; ++m) {
        const double next = g_of_sigma2(prev, sigma2_true, pfa0);
        // The chain must increase monotonically and stay below sigma2_true;
        // allow one ulp of slack at the converged plateau.
        if (next < prev * (1.0 - 1e-15))
            throw theory_violation("fixed-point iterate decreased: " + fmt17(next) + " after " + fmt17(prev));
        if (next > sigma2_true)
            throw theory_violation("fixed-point iterate exceeded sigma2_true: " + fmt17(next));
        study.iterates.push_back(next);
        if (std::abs(next - prev) < tol * prev) {
            study.converged = true;
            prev = next;
            break;
        }
        prev = next;
    }
    study.limit = study.iterates.back();
    return study;
}

double approx_fixed_point(double sigma2_true, double pfa0) {
    check_sigma2_true(sigma2_true);
    check_pfa0(pfa0);
    return sigma2_true * (1.0 - pfa0) / (1.0 - pfa0 * std::log(pfa0));
}

PfaWindow pfa_window(double sigma2_hat_1, double sigma2_true,
                     const Eigen::VectorXd& scene_amplitudes_r_H1, double sigma2_pcd) {
    check_sigma2_true(sigma2_true);
    if (!(sigma2_hat_1 > 0.0) || !(sigma2_hat_1 < sigma2_true))
        throw invalid_parameter("pfa_window needs 0 < sigma2_hat_1 < sigma2_true");

    PfaWindow win;
    const double c = sigma2_hat_1 / sigma2_true;

    // Contraction endpoint: p^c ln^2 p = 1 on the increasing branch
    // (0, exp(-2/c)). The bracket top is the maximizer of p^c ln^2 p, so a
    // root exists iff the value there reaches 1, i.e. 4/(c^2 e^2) > 1.
    {
        const double hi = std::exp(-2.0 / c);
        auto h = [c](double p) { return std::pow(p, c) * std::log(p) * std::log(p) - 1.0; };
        if (h(hi) > 0.0) {
            win.pfa_max2 = bisect(h, std::numeric_limits<double>::min(), hi);
        } else {
            win.diagnostics += "pfa_max2 absent: p^c ln^2 p stays below 1 on (0, exp(-2/c)) for c=" +
                               fmt17(c) + "; ";
        }
    }

    // First-step growth endpoint: g(s1; p) - s1 is positive as p -> 0
    // (limit sigma2_true - s1 > 0) and negative at p -> 1 (limit -s1), so a
    // root always exists; bisect on the sign of s1 - g (negative at lo).
    {
        auto h = [&](double p) { return sigma2_hat_1 - g_of_sigma2(sigma2_hat_1, sigma2_true, p); };
        const double lo = 1e-300, hi = 1.0 - 1e-16;
        if (h(lo) < 0.0 && h(hi) > 0.0) {
            win.pfa_max1 = bisect(h, lo, hi);
        } else {
            win.diagnostics += "pfa_max1 absent: no sign change for g(s1; p) = s1; ";
        }
    }

    if (scene_amplitudes_r_H1.size() > 0) {
        if (!(sigma2_pcd > 0.0)) throw invalid_parameter("pfa_window: sigma2_pcd must be positive");
        const double min_amp = scene_amplitudes_r_H1.minCoeff();
        win.pfa_min = std::exp(-min_amp * min_amp / (2.0 * sigma2_pcd));
    } else {
        win.diagnostics += "pfa_min absent: no occupied-cell amplitudes supplied; ";
    }
    return win;
}

std::string theory_csv(const FixedPointStudy& study, const PfaWindow* window) {
    CsvWriter csv;
    csv.comment("sigma2_true=" + fmt17(study.sigma2_true) + " pfa0=" + fmt17(study.pfa0));
    csv.comment("limit=" + fmt17(study.limit) + " approx_limit=" + fmt17(study.approx_limit) +
                " contraction_bound=" + fmt17(study.contraction_bound) +
                " converged=" + (study.converged ? std::string("1") : std::string("0")));
    if (window) {
        auto show = [](const std::optional<double>& v) { return v ? fmt17(*v) : std::string("absent"); };
        csv.comment("pfa_min=" + show(window->pfa_min) + " pfa_max1=" + show(window->pfa_max1) +
                    " pfa_max2=" + show(window->pfa_max2));
        if (!window->diagnostics.empty()) csv.comment("window_diagnostics: " + window->diagnostics);
    }
    csv.header({"m", "sigma2_iterate", "step_ratio"});
    for (std::size_t m = 0; m < study.iterates.size(); ++m) {
        // step_ratio m: |s{m+1} - limit| / |s{m} - limit|, the empirical
        // contraction factor (blank for the first row and at the limit).
        std::string ratio;
        if (m > 0) {
            const double prev_gap = std::abs(study.iterates[m - 1] - study.limit);
            const double gap = std::abs(study.iterates[m] - study.limit);
            if (prev_gap > 0.0) ratio = fmt17(gap / prev_gap);
        }
        csv.row({std::to_string(m + 1), fmt17(study.iterates[m]), ratio});
    }
    return csv.content();
}

}  // namespace subnyq
