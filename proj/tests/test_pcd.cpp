#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "subnyq/errors.hpp"
#include "subnyq/pcd.hpp"
#include "subnyq/rng.hpp"

using namespace subnyq;

TEST_CASE("bessel_i0 matches the arbitrary-precision oracle") {
    CHECK(bessel_i0(0.0) == 1.0);
    CHECK(bessel_i0(1.0) == doctest::Approx(oracle::kI0_1).epsilon(1e-12));
    CHECK(bessel_i0(2.0) == doctest::Approx(oracle::kI0_2).epsilon(1e-12));
    CHECK(bessel_i0(10.0) == doctest::Approx(oracle::kI0_10).epsilon(1e-12));
    CHECK(bessel_i0(15.0) == doctest::Approx(oracle::kI0_15).epsilon(1e-12));
    CHECK_THROWS_AS(bessel_i0(-0.5), invalid_parameter);
}

TEST_CASE("bessel_i0e stays finite and matches the oracle in both regimes") {
    CHECK(bessel_i0e(30.0) == doctest::Approx(oracle::kI0e_30).epsilon(1e-12));
    CHECK(bessel_i0e(300.0) == doctest::Approx(oracle::kI0e_300).epsilon(1e-12));
    CHECK(bessel_i0e(1.0) == doctest::Approx(oracle::kI0_1 * std::exp(-1.0)).epsilon(1e-12));
    // Both regimes agree with the oracle just either side of the switch
    // (the offset is small enough that the function's own slope is negligible).
    CHECK(bessel_i0e(30.0 * (1.0 - 1e-12)) == doctest::Approx(oracle::kI0e_30).epsilon(1e-9));
    CHECK(bessel_i0e(30.0 * (1.0 + 1e-12)) == doctest::Approx(oracle::kI0e_30).epsilon(1e-9));
    // No overflow far beyond the unscaled function's range.
    CHECK(std::isfinite(bessel_i0e(5000.0)));
    CHECK(bessel_i0e(5000.0) > 0.0);
}

TEST_CASE("rayleigh_pdf hand values and normalization") {
    CHECK(rayleigh_pdf(1.0, 1.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
    CHECK(rayleigh_pdf(-1.0, 1.0) == 0.0);
    CHECK_THROWS_AS(rayleigh_pdf(1.0, 0.0), invalid_parameter);
    double integral = 0.0;
    const double h = 1e-4;
    for (double r = 0.0; r < 12.0; r += h) integral += h * 0.5 * (rayleigh_pdf(r, 1.0) + rayleigh_pdf(r + h, 1.0));
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("rician_pdf reduces to Rayleigh at mu = 0 and normalizes") {
    for (double r : {0.1, 0.7, 2.0, 5.0})
        CHECK(rician_pdf(r, 0.0, 1.3) == doctest::Approx(rayleigh_pdf(r, 1.3)).epsilon(1e-12));
    double integral = 0.0;
    const double h = 1e-4;
    for (double r = 0.0; r < 30.0; r += h)
        integral += h * 0.5 * (rician_pdf(r, 3.0, 2.0) + rician_pdf(r + h, 3.0, 2.0));
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
    // Large non-centrality: the overflow-safe form stays finite and peaked
    // near mu.
    CHECK(std::isfinite(rician_pdf(100.0, 100.0, 1.0)));
    CHECK(rician_pdf(100.0, 100.0, 1.0) > rician_pdf(90.0, 100.0, 1.0));
    CHECK_THROWS_AS(rician_pdf(1.0, -1.0, 1.0), invalid_parameter);
}

TEST_CASE("threshold_for_pfa matches the oracle and inverts exactly") {
    CHECK(threshold_for_pfa(0.5, 0.01) == doctest::Approx(oracle::kThreshold_half_1e2).epsilon(1e-14));
    CHECK(threshold_for_pfa(1.0, 0.01) == doctest::Approx(oracle::kThreshold_1_1e2).epsilon(1e-14));
    CHECK(threshold_for_pfa(2.0, 1.0) == 0.0);
    CHECK_THROWS_AS(threshold_for_pfa(0.0, 0.5), invalid_parameter);
    CHECK_THROWS_AS(threshold_for_pfa(1.0, 0.0), invalid_parameter);
    CHECK_THROWS_AS(threshold_for_pfa(1.0, 1.5), invalid_parameter);

    Rng rng = make_rng(55);
    for (int i = 0; i < 50; ++i) {
        const double sigma2 = std::exp(uniform(rng, -6.0, 3.0));
        const double pfa = std::exp(uniform(rng, -12.0, -1e-6));
        const double back = pfa_for_threshold(sigma2, threshold_for_pfa(sigma2, pfa));
        CHECK(std::abs(back - pfa) <= 1e-12 * pfa);
    }
    // Lower preset rate -> higher threshold.
    CHECK(threshold_for_pfa(1.0, 1e-4) > threshold_for_pfa(1.0, 1e-2));
}

TEST_CASE("residual_variance matches an independent two-pass computation") {
    Rng rng = make_rng(7);
    const long N = 40;
    Eigen::VectorXd r(2 * N);
    for (long i = 0; i < 2 * N; ++i) r[i] = normal(rng, 0.3, 1.7);
    const std::vector<long> detected = {0, 5, 17, 39};

    const auto [sigma2, L] = residual_variance(r, detected);
    CHECK(L == 2 * (N - 4));

    std::vector<double> pool;
    for (long i = 0; i < N; ++i) {
        if (std::find(detected.begin(), detected.end(), i) != detected.end()) continue;
        pool.push_back(r[i]);
        pool.push_back(r[N + i]);
    }
    double mean = 0.0;
    for (double v : pool) mean += v;
    mean /= static_cast<double>(pool.size());
    double ss = 0.0;
    for (double v : pool) ss += (v - mean) * (v - mean);
    const double expect = ss / static_cast<double>(pool.size() - 1);
    CHECK(sigma2 == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("residual_variance edge cases") {
    Eigen::VectorXd r(6);
    r << 1, 2, 3, 4, 5, 6;
    std::vector<long> all = {0, 1, 2};
    CHECK_THROWS_AS(residual_variance(r, all), degenerate_support);
    CHECK_THROWS_AS(residual_variance(r, {5}), invalid_parameter);  // out of range
    Eigen::VectorXd odd(5);
    CHECK_THROWS_AS(residual_variance(odd, {}), invalid_shape);
    // Empty detected set: plain sample variance over all six coordinates.
    const auto [sigma2, L] = residual_variance(r, {});
    CHECK(L == 6);
    CHECK(sigma2 == doctest::Approx(3.5).epsilon(1e-14));  // var of 1..6
}

TEST_CASE("detect is strict and 0-based") {
    Eigen::VectorXd amp(4);
    amp << 0.5, 2.0, 1.0, 3.0;
    const auto [kept, support] = detect(amp, 1.0);
    CHECK(support == std::vector<long>{1, 3});  // amp == T is not a detection
    CHECK(kept[0] == 0.0);
    CHECK(kept[1] == 2.0);
    CHECK(kept[2] == 0.0);
    CHECK(kept[3] == 3.0);
    CHECK_THROWS_AS(detect(amp, -1.0), invalid_parameter);
}

namespace {

// Ideal-recovery synthetic input: r = x0 + N(0, sigma2) in both coordinates.
// The sparse solution keeps every cell whose amplitude clears a low initial
// threshold (mimicking a soft-threshold stage), so the first residual pool is
// amplitude-truncated and the refinement climbs from below.
struct Synthetic {
    Eigen::VectorXd x_hat, r;
    std::vector<long> support;
    double sigma2;
};

Synthetic make_synthetic(long N, long targets, double amp, double sigma2, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    Synthetic s;
    s.sigma2 = sigma2;
    s.r.resize(2 * N);
    s.x_hat = Eigen::VectorXd::Zero(2 * N);
    for (long i = 0; i < 2 * N; ++i) s.r[i] = normal(rng, 0.0, std::sqrt(sigma2));
    for (long k = 0; k < targets; ++k) {
        const long i = (k + 1) * N / (targets + 1);
        s.support.push_back(i);
        s.r[i] += amp;
    }
    const double lambda = 1.5 * std::sqrt(sigma2);
    for (long i = 0; i < N; ++i) {
        if (std::hypot(s.r[i], s.r[N + i]) > lambda) {
            s.x_hat[i] = s.r[i];
            s.x_hat[N + i] = s.r[N + i];
        }
    }
    return s;
}

}  // namespace

TEST_CASE("run_pcd recovers the variance of ideal-recovery input") {
    const long N = 4096;
    const double sigma2 = 0.04;
    const Synthetic s = make_synthetic(N, 8, 10.0 * std::sqrt(sigma2), sigma2, 303);

    PcdConfig cfg;
    cfg.pfa0 = 1e-3;
    cfg.pfa = 1e-2;
    const PcdResult res = run_pcd(s.x_hat, s.r, cfg);

    CHECK(res.converged);
    CHECK(res.iterations <= 10);
    CHECK(res.sigma2_pcd == doctest::Approx(sigma2).epsilon(0.05));
    CHECK(res.threshold == doctest::Approx(threshold_for_pfa(res.sigma2_pcd, cfg.pfa)).epsilon(1e-15));
    // All strong targets survive the final threshold.
    for (long i : s.support)
        CHECK(std::find(res.detected_support.begin(), res.detected_support.end(), i) !=
              res.detected_support.end());
    // Trace is non-decreasing (refinement walks the variance up, never down).
    for (std::size_t m = 1; m < res.variance_trace.size(); ++m)
        CHECK(res.variance_trace[m] >= res.variance_trace[m - 1] * (1 - 1e-12));
    CHECK(res.variance_trace.size() == static_cast<std::size_t>(res.iterations));
}

TEST_CASE("run_pcd detections nest as the final rate loosens") {
    const Synthetic s = make_synthetic(512, 4, 2.0, 0.09, 99);
    PcdConfig tight;
    tight.pfa0 = 1e-3;
    tight.pfa = 1e-3;
    PcdConfig loose = tight;
    loose.pfa = 5e-2;
    const PcdResult a = run_pcd(s.x_hat, s.r, tight);
    const PcdResult b = run_pcd(s.x_hat, s.r, loose);
    CHECK(a.sigma2_pcd == b.sigma2_pcd);  // pfa only affects the final threshold
    for (long i : a.detected_support)
        CHECK(std::find(b.detected_support.begin(), b.detected_support.end(), i) !=
              b.detected_support.end());
    CHECK(b.detected_support.size() >= a.detected_support.size());
}

TEST_CASE("looser c_tol gives a prefix of the tighter trace") {
    const Synthetic s = make_synthetic(1024, 6, 1.5, 0.05, 11);
    PcdConfig tight;
    tight.c_tol = 1e-8;
    PcdConfig loose = tight;
    loose.c_tol = 1e-2;
    const PcdResult a = run_pcd(s.x_hat, s.r, loose);
    const PcdResult b = run_pcd(s.x_hat, s.r, tight);
    REQUIRE(a.variance_trace.size() <= b.variance_trace.size());
    for (std::size_t m = 0; m < a.variance_trace.size(); ++m)
        CHECK(a.variance_trace[m] == b.variance_trace[m]);
}

TEST_CASE("run_pcd never converges on the first pass and respects m_max") {
    const Synthetic s = make_synthetic(256, 2, 2.0, 0.04, 5);
    PcdConfig cfg;
    cfg.m_max = 1;
    const PcdResult res = run_pcd(s.x_hat, s.r, cfg);
    CHECK(res.iterations == 1);
    CHECK_FALSE(res.converged);  // sigma2_hat{0} = 0 cannot satisfy a relative test
}

TEST_CASE("run_pcd input validation") {
    Eigen::VectorXd ok(8), bad(6);
    ok.setZero();
    bad.setZero();
    PcdConfig cfg;
    CHECK_THROWS_AS(run_pcd(ok, bad, cfg), invalid_shape);
    PcdConfig invalid;
    invalid.pfa0 = 1.0;
    CHECK_THROWS_AS(run_pcd(ok, ok, invalid), invalid_parameter);
    invalid = PcdConfig{};
    invalid.pfa = 0.0;
    CHECK_THROWS_AS(run_pcd(ok, ok, invalid), invalid_parameter);
    invalid = PcdConfig{};
    invalid.c_tol = 0.0;
    CHECK_THROWS_AS(run_pcd(ok, ok, invalid), invalid_parameter);
    invalid = PcdConfig{};
    invalid.m_max = 0;
    CHECK_THROWS_AS(run_pcd(ok, ok, invalid), invalid_parameter);
}

TEST_CASE("pcd_csv lists one row per iteration plus the summary row") {
    const Synthetic s = make_synthetic(512, 4, 2.0, 0.04, 21);
    const PcdResult res = run_pcd(s.x_hat, s.r, PcdConfig{});
    const std::string csv = pcd_csv(res);
    CHECK(csv.find("m,sigma2_hat,threshold,detected_count") != std::string::npos);
    CHECK(csv.find("final,") != std::string::npos);
    // One line per iteration + header + final.
    const long lines = static_cast<long>(std::count(csv.begin(), csv.end(), '\n'));
    CHECK(lines == res.iterations + 2);
}
