#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "subnyq/diagnostics.hpp"
#include "subnyq/errors.hpp"
#include "subnyq/rng.hpp"
#include "subnyq/signal_model.hpp"
#include "subnyq/unfolding.hpp"
#include "subnyq/vamp.hpp"

using namespace subnyq;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
    Eigen::VectorXd v(static_cast<long>(xs.size()));
    long i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

// A minimal synthetic trial: N cells, given recovery error (same values for
// the real and imaginary coordinates), no targets, and a chosen variance for
// every normalizer.
struct SyntheticTrial {
    Scene scene;
    VampOutput vamp;
    PcdResult pcd;
};

SyntheticTrial synthetic_h0_trial(const Eigen::VectorXd& w_per_part, double sigma2) {
    SyntheticTrial t;
    const long N = w_per_part.size();
    t.scene.x0 = Eigen::VectorXcd::Zero(N);
    t.scene.x0_RI = Eigen::VectorXd::Zero(2 * N);
    t.scene.L0 = 0;
    t.vamp.r_RI.resize(2 * N);
    t.vamp.r_RI << w_per_part, w_per_part;
    t.vamp.x_hat_RI = Eigen::VectorXd::Zero(2 * N);
    t.vamp.sigma2_vamp = sigma2;
    t.pcd.sigma2_pcd = sigma2;
    return t;
}

struct SmallPipeline {
    ObservationModel model = make_partial_fourier(20, 32, 6100);
    PreparedModel prepared{model};
    SceneParams scene_params;
    TrainedParams trained;
    VampConfig vamp_config;
    PcdConfig pcd_config;

    SmallPipeline() {
        scene_params.N = 32;
        scene_params.a_min = scene_params.a_max = 1.0;
        scene_params.rho_min = 0.03;
        scene_params.rho_max = 0.08;
        scene_params.snr_min = 10.0;
        scene_params.snr_max = 16.0;
        trained.layers.assign(3, default_init(scene_params));
        vamp_config.T = 3;
        pcd_config.pfa0 = 1e-2;
        pcd_config.pfa = 1e-2;
    }
};

}  // namespace

TEST_CASE("normal_cdf matches the oracle and is symmetric") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_cdf(0.5) == doctest::Approx(oracle::kPhi_0_5).epsilon(1e-14));
    CHECK(normal_cdf(1.0) == doctest::Approx(oracle::kPhi_1).epsilon(1e-14));
    CHECK(normal_cdf(3.0) == doctest::Approx(oracle::kPhi_3).epsilon(1e-14));
    CHECK(normal_cdf(-1.0) == doctest::Approx(1.0 - oracle::kPhi_1).epsilon(1e-12));
    CHECK(normal_cdf(-8.0) < 1e-14);
    CHECK(normal_cdf(8.0) > 1.0 - 1e-14);
}

TEST_CASE("ecdf_diff hand values for one, two, and tied samples") {
    SUBCASE("single sample at zero") {
        const EcdfCurve c = ecdf_diff(vec({0.0}), 1.0);
        REQUIRE(c.x.size() == 1);
        CHECK(c.x[0] == 0.0);
        CHECK(c.D[0] == doctest::Approx(0.5).epsilon(1e-15));   // right limit: 1 - Phi(0)
        CHECK(c.sup_abs == doctest::Approx(0.5).epsilon(1e-15));  // left limit matches
        CHECK(c.n_samples == 1);
    }
    SUBCASE("two symmetric samples") {
        const EcdfCurve c = ecdf_diff(vec({-1.0, 1.0}), 1.0);
        REQUIRE(c.x.size() == 2);
        // Right limit at -1: 1/2 - Phi(-1) = Phi(1) - 1/2.
        CHECK(c.D[0] == doctest::Approx(oracle::kSupTwoSample).epsilon(1e-12));
        CHECK(c.D[1] == doctest::Approx(1.0 - oracle::kPhi_1).epsilon(1e-12));
        CHECK(c.sup_abs == doctest::Approx(oracle::kSupTwoSample).epsilon(1e-12));
    }
    SUBCASE("ties collapse to one point but the sup sees both limits") {
        const EcdfCurve c = ecdf_diff(vec({1.0, 1.0, 1.0}), 1.0);
        REQUIRE(c.x.size() == 1);
        CHECK(c.x[0] == 1.0);
        CHECK(c.D[0] == doctest::Approx(1.0 - oracle::kPhi_1).epsilon(1e-12));
        // Left limit 0 - Phi(1) dominates.
        CHECK(c.sup_abs == doctest::Approx(oracle::kPhi_1).epsilon(1e-12));
    }
    SUBCASE("the normalizer rescales samples") {
        const EcdfCurve a = ecdf_diff(vec({2.0, -4.0}), 2.0);
        const EcdfCurve b = ecdf_diff(vec({1.0, -2.0}), 1.0);
        CHECK((a.x - b.x).norm() == 0.0);
        CHECK((a.D - b.D).norm() == 0.0);
        CHECK(a.sup_abs == b.sup_abs);
    }
}

TEST_CASE("ecdf_diff validates inputs") {
    CHECK_THROWS_AS(ecdf_diff(vec({1.0}), 0.0), invalid_parameter);
    CHECK_THROWS_AS(ecdf_diff(vec({1.0}), -1.0), invalid_parameter);
    CHECK_THROWS_AS(ecdf_diff(Eigen::VectorXd(), 1.0), invalid_shape);
}

TEST_CASE("ecdf_diff on true normal draws stays inside the 99% DKW band") {
    const long n = 10000;
    Rng rng = make_rng(321);
    Eigen::VectorXd samples(n);
    for (long i = 0; i < n; ++i) samples[i] = normal(rng, 0.0, 1.0);
    const EcdfCurve c = ecdf_diff(samples, 1.0);
    CHECK(c.sup_abs <= oracle::kDkw_1e4_1e2);
    CHECK(c.n_samples == n);
    // Distinct sorted grid, and the reconstructed ECDF ends at one.
    for (long k = 1; k < c.x.size(); ++k) CHECK(c.x[k] > c.x[k - 1]);
    CHECK(c.D[c.x.size() - 1] + normal_cdf(c.x[c.x.size() - 1]) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ecdf_diff flags a wrong normalizer scale") {
    // Samples from N(0, 4) compared against the unit normal: the deviation
    // approaches max_x |Phi(x/2) - Phi(x)| ~ 0.161, far outside the DKW band.
    const long n = 10000;
    Rng rng = make_rng(654);
    Eigen::VectorXd samples(n);
    for (long i = 0; i < n; ++i) samples[i] = normal(rng, 0.0, 2.0);
    const EcdfCurve c = ecdf_diff(samples, 1.0);
    CHECK(c.sup_abs > 0.15);
    CHECK(c.sup_abs < 0.18);  // and close to the theoretical gap
}

TEST_CASE("empirical_metrics hand case with duplicates") {
    const DetectionMetrics m = empirical_metrics({2, 3, 3}, {1, 2}, 6);
    CHECK(m.L0 == 2);
    CHECK(m.null_cells == 4);
    CHECK(m.true_detections == 1);
    CHECK(m.false_alarms == 1);  // duplicate 3 counted once
    REQUIRE(m.pd.has_value());
    CHECK(*m.pd == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(m.pfa == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("empirical_metrics with no targets reports pfa only") {
    const DetectionMetrics m = empirical_metrics({0, 5}, {}, 10);
    CHECK_FALSE(m.pd.has_value());
    CHECK(m.L0 == 0);
    CHECK(m.null_cells == 10);
    CHECK(m.false_alarms == 2);
    CHECK(m.pfa == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("empirical_metrics rejects out-of-range indices") {
    CHECK_THROWS_AS(empirical_metrics({6}, {1}, 6), invalid_parameter);
    CHECK_THROWS_AS(empirical_metrics({0}, {-1}, 6), invalid_parameter);
}

TEST_CASE("oracle_variances partitions by ground truth and coordinate") {
    // N = 5, targets in cells 0 and 1. Real part [0,2 | 0,3,6], imag part
    // [0,4 | 0,6,12]; unbiased variances 2, 9, 8, 36.
    Eigen::VectorXd w(10);
    w << 0, 2, 0, 3, 6, 0, 4, 0, 6, 12;
    const OracleVariances ov = oracle_variances(w, {0, 1});
    CHECK(ov.n_h1 == 2);
    CHECK(ov.n_h0 == 3);
    REQUIRE(ov.r_h1.has_value());
    REQUIRE(ov.r_h0.has_value());
    REQUIRE(ov.i_h1.has_value());
    REQUIRE(ov.i_h0.has_value());
    CHECK(*ov.r_h1 == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(*ov.r_h0 == doctest::Approx(9.0).epsilon(1e-15));
    CHECK(*ov.i_h1 == doctest::Approx(8.0).epsilon(1e-15));
    CHECK(*ov.i_h0 == doctest::Approx(36.0).epsilon(1e-15));
    // Unweighted mean of the four entries vs the dof-weighted combination.
    CHECK(*ov.mean() == doctest::Approx((2.0 + 9.0 + 8.0 + 36.0) / 4.0).epsilon(1e-15));
    CHECK(*ov.pooled() ==
          doctest::Approx((1.0 * 2 + 1.0 * 8 + 2.0 * 9 + 2.0 * 36) / 6.0).epsilon(1e-15));
}

TEST_CASE("oracle_variances drops pools with fewer than two samples") {
    Eigen::VectorXd w(8);
    w << 10, 1, 2, 3, 20, 4, 5, 6;  // target cell 0: single-sample pools
    const OracleVariances ov = oracle_variances(w, {0});
    CHECK(ov.n_h1 == 1);
    CHECK(ov.n_h0 == 3);
    CHECK_FALSE(ov.r_h1.has_value());
    CHECK_FALSE(ov.i_h1.has_value());
    CHECK(*ov.r_h0 == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(*ov.i_h0 == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(*ov.pooled() == doctest::Approx(1.0).epsilon(1e-15));

    // Both pools too small: every summary is absent.
    Eigen::VectorXd tiny(4);
    tiny << 1, 2, 3, 4;
    const OracleVariances none = oracle_variances(tiny, {0});
    CHECK_FALSE(none.mean().has_value());
    CHECK_FALSE(none.pooled().has_value());

    CHECK_THROWS_AS(oracle_variances(Eigen::VectorXd::Zero(5), {}), invalid_shape);
    CHECK_THROWS_AS(oracle_variances(Eigen::VectorXd::Zero(4), {7}), invalid_parameter);
}

TEST_CASE("ecdf_report covers the full part/hypothesis/normalizer grid") {
    const SmallPipeline pipe;
    const TrialResult tr = run_trial(pipe.model, pipe.prepared, pipe.scene_params, pipe.trained,
                                     pipe.vamp_config, pipe.pcd_config, 8200, 0);
    const EcdfReport report = ecdf_report(tr.vamp, tr.scene, tr.pcd);
    CHECK(report.entries.size() == 12);
    CHECK_FALSE(report.degenerate);

    // H0 pools exist under every normalizer (plenty of empty cells).
    for (Part part : {Part::real_part, Part::imag_part})
        for (Normalizer norm : {Normalizer::oracle, Normalizer::vamp, Normalizer::pcd}) {
            const auto* e = report.find(part, Hyp::h0, norm);
            REQUIRE(e != nullptr);
            CHECK(e->curve.n_samples == tr.scene.x0.size() - tr.scene.L0);
            CHECK(e->curve.sup_abs >= 0.0);
            CHECK(e->curve.sup_abs <= 1.0);
        }
    // H1 pools under the per-trial normalizers hold exactly L0 samples.
    const auto* h1 = report.find(Part::real_part, Hyp::h1, Normalizer::pcd);
    REQUIRE(h1 != nullptr);
    CHECK(h1->curve.n_samples == tr.scene.L0);
}

TEST_CASE("a zero recovery error marks the report degenerate") {
    SyntheticTrial t = synthetic_h0_trial(vec({1.0, 2.0, 3.0}), 1.0);
    t.vamp.r_RI = t.scene.x0_RI;  // identical: error vector is exactly zero
    const EcdfReport report = ecdf_report(t.vamp, t.scene, t.pcd);
    CHECK(report.degenerate);
    for (const auto& e : report.entries) CHECK_FALSE(e.present);
    CHECK(report.find(Part::real_part, Hyp::h0, Normalizer::pcd) == nullptr);
}

TEST_CASE("EcdfAccumulator normalizes per trial before pooling") {
    // Trial 1: errors {2,4,6} with sigma^2 = 4 -> z = {1,2,3}.
    // Trial 2: errors {-1,-2,-3} with sigma^2 = 1 -> z = {-1,-2,-3}.
    EcdfAccumulator acc;
    const SyntheticTrial t1 = synthetic_h0_trial(vec({2.0, 4.0, 6.0}), 4.0);
    const SyntheticTrial t2 = synthetic_h0_trial(vec({-1.0, -2.0, -3.0}), 1.0);
    acc.add(t1.vamp, t1.scene, t1.pcd);
    acc.add(t2.vamp, t2.scene, t2.pcd);
    CHECK(acc.trials() == 2);

    const EcdfReport report = acc.report();
    CHECK_FALSE(report.degenerate);
    const auto* e = report.find(Part::real_part, Hyp::h0, Normalizer::pcd);
    REQUIRE(e != nullptr);
    CHECK(e->curve.n_samples == 6);
    REQUIRE(e->curve.x.size() == 6);
    const Eigen::VectorXd expected = vec({-3.0, -2.0, -1.0, 1.0, 2.0, 3.0});
    CHECK((e->curve.x - expected).norm() == 0.0);
    // H1 never occurred, so those entries stay absent even after pooling.
    CHECK(report.find(Part::real_part, Hyp::h1, Normalizer::pcd) == nullptr);
}

TEST_CASE("ecdf_csv downsamples dumped points but keeps the full-curve sup") {
    EcdfAccumulator acc;
    Eigen::VectorXd w(100);
    for (long i = 0; i < 100; ++i) w[i] = 0.05 * static_cast<double>(i + 1);
    const SyntheticTrial t = synthetic_h0_trial(w, 1.0);
    acc.add(t.vamp, t.scene, t.pcd);
    const EcdfReport report = acc.report();

    const std::string full = ecdf_csv(report, 0);
    const std::string capped = ecdf_csv(report, 10);
    auto count_rows = [](const std::string& text, const std::string& needle) {
        long n = 0;
        std::size_t pos = 0;
        while ((pos = text.find(needle, pos)) != std::string::npos) {
            ++n;
            pos += needle.size();
        }
        return n;
    };
    CHECK(count_rows(full, "R,H0,pcd,") == 100);
    CHECK(count_rows(capped, "R,H0,pcd,") == 10);
    CHECK(full.rfind("part,hypothesis,normalizer,x,D\n") != std::string::npos);

    const std::string summary = ecdf_summary_csv(report);
    CHECK(summary.find("part,hypothesis,normalizer,sup_abs,n_samples") != std::string::npos);
    // All 12 grid combinations are listed, absent ones included.
    CHECK(count_rows(summary, "\nR,") + count_rows(summary, "\nI,") == 12);
    CHECK(count_rows(summary, "absent") == 6);  // the six H1 entries never filled
}

TEST_CASE("run_trial is deterministic and follows the documented seed split") {
    const SmallPipeline pipe;
    const TrialResult a = run_trial(pipe.model, pipe.prepared, pipe.scene_params, pipe.trained,
                                    pipe.vamp_config, pipe.pcd_config, 500, 3);
    const TrialResult b = run_trial(pipe.model, pipe.prepared, pipe.scene_params, pipe.trained,
                                    pipe.vamp_config, pipe.pcd_config, 500, 3);
    CHECK((a.vamp.x_hat_RI - b.vamp.x_hat_RI).norm() == 0.0);
    CHECK(a.pcd.sigma2_pcd == b.pcd.sigma2_pcd);
    CHECK(a.scene.support == b.scene.support);

    const TrialResult c = run_trial(pipe.model, pipe.prepared, pipe.scene_params, pipe.trained,
                                    pipe.vamp_config, pipe.pcd_config, 500, 4);
    CHECK((a.scene.x0_RI - c.scene.x0_RI).norm() != 0.0);

    // Trial index i draws its scene from stream 2i of the master seed.
    const Scene expected = generate_scene(pipe.scene_params, derive_seed(500, 6));
    CHECK((a.scene.x0_RI - expected.x0_RI).norm() == 0.0);

    // The stored oracle summary is the one computed from this trial's error.
    const OracleVariances ov = oracle_variances(a.vamp.r_RI - a.scene.x0_RI, a.scene.support);
    CHECK(ov.n_h0 == a.oracle.n_h0);
    REQUIRE(a.oracle.r_h0.has_value());
    CHECK(*ov.r_h0 == *a.oracle.r_h0);
}

TEST_CASE("monte_carlo_roc output is independent of the worker count") {
    const SmallPipeline pipe;
    const std::vector<double> presets = {0.1, 0.01};
    const RocCurve one = monte_carlo_roc(pipe.model, pipe.prepared, pipe.scene_params, pipe.trained,
                                         pipe.vamp_config, pipe.pcd_config, presets, 30, 9300, 1);
    const RocCurve three = monte_carlo_roc(pipe.model, pipe.prepared, pipe.scene_params, pipe.trained,
                                           pipe.vamp_config, pipe.pcd_config, presets, 30, 9300, 3);
    CHECK(roc_csv(one) == roc_csv(three));
    CHECK(metrics_csv(one) == metrics_csv(three));

    CHECK(one.trials_requested == 30);
    CHECK(one.trials_failed == 0);
    REQUIRE(one.rows.size() == 6);  // 3 variants x 2 presets
    REQUIRE(one.trial_metrics.size() == 30);

    // Row order is variant-major over the preset list.
    CHECK(one.rows[0].variant == "pcd");
    CHECK(one.rows[1].variant == "pcd");
    CHECK(one.rows[2].variant == "oracle-bound");
    CHECK(one.rows[4].variant == "vamp-variance");
    CHECK(one.rows[0].preset_pfa == 0.1);
    CHECK(one.rows[1].preset_pfa == 0.01);

    for (const auto& row : one.rows) {
        CHECK(row.trials == 30);
        CHECK(row.achieved_pfa >= 0.0);
        CHECK(row.achieved_pfa <= 1.0);
        CHECK(row.achieved_pd >= 0.0);
        CHECK(row.achieved_pd <= 1.0);
    }
    // A stricter preset can only lower the achieved rate (same amplitudes,
    // higher threshold), for every variant.
    for (int v = 0; v < 3; ++v) {
        CHECK(one.rows[2 * v + 1].achieved_pfa <= one.rows[2 * v].achieved_pfa);
        CHECK(one.rows[2 * v + 1].achieved_pd <= one.rows[2 * v].achieved_pd);
    }

    CHECK_THROWS_AS(monte_carlo_roc(pipe.model, pipe.prepared, pipe.scene_params, pipe.trained,
                                    pipe.vamp_config, pipe.pcd_config, presets, 0, 1, 1),
                    invalid_parameter);
    CHECK_THROWS_AS(monte_carlo_roc(pipe.model, pipe.prepared, pipe.scene_params, pipe.trained,
                                    pipe.vamp_config, pipe.pcd_config, {0.0}, 5, 1, 1),
                    invalid_parameter);
}

TEST_CASE("csv schemas are pinned") {
    const SmallPipeline pipe;
    const RocCurve curve = monte_carlo_roc(pipe.model, pipe.prepared, pipe.scene_params, pipe.trained,
                                           pipe.vamp_config, pipe.pcd_config, {0.05}, 4, 11, 1);
    const std::string roc = roc_csv(curve);
    CHECK(roc.find("# trials_requested=4 trials_failed=0\n") == 0);
    CHECK(roc.find("preset_pfa,achieved_pfa,achieved_pd,variant,trials\n") != std::string::npos);

    const std::string metrics = metrics_csv(curve);
    CHECK(metrics.find("trial,L0,sigma2_pcd,sigma2_vamp,sigma2_oracle,pcd_iterations,"
                       "pcd_converged,pd,pfa\n") == 0);

    // Absent optionals render as the literal "absent".
    RocCurve fabricated;
    TrialMetricsRow row;
    row.trial = 0;
    row.L0 = 0;
    row.sigma2_pcd = 1.0;
    row.sigma2_vamp = 2.0;
    fabricated.trial_metrics.push_back(row);
    const std::string text = metrics_csv(fabricated);
    CHECK(text.find(",absent,") != std::string::npos);
    CHECK(text.find(",absent,0,0,absent,") != std::string::npos);
}
