#include "subnyq/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "subnyq/errors.hpp"
#include "subnyq/io.hpp"
#include "subnyq/parallel.hpp"
#include "subnyq/rng.hpp"

namespace subnyq {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

DetectionMetrics empirical_metrics(const std::vector<long>& detected_support,
                                   const std::vector<long>& true_support, long N) {
    std::vector<char> is_true(static_cast<std::size_t>(N), 0);
    for (long i : true_support) {
        if (i < 0 || i >= N) throw invalid_parameter("empirical_metrics: true support index out of range");
        is_true[static_cast<std::size_t>(i)] = 1;
    }
    DetectionMetrics m;
    m.L0 = static_cast<long>(true_support.size());
    m.null_cells = N - m.L0;
    std::vector<char> seen(static_cast<std::size_t>(N), 0);
    for (long i : detected_support) {
        if (i < 0 || i >= N) throw invalid_parameter("empirical_metrics: detected index out of range");
        if (seen[static_cast<std::size_t>(i)]) continue;
        seen[static_cast<std::size_t>(i)] = 1;
        if (is_true[static_cast<std::size_t>(i)])
            ++m.true_detections;
        else
            ++m.false_alarms;
    }
    if (m.L0 > 0) m.pd = static_cast<double>(m.true_detections) / static_cast<double>(m.L0);
    m.pfa = m.null_cells > 0 ? static_cast<double>(m.false_alarms) / static_cast<double>(m.null_cells) : 0.0;
    return m;
}

namespace {

std::optional<double> sample_variance_opt(const std::vector<double>& xs) {
    if (xs.size() < 2) return std::nullopt;
    double mean = 0.0;
    for (double v : xs) mean += v;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double v : xs) ss += (v - mean) * (v - mean);
    return ss / static_cast<double>(xs.size() - 1);
}

}  // namespace

std::optional<double> OracleVariances::mean() const {
    double sum = 0.0;
    int n = 0;
    for (const auto& v : {r_h1, r_h0, i_h1, i_h0})
        if (v) {
            sum += *v;
            ++n;
        }
    if (n == 0) return std::nullopt;
    return sum / n;
}

std::optional<double> OracleVariances::pooled() const {
    double num = 0.0, den = 0.0;
    const std::pair<const std::optional<double>*, long> pools[4] = {
        {&r_h1, n_h1}, {&i_h1, n_h1}, {&r_h0, n_h0}, {&i_h0, n_h0}};
    for (const auto& [v, n] : pools)
        if (*v && n >= 2) {
            num += static_cast<double>(n - 1) * **v;
            den += static_cast<double>(n - 1);
        }
    if (den <= 0.0) return std::nullopt;
    return num / den;
}

OracleVariances oracle_variances(const Eigen::VectorXd& w_RI, const std::vector<long>& true_support) {
    if (w_RI.size() % 2 != 0) throw invalid_shape("oracle_variances: odd-length w_RI");
    const long N = w_RI.size() / 2;
    std::vector<char> occ(static_cast<std::size_t>(N), 0);
    for (long i : true_support) {
        if (i < 0 || i >= N) throw invalid_parameter("oracle_variances: support index out of range");
        occ[static_cast<std::size_t>(i)] = 1;
    }
    std::vector<double> rh1, rh0, ih1, ih0;
    for (long i = 0; i < N; ++i) {
        if (occ[static_cast<std::size_t>(i)]) {
            rh1.push_back(w_RI[i]);
            ih1.push_back(w_RI[N + i]);
        } else {
            rh0.push_back(w_RI[i]);
            ih0.push_back(w_RI[N + i]);
        }
    }
    OracleVariances out;
    out.r_h1 = sample_variance_opt(rh1);
    out.r_h0 = sample_variance_opt(rh0);
    out.i_h1 = sample_variance_opt(ih1);
    out.i_h0 = sample_variance_opt(ih0);
    out.n_h1 = static_cast<long>(rh1.size());
    out.n_h0 = static_cast<long>(rh0.size());
    return out;
}

EcdfCurve ecdf_diff(const Eigen::VectorXd& samples, double normalizer_sigma) {
    if (!(normalizer_sigma > 0.0)) throw invalid_parameter("ecdf_diff: sigma must be positive");
    if (samples.size() < 1) throw invalid_shape("ecdf_diff: need at least one sample");
    const long n = samples.size();
    std::vector<double> z(samples.data(), samples.data() + n);
    for (double& v : z) v /= normalizer_sigma;
    std::sort(z.begin(), z.end());

    EcdfCurve curve;
    curve.n_samples = n;
    std::vector<double> xs, ds;
    xs.reserve(static_cast<std::size_t>(n));
    ds.reserve(static_cast<std::size_t>(n));
    double sup = 0.0;
    long i = 0;
    while (i < n) {
        long j = i;
        while (j + 1 < n && z[static_cast<std::size_t>(j + 1)] == z[static_cast<std::size_t>(i)]) ++j;
        const double x = z[static_cast<std::size_t>(i)];
        const double phi = normal_cdf(x);
        // Left limit uses the count strictly below x, right limit includes
        // the ties; the sup must consider both sides of each jump.
        const double d_left = static_cast<double>(i) / static_cast<double>(n) - phi;
        const double d_right = static_cast<double>(j + 1) / static_cast<double>(n) - phi;
        sup = std::max({sup, std::abs(d_left), std::abs(d_right)});
        xs.push_back(x);
        ds.push_back(d_right);
        i = j + 1;
    }
    curve.x = Eigen::Map<Eigen::VectorXd>(xs.data(), static_cast<long>(xs.size()));
    curve.D = Eigen::Map<Eigen::VectorXd>(ds.data(), static_cast<long>(ds.size()));
    curve.sup_abs = sup;

    // The ECDF itself is non-decreasing and ends at 1 by construction;
    // verify anyway so every computed curve carries the guarantee.
    for (long k = 1; k < curve.D.size(); ++k) {
        const double c_prev = curve.D[k - 1] + normal_cdf(curve.x[k - 1]);
        const double c_here = curve.D[k] + normal_cdf(curve.x[k]);
        if (c_here < c_prev - 1e-12) throw theory_violation("ecdf_diff: ECDF not non-decreasing");
    }
    return curve;
}

std::string to_string(Part p) { return p == Part::real_part ? "R" : "I"; }
std::string to_string(Hyp h) { return h == Hyp::h0 ? "H0" : "H1"; }
std::string to_string(Normalizer n) {
    switch (n) {
        case Normalizer::oracle: return "oracle";
        case Normalizer::vamp: return "vamp";
        case Normalizer::pcd: return "pcd";
    }
    return "?";
}

const EcdfReport::Entry* EcdfReport::find(Part p, Hyp h, Normalizer n) const {
    for (const auto& e : entries)
        if (e.part == p && e.hyp == h && e.norm == n && e.present) return &e;
    return nullptr;
}

namespace {

constexpr int pool_index(Part p, Hyp h, Normalizer n) {
    return static_cast<int>(p) * 6 + static_cast<int>(h) * 3 + static_cast<int>(n);
}

// Collect each trial's per-curve normalized samples into `sink` (12 buckets).
// Returns false when the recovery error is identically zero (degenerate).
bool collect_normalized(const VampOutput& vamp, const Scene& scene, const PcdResult& pcd,
                        std::array<std::vector<double>, 12>& sink) {
    const Eigen::VectorXd w = vamp.r_RI - scene.x0_RI;
    if (w.size() != scene.x0_RI.size()) throw invalid_shape("ecdf_report: r_RI length mismatch");
    const long N = w.size() / 2;
    if (w.lpNorm<Eigen::Infinity>() == 0.0) return false;

    const OracleVariances ov = oracle_variances(w, scene.support);
    std::vector<char> occ(static_cast<std::size_t>(N), 0);
    for (long i : scene.support) occ[static_cast<std::size_t>(i)] = 1;

    auto push = [&](Part part, Hyp hyp, Normalizer norm, double sigma2, double value) {
        if (!(sigma2 > 0.0)) return;
        sink[static_cast<std::size_t>(pool_index(part, hyp, norm))].push_back(value / std::sqrt(sigma2));
    };
    auto opt2 = [](const std::optional<double>& v) { return v ? *v : -1.0; };

    for (long i = 0; i < N; ++i) {
        const Hyp hyp = occ[static_cast<std::size_t>(i)] ? Hyp::h1 : Hyp::h0;
        const double wr = w[i], wi = w[N + i];
        const double oracle_r = hyp == Hyp::h1 ? opt2(ov.r_h1) : opt2(ov.r_h0);
        const double oracle_i = hyp == Hyp::h1 ? opt2(ov.i_h1) : opt2(ov.i_h0);
        push(Part::real_part, hyp, Normalizer::oracle, oracle_r, wr);
        push(Part::imag_part, hyp, Normalizer::oracle, oracle_i, wi);
        push(Part::real_part, hyp, Normalizer::vamp, vamp.sigma2_vamp, wr);
        push(Part::imag_part, hyp, Normalizer::vamp, vamp.sigma2_vamp, wi);
        push(Part::real_part, hyp, Normalizer::pcd, pcd.sigma2_pcd, wr);
        push(Part::imag_part, hyp, Normalizer::pcd, pcd.sigma2_pcd, wi);
    }
    return true;
}

EcdfReport report_from_pools(const std::array<std::vector<double>, 12>& pools, bool degenerate) {
    EcdfReport report;
    report.degenerate = degenerate;
    for (Part part : {Part::real_part, Part::imag_part})
        for (Hyp hyp : {Hyp::h0, Hyp::h1})
            for (Normalizer norm : {Normalizer::oracle, Normalizer::vamp, Normalizer::pcd}) {
                EcdfReport::Entry entry;
                entry.part = part;
                entry.hyp = hyp;
                entry.norm = norm;
                const auto& pool = pools[static_cast<std::size_t>(pool_index(part, hyp, norm))];
                if (!pool.empty()) {
                    Eigen::Map<const Eigen::VectorXd> v(pool.data(), static_cast<long>(pool.size()));
                    entry.curve = ecdf_diff(v, 1.0);  // samples already normalized per trial
                    entry.present = true;
                }
                report.entries.push_back(std::move(entry));
            }
    return report;
}

}  // namespace

EcdfReport ecdf_report(const VampOutput& vamp, const Scene& scene, const PcdResult& pcd) {
    std::array<std::vector<double>, 12> pools;
    const bool ok = collect_normalized(vamp, scene, pcd, pools);
    return report_from_pools(pools, !ok);
}

void EcdfAccumulator::add(const VampOutput& vamp, const Scene& scene, const PcdResult& pcd) {
    if (!collect_normalized(vamp, scene, pcd, pools_)) any_degenerate_ = true;
    ++trials_;
}

EcdfReport EcdfAccumulator::report() const { return report_from_pools(pools_, any_degenerate_); }

std::string ecdf_csv(const EcdfReport& report, long max_points_per_curve) {
    CsvWriter csv;
    if (report.degenerate) csv.comment("degenerate: recovery error identically zero in at least one trial");
    csv.header({"part", "hypothesis", "normalizer", "x", "D"});
    for (const auto& e : report.entries) {
        if (!e.present) continue;
        const long n = e.curve.x.size();
        const long step = (max_points_per_curve > 0 && n > max_points_per_curve)
                              ? (n + max_points_per_curve - 1) / max_points_per_curve
                              : 1;
        for (long i = 0; i < n; i += step)
            csv.row({to_string(e.part), to_string(e.hyp), to_string(e.norm), fmt17(e.curve.x[i]),
                     fmt17(e.curve.D[i])});
    }
    return csv.content();
}

std::string ecdf_summary_csv(const EcdfReport& report) {
    CsvWriter csv;
    csv.header({"part", "hypothesis", "normalizer", "sup_abs", "n_samples"});
    for (const auto& e : report.entries) {
        csv.row({to_string(e.part), to_string(e.hyp), to_string(e.norm),
                 e.present ? fmt17(e.curve.sup_abs) : "absent",
                 std::to_string(e.present ? e.curve.n_samples : 0)});
    }
    return csv.content();
}

// --- Monte Carlo harness -----------------------------------------------------

TrialResult run_trial(const ObservationModel& model, const PreparedModel& prepared,
                      const SceneParams& scene_params, const TrainedParams& trained,
                      const VampConfig& vamp_config, const PcdConfig& pcd_config,
                      std::uint64_t master_seed, long trial_index) {
    TrialResult tr;
    const std::uint64_t i = static_cast<std::uint64_t>(trial_index);
    tr.scene = generate_scene(scene_params, derive_seed(master_seed, 2 * i));
    Measurement meas = measure(model, tr.scene, derive_seed(master_seed, 2 * i + 1));
    tr.vamp = test_unfolded(meas.y_RI, prepared, trained, vamp_config);
    tr.pcd = run_pcd(tr.vamp.x_hat_RI, tr.vamp.r_RI, pcd_config);
    tr.oracle = oracle_variances(tr.vamp.r_RI - tr.scene.x0_RI, tr.scene.support);
    return tr;
}

RocCurve monte_carlo_roc(const ObservationModel& model, const PreparedModel& prepared,
                         const SceneParams& scene_params, const TrainedParams& trained,
                         const VampConfig& vamp_config, const PcdConfig& pcd_config,
                         const std::vector<double>& presets, long trials, std::uint64_t master_seed,
                         int workers) {
    if (trials < 1) throw invalid_parameter("monte_carlo_roc: trials must be >= 1");
    for (double p : presets)
        if (!(p > 0.0) || !(p <= 1.0)) throw invalid_parameter("monte_carlo_roc: presets must lie in (0, 1]");

    constexpr int kVariants = 3;  // pcd, oracle-bound, vamp-variance
    static const char* kVariantNames[kVariants] = {"pcd", "oracle-bound", "vamp-variance"};

    struct TrialCounts {
        bool ok = false;
        bool variant_ok[kVariants] = {false, false, false};
        long null_cells = 0, occupied_cells = 0;
        // per variant x preset: false alarms / true detections
        std::vector<long> fp, tp;
        TrialMetricsRow metrics;
    };
    std::vector<TrialCounts> slots(static_cast<std::size_t>(trials));

    parallel_for(trials, workers, [&](long t) {
        TrialCounts& out = slots[static_cast<std::size_t>(t)];
        out.fp.assign(static_cast<std::size_t>(kVariants * static_cast<long>(presets.size())), 0);
        out.tp.assign(static_cast<std::size_t>(kVariants * static_cast<long>(presets.size())), 0);
        TrialResult tr;
        try {
            tr = run_trial(model, prepared, scene_params, trained, vamp_config, pcd_config, master_seed, t);
        } catch (const error&) {
            return;  // per-trial failure: excluded, counted by the reducer
        }
        out.ok = true;
        out.null_cells = static_cast<long>(tr.scene.x0.size()) - tr.scene.L0;
        out.occupied_cells = tr.scene.L0;

        const Eigen::VectorXd amp = amplitude(tr.vamp.r_RI);
        std::vector<char> occ(static_cast<std::size_t>(tr.scene.x0.size()), 0);
        for (long i : tr.scene.support) occ[static_cast<std::size_t>(i)] = 1;

        const std::optional<double> oracle_pooled = tr.oracle.pooled();
        const double variances[kVariants] = {tr.pcd.sigma2_pcd, oracle_pooled ? *oracle_pooled : -1.0,
                                             tr.vamp.sigma2_vamp};
        for (int v = 0; v < kVariants; ++v) {
            if (!(variances[v] > 0.0)) continue;  // e.g. oracle absent on an empty scene
            out.variant_ok[v] = true;
            for (std::size_t p = 0; p < presets.size(); ++p) {
                const double thr = threshold_for_pfa(variances[v], presets[p]);
                long fp = 0, tp = 0;
                for (long i = 0; i < amp.size(); ++i) {
                    if (amp[i] > thr) (occ[static_cast<std::size_t>(i)] ? tp : fp) += 1;
                }
                out.fp[static_cast<std::size_t>(v) * presets.size() + p] = fp;
                out.tp[static_cast<std::size_t>(v) * presets.size() + p] = tp;
            }
        }

        auto metrics = empirical_metrics(tr.pcd.detected_support, tr.scene.support,
                                         static_cast<long>(tr.scene.x0.size()));
        out.metrics.trial = t;
        out.metrics.L0 = tr.scene.L0;
        out.metrics.sigma2_pcd = tr.pcd.sigma2_pcd;
        out.metrics.sigma2_vamp = tr.vamp.sigma2_vamp;
        out.metrics.sigma2_oracle = oracle_pooled;
        out.metrics.pcd_iterations = tr.pcd.iterations;
        out.metrics.pcd_converged = tr.pcd.converged;
        out.metrics.pd = metrics.pd;
        out.metrics.pfa = metrics.pfa;
    });

    // Sequential reduction in trial order keeps output independent of the
    // worker count.
    RocCurve curve;
    curve.trials_requested = trials;
    std::vector<long> fp_total(static_cast<std::size_t>(kVariants) * presets.size(), 0);
    std::vector<long> tp_total(static_cast<std::size_t>(kVariants) * presets.size(), 0);
    long null_total[kVariants] = {0, 0, 0};
    long occ_total[kVariants] = {0, 0, 0};
    long ok_trials[kVariants] = {0, 0, 0};
    for (const auto& slot : slots) {
        if (!slot.ok) {
            ++curve.trials_failed;
            continue;
        }
        curve.trial_metrics.push_back(slot.metrics);
        for (int v = 0; v < kVariants; ++v) {
            if (!slot.variant_ok[v]) continue;
            ++ok_trials[v];
            null_total[v] += slot.null_cells;
            occ_total[v] += slot.occupied_cells;
            for (std::size_t p = 0; p < presets.size(); ++p) {
                fp_total[static_cast<std::size_t>(v) * presets.size() + p] +=
                    slot.fp[static_cast<std::size_t>(v) * presets.size() + p];
                tp_total[static_cast<std::size_t>(v) * presets.size() + p] +=
                    slot.tp[static_cast<std::size_t>(v) * presets.size() + p];
            }
        }
    }
    for (int v = 0; v < kVariants; ++v) {
        for (std::size_t p = 0; p < presets.size(); ++p) {
            RocRow row;
            row.preset_pfa = presets[p];
            row.variant = kVariantNames[v];
            row.trials = ok_trials[v];
            row.null_cells = null_total[v];
            row.occupied_cells = occ_total[v];
            const long fp = fp_total[static_cast<std::size_t>(v) * presets.size() + p];
            const long tp = tp_total[static_cast<std::size_t>(v) * presets.size() + p];
            row.achieved_pfa = null_total[v] > 0 ? static_cast<double>(fp) / null_total[v] : 0.0;
            row.achieved_pd = occ_total[v] > 0 ? static_cast<double>(tp) / occ_total[v] : 0.0;
            curve.rows.push_back(std::move(row));
        }
    }
    return curve;
}

std::string roc_csv(const RocCurve& curve) {
    CsvWriter csv;
    csv.comment("trials_requested=" + std::to_string(curve.trials_requested) +
                " trials_failed=" + std::to_string(curve.trials_failed));
    csv.header({"preset_pfa", "achieved_pfa", "achieved_pd", "variant", "trials"});
    for (const auto& r : curve.rows)
        csv.row({fmt17(r.preset_pfa), fmt17(r.achieved_pfa), fmt17(r.achieved_pd), r.variant,
                 std::to_string(r.trials)});
    return csv.content();
}

std::string metrics_csv(const RocCurve& curve) {
    CsvWriter csv;
    csv.header({"trial", "L0", "sigma2_pcd", "sigma2_vamp", "sigma2_oracle", "pcd_iterations",
                "pcd_converged", "pd", "pfa"});
    for (const auto& m : curve.trial_metrics)
        csv.row({std::to_string(m.trial), std::to_string(m.L0), fmt17(m.sigma2_pcd),
                 fmt17(m.sigma2_vamp), m.sigma2_oracle ? fmt17(*m.sigma2_oracle) : "absent",
                 std::to_string(m.pcd_iterations), m.pcd_converged ? "1" : "0",
                 m.pd ? fmt17(*m.pd) : "absent", fmt17(m.pfa)});
    return csv.content();
}

}  // namespace subnyq
