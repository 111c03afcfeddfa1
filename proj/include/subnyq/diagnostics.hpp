#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "subnyq/pcd.hpp"
#include "subnyq/signal_model.hpp"
#include "subnyq/unfolding.hpp"
#include "subnyq/vamp.hpp"

namespace subnyq {

// Standard normal CDF via the libm complementary error function
// (absolute error well under 1e-10).
double normal_cdf(double x);

struct DetectionMetrics {
    std::optional<double> pd;  // absent when the scene has no targets
    double pfa = 0;
    long true_detections = 0;
    long false_alarms = 0;
    long L0 = 0;
    long null_cells = 0;  // N - L0
};

// Exact set arithmetic between 0-based detected/true supports.
DetectionMetrics empirical_metrics(const std::vector<long>& detected_support,
                                   const std::vector<long>& true_support, long N);

// Ground-truth-partitioned unbiased sample variances of the recovery error
// (real/imag x target/no-target). Entries with fewer than 2 samples are
// absent.
struct OracleVariances {
    std::optional<double> r_h1, r_h0, i_h1, i_h0;
    long n_h1 = 0, n_h0 = 0;  // pool sizes (shared by the real/imag parts)
    // Unweighted mean of the available entries.
    std::optional<double> mean() const;
    // Degrees-of-freedom-weighted combination of the available entries (the
    // standard pooled variance); the scalar "oracle variance". With a handful
    // of target cells the H1 entries are extremely noisy on their own, so the
    // pooled form is the usable single-number oracle.
    std::optional<double> pooled() const;
};

OracleVariances oracle_variances(const Eigen::VectorXd& w_RI, const std::vector<long>& true_support);

// Empirical-CDF-minus-normal-CDF curve of sigma-normalized samples.
// x holds the distinct sorted sample values; D the right-limit difference
// at each; sup_abs the supremum of |D| over BOTH one-sided limits.
struct EcdfCurve {
    Eigen::VectorXd x;
    Eigen::VectorXd D;
    double sup_abs = 0;
    long n_samples = 0;
};

EcdfCurve ecdf_diff(const Eigen::VectorXd& samples, double normalizer_sigma);

enum class Part { real_part, imag_part };
enum class Hyp { h0, h1 };
enum class Normalizer { oracle, vamp, pcd };

std::string to_string(Part p);
std::string to_string(Hyp h);
std::string to_string(Normalizer n);

// The 12-curve report: (real/imag) x (H0/H1) x (oracle/vamp/pcd normalizer).
struct EcdfReport {
    struct Entry {
        Part part;
        Hyp hyp;
        Normalizer norm;
        bool present = false;
        EcdfCurve curve;
    };
    std::vector<Entry> entries;
    bool degenerate = false;  // recovery error identically zero

    const Entry* find(Part p, Hyp h, Normalizer n) const;
};

// Single-trial report from one recovery (needs ground truth).
EcdfReport ecdf_report(const VampOutput& vamp, const Scene& scene, const PcdResult& pcd);

// Pools per-trial-normalized residual samples across trials, then builds one
// report over the pooled samples per curve.
class EcdfAccumulator {
  public:
    void add(const VampOutput& vamp, const Scene& scene, const PcdResult& pcd);
    EcdfReport report() const;
    long trials() const { return trials_; }

  private:
    std::array<std::vector<double>, 12> pools_;
    long trials_ = 0;
    bool any_degenerate_ = false;
};

// ecdf.csv rows: part, hypothesis, normalizer, x, D. max_points_per_curve
// subsamples the dumped grid (sup_abs always reflects the full curve);
// 0 dumps every point.
std::string ecdf_csv(const EcdfReport& report, long max_points_per_curve);
std::string ecdf_summary_csv(const EcdfReport& report);

// --- Monte Carlo harness ----------------------------------------------------

// One full pipeline pass: scene -> measurement -> unfolded recovery -> PCD.
struct TrialResult {
    Scene scene;
    VampOutput vamp;
    PcdResult pcd;
    OracleVariances oracle;
};

// Deterministic per-trial seeds: scene uses derive_seed(master, 2i), noise
// derive_seed(master, 2i+1).
TrialResult run_trial(const ObservationModel& model, const PreparedModel& prepared,
                      const SceneParams& scene_params, const TrainedParams& trained,
                      const VampConfig& vamp_config, const PcdConfig& pcd_config,
                      std::uint64_t master_seed, long trial_index);

struct RocRow {
    double preset_pfa = 0;
    double achieved_pfa = 0;
    double achieved_pd = 0;
    std::string variant;  // "pcd", "oracle-bound", "vamp-variance"
    long trials = 0;
    long null_cells = 0;      // pooled H0 cell count behind achieved_pfa
    long occupied_cells = 0;  // pooled H1 cell count behind achieved_pd
};

struct TrialMetricsRow {
    long trial = 0;
    long L0 = 0;
    double sigma2_pcd = 0;
    double sigma2_vamp = 0;
    std::optional<double> sigma2_oracle;
    long pcd_iterations = 0;
    bool pcd_converged = false;
    std::optional<double> pd;  // at the trial's final detector threshold
    double pfa = 0;
};

struct RocCurve {
    std::vector<RocRow> rows;
    std::vector<TrialMetricsRow> trial_metrics;
    long trials_requested = 0;
    long trials_failed = 0;
};

// Sweeps detection presets against pooled trial outcomes. Each trial runs
// the detector once (variance estimation at pcd0); every preset then
// re-thresholds the same amplitude vector, for each variance variant.
RocCurve monte_carlo_roc(const ObservationModel& model, const PreparedModel& prepared,
                         const SceneParams& scene_params, const TrainedParams& trained,
                         const VampConfig& vamp_config, const PcdConfig& pcd_config,
                         const std::vector<double>& presets, long trials, std::uint64_t master_seed,
                         int workers);

std::string roc_csv(const RocCurve& curve);
std::string metrics_csv(const RocCurve& curve);

}  // namespace subnyq
