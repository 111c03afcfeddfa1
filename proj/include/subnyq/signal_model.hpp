#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "subnyq/rng.hpp"

namespace subnyq {

enum class MatrixKind { partial_fourier, gaussian, custom };

std::string to_string(MatrixKind kind);
MatrixKind matrix_kind_from_string(const std::string& s);

// Complex M×N sensing matrix together with its 2M×2N real block embedding
// [[Re A, -Im A], [Im A, Re A]].
struct ObservationModel {
    Eigen::MatrixXcd A;               // M×N
    Eigen::MatrixXd A_RI;             // 2M×2N
    long M = 0;
    long N = 0;
    MatrixKind kind = MatrixKind::custom;
    std::vector<long> row_selection;  // partial-fourier: the M chosen DFT rows
    std::uint64_t seed = 0;
};

// Ranges the scene generator draws from. min == max pins a parameter.
struct SceneParams {
    double a_min = 1.0, a_max = 1.0;      // shared amplitude draw, > 0
    double rho_min = 0.0, rho_max = 0.0;  // occupancy density in [0,1]
    double snr_min = 0.0, snr_max = 0.0;  // dB by default (see snr_is_db)
    long N = 0;
    bool snr_is_db = true;  // false: treat snr values as linear ratios
};

void validate(const SceneParams& p);

// One random sparse ground-truth scene: x0_i = a * exp(j*phi_i) * q_i.
struct Scene {
    Eigen::VectorXcd x0;         // N
    Eigen::VectorXd x0_RI;       // 2N
    std::vector<long> support;   // indices with q_i == 1, ascending
    long L0 = 0;
    double rho = 0.0;            // the realized density draw (not L0/N)
    Eigen::VectorXd amplitudes;  // N, all equal to the per-scene draw
    Eigen::VectorXd phases;      // N, U[-pi, pi]
    Eigen::VectorXi occupancy;   // N, 0/1
    double noise_sigma2 = 0.0;   // per real component; noise is CN(0, 2*sigma2)
};

struct Measurement {
    Eigen::VectorXcd y;    // M
    Eigen::VectorXd y_RI;  // 2M
    Eigen::VectorXcd n;    // M, the stored noise realization
};

// M distinct rows of the N-point DFT, columns rescaled to unit norm.
ObservationModel make_partial_fourier(long M, long N, std::uint64_t seed);

// i.i.d. CN(0, 1/M) entries, columns NOT renormalized (standard Gaussian
// ensemble; columns have unit norm in expectation).
ObservationModel make_gaussian(long M, long N, std::uint64_t seed);

// Wrap an externally supplied complex matrix.
ObservationModel make_custom(const Eigen::MatrixXcd& A, std::uint64_t seed);

// [[Re A, -Im A], [Im A, Re A]].
Eigen::MatrixXd embed_real(const Eigen::MatrixXcd& A);

// Stacked real formulation [Re x; Im x] of a complex vector.
Eigen::VectorXd realvec(const Eigen::VectorXcd& x);

// Split a stacked real vector/matrix into its top and bottom halves.
// Throws invalid_shape when the row count is odd.
std::pair<Eigen::VectorXd, Eigen::VectorXd> split_real_imag(const Eigen::VectorXd& h);
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> split_real_imag(const Eigen::MatrixXd& h);

// Reassemble a complex vector from its stacked real formulation.
Eigen::VectorXcd complexvec(const Eigen::VectorXd& h);

// Solve (a_min^2 + a_max^2 + a_min*a_max) / (6 sigma^2) = snr for sigma^2.
// snr is 10^(snr_db/10) when db == true, the raw ratio otherwise.
double snr_to_sigma2(double a_min, double a_max, double snr, bool db = true);

// Draw order (pinned for determinism): amplitude, rho, snr, then N phases,
// then N occupancy flags.
Scene generate_scene(const SceneParams& params, std::uint64_t seed);

// y = A x0 + n with n_i ~ CN(0, 2*noise_sigma2) (real/imag parts each
// N(0, noise_sigma2)).
Measurement measure(const ObservationModel& model, const Scene& scene, std::uint64_t seed);

// Element-wise complex magnitude of a stacked real vector: out_i = hypot(h_i, h_{N+i}).
Eigen::VectorXd amplitude(const Eigen::VectorXd& r_RI);

// --- debugging dumps and matrix cache -------------------------------------

// CSV with columns index,re,im,occupied (occupied all zero when no scene).
std::string scene_csv(const Scene& scene);
std::string measurement_csv(const Measurement& m);

// Binary cache, little-endian: "UFCM1", M and N as int64, M row indices as
// int64 (zeros for non-partial-fourier kinds), then the complex entries as
// interleaved re/im float64 in row-major order.
void save_model_cache(const ObservationModel& model, const std::filesystem::path& path);
ObservationModel load_model_cache(const std::filesystem::path& path);

}  // namespace subnyq
