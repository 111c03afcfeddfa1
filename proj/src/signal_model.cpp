#include "subnyq/signal_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

#include "subnyq/errors.hpp"
#include "subnyq/io.hpp"

namespace subnyq {

std::string to_string(MatrixKind kind) {
    switch (kind) {
        case MatrixKind::partial_fourier: return "partial-fourier";
        case MatrixKind::gaussian: return "gaussian";
        case MatrixKind::custom: return "custom";
    }
    return "custom";
}

MatrixKind matrix_kind_from_string(const std::string& s) {
    if (s == "partial-fourier" || s == "partial_fourier") return MatrixKind::partial_fourier;
    if (s == "gaussian") return MatrixKind::gaussian;
    if (s == "custom") return MatrixKind::custom;
    throw invalid_parameter("unknown matrix kind '" + s + "'");
}

void validate(const SceneParams& p) {
    if (!(p.a_min > 0.0) || !(p.a_max > 0.0)) throw invalid_parameter("amplitudes must be positive");
    if (p.a_min > p.a_max) throw invalid_parameter("a_min > a_max");
    if (p.rho_min < 0.0 || p.rho_max > 1.0 || p.rho_min > p.rho_max)
        throw invalid_parameter("density range must satisfy 0 <= rho_min <= rho_max <= 1");
    if (p.snr_min > p.snr_max) throw invalid_parameter("snr_min > snr_max");
    if (p.N < 1) throw invalid_parameter("scene length N must be >= 1");
}

Eigen::MatrixXd embed_real(const Eigen::MatrixXcd& A) {
    const long M = A.rows(), N = A.cols();
    Eigen::MatrixXd out(2 * M, 2 * N);
    out.topLeftCorner(M, N) = A.real();
    out.topRightCorner(M, N) = -A.imag();
    out.bottomLeftCorner(M, N) = A.imag();
    out.bottomRightCorner(M, N) = A.real();
    return out;
}

Eigen::VectorXd realvec(const Eigen::VectorXcd& x) {
    Eigen::VectorXd out(2 * x.size());
    out.head(x.size()) = x.real();
    out.tail(x.size()) = x.imag();
    return out;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> split_real_imag(const Eigen::VectorXd& h) {
    if (h.size() % 2 != 0) throw invalid_shape("split_real_imag: odd length " + std::to_string(h.size()));
    const long n = h.size() / 2;
    return {h.head(n), h.tail(n)};
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> split_real_imag(const Eigen::MatrixXd& h) {
    if (h.rows() % 2 != 0) throw invalid_shape("split_real_imag: odd row count " + std::to_string(h.rows()));
    const long n = h.rows() / 2;
    return {h.topRows(n), h.bottomRows(n)};
}

Eigen::VectorXcd complexvec(const Eigen::VectorXd& h) {
    auto [re, im] = split_real_imag(h);
    Eigen::VectorXcd out(re.size());
    out.real() = re;
    out.imag() = im;
    return out;
}

static ObservationModel finish_model(Eigen::MatrixXcd A, MatrixKind kind, std::vector<long> rows,
                                     std::uint64_t seed) {
    ObservationModel model;
    model.M = A.rows();
    model.N = A.cols();
    model.A = std::move(A);
    model.A_RI = embed_real(model.A);
    model.kind = kind;
    model.row_selection = std::move(rows);
    model.seed = seed;
    return model;
}

ObservationModel make_partial_fourier(long M, long N, std::uint64_t seed) {
    if (M < 1 || M > N) throw invalid_dimensions("partial Fourier needs 1 <= M <= N, got M=" +
                                                 std::to_string(M) + " N=" + std::to_string(N));
    // Fisher-Yates prefix over the N DFT row indices gives M distinct rows.
    Rng rng = make_rng(seed);
    std::vector<long> rows(static_cast<std::size_t>(N));
    std::iota(rows.begin(), rows.end(), 0L);
    for (long i = 0; i < M; ++i) {
        std::uniform_int_distribution<long> pick(i, N - 1);
        std::swap(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(pick(rng))]);
    }
    rows.resize(static_cast<std::size_t>(M));

    Eigen::MatrixXcd A(M, N);
    const double scale = 1.0 / std::sqrt(static_cast<double>(M));  // unit column norms
    for (long r = 0; r < M; ++r) {
        const long k = rows[static_cast<std::size_t>(r)];
        for (long n = 0; n < N; ++n) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) * static_cast<double>(n) /
                               static_cast<double>(N);
            A(r, n) = std::complex<double>(std::cos(ang) * scale, std::sin(ang) * scale);
        }
    }
    return finish_model(std::move(A), MatrixKind::partial_fourier, std::move(rows), seed);
}

ObservationModel make_gaussian(long M, long N, std::uint64_t seed) {
    if (M < 1 || M > N) throw invalid_dimensions("gaussian model needs 1 <= M <= N");
    Rng rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(0.5 / static_cast<double>(M)));
    Eigen::MatrixXcd A(M, N);
    for (long r = 0; r < M; ++r)
        for (long c = 0; c < N; ++c) {
            const double re = gauss(rng);
            const double im = gauss(rng);
            A(r, c) = std::complex<double>(re, im);
        }
    return finish_model(std::move(A), MatrixKind::gaussian, {}, seed);
}

ObservationModel make_custom(const Eigen::MatrixXcd& A, std::uint64_t seed) {
    if (A.rows() < 1 || A.rows() > A.cols()) throw invalid_dimensions("custom model needs 1 <= M <= N");
    return finish_model(A, MatrixKind::custom, {}, seed);
}

double snr_to_sigma2(double a_min, double a_max, double snr, bool db) {
    if (!(a_min > 0.0) || !(a_max > 0.0) || a_min > a_max)
        throw invalid_parameter("snr_to_sigma2 needs 0 < a_min <= a_max");
    const double ratio = db ? std::pow(10.0, snr / 10.0) : snr;
    if (!(ratio > 0.0)) throw invalid_parameter("SNR ratio must be positive");
    const double numer = a_min * a_min + a_max * a_max + a_min * a_max;
    return numer / (6.0 * ratio);
}

Scene generate_scene(const SceneParams& params, std::uint64_t seed) {
    validate(params);
    Rng rng = make_rng(seed);
    Scene s;
    const double a = uniform(rng, params.a_min, params.a_max);
    s.rho = uniform(rng, params.rho_min, params.rho_max);
    const double snr = uniform(rng, params.snr_min, params.snr_max);
    s.noise_sigma2 = snr_to_sigma2(params.a_min, params.a_max, snr, params.snr_is_db);

    const long N = params.N;
    s.amplitudes = Eigen::VectorXd::Constant(N, a);
    s.phases.resize(N);
    for (long i = 0; i < N; ++i) s.phases[i] = uniform(rng, -std::numbers::pi, std::numbers::pi);
    s.occupancy.resize(N);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (long i = 0; i < N; ++i) s.occupancy[i] = unit(rng) < s.rho ? 1 : 0;

    s.x0.resize(N);
    for (long i = 0; i < N; ++i) {
        if (s.occupancy[i]) {
            s.x0[i] = std::polar(a, s.phases[i]);
            s.support.push_back(i);
        } else {
            s.x0[i] = 0.0;
        }
    }
    s.L0 = static_cast<long>(s.support.size());
    s.x0_RI = realvec(s.x0);
    return s;
}

Measurement measure(const ObservationModel& model, const Scene& scene, std::uint64_t seed) {
    if (model.N != scene.x0.size())
        throw invalid_dimensions("measure: model N=" + std::to_string(model.N) + " but scene length " +
                                 std::to_string(scene.x0.size()));
    Rng rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(scene.noise_sigma2));
    Measurement m;
    m.n.resize(model.M);
    for (long i = 0; i < model.M; ++i) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        m.n[i] = std::complex<double>(re, im);
    }
    m.y = model.A * scene.x0 + m.n;
    m.y_RI = realvec(m.y);
    return m;
}

Eigen::VectorXd amplitude(const Eigen::VectorXd& r_RI) {
    auto [re, im] = split_real_imag(r_RI);
    Eigen::VectorXd out(re.size());
    for (long i = 0; i < re.size(); ++i) out[i] = std::hypot(re[i], im[i]);
    return out;
}

std::string scene_csv(const Scene& scene) {
    CsvWriter csv;
    csv.header({"index", "re", "im", "occupied"});
    for (long i = 0; i < scene.x0.size(); ++i)
        csv.row({std::to_string(i), fmt17(scene.x0[i].real()), fmt17(scene.x0[i].imag()),
                 std::to_string(scene.occupancy[i])});
    return csv.content();
}

std::string measurement_csv(const Measurement& m) {
    CsvWriter csv;
    csv.header({"index", "re", "im"});
    for (long i = 0; i < m.y.size(); ++i)
        csv.row({std::to_string(i), fmt17(m.y[i].real()), fmt17(m.y[i].imag())});
    return csv.content();
}

// --- binary matrix cache ---------------------------------------------------

namespace {

constexpr char kCacheMagic[5] = {'U', 'F', 'C', 'M', '1'};

void put_i64(std::string& buf, std::int64_t v) {
    for (int i = 0; i < 8; ++i) buf += static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
}

void put_f64(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) buf += static_cast<char>((bits >> (8 * i)) & 0xff);
}

std::int64_t get_i64(const std::string& buf, std::size_t& pos) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return static_cast<std::int64_t>(v);
}

double get_f64(const std::string& buf, std::size_t& pos) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void save_model_cache(const ObservationModel& model, const std::filesystem::path& path) {
    std::string buf;
    buf.reserve(static_cast<std::size_t>(5 + 16 + 8 * model.M + 16 * model.M * model.N));
    buf.append(kCacheMagic, sizeof kCacheMagic);
    put_i64(buf, model.M);
    put_i64(buf, model.N);
    for (long r = 0; r < model.M; ++r) {
        const long idx = model.row_selection.empty() ? 0 : model.row_selection[static_cast<std::size_t>(r)];
        put_i64(buf, idx);
    }
    for (long r = 0; r < model.M; ++r)
        for (long c = 0; c < model.N; ++c) {
            put_f64(buf, model.A(r, c).real());
            put_f64(buf, model.A(r, c).imag());
        }
    atomic_write_file(path, buf);
}

ObservationModel load_model_cache(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    if (buf.size() < sizeof kCacheMagic + 16 || std::memcmp(buf.data(), kCacheMagic, sizeof kCacheMagic) != 0)
        throw parse_error(path.string() + ": not a matrix cache file (bad magic)");
    std::size_t pos = sizeof kCacheMagic;
    const std::int64_t M = get_i64(buf, pos);
    const std::int64_t N = get_i64(buf, pos);
    if (M < 1 || N < M) throw parse_error(path.string() + ": invalid dimensions in cache header");
    const std::size_t expect = sizeof kCacheMagic + 16 + 8 * static_cast<std::size_t>(M) +
                               16 * static_cast<std::size_t>(M) * static_cast<std::size_t>(N);
    if (buf.size() != expect)
        throw parse_error(path.string() + ": truncated cache file (have " + std::to_string(buf.size()) +
                          " bytes, expect " + std::to_string(expect) + ")");
    std::vector<long> rows(static_cast<std::size_t>(M));
    for (auto& r : rows) r = static_cast<long>(get_i64(buf, pos));
    Eigen::MatrixXcd A(M, N);
    for (long r = 0; r < M; ++r)
        for (long c = 0; c < N; ++c) {
            const double re = get_f64(buf, pos);
            const double im = get_f64(buf, pos);
            A(r, c) = std::complex<double>(re, im);
        }
    ObservationModel model = finish_model(std::move(A), MatrixKind::custom, std::move(rows), 0);
    // Cache payload carries geometry only; kind/seed live in the cache key
    // (file name) and are restored by the caller when it matters.
    return model;
}

}  // namespace subnyq
