#include "subnyq/unfolding.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <json.hpp>

#include "subnyq/errors.hpp"
#include "subnyq/io.hpp"
#include "subnyq/rng.hpp"

namespace subnyq {

namespace {

constexpr double kClampEps = 1e-6;

struct Candidate {
    double sigma_w = 0, theta = 0, loss = 0;
};

// One training batch: ground truth columns and the prefix network state
// after the already-learned layers (so each candidate only pays for the
// layer under search).
struct PreparedBatch {
    Eigen::MatrixXd X0;  // 2N x D
    BatchState prefix;
};

}  // namespace

std::string to_string(Optimizer o) {
    return o == Optimizer::coordinate_grid_refine ? "coordinate-grid-refine" : "nelder-mead";
}

Optimizer optimizer_from_string(const std::string& s) {
    if (s == "coordinate-grid-refine") return Optimizer::coordinate_grid_refine;
    if (s == "nelder-mead") return Optimizer::nelder_mead;
    throw invalid_parameter("unknown optimizer '" + s + "'");
}

void validate(const TrainConfig& c) {
    if (c.T < 1) throw invalid_parameter("TrainConfig.T must be >= 1");
    if (c.k_epoch < 0) throw invalid_parameter("TrainConfig.k_epoch must be >= 0");
    if (c.batch_size < 1) throw invalid_parameter("TrainConfig.batch_size must be >= 1");
    if (!(c.sigma_w_lo > 0.0) || !(c.sigma_w_lo < c.sigma_w_hi))
        throw invalid_parameter("sigma_w search bounds must satisfy 0 < lo < hi");
    if (!(c.theta_lo > 0.0) || !(c.theta_lo < c.theta_hi))
        throw invalid_parameter("theta search bounds must satisfy 0 < lo < hi");
    if (!c.init.empty() && static_cast<long>(c.init.size()) != c.T)
        throw invalid_parameter("TrainConfig.init must be empty or exactly T entries");
    for (const auto& p : c.init) validate(p);
}

double mse_loss(const Eigen::MatrixXd& x_hat_RI, const Eigen::MatrixXd& x_true_RI) {
    if (x_hat_RI.rows() != x_true_RI.rows() || x_hat_RI.cols() != x_true_RI.cols())
        throw invalid_shape("mse_loss: shape mismatch");
    if (x_hat_RI.cols() < 1) throw invalid_shape("mse_loss: empty batch");
    return (x_hat_RI - x_true_RI).squaredNorm() / static_cast<double>(x_hat_RI.cols());
}

VampLayerParams default_init(const SceneParams& scene) {
    const double mid_snr = 0.5 * (scene.snr_min + scene.snr_max);
    const double sigma2 = snr_to_sigma2(scene.a_min, scene.a_max, mid_snr, scene.snr_is_db);
    return {std::sqrt(sigma2), 1.0};
}

namespace {

PreparedBatch make_batch(const ObservationModel& model, const PreparedModel& prepared,
                         const SceneParams& scene_params, const std::vector<VampLayerParams>& fixed,
                         std::uint64_t train_seed, std::uint64_t batch_index, long D) {
    PreparedBatch batch;
    batch.X0.resize(2 * model.N, D);
    Eigen::MatrixXd Y(2 * model.M, D);
    for (long d = 0; d < D; ++d) {
        const std::uint64_t base = 2 * (batch_index * static_cast<std::uint64_t>(D) + static_cast<std::uint64_t>(d));
        Scene scene = generate_scene(scene_params, derive_seed(train_seed, base));
        Measurement meas = measure(model, scene, derive_seed(train_seed, base + 1));
        batch.X0.col(d) = scene.x0_RI;
        Y.col(d) = meas.y_RI;
    }
    VampConfig vc;  // defaults: r1 = A^T y, sigma1 from measurement variance
    vc.T = std::max<long>(1, static_cast<long>(fixed.size()));
    batch.prefix = batch_init(prepared, Y, vc);
    for (const auto& lp : fixed) batch_layer(prepared, batch.prefix, lp, kClampEps);
    return batch;
}

double eval_candidate(const PreparedModel& prepared, const std::vector<PreparedBatch>& batches,
                      double sigma_w, double theta) {
    double total = 0.0;
    for (const auto& batch : batches) {
        BatchState st = batch.prefix;  // copy; candidate must not disturb the cache
        batch_layer(prepared, st, {sigma_w, theta}, kClampEps);
        total += mse_loss(st.X_hat, batch.X0);
    }
    return total / static_cast<double>(batches.size());
}

// Log-space coordinate grid with two zoom levels around the running best.
Candidate grid_refine(const PreparedModel& prepared, const std::vector<PreparedBatch>& batches,
                      const TrainConfig& cfg, Candidate best) {
    const double lw_lo = std::log(cfg.sigma_w_lo), lw_hi = std::log(cfg.sigma_w_hi);
    const double lt_lo = std::log(cfg.theta_lo), lt_hi = std::log(cfg.theta_hi);

    auto sweep = [&](double wc, double tc, double w_span, double t_span, int side) {
        for (int i = 0; i < side; ++i) {
            const double lw = std::clamp(
                wc - w_span + 2.0 * w_span * i / static_cast<double>(side - 1), lw_lo, lw_hi);
            for (int j = 0; j < side; ++j) {
                const double lt = std::clamp(
                    tc - t_span + 2.0 * t_span * j / static_cast<double>(side - 1), lt_lo, lt_hi);
                const double sw = std::exp(lw), th = std::exp(lt);
                const double loss = eval_candidate(prepared, batches, sw, th);
                if (loss < best.loss) best = {sw, th, loss};
            }
        }
    };

    // Level 1: 7x7 over the full box; levels 2-3: 5x5 windows shrinking to
    // one, then a third of one, coarse grid cell around the best point.
    sweep(0.5 * (lw_lo + lw_hi), 0.5 * (lt_lo + lt_hi), 0.5 * (lw_hi - lw_lo), 0.5 * (lt_hi - lt_lo), 7);
    const double w_step = (lw_hi - lw_lo) / 6.0, t_step = (lt_hi - lt_lo) / 6.0;
    sweep(std::log(best.sigma_w), std::log(best.theta), w_step, t_step, 5);
    sweep(std::log(best.sigma_w), std::log(best.theta), w_step / 3.0, t_step / 3.0, 5);
    return best;
}

// Standard Nelder-Mead on the log-parameter plane, clipped to the search
// box. Deterministic; polishes the coarse-grid winner.
Candidate nelder_mead(const PreparedModel& prepared, const std::vector<PreparedBatch>& batches,
                      const TrainConfig& cfg, Candidate seed_point) {
    const double lw_lo = std::log(cfg.sigma_w_lo), lw_hi = std::log(cfg.sigma_w_hi);
    const double lt_lo = std::log(cfg.theta_lo), lt_hi = std::log(cfg.theta_hi);
    using Point = std::array<double, 2>;
    auto clip = [&](Point p) {
        p[0] = std::clamp(p[0], lw_lo, lw_hi);
        p[1] = std::clamp(p[1], lt_lo, lt_hi);
        return p;
    };
    auto value = [&](const Point& p) {
        return eval_candidate(prepared, batches, std::exp(p[0]), std::exp(p[1]));
    };

    std::array<Point, 3> simplex;
    std::array<double, 3> fval;
    simplex[0] = clip({std::log(seed_point.sigma_w), std::log(seed_point.theta)});
    simplex[1] = clip({simplex[0][0] + 0.15 * (lw_hi - lw_lo), simplex[0][1]});
    simplex[2] = clip({simplex[0][0], simplex[0][1] + 0.15 * (lt_hi - lt_lo)});
    for (int i = 0; i < 3; ++i) fval[i] = value(simplex[i]);

    for (int iter = 0; iter < 60; ++iter) {
        std::array<int, 3> order = {0, 1, 2};
        std::sort(order.begin(), order.end(), [&](int a, int b) { return fval[a] < fval[b]; });
        const Point& best = simplex[order[0]];
        const Point& worst = simplex[order[2]];
        if (std::abs(fval[order[2]] - fval[order[0]]) <= 1e-12 * (std::abs(fval[order[0]]) + 1e-30)) break;

        const Point centroid = {0.5 * (simplex[order[0]][0] + simplex[order[1]][0]),
                                0.5 * (simplex[order[0]][1] + simplex[order[1]][1])};
        auto blend = [&](double coef) {
            return clip({centroid[0] + coef * (centroid[0] - worst[0]),
                         centroid[1] + coef * (centroid[1] - worst[1])});
        };
        Point refl = blend(1.0);
        double f_refl = value(refl);
        if (f_refl < fval[order[0]]) {
            Point expand = blend(2.0);
            double f_exp = value(expand);
            if (f_exp < f_refl) {
                simplex[order[2]] = expand;
                fval[order[2]] = f_exp;
            } else {
                simplex[order[2]] = refl;
                fval[order[2]] = f_refl;
            }
        } else if (f_refl < fval[order[1]]) {
            simplex[order[2]] = refl;
            fval[order[2]] = f_refl;
        } else {
            Point contract = blend(-0.5);
            double f_con = value(contract);
            if (f_con < fval[order[2]]) {
                simplex[order[2]] = contract;
                fval[order[2]] = f_con;
            } else {
                for (int i : {order[1], order[2]}) {
                    simplex[i] = clip({0.5 * (simplex[i][0] + best[0]), 0.5 * (simplex[i][1] + best[1])});
                    fval[i] = value(simplex[i]);
                }
            }
        }
    }
    int best_i = 0;
    for (int i = 1; i < 3; ++i)
        if (fval[i] < fval[best_i]) best_i = i;
    if (fval[best_i] < seed_point.loss)
        return {std::exp(simplex[best_i][0]), std::exp(simplex[best_i][1]), fval[best_i]};
    return seed_point;
}

}  // namespace

TrainedParams train_layerwise(const ObservationModel& model, const SceneParams& scene_params,
                              const TrainConfig& config) {
    validate(config);
    validate(scene_params);
    if (scene_params.N != model.N)
        throw invalid_dimensions("train_layerwise: scene N does not match model N");

    TrainedParams trained;
    trained.provenance_known = true;
    trained.train_scene = scene_params;
    trained.model_seed = model.seed;
    trained.train_seed = config.seed;
    trained.layers.assign(static_cast<std::size_t>(config.T),
                          config.init.empty() ? default_init(scene_params) : VampLayerParams{});
    if (!config.init.empty()) trained.layers = config.init;

    if (config.k_epoch == 0) return trained;  // empty training: inits pass through

    const PreparedModel prepared(model);
    std::vector<VampLayerParams> fixed;  // learned prefix, grows one layer per round
    for (long t = 0; t < config.T; ++t) {
        std::vector<PreparedBatch> batches;
        batches.reserve(static_cast<std::size_t>(config.k_epoch));
        for (long b = 0; b < config.k_epoch; ++b) {
            const std::uint64_t batch_index =
                static_cast<std::uint64_t>(t) * static_cast<std::uint64_t>(config.k_epoch) +
                static_cast<std::uint64_t>(b);
            batches.push_back(make_batch(model, prepared, scene_params, fixed, config.seed,
                                         batch_index, config.batch_size));
        }

        const VampLayerParams init = trained.layers[static_cast<std::size_t>(t)];
        Candidate incumbent{init.sigma_w, init.theta,
                            eval_candidate(prepared, batches, init.sigma_w, init.theta)};
        Candidate best = grid_refine(prepared, batches, config, incumbent);
        if (config.optimizer == Optimizer::nelder_mead)
            best = nelder_mead(prepared, batches, config, best);

        if (best.loss < incumbent.loss) {
            trained.layers[static_cast<std::size_t>(t)] = {best.sigma_w, best.theta};
            trained.final_loss.push_back(best.loss);
        } else {
            trained.final_loss.push_back(incumbent.loss);
            trained.warnings.push_back("layer " + std::to_string(t + 1) +
                                       ": search did not improve on init; kept init values");
        }
        fixed.push_back(trained.layers[static_cast<std::size_t>(t)]);
    }
    return trained;
}

VampOutput test_unfolded(const Eigen::VectorXd& y_RI, const PreparedModel& model,
                         const TrainedParams& trained, const VampConfig& config) {
    if (static_cast<long>(trained.layers.size()) != config.T)
        throw invalid_parameter("test_unfolded: trained layer count != config.T");
    return run_vamp(y_RI, model, trained.layers, config);
}

// --- persistence -----------------------------------------------------------

namespace {

using nlohmann::json;

json scene_to_json(const SceneParams& s) {
    return json{{"a_min", s.a_min},     {"a_max", s.a_max},   {"rho_min", s.rho_min},
                {"rho_max", s.rho_max}, {"snr_min", s.snr_min}, {"snr_max", s.snr_max},
                {"N", s.N},             {"snr_is_db", s.snr_is_db}};
}

double require_positive_finite(const json& j, const std::string& field) {
    if (!j.is_number()) throw parse_error(field + ": expected a number");
    const double v = j.get<double>();
    if (!(v > 0.0) || !std::isfinite(v)) throw parse_error(field + ": must be positive and finite");
    return v;
}

}  // namespace

std::string params_to_json(const TrainedParams& trained) {
    json j;
    j["version"] = 1;
    j["T"] = trained.layers.size();
    j["layers"] = json::array();
    for (const auto& lp : trained.layers)
        j["layers"].push_back(json{{"sigma_w", lp.sigma_w}, {"theta", lp.theta}});
    if (trained.provenance_known) {
        json prov;
        prov["scene"] = scene_to_json(trained.train_scene);
        prov["model_seed"] = trained.model_seed;
        prov["train_seed"] = trained.train_seed;
        prov["final_loss"] = trained.final_loss;
        prov["warnings"] = trained.warnings;
        j["provenance"] = prov;
    }
    return j.dump(2) + "\n";
}

TrainedParams params_from_json(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw parse_error(origin + ": " + e.what());
    }
    if (!j.is_object()) throw parse_error(origin + ": top level must be an object");
    if (!j.contains("version") || j["version"] != 1)
        throw parse_error(origin + ": version: missing or unsupported (expect 1)");
    if (!j.contains("layers") || !j["layers"].is_array() || j["layers"].empty())
        throw parse_error(origin + ": layers: missing or empty array");

    TrainedParams trained;
    std::size_t idx = 0;
    for (const auto& layer : j["layers"]) {
        const std::string field = origin + ": layers[" + std::to_string(idx) + "]";
        if (!layer.is_object() || !layer.contains("sigma_w") || !layer.contains("theta"))
            throw parse_error(field + ": expected object with sigma_w and theta");
        VampLayerParams lp;
        lp.sigma_w = require_positive_finite(layer["sigma_w"], field + ".sigma_w");
        lp.theta = require_positive_finite(layer["theta"], field + ".theta");
        trained.layers.push_back(lp);
        ++idx;
    }
    if (j.contains("T")) {
        if (!j["T"].is_number_integer() && !j["T"].is_number_unsigned())
            throw parse_error(origin + ": T: expected an integer");
        if (j["T"].get<std::size_t>() != trained.layers.size())
            throw parse_error(origin + ": T: does not match layers length");
    }

    if (j.contains("provenance") && j["provenance"].is_object()) {
        const auto& prov = j["provenance"];
        try {
            trained.provenance_known = true;
            const auto& sc = prov.at("scene");
            trained.train_scene.a_min = sc.at("a_min").get<double>();
            trained.train_scene.a_max = sc.at("a_max").get<double>();
            trained.train_scene.rho_min = sc.at("rho_min").get<double>();
            trained.train_scene.rho_max = sc.at("rho_max").get<double>();
            trained.train_scene.snr_min = sc.at("snr_min").get<double>();
            trained.train_scene.snr_max = sc.at("snr_max").get<double>();
            trained.train_scene.N = sc.at("N").get<long>();
            trained.train_scene.snr_is_db = sc.value("snr_is_db", true);
            trained.model_seed = prov.at("model_seed").get<std::uint64_t>();
            trained.train_seed = prov.at("train_seed").get<std::uint64_t>();
            if (prov.contains("final_loss")) trained.final_loss = prov["final_loss"].get<std::vector<double>>();
            if (prov.contains("warnings")) trained.warnings = prov["warnings"].get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            throw parse_error(origin + ": provenance: " + e.what());
        }
    }
    return trained;
}

void save_params(const TrainedParams& trained, const std::filesystem::path& path) {
    atomic_write_file(path, params_to_json(trained));
}

TrainedParams load_params(const std::filesystem::path& path) {
    return params_from_json(read_file(path), path.string());
}

}  // namespace subnyq
