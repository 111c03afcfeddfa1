#include "subnyq/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <map>
#include <set>

#include "subnyq/errors.hpp"
#include "subnyq/io.hpp"

namespace subnyq {

namespace {

struct RawValue {
    std::string text;
    long line = 0;
    mutable bool used = false;
};

using Section = std::map<std::string, RawValue>;

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

class RawConfig {
  public:
    RawConfig(const std::string& text, std::string origin) : origin_(std::move(origin)) {
        std::string current;
        std::size_t start = 0;
        long line_no = 0;
        while (start <= text.size()) {
            std::size_t end = text.find('\n', start);
            if (end == std::string::npos) end = text.size();
            std::string line = trim(text.substr(start, end - start));
            start = end + 1;
            ++line_no;
            if (line.empty() || line[0] == '#' || line[0] == ';') continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw parse_error(origin_ + ":" + std::to_string(line_no) + ": malformed section header");
                current = trim(line.substr(1, line.size() - 2));
                if (current.empty())
                    throw parse_error(origin_ + ":" + std::to_string(line_no) + ": empty section name");
                sections_[current];  // create even if key-less
                continue;
            }
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw parse_error(origin_ + ":" + std::to_string(line_no) + ": expected key = value");
            if (current.empty())
                throw parse_error(origin_ + ":" + std::to_string(line_no) + ": key outside any [section]");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw parse_error(origin_ + ":" + std::to_string(line_no) + ": empty key");
            auto [it, inserted] = sections_[current].emplace(key, RawValue{value, line_no});
            if (!inserted)
                throw parse_error(origin_ + ":" + std::to_string(line_no) + ": duplicate key '" + key +
                                  "' in [" + current + "]");
        }
    }

    bool has_section(const std::string& name) const { return sections_.count(name) != 0; }

    const RawValue* find(const std::string& section, const std::string& key) const {
        auto sit = sections_.find(section);
        if (sit == sections_.end()) return nullptr;
        auto kit = sit->second.find(key);
        if (kit == sit->second.end()) return nullptr;
        kit->second.used = true;
        return &kit->second;
    }

    std::string context(const std::string& section, const std::string& key, const RawValue& v) const {
        return origin_ + ":" + std::to_string(v.line) + ": [" + section + "] " + key;
    }

    std::string require_str(const std::string& section, const std::string& key) const {
        const RawValue* v = find(section, key);
        if (!v) throw parse_error(origin_ + ": missing required key '" + key + "' in [" + section + "]");
        return v->text;
    }

    double require_double(const std::string& section, const std::string& key) const {
        const RawValue* v = find(section, key);
        if (!v) throw parse_error(origin_ + ": missing required key '" + key + "' in [" + section + "]");
        return parse_double(v->text, context(section, key, *v));
    }

    double get_double(const std::string& section, const std::string& key, double dflt) const {
        const RawValue* v = find(section, key);
        return v ? parse_double(v->text, context(section, key, *v)) : dflt;
    }

    long require_long(const std::string& section, const std::string& key) const {
        const RawValue* v = find(section, key);
        if (!v) throw parse_error(origin_ + ": missing required key '" + key + "' in [" + section + "]");
        return parse_long(v->text, context(section, key, *v));
    }

    long get_long(const std::string& section, const std::string& key, long dflt) const {
        const RawValue* v = find(section, key);
        return v ? parse_long(v->text, context(section, key, *v)) : dflt;
    }

    std::uint64_t get_u64(const std::string& section, const std::string& key, std::uint64_t dflt) const {
        const RawValue* v = find(section, key);
        if (!v) return dflt;
        errno = 0;
        char* end = nullptr;
        const std::uint64_t out = std::strtoull(v->text.c_str(), &end, 10);
        if (end == v->text.c_str() || *end != '\0' || errno == ERANGE)
            throw parse_error(context(section, key, *v) + ": not an unsigned integer: '" + v->text + "'");
        return out;
    }

    bool get_bool(const std::string& section, const std::string& key, bool dflt) const {
        const RawValue* v = find(section, key);
        if (!v) return dflt;
        if (v->text == "true" || v->text == "1") return true;
        if (v->text == "false" || v->text == "0") return false;
        throw parse_error(context(section, key, *v) + ": expected true/false");
    }

    std::optional<std::string> get_str_opt(const std::string& section, const std::string& key) const {
        const RawValue* v = find(section, key);
        if (!v) return std::nullopt;
        return v->text;
    }

    // Strictness: every supplied key must have been consumed, and every
    // section must be one we know about.
    void check_consumed(const std::set<std::string>& known_sections) const {
        for (const auto& [name, keys] : sections_) {
            if (!known_sections.count(name))
                throw parse_error(origin_ + ": unknown section [" + name + "]");
            for (const auto& [key, v] : keys)
                if (!v.used)
                    throw parse_error(origin_ + ":" + std::to_string(v.line) + ": unknown key '" + key +
                                      "' in [" + name + "]");
        }
    }

    const std::string& origin() const { return origin_; }

  private:
    std::string origin_;
    std::map<std::string, Section> sections_;
};

SceneParams parse_scene_section(const RawConfig& raw, const std::string& section, long N,
                                const SceneParams* fallback) {
    SceneParams s;
    if (fallback) s = *fallback;
    s.N = N;
    auto field = [&](const char* key, double SceneParams::* member, double dflt) {
        s.*member = raw.get_double(section, key, fallback ? s.*member : dflt);
        if (!fallback && !raw.find(section, key))
            throw parse_error(raw.origin() + ": missing required key '" + std::string(key) + "' in [" +
                              section + "]");
    };
    field("a_min", &SceneParams::a_min, 1.0);
    field("a_max", &SceneParams::a_max, 1.0);
    field("rho_min", &SceneParams::rho_min, 0.0);
    field("rho_max", &SceneParams::rho_max, 0.0);
    field("snr_min", &SceneParams::snr_min, 0.0);
    field("snr_max", &SceneParams::snr_max, 0.0);
    s.snr_is_db = raw.get_bool(section, "snr_is_db", fallback ? s.snr_is_db : true);
    validate(s);
    return s;
}

std::vector<double> parse_presets(const std::string& text, const std::string& context) {
    std::vector<double> out;
    std::string cur;
    auto flush = [&] {
        const std::string t = trim(cur);
        cur.clear();
        if (t.empty()) return;
        out.push_back(parse_double(t, context));
    };
    for (char c : text) {
        if (c == ',')
            flush();
        else
            cur += c;
    }
    flush();
    if (out.empty()) throw parse_error(context + ": expected at least one preset");
    for (double p : out)
        if (!(p > 0.0) || !(p > 0.0 && p <= 1.0)) throw parse_error(context + ": presets must lie in (0, 1]");
    return out;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    RawConfig raw(text, origin);
    ExperimentConfig cfg;

    cfg.kind = matrix_kind_from_string(raw.require_str("model", "kind"));
    cfg.M = raw.require_long("model", "M");
    cfg.N = raw.require_long("model", "N");
    if (cfg.M < 1 || cfg.M > cfg.N)
        throw parse_error(origin + ": [model] requires 1 <= M <= N");
    cfg.model_seed = raw.get_u64("model", "seed", 0);
    cfg.cache_dir = raw.get_str_opt("model", "cache_dir");

    cfg.scene = parse_scene_section(raw, "scene", cfg.N, nullptr);
    cfg.train_scene = raw.has_section("train_scene")
                          ? parse_scene_section(raw, "train_scene", cfg.N, &cfg.scene)
                          : cfg.scene;

    cfg.train.T = raw.get_long("unfold", "T", 7);
    cfg.train.k_epoch = raw.get_long("unfold", "k_epoch", 8);
    cfg.train.batch_size = raw.get_long("unfold", "batch_size", 32);
    cfg.train.optimizer =
        optimizer_from_string(raw.get_str_opt("unfold", "optimizer").value_or("coordinate-grid-refine"));
    cfg.train.sigma_w_lo = raw.get_double("unfold", "sigma_w_lo", 1e-3);
    cfg.train.sigma_w_hi = raw.get_double("unfold", "sigma_w_hi", 10.0);
    cfg.train.theta_lo = raw.get_double("unfold", "theta_lo", 1e-2);
    cfg.train.theta_hi = raw.get_double("unfold", "theta_hi", 10.0);
    cfg.train.seed = raw.get_u64("unfold", "seed", 1);
    cfg.params_path = raw.get_str_opt("unfold", "params_path");
    {
        const auto init_sw = raw.get_str_opt("unfold", "init_sigma_w");
        const auto init_th = raw.get_str_opt("unfold", "init_theta");
        if (init_sw || init_th) {
            VampLayerParams init = default_init(cfg.train_scene);
            if (init_sw) init.sigma_w = parse_double(*init_sw, origin + ": [unfold] init_sigma_w");
            if (init_th) init.theta = parse_double(*init_th, origin + ": [unfold] init_theta");
            validate(init);
            cfg.train.init.assign(static_cast<std::size_t>(cfg.train.T), init);
        }
    }
    validate(cfg.train);

    cfg.pcd.pfa0 = raw.require_double("pcd", "pfa0");
    cfg.pcd.pfa = raw.require_double("pcd", "pfa");
    cfg.pcd.c_tol = raw.get_double("pcd", "c_tol", 1e-5);
    cfg.pcd.m_max = raw.get_long("pcd", "m_max", 50);
    validate(cfg.pcd);

    cfg.trials = raw.get_long("run", "trials", 1);
    if (cfg.trials < 1) throw parse_error(origin + ": [run] trials must be >= 1");
    cfg.presets = parse_presets(raw.get_str_opt("run", "presets").value_or("0.01"),
                                origin + ": [run] presets");
    cfg.out_dir = raw.get_str_opt("run", "out_dir").value_or("out");
    cfg.workers = static_cast<int>(raw.get_long("run", "workers", 1));
    if (cfg.workers < 1) throw parse_error(origin + ": [run] workers must be >= 1");
    cfg.master_seed = raw.get_u64("run", "seed", 0);
    cfg.ecdf_dump_max_points = raw.get_long("run", "ecdf_dump_max_points", 2048);
    cfg.early_stop_tol = raw.get_double("run", "early_stop_tol", 0.0);
    cfg.v_clamp_eps = raw.get_double("run", "v_clamp_eps", 1e-6);

    raw.check_consumed({"model", "scene", "train_scene", "unfold", "pcd", "run"});
    return cfg;
}

ExperimentConfig parse_config_file(const std::filesystem::path& path) {
    return parse_config_text(read_file(path), path.string());
}

ObservationModel build_model(const ExperimentConfig& config) {
    namespace fs = std::filesystem;
    fs::path cache_file;
    if (config.cache_dir) {
        cache_file = fs::path(*config.cache_dir) /
                     (to_string(config.kind) + "_M" + std::to_string(config.M) + "_N" +
                      std::to_string(config.N) + "_seed" + std::to_string(config.model_seed) + ".ufcm");
        if (fs::exists(cache_file)) {
            ObservationModel model = load_model_cache(cache_file);
            if (model.M != config.M || model.N != config.N)
                throw parse_error(cache_file.string() + ": cached dimensions disagree with config");
            model.kind = config.kind;
            model.seed = config.model_seed;
            return model;
        }
    }
    ObservationModel model;
    switch (config.kind) {
        case MatrixKind::partial_fourier:
            model = make_partial_fourier(config.M, config.N, config.model_seed);
            break;
        case MatrixKind::gaussian:
            model = make_gaussian(config.M, config.N, config.model_seed);
            break;
        case MatrixKind::custom:
            throw invalid_parameter("[model] kind=custom requires a matrix cache file (set cache_dir)");
    }
    if (config.cache_dir) save_model_cache(model, cache_file);
    return model;
}

VampConfig make_vamp_config(const ExperimentConfig& config) {
    VampConfig vc;
    vc.T = config.train.T;
    vc.v_clamp_eps = config.v_clamp_eps;
    vc.early_stop_tol = config.early_stop_tol;
    return vc;
}

std::string config_summary(const ExperimentConfig& c) {
    std::string s = "model kind=" + to_string(c.kind) + " M=" + std::to_string(c.M) +
                    " N=" + std::to_string(c.N) + " seed=" + std::to_string(c.model_seed);
    s += "; scene a=[" + fmt17(c.scene.a_min) + "," + fmt17(c.scene.a_max) + "] rho=[" +
         fmt17(c.scene.rho_min) + "," + fmt17(c.scene.rho_max) + "] snr=[" + fmt17(c.scene.snr_min) + "," +
         fmt17(c.scene.snr_max) + (c.scene.snr_is_db ? "] dB" : "] linear");
    s += "; unfold T=" + std::to_string(c.train.T) + " k_epoch=" + std::to_string(c.train.k_epoch) +
         " D=" + std::to_string(c.train.batch_size) + " optimizer=" + to_string(c.train.optimizer) +
         " train_seed=" + std::to_string(c.train.seed);
    s += "; pcd pfa0=" + fmt17(c.pcd.pfa0) + " pfa=" + fmt17(c.pcd.pfa) + " c_tol=" + fmt17(c.pcd.c_tol) +
         " m_max=" + std::to_string(c.pcd.m_max);
    // Deliberately omits workers and out_dir: they are runtime knobs that do
    // not affect any computed result, and embedding them would break
    // byte-identical reruns across different worker counts.
    s += "; run trials=" + std::to_string(c.trials) + " master_seed=" + std::to_string(c.master_seed);
    return s;
}

}  // namespace subnyq
