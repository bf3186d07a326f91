#include "optode/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "optode/errors.hpp"

namespace optode {

using nlohmann::json;

namespace {

// Reads an object, remembering which keys were consumed so that leftovers
// can be reported.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + "expected an object");
    }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        out = convert<T>(*it, key);
    }

    template <class T>
    void require(const std::string& key, T& out) {
        if (!j_.contains(key)) throw ConfigError(where() + "missing key '" + key + "'");
        get(key, out);
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    Section sub(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key)) throw ConfigError(where() + "missing section '" + key + "'");
        return Section(j_.at(key), path_ + key + ".");
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(where() + "unknown key '" + it.key() + "'");
    }

private:
    template <class T>
    T convert(const json& v, const std::string& key) const {
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError("");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_unsigned()) throw ConfigError("");
            }
            return v.get<T>();
        } catch (const std::exception&) {
            throw ConfigError(where() + "bad value for '" + key + "': " + v.dump());
        }
    }

    std::string where() const { return path_.empty() ? "config: " : "config." + path_.substr(0, path_.size() - 1) + ": "; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <>
Vec Section::convert<Vec>(const json& v, const std::string& key) const {
    if (!v.is_array()) throw ConfigError(where() + "'" + key + "' must be an array of numbers");
    Vec out;
    for (const auto& e : v) {
        if (!e.is_number()) throw ConfigError(where() + "'" + key + "' must be an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

template <>
std::vector<std::size_t> Section::convert<std::vector<std::size_t>>(const json& v, const std::string& key) const {
    if (!v.is_array()) throw ConfigError(where() + "'" + key + "' must be an array of positive integers");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
        if (!e.is_number_unsigned() || e.get<std::size_t>() == 0)
            throw ConfigError(where() + "'" + key + "' must be an array of positive integers");
        out.push_back(e.get<std::size_t>());
    }
    return out;
}

template <>
std::vector<std::string> Section::convert<std::vector<std::string>>(const json& v, const std::string& key) const {
    if (!v.is_array()) throw ConfigError(where() + "'" + key + "' must be an array of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
        if (!e.is_string()) throw ConfigError(where() + "'" + key + "' must be an array of strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

Method method_from_string(const std::string& s) {
    if (s == "euler") return Method::Euler;
    if (s == "rk4") return Method::RK4;
    throw ConfigError("config.solve: method must be 'euler' or 'rk4', got '" + s + "'");
}

std::string method_name(Method m) { return m == Method::Euler ? "euler" : "rk4"; }

void read_env(Section s, ExperimentConfig& cfg) {
    std::string kind;
    s.require("kind", kind);
    try {
        cfg.env = env_kind_from_string(kind);
    } catch (const std::exception&) {
        throw ConfigError("config.env: unknown kind '" + kind + "'");
    }
    switch (cfg.env) {
        case EnvKind::Unicycle: {
            auto& p = cfg.unicycle;
            s.get("obstacle", p.obstacle);
            s.get("obstacle_radius", p.obstacle_radius);
            s.get("obstacle_enabled", p.obstacle_enabled);
            s.get("target", p.target);
            s.get("target_radius", p.target_radius);
            s.get("lookahead", p.lookahead);
            s.get("x0_low", p.x0_low);
            s.get("x0_high", p.x0_high);
            break;
        }
        case EnvKind::Unicycle4: {
            auto& p = cfg.unicycle4;
            s.get("obstacle", p.obstacle);
            s.get("obstacle_radius", p.obstacle_radius);
            s.get("obstacle_enabled", p.obstacle_enabled);
            s.get("target", p.target);
            s.get("target_radius", p.target_radius);
            s.get("x0_low", p.x0_low);
            s.get("x0_high", p.x0_high);
            break;
        }
        case EnvKind::Cars: {
            auto& p = cfg.cars;
            s.get("min_distance", p.min_distance);
            s.get("d_desired", p.d_desired);
            s.get("band_low", p.band_low);
            s.get("band_high", p.band_high);
            s.get("x0_low", p.x0_low);
            s.get("x0_high", p.x0_high);
            if (s.has("chain")) {
                Section c = s.sub("chain");
                c.get("v_s", p.chain.v_s);
                c.get("k_v", p.chain.k_v);
                c.get("k_b", p.chain.k_b);
                c.get("disturbance", p.chain.disturbance);
                c.get("follow_threshold", p.chain.follow_threshold);
                c.get("rear_threshold", p.chain.rear_threshold);
                c.finish();
            }
            break;
        }
    }
    s.finish();
}

json env_to_json(const ExperimentConfig& cfg) {
    json j;
    j["kind"] = to_string(cfg.env);
    switch (cfg.env) {
        case EnvKind::Unicycle: {
            const auto& p = cfg.unicycle;
            j["obstacle"] = p.obstacle;
            j["obstacle_radius"] = p.obstacle_radius;
            j["obstacle_enabled"] = p.obstacle_enabled;
            j["target"] = p.target;
            j["target_radius"] = p.target_radius;
            j["lookahead"] = p.lookahead;
            j["x0_low"] = p.x0_low;
            j["x0_high"] = p.x0_high;
            break;
        }
        case EnvKind::Unicycle4: {
            const auto& p = cfg.unicycle4;
            j["obstacle"] = p.obstacle;
            j["obstacle_radius"] = p.obstacle_radius;
            j["obstacle_enabled"] = p.obstacle_enabled;
            j["target"] = p.target;
            j["target_radius"] = p.target_radius;
            j["x0_low"] = p.x0_low;
            j["x0_high"] = p.x0_high;
            break;
        }
        case EnvKind::Cars: {
            const auto& p = cfg.cars;
            j["min_distance"] = p.min_distance;
            j["d_desired"] = p.d_desired;
            j["band_low"] = p.band_low;
            j["band_high"] = p.band_high;
            j["x0_low"] = p.x0_low;
            j["x0_high"] = p.x0_high;
            j["chain"] = {{"v_s", p.chain.v_s},
                          {"k_v", p.chain.k_v},
                          {"k_b", p.chain.k_b},
                          {"disturbance", p.chain.disturbance},
                          {"follow_threshold", p.chain.follow_threshold},
                          {"rear_threshold", p.chain.rear_threshold}};
            break;
        }
    }
    return j;
}

void validate(const ExperimentConfig& cfg) {
    if (!(cfg.gamma > 0.0)) throw ConfigError("config.certificates: gamma must be positive");
    if (cfg.kappa_init.empty()) throw ConfigError("config.certificates: kappa_init must not be empty");
    for (double k : cfg.kappa_init)
        if (!(k > 0.0)) throw ConfigError("config.certificates: kappa_init entries must be positive");
    for (const auto& m : cfg.ablation_modes) {
        try {
            (void)AblationMode::parse(m);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config.ablation: ") + e.what());
        }
    }
    if (cfg.ablation_eval_size == 0) throw ConfigError("config.ablation: eval_size must be positive");
    try {
        cfg.train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config.train: ") + e.what());
    }
    try {
        const Environment env = cfg.make_env();
        (void)expand_kappas(env, cfg.kappa_init);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config.env: ") + e.what());
    }
}

}  // namespace

Environment ExperimentConfig::make_env() const {
    switch (env) {
        case EnvKind::Unicycle: return make_unicycle_env(unicycle, gamma);
        case EnvKind::Unicycle4: return make_unicycle4_env(unicycle4, gamma);
        case EnvKind::Cars: return make_cars_env(cars, gamma);
    }
    throw std::logic_error("unreachable");
}

AblationConfig ExperimentConfig::ablation() const {
    AblationConfig a;
    for (const auto& m : ablation_modes) a.modes.push_back(AblationMode::parse(m));
    a.hidden = hidden;
    a.kappa_init = kappa_init;
    a.eval_size = ablation_eval_size;
    a.eval_seed = ablation_eval_seed;
    return a;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg;
    Section root(j, "");
    read_env(root.sub("env"), cfg);

    if (root.has("certificates")) {
        Section s = root.sub("certificates");
        s.get("gamma", cfg.gamma);
        s.get("kappa_init", cfg.kappa_init);
        s.get("learn_kappa", cfg.train.learn_kappa);
        s.get("filter", cfg.train.use_filter);
        s.finish();
    }
    if (root.has("policy")) {
        Section s = root.sub("policy");
        s.get("hidden", cfg.hidden);
        s.finish();
    }
    if (root.has("train")) {
        Section s = root.sub("train");
        auto& t = cfg.train;
        s.get("epochs", t.epochs);
        s.get("batch_size", t.batch_size);
        s.get("batches_per_epoch", t.batches_per_epoch);
        std::string opt = to_string(t.optimizer);
        s.get("optimizer", opt);
        if (opt == "adam") t.optimizer = OptimizerKind::Adam;
        else if (opt == "sgd") t.optimizer = OptimizerKind::SGD;
        else throw ConfigError("config.train: optimizer must be 'adam' or 'sgd', got '" + opt + "'");
        s.get("lr1", t.lr1);
        s.get("lr2", t.lr2);
        s.get("seed", t.seed);
        std::string grad = to_string(t.gradient);
        s.get("gradient", grad);
        if (grad == "discrete") t.gradient = GradientPath::Discrete;
        else if (grad == "adjoint") t.gradient = GradientPath::Adjoint;
        else throw ConfigError("config.train: gradient must be 'discrete' or 'adjoint', got '" + grad + "'");
        s.get("eval_size", t.eval_size);
        if (s.has("loss")) {
            Section l = s.sub("loss");
            l.get("clf", t.weights.clf);
            l.get("terminal", t.weights.terminal);
            l.finish();
        }
        s.finish();
    }
    if (root.has("solve")) {
        Section s = root.sub("solve");
        auto& sc = cfg.train.solve;
        s.get("t0", sc.t0);
        s.get("tf", sc.tf);
        s.get("dt", sc.dt);
        std::string m = method_name(sc.method);
        s.get("method", m);
        sc.method = method_from_string(m);
        s.finish();
    }
    if (root.has("ablation")) {
        Section s = root.sub("ablation");
        s.get("modes", cfg.ablation_modes);
        s.get("eval_size", cfg.ablation_eval_size);
        s.get("eval_seed", cfg.ablation_eval_seed);
        s.finish();
    }
    root.get("output_dir", cfg.output_dir);
    root.finish();
    validate(cfg);
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    const TrainConfig& t = cfg.train;
    json j;
    j["env"] = env_to_json(cfg);
    j["certificates"] = {{"gamma", cfg.gamma},
                         {"kappa_init", cfg.kappa_init},
                         {"learn_kappa", t.learn_kappa},
                         {"filter", t.use_filter}};
    j["policy"] = {{"hidden", cfg.hidden}};
    j["train"] = {{"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"batches_per_epoch", t.batches_per_epoch},
                  {"optimizer", to_string(t.optimizer)},
                  {"lr1", t.lr1},
                  {"lr2", t.lr2},
                  {"seed", t.seed},
                  {"gradient", to_string(t.gradient)},
                  {"eval_size", t.eval_size},
                  {"loss", {{"clf", t.weights.clf}, {"terminal", t.weights.terminal}}}};
    j["solve"] = {{"t0", t.solve.t0}, {"tf", t.solve.tf}, {"dt", t.solve.dt}, {"method", method_name(t.solve.method)}};
    j["ablation"] = {{"modes", cfg.ablation_modes},
                     {"eval_size", cfg.ablation_eval_size},
                     {"eval_seed", cfg.ablation_eval_seed}};
    j["output_dir"] = cfg.output_dir;
    return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse config file '" + path.string() + "': " + e.what());
    }
    return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string text = config_to_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace optode
