#include "optode/io.hpp"

#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "optode/errors.hpp"

namespace optode {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointFormat = "opt-odenet-checkpoint-1";

std::string exact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void write_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    json header = {{"format", kCheckpointFormat},
                   {"layer_dims", ck.policy.layer_dims()},
                   {"theta2_len", ck.class_k.size()},
                   {"seed", ck.seed}};
    std::string text = header.dump() + "\n";
    for (double v : ck.policy.theta()) text += exact(v) + "\n";
    for (double v : ck.class_k.theta2) text += exact(v) + "\n";
    write_file(path, text);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open checkpoint '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    json header;
    std::vector<std::size_t> dims;
    std::size_t k_len = 0;
    Checkpoint ck;
    try {
        header = json::parse(line);
        if (header.at("format").get<std::string>() != kCheckpointFormat) throw ConfigError("format");
        dims = header.at("layer_dims").get<std::vector<std::size_t>>();
        k_len = header.at("theta2_len").get<std::size_t>();
        ck.seed = header.at("seed").get<std::uint64_t>();
    } catch (const std::exception&) {
        throw ConfigError("checkpoint '" + path.string() + "': bad header");
    }
    if (dims.size() < 2) throw ConfigError("checkpoint '" + path.string() + "': bad layer_dims");
    const std::size_t n1 = MlpPolicy::param_count(dims);
    Vec values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        char* end = nullptr;
        const double v = std::strtod(line.c_str(), &end);
        const auto used = static_cast<std::size_t>(end - line.c_str());
        if (used != line.size() || !std::isfinite(v)) throw ConfigError("checkpoint '" + path.string() + "': bad value '" + line + "'");
        values.push_back(v);
    }
    if (values.size() != n1 + k_len)
        throw ConfigError("checkpoint '" + path.string() + "': expected " + std::to_string(n1 + k_len) +
                          " values, found " + std::to_string(values.size()));
    ck.policy = MlpPolicy(dims, Vec(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n1)));
    ck.class_k.theta2.assign(values.begin() + static_cast<std::ptrdiff_t>(n1), values.end());
    return ck;
}

std::string CsvWriter::escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string CsvWriter::number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

void CsvWriter::row(std::span<const std::string> fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out_ << ',';
        out_ << escape(fields[i]);
    }
    out_ << "\r\n";
}

void write_trajectory_csv(std::ostream& out, const Environment& env, const Trajectory& traj) {
    CsvWriter w(out);
    const std::size_t n = env.state_dim(), m = env.control_dim();
    std::vector<std::string> head{"t"};
    for (std::size_t i = 0; i < n; ++i) head.push_back("x" + std::to_string(i));
    for (std::size_t j = 0; j < m; ++j) head.push_back("u_nn" + std::to_string(j));
    for (std::size_t j = 0; j < m; ++j) head.push_back("u_safe" + std::to_string(j));
    for (const Barrier& b : env.barriers) head.push_back("B_" + b.name);
    head.push_back("V");
    head.push_back("pointwise_loss");
    w.row(head);
    for (std::size_t k = 0; k < traj.size(); ++k) {
        std::vector<std::string> r{CsvWriter::number(traj.times[k])};
        for (double v : traj.states[k]) r.push_back(CsvWriter::number(v));
        for (double v : traj.u_nn[k]) r.push_back(CsvWriter::number(v));
        for (double v : traj.u_safe[k]) r.push_back(CsvWriter::number(v));
        for (double v : traj.barrier_values[k]) r.push_back(CsvWriter::number(v));
        r.push_back(CsvWriter::number(traj.lyapunov[k]));
        r.push_back(CsvWriter::number(traj.pointwise_loss[k]));
        w.row(r);
    }
}

void write_distance_csv(std::ostream& out, const Environment& env, const Trajectory& traj) {
    CsvWriter w(out);
    const std::vector<std::string> head{"t", env.signal_name};
    w.row(head);
    for (std::size_t k = 0; k < traj.size(); ++k) {
        const std::vector<std::string> r{CsvWriter::number(traj.times[k]), CsvWriter::number(env.signal(traj.states[k]))};
        w.row(r);
    }
}

void write_metrics_csv(std::ostream& out, std::span<const EpochMetrics> epochs) {
    CsvWriter w(out);
    const bool reward = !epochs.empty() && epochs.front().eval.reward.has_value();
    const std::size_t nk = epochs.empty() ? 0 : epochs.front().kappas.size();
    std::vector<std::string> head{"epoch", "loss", "eval_loss", "mean_error", "collision", "violations", "min_barrier"};
    if (reward) head.push_back("reward");
    for (std::size_t i = 0; i < nk; ++i) head.push_back("kappa" + std::to_string(i));
    head.push_back("active_set_switches");
    w.row(head);
    for (const auto& e : epochs) {
        std::vector<std::string> r{std::to_string(e.epoch),
                                   CsvWriter::number(e.loss),
                                   CsvWriter::number(e.eval.loss),
                                   CsvWriter::number(e.eval.mean_error),
                                   e.eval.collision ? "1" : "0",
                                   std::to_string(e.eval.violations),
                                   CsvWriter::number(e.eval.min_barrier)};
        if (reward) r.push_back(CsvWriter::number(e.eval.reward.value_or(NAN)));
        for (double k : e.kappas) r.push_back(CsvWriter::number(k));
        r.push_back(std::to_string(e.active_set_switches));
        w.row(r);
    }
}

void write_table1_csv(std::ostream& out, std::span<const AblationRow> rows) {
    CsvWriter w(out);
    const std::vector<std::string> head{"mode", "mean_error", "collision"};
    w.row(head);
    for (const auto& row : rows) {
        const std::vector<std::string> r{row.mode, CsvWriter::number(row.metrics.mean_error),
                                         row.metrics.collision ? "Yes" : "No"};
        w.row(r);
    }
}

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json eval_to_json(const EvalMetrics& m) {
    json j = {{"loss", finite_or_null(m.loss)},
              {"mean_error", finite_or_null(m.mean_error)},
              {"collision", m.collision},
              {"violations", m.violations},
              {"min_barrier", finite_or_null(m.min_barrier)}};
    if (m.reward) j["reward"] = *m.reward;
    return j;
}

}  // namespace

json epoch_to_json(const EpochMetrics& em) {
    return {{"epoch", em.epoch},
            {"loss", finite_or_null(em.loss)},
            {"eval", eval_to_json(em.eval)},
            {"kappas", em.kappas},
            {"active_set_switches", em.active_set_switches}};
}

json ablation_row_to_json(const AblationRow& row) {
    return {{"mode", row.mode}, {"metrics", eval_to_json(row.metrics)}, {"kappas", row.kappas}};
}

json provenance(const ExperimentConfig& cfg) {
    return {{"config", config_to_json(cfg)}, {"config_hash", config_hash(cfg)}, {"seed", cfg.train.seed}};
}

}  // namespace optode
