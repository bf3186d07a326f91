#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "optode/config.hpp"
#include "optode/errors.hpp"
#include "optode/io.hpp"
#include "optode/ode.hpp"
#include "optode/trainer.hpp"

namespace fs = std::filesystem;
using namespace optode;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kTrainingFailure = 3;

struct Options {
    std::string config;
    std::string checkpoint;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::vector<double> x0;
};

ExperimentConfig load(const Options& opt) {
    ExperimentConfig cfg = load_config(opt.config);
    if (opt.seed) cfg.train.seed = *opt.seed;
    if (!opt.out.empty()) cfg.output_dir = opt.out;
    return cfg;
}

void write_run_manifest(const ExperimentConfig& cfg, const std::string& command, const std::vector<std::string>& files) {
    nlohmann::json j = provenance(cfg);
    j["command"] = command;
    j["outputs"] = files;
    write_file(fs::path(cfg.output_dir) / "run.json", j.dump(2) + "\n");
}

std::string csv_text(auto&& writer) {
    std::ostringstream os;
    writer(os);
    return os.str();
}

int cmd_train(const Options& opt) {
    const ExperimentConfig cfg = load(opt);
    const Environment env = cfg.make_env();
    const fs::path dir = cfg.output_dir;
    const MlpPolicy policy = make_policy(env, cfg.hidden, cfg.train.seed);
    const ClassKParams class_k = ClassKParams::from_kappas(expand_kappas(env, cfg.kappa_init));

    std::vector<EpochMetrics> done;
    nlohmann::json report = provenance(cfg);
    auto flush = [&](const std::string& status, const std::string& error) {
        report["status"] = status;
        if (!error.empty()) report["error"] = error;
        report["last_finite_epoch"] = done.empty() ? nlohmann::json(nullptr) : nlohmann::json(done.back().epoch);
        nlohmann::json epochs = nlohmann::json::array();
        for (const auto& e : done) epochs.push_back(epoch_to_json(e));
        report["epochs"] = epochs;
        write_file(dir / "report.json", report.dump(2) + "\n");
        write_file(dir / "metrics.csv", csv_text([&](std::ostream& os) { write_metrics_csv(os, done); }));
    };

    try {
        const TrainReport r = train(env, policy, class_k, cfg.train,
                                    [&](const EpochMetrics& e, const MlpPolicy&, const ClassKParams&) { done.push_back(e); });
        save_checkpoint(dir / "checkpoint.txt", {r.policy, r.class_k, cfg.train.seed});
        report["final_kappas"] = r.class_k.kappas();
        flush("ok", "");
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        flush("failed", e.what());
        write_run_manifest(cfg, "train", {"report.json", "metrics.csv"});
        std::cerr << "training failed: " << e.what() << "\n";
        return kTrainingFailure;
    }
    write_run_manifest(cfg, "train", {"checkpoint.txt", "report.json", "metrics.csv"});
    return kOk;
}

int cmd_rollout(const Options& opt) {
    const ExperimentConfig cfg = load(opt);
    const Environment env = cfg.make_env();
    if (opt.checkpoint.empty()) throw ConfigError("rollout requires --checkpoint");
    const Checkpoint ck = load_checkpoint(opt.checkpoint);
    if (ck.policy.input_dim() != env.state_dim() || ck.policy.output_dim() != env.control_dim() ||
        ck.class_k.size() != env.kappa_count())
        throw ConfigError("checkpoint '" + opt.checkpoint + "' does not match the " + to_string(env.kind) + " environment");

    Vec x0 = opt.x0;
    if (x0.empty()) {
        for (std::size_t i = 0; i < env.state_dim(); ++i) x0.push_back(0.5 * (env.x0_low[i] + env.x0_high[i]));
    }
    if (x0.size() != env.state_dim())
        throw ConfigError("--x0 needs " + std::to_string(env.state_dim()) + " values, got " + std::to_string(x0.size()));

    const SafetyFilterSpec spec = make_filter(env, ck.class_k, cfg.train.use_filter);
    const ClosedLoop cl{spec, ck.policy, env.lyapunov};
    Trajectory traj;
    try {
        traj = rollout(cl, x0, cfg.train.solve);
    } catch (const Error& e) {
        std::cerr << "rollout failed: " << e.what() << "\n";
        return kTrainingFailure;
    }
    const fs::path dir = cfg.output_dir;
    write_file(dir / "trajectory.csv", csv_text([&](std::ostream& os) { write_trajectory_csv(os, env, traj); }));
    write_file(dir / "distance.csv", csv_text([&](std::ostream& os) { write_distance_csv(os, env, traj); }));
    write_run_manifest(cfg, "rollout", {"trajectory.csv", "distance.csv"});
    return kOk;
}

int cmd_ablate(const Options& opt) {
    const ExperimentConfig cfg = load(opt);
    const Environment env = cfg.make_env();
    std::vector<AblationRow> rows;
    try {
        rows = ablate(env, cfg.ablation(), cfg.train);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        std::cerr << "ablation failed: " << e.what() << "\n";
        return kTrainingFailure;
    }
    const fs::path dir = cfg.output_dir;
    write_file(dir / "table1.csv", csv_text([&](std::ostream& os) { write_table1_csv(os, rows); }));
    nlohmann::json j = provenance(cfg);
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) j["rows"].push_back(ablation_row_to_json(r));
    write_file(dir / "ablation.json", j.dump(2) + "\n");
    write_run_manifest(cfg, "ablate", {"table1.csv", "ablation.json"});
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Train and evaluate neural controllers with a differentiable CBF-QP safety filter"};
    app.require_subcommand(1);
    Options opt;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config, "experiment config (JSON)")->required();
        sub->add_option("--out", opt.out, "output directory (overrides output_dir)");
        sub->add_option("--seed", opt.seed, "seed (overrides train.seed)");
    };
    CLI::App* train_cmd = app.add_subcommand("train", "train a controller");
    add_common(train_cmd);
    CLI::App* rollout_cmd = app.add_subcommand("rollout", "simulate a trained controller");
    add_common(rollout_cmd);
    rollout_cmd->add_option("--checkpoint", opt.checkpoint, "checkpoint written by train")->required();
    rollout_cmd->add_option("--x0", opt.x0, "initial state, comma separated")->delimiter(',');
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "compare filter settings");
    add_common(ablate_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        if (*train_cmd) return cmd_train(opt);
        if (*rollout_cmd) return cmd_rollout(opt);
        return cmd_ablate(opt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kTrainingFailure;
    }
}
