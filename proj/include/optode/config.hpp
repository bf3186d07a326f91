#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "optode/envs.hpp"
#include "optode/trainer.hpp"

namespace optode {

/// Everything one command needs. The JSON schema is documented in
/// docs/config.md; unknown keys are rejected at every level.
struct ExperimentConfig {
    EnvKind env = EnvKind::Unicycle;
    UnicycleParams unicycle;
    Unicycle4Params unicycle4;
    CarsParams cars;

    double gamma = 1.0;
    Vec kappa_init{1.0};
    std::vector<std::size_t> hidden{64, 64};

    TrainConfig train;
    std::vector<std::string> ablation_modes{"no_qp", "inference_qp", "fixed_kappa:5", "fixed_kappa:10",
                                            "learned_kappa"};
    std::size_t ablation_eval_size = 50;
    std::uint64_t ablation_eval_seed = 12345;

    std::string output_dir = "out";

    Environment make_env() const;
    AblationConfig ablation() const;
};

/// Throws ConfigError naming the offending key.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Throws ConfigError (missing file, parse error, schema violation).
ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a 64 of the canonical (sorted, compact) JSON form, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace optode
