#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "optode/config.hpp"
#include "optode/envs.hpp"
#include "optode/policy.hpp"
#include "optode/trainer.hpp"
#include "optode/trajectory.hpp"

namespace optode {

struct Checkpoint {
    MlpPolicy policy;
    ClassKParams class_k;
    std::uint64_t seed = 0;
};

/// Line 1: JSON header (format, layer_dims, theta2_len, seed); then theta1
/// and theta2, one value per line, printed exactly (%.17g).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
/// Throws ConfigError on unreadable or malformed files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// RFC 4180 writer: CRLF line ends, fields quoted when they contain a comma,
/// quote, CR or LF.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}
    void row(std::span<const std::string> fields);
    static std::string escape(const std::string& field);
    static std::string number(double v);

private:
    std::ostream& out_;
};

void write_trajectory_csv(std::ostream& out, const Environment& env, const Trajectory& traj);
void write_distance_csv(std::ostream& out, const Environment& env, const Trajectory& traj);
void write_metrics_csv(std::ostream& out, std::span<const EpochMetrics> epochs);
void write_table1_csv(std::ostream& out, std::span<const AblationRow> rows);

nlohmann::json epoch_to_json(const EpochMetrics& em);
nlohmann::json ablation_row_to_json(const AblationRow& row);

/// Provenance block shared by every JSON output.
nlohmann::json provenance(const ExperimentConfig& cfg);

/// Writes `text` to `path`, creating parent directories; throws on I/O failure.
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace optode
