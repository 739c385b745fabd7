#ifndef TWOTIME_HARNESS_EXPERIMENT_HPP_
#define TWOTIME_HARNESS_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twotime/engine.hpp"
#include "twotime/mdp.hpp"
#include "twotime/oracle.hpp"

namespace twotime::harness {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kValidationFailure = 2,
  kDivergence = 3,
  kIoError = 4,
};

/// Thrown for malformed configuration documents; maps to kValidationFailure.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown for unreadable inputs or unwritable outputs; maps to kIoError.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OdeSettings {
  int starts = 10;
  double start_radius = 10.0;
  double tracking_window = 1.0;
  /// Iteration indices n whose times t(n) start the tracking windows.
  std::vector<std::int64_t> tracking_points{100, 10000, 1000000};
  double max_dt = 1e-2;
};

struct AuditSettings {
  int points = 20;
  std::int64_t draws = 100000;
  std::int64_t lipschitz_pairs = 1000;
  double radius = 10.0;
};

/// Fully resolved experiment; every default is materialized by to_json().
struct ExperimentConfig {
  std::string name = "experiment";
  nlohmann::json mdp_source;
  std::optional<FiniteMdp> mdp;
  std::optional<Policy> target;
  std::optional<Policy> behavior;
  std::optional<FeatureMap> features;
  nlohmann::json target_source;
  nlohmann::json behavior_source;
  nlohmann::json feature_source;
  RewardNoise reward_noise;
  SchedulePair schedule{StepSchedule::from_initial(0.5, 1e4, 1.0), StepSchedule::from_initial(0.5, 1e4, 0.6)};
  std::int64_t horizon = 100000;
  std::vector<std::uint64_t> seeds{1};
  std::int64_t thinning = 100;
  double divergence_bound = 1e6;
  std::filesystem::path output_dir = "out";
  std::set<std::string> pipelines{"oracle", "tdc", "ode", "audit"};
  std::uint64_t aux_seed = 12345;
  OdeSettings ode;
  AuditSettings audit;
};

/// Builds a config from a document; relative MDP file paths resolve against base_dir.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
/// Reads a JSON file, or falls back to a bundled preset of that name.
ExperimentConfig load_config(const std::string& path_or_preset);
nlohmann::json to_json(const ExperimentConfig& config);

/// Bundled presets: "chain3", "random5", "bad_schedule".
std::optional<nlohmann::json> builtin_preset(const std::string& name);
std::vector<std::string> builtin_preset_names();

/// Schedule pair and MDP/policy validation; nothing runs unless this is ok().
ValidationReport validate_config(const ExperimentConfig& config);

/// "5" means seeds 1..5; "3,7,11" is an explicit list.
std::vector<std::uint64_t> parse_seeds(const std::string& text);

nlohmann::json oracle_pipeline(const ExperimentConfig& config, const OracleSolution& solution);

struct TdcSweep {
  std::vector<TrajectoryLog> logs;
  nlohmann::json summary;
  bool any_diverged = false;
};
/// Runs every seed (in parallel) and reports errors against the oracle.
TdcSweep tdc_pipeline(const ExperimentConfig& config, const OracleSolution& solution);
nlohmann::json ode_pipeline(const ExperimentConfig& config, const OracleSolution& solution);
nlohmann::json audit_pipeline(const ExperimentConfig& config, const OracleSolution& solution);

struct RunResult {
  int exit_code = kOk;
  nlohmann::json summary;
};

/// Validates, runs the selected pipelines, and writes artifacts under config.output_dir.
RunResult run_experiment(const ExperimentConfig& config, std::ostream& log);

/// {"error": kind, "message": ..., "exit_code": n}
nlohmann::json error_record(const std::string& kind, const std::string& message, int exit_code);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace twotime::harness

#endif  // TWOTIME_HARNESS_EXPERIMENT_HPP_
