#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "stabilab/config.hpp"
#include "stabilab/experiments.hpp"

namespace stabilab {

inline constexpr const char* kToolVersion = "1.0.0";

enum class Command { kStability, kBounds, kBoost, kExperiment, kTraj };

std::string to_string(Command c);
Command command_from_string(const std::string& s);

// Exit statuses of run_command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitRuntime = 2;

// CSV renderers. Each is a pure function of the config, so identical configs
// give byte-identical output regardless of cfg.parallel.
std::string render_stability_csv(const ExperimentConfig& cfg);  // trial,regime,sampler,N,T,schedule,delta_loss
std::string render_bounds_csv(const ExperimentConfig& cfg);     // regime,sampler,N,T,schedule,gamma_theory,variant
std::string render_boost_csv(const ExperimentConfig& cfg);      // run,k,train_risk,val_risk,gap,selected,pop_risk,pop_gap
std::string render_traj_csv(const ExperimentConfig& cfg);       // t,eta,xi,wnorm,loss

struct OutputRecord {
  std::string path;
  std::uint64_t fnv1a64 = 0;
  std::size_t bytes = 0;
};

struct RunManifest {
  std::string command;
  std::string config_hash;  // fnv1a64 of the canonical config JSON
  std::string version = kToolVersion;
  double wall_clock_seconds = 0.0;
  std::vector<OutputRecord> outputs;
  nlohmann::json config;
};

nlohmann::json to_json(const RunManifest& m);

// A manifest file can stand in for a config: its embedded `config` is used.
nlohmann::json unwrap_manifest(const nlohmann::json& j);

// Validates `raw` for `cmd`, runs it, writes the CSV (to stdout when no output
// path is configured) and, for file outputs, `<out>.manifest.json`. Progress
// and errors go to `log`.
int run_command(Command cmd, const nlohmann::json& raw, std::ostream& log);

}  // namespace stabilab
