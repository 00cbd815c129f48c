#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stabilab/boosting.hpp"
#include "stabilab/data.hpp"
#include "stabilab/losses.hpp"
#include "stabilab/sgd.hpp"
#include "stabilab/stability.hpp"

namespace stabilab {

// Thrown by validate_config with every violation found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

// Required keys: loss, distro, schedule, N. `loss`, `N` and `K` accept a single
// value or a list (a sweep). `T` is an integer or the string "N" (T = N).
struct ExperimentConfig {
  std::vector<LossSpec> losses;
  DistributionSpec distro;
  Schedule schedule;
  SamplerMode sampler = SamplerMode::kWithReplacement;
  std::vector<std::size_t> N;
  std::optional<std::size_t> T;
  std::vector<std::size_t> K;
  SelectionRule rule = SelectionRule::kGap;
  std::size_t trials = 2000;
  std::size_t runs = 100;
  std::size_t m_pop = 10000;
  std::uint64_t seed = 0;
  std::size_t parallel = 1;
  std::string out;
  BoundVariant variant = BoundVariant::kAppendix;
  IndexMode index_mode = IndexMode::kFixed;
  std::size_t index = 0;

  std::size_t horizon(std::size_t n) const { return T ? *T : n; }
  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig validate_config(const std::string& raw_json);
ExperimentConfig validate_config(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
std::string serialize(const ExperimentConfig& cfg);

// Config for the `experiment` subcommand: {experiment: "acceptance", seed,
// parallel, criteria, out}.
struct AcceptanceConfig {
  std::uint64_t seed = 20240601;
  std::size_t parallel = 1;
  std::vector<int> criteria{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  std::string out;

  bool operator==(const AcceptanceConfig&) const = default;
};

bool is_acceptance_config(const nlohmann::json& j);
AcceptanceConfig validate_acceptance_config(const nlohmann::json& j);
nlohmann::json to_json(const AcceptanceConfig& cfg);

}  // namespace stabilab
