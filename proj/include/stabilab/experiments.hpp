#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stabilab/data.hpp"
#include "stabilab/losses.hpp"
#include "stabilab/sgd.hpp"

namespace stabilab {

struct Metric {
  std::string name;
  double value = 0.0;
};

struct CriterionResult {
  int id = 0;
  std::string title;
  bool passed = false;
  std::string summary;  // one human-readable line
  std::vector<Metric> metrics;

  void add(std::string name, double value) { metrics.push_back({std::move(name), value}); }
};

struct AcceptanceSettings {
  std::uint64_t seed = 20240601;
  std::size_t parallel = 1;
};

// Shared fixtures: d = 5, bx = by = 1, D = 1.
inline constexpr std::size_t kAcceptanceDim = 5;
DistributionSpec acceptance_classification();
DistributionSpec acceptance_regression(double sigma_y);
LossSpec acceptance_loss(LossKind kind);
// Data model matching a loss: regression for the absolute loss, classification otherwise.
DistributionSpec acceptance_distro_for(LossKind kind);
// eta_t = 2/(L sqrt t) for smooth convex, 1/sqrt T for non-smooth, 1/(L T) for non-convex.
Schedule conforming_schedule(const LossSpec& loss);

CriterionResult criterion_coupling_identity(const AcceptanceSettings& s);       // 1
CriterionResult criterion_non_expansiveness(const AcceptanceSettings& s);       // 2
CriterionResult criterion_recursion_audits(const AcceptanceSettings& s);        // 3
CriterionResult criterion_stability_dominance(const AcceptanceSettings& s);     // 4
CriterionResult criterion_scaling_law(const AcceptanceSettings& s);             // 5
CriterionResult criterion_first_moment(const AcceptanceSettings& s);            // 6
CriterionResult criterion_gap_decomposition(const AcceptanceSettings& s);       // 7
CriterionResult criterion_markov_boosting(const AcceptanceSettings& s);         // 8
CriterionResult criterion_hitting_time(const AcceptanceSettings& s);            // 9
CriterionResult criterion_excess_risk(const AcceptanceSettings& s);             // 10

// Re-executes every criterion in `baseline` (run at parallelism 1) at
// parallelism 8, plus the CLI-level CSV renderers, and compares bytes.
CriterionResult criterion_determinism(std::span<const CriterionResult> baseline,
                                      const AcceptanceSettings& s);  // 11

// Runs criterion 1..10 by id.
CriterionResult run_criterion(int id, const AcceptanceSettings& s);

// Runs the listed criteria; 11 re-runs the others (all of 1..10 when none
// were listed) at parallelism 8 and compares.
std::vector<CriterionResult> run_acceptance(std::span<const int> ids, const AcceptanceSettings& s,
                                            bool verbose = false);

// `criterion,metric,value` rows; values use 17 significant digits.
std::string criteria_csv(std::span<const CriterionResult> results);

}  // namespace stabilab
