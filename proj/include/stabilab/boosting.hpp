#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stabilab/data.hpp"
#include "stabilab/losses.hpp"
#include "stabilab/sgd.hpp"
#include "stabilab/stability.hpp"

namespace stabilab {

enum class SelectionRule {
  kGap,   // argmin_k |R_{S\S_k}(w_k) - R_{S_k}(w_k)|
  kRisk,  // argmin_k R_{S\S_k}(w_k)
};

std::string to_string(SelectionRule r);
SelectionRule selection_rule_from_string(const std::string& s);

// The base learner handed to subbagging: SGD with a fixed schedule and T steps
// per subset.
struct Learner {
  LossSpec loss;
  Schedule schedule;
  std::size_t T = 0;
  SamplerMode sampler = SamplerMode::kWithReplacement;
};

struct Candidate {
  Vector w_bar;
  double train_risk = 0.0;       // R_{S_k}
  double validation_risk = 0.0;  // R_{S \ S_k}
  double gap = 0.0;              // |validation - train|
  double full_risk = 0.0;        // R_S
  std::uint64_t path_seed = 0;
};

struct SubbagResult {
  std::size_t K = 0;
  SelectionRule rule = SelectionRule::kGap;
  std::vector<Candidate> candidates;
  std::size_t selected = 0;  // 0-based k*

  const Candidate& chosen() const { return candidates.at(selected); }
  double selected_full_risk() const { return chosen().full_risk; }
};

// Splits S into K contiguous blocks, trains one model per block with path seed
// base_seed + k, and selects k* by the given rule (ties go to the smallest k).
SubbagResult run_subbagging(const Learner& learner, const Dataset& s, std::size_t K,
                            SelectionRule rule, std::uint64_t base_seed, std::size_t parallel = 1);

// Index chosen by `rule` over stored candidate values.
std::size_t select_candidate(std::span<const Candidate> candidates, SelectionRule rule);

// max_k |R_S - (1/K) R_{S_k} - ((K-1)/K) R_{S\S_k}|
double mixture_identity_error(const SubbagResult& result);

struct GapDecompositionCheck {
  double lhs = 0.0;           // |R_{k*} - R_S(w_{k*})|
  double intermediate = 0.0;  // (1/K) gap(k*) + |R_{k*} - R_{S\S_{k*}}|
  double rhs = 0.0;           // (1/K) min_k gap + ((K+1)/K) max_k |R_k - R_{S\S_k}|
  double rhs_final = 0.0;     // (1/K) min_k |R_k - R_{S_k}| + ((K+1)/K) max_k |R_k - R_{S\S_k}|
  double slack = 0.0;         // rhs - lhs
  double slack_final = 0.0;   // rhs_final - lhs
  bool holds = false;
};

// Verifies the generalization-gap decomposition for a GAP-rule result, with
// the population risks replaced by the fixed numbers pop_risks[k].
GapDecompositionCheck gap_decomposition_check(const SubbagResult& result,
                                              std::span<const double> pop_risks);

struct MinimizeResult {
  Vector w;
  double value = 0.0;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
};

// Full-batch projected (sub)gradient descent on the empirical risk. Smooth
// losses use step 1/L; non-smooth losses use D / (G sqrt(k)) and keep the best
// iterate. Stops when the full gradient norm drops to grad_tol.
MinimizeResult minimize_empirical_risk(const LossSpec& loss, const Dataset& s,
                                       std::size_t max_iter = 10000, double grad_tol = 1e-6);

struct MarkovOptions {
  std::vector<std::size_t> Ks{2, 4, 8};
  double alpha = 0.5;
  std::size_t runs = 2000;
  std::size_t mu_runs = 2000;  // single-subset runs used to estimate mu
  std::size_t m_pop = 10000;
  std::uint64_t seed = 0;
  std::size_t parallel = 1;
};

struct MarkovRow {
  std::size_t K = 0;
  std::size_t subset_size = 0;
  double mu = 0.0;  // E|R - R_{S_k}| at subset size N/K
  double mu_se = 0.0;
  double threshold = 0.0;  // mu / alpha
  std::size_t exceedances = 0;
  std::size_t runs = 0;
  double frequency = 0.0;
  double binomial_se = 0.0;  // sqrt(a (1 - a) / runs) at a = alpha^K
  double alpha_pow_K = 0.0;
  std::size_t identical_candidate_runs = 0;
  // Set when candidates coincide, so the K events are not distinct draws and
  // the alpha^K product argument does not apply.
  bool independence_caveat = false;
  std::vector<double> min_gaps;       // per run: min_k |R_k - R_{S_k}|
  std::vector<double> selected_gaps;  // per run: gap(k*) under the GAP rule
  std::vector<double> selected_pop_gaps;  // per run: |R_{k*} - R_S(w_{k*})|
};

struct MarkovReport {
  double alpha = 0.0;
  std::size_t N = 0;
  std::vector<MarkovRow> rows;
};

MarkovReport markov_boost_experiment(const Learner& learner, const DistributionSpec& distro,
                                     std::size_t N, const MarkovOptions& opts);

struct ExcessRiskOptions {
  std::size_t K = 4;
  std::size_t runs = 500;
  std::size_t m_pop = 20000;
  std::size_t stability_trials = 2000;
  std::uint64_t seed = 0;
  std::size_t parallel = 1;
  std::size_t wstar_sample_factor = 10;
  std::size_t wstar_max_iter = 10000;
  double wstar_grad_tol = 1e-6;
  std::size_t erm_max_iter = 2000;  // per-subset empirical minimization
};

struct ExcessRiskReport {
  std::size_t N = 0;
  std::size_t K = 0;
  std::vector<double> excess;  // per run: R(w_{k*}) - R(w*)
  double mean_excess = 0.0;
  double excess_se = 0.0;
  double q50 = 0.0, q90 = 0.0, q99 = 0.0;
  double delta_opt = 0.0;  // at subset size N/K
  double delta_opt_se = 0.0;
  double delta_opt_full = 0.0;  // same learner on all N points
  double delta_opt_full_se = 0.0;
  StabilityEstimate gamma;  // at subset size N/K
  double risk_wstar = 0.0;
  double wstar_train_value = 0.0;
  double wstar_grad_norm = 0.0;
  std::size_t wstar_iterations = 0;
  bool wstar_is_teacher = false;
  std::size_t rule_mismatches = 0;
  double bound = 0.0;      // gamma upper + delta_opt
  double tolerance = 0.0;  // 3 combined standard errors
  bool dominated = false;
};

ExcessRiskReport excess_risk_experiment(const Learner& learner, const DistributionSpec& distro,
                                        std::size_t N, const ExcessRiskOptions& opts);

}  // namespace stabilab
