#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stabilab/data.hpp"
#include "stabilab/losses.hpp"
#include "stabilab/sgd.hpp"

namespace stabilab {

// Everything needed to run the learning algorithm on a fresh sample of size N.
struct SgdProblem {
  LossSpec loss;
  Schedule schedule;
  DistributionSpec distro;
  std::size_t N = 0;
  std::size_t T = 0;
  SamplerMode sampler = SamplerMode::kWithReplacement;

  // Checks sizes, the single-epoch restriction and the step-size cap.
  void validate() const;
  Vector etas() const { return schedule.materialize(T); }
};

struct RiskEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  std::size_t samples = 0;
};

// Mean loss over a dataset.
double empirical_risk(const LossSpec& loss, std::span<const double> w, const Dataset& subset);

// Mean loss over m_pop fresh draws, with its standard error.
RiskEstimate estimate_population_risk(const LossSpec& loss, std::span<const double> w,
                                      const DistributionSpec& distro, std::size_t m_pop,
                                      std::uint64_t seed);

// Population risks of several models evaluated on one shared stream of m_pop
// fresh draws.
std::vector<RiskEstimate> estimate_population_risks(const LossSpec& loss,
                                                    std::span<const Vector> models,
                                                    const DistributionSpec& distro,
                                                    std::size_t m_pop, std::uint64_t seed);

enum class IndexMode { kFixed, kUniform };

struct StabilityOptions {
  IndexMode index_mode = IndexMode::kFixed;
  std::size_t fixed_index = 0;  // 0-based replaced coordinate for kFixed
  std::size_t trials = 2000;
  std::uint64_t seed = 0;
  std::size_t parallel = 1;
};

struct StabilityEstimate {
  double gamma_hat = 0.0;   // sqrt(mean delta^2)
  double ci95_upper = 0.0;  // sqrt of the upper 95% bound on mean delta^2
  double mean_sq = 0.0;
  double mean_sq_se = 0.0;
  std::size_t trials = 0;
  std::vector<double> deltas;  // per-trial l(w_bar; Z) - l(w_bar'; Z)

  // config echo
  LossKind loss = LossKind::kLogistic;
  SamplerMode sampler = SamplerMode::kWithReplacement;
  std::size_t N = 0;
  std::size_t T = 0;
  std::string schedule;
};

// Monte Carlo estimate of the L2-stability parameter. Each trial draws S, its
// neighbor S^(i), an evaluation point Z and one path shared by both runs.
StabilityEstimate estimate_l2_stability(const SgdProblem& problem, const StabilityOptions& opts);

// Summarizes a vector of loss differences (used by the estimator and by
// experiments that build coupled pairs themselves).
StabilityEstimate summarize_deltas(std::vector<double> deltas);

enum class BoundVariant { kAppendix, kMainText };

std::string to_string(BoundVariant v);
BoundVariant bound_variant_from_string(const std::string& s);

struct BoundReport {
  Regime regime = Regime::kSmoothConvex;
  SamplerMode sampler = SamplerMode::kWithReplacement;
  double gamma = 0.0;
  double G = 0.0;
  std::optional<double> L;
  std::size_t N = 0;
  std::size_t T = 0;
  double sum_eta = 0.0;
  double sum_eta_sq = 0.0;
  Vector u;  // u_t series, with-replacement non-convex bound only
  BoundVariant variant = BoundVariant::kAppendix;
  double exponent_multiplier = 0.0;  // non-convex bounds only
};

// gamma = G^2 sqrt((40/N) (sum eta^2 + (sum eta)^2 / N))
BoundReport bound_sgdw_smooth_convex(double G, std::size_t N, std::span<const double> etas);

// gamma = G^2 sqrt(40 sum eta^2 + (32/N^2) (sum eta)^2)
BoundReport bound_sgdw_nonsmooth_convex(double G, std::size_t N, std::span<const double> etas);

// u_t = eta_t^2 + 2 eta_t sum_{tau<t} exp(L sum_{i=tau+1}^{t-1} eta_i) eta_tau
// gamma = 2 G^2 sqrt((1/N) sum_t exp(c L sum_{tau>t} eta_tau) u_t)
// with c = 3 (variant "appendix") or 1 ("maintext"). Requires eta_t <= 1/L.
BoundReport bound_sgdw_smooth_nonconvex(double G, double L, std::size_t N,
                                        std::span<const double> etas,
                                        BoundVariant variant = BoundVariant::kAppendix);

// gamma = 2 G^2 sqrt((1/N) sum eta^2), T <= N
BoundReport bound_sgdwo_smooth_convex(double G, std::size_t N, std::span<const double> etas);

// gamma = 2 G^2 sqrt((1/N) sum_{t0=1}^{T} sum_{t=t0}^{T} eta_t^2), T <= N
BoundReport bound_sgdwo_nonsmooth_convex(double G, std::size_t N, std::span<const double> etas);

// gamma = 2 G^2 sqrt((1/N) sum_t exp(c L sum_{tau>t} eta_tau) eta_t^2), T <= N
// with c = 2 (variant "appendix") or 1 ("maintext").
BoundReport bound_sgdwo_smooth_nonconvex(double G, double L, std::size_t N,
                                         std::span<const double> etas,
                                         BoundVariant variant = BoundVariant::kAppendix);

// Picks the bound matching the loss regime and sampler.
BoundReport theoretical_bound(const LossSpec& loss, SamplerMode sampler, std::size_t N,
                              std::span<const double> etas,
                              BoundVariant variant = BoundVariant::kAppendix);

// 3 gamma + 2 M / sqrt(N)
double first_moment_bound(double gamma, double M, std::size_t N);

struct GapOptions {
  std::size_t trials = 1000;
  std::size_t m_pop = 100000;
  std::uint64_t seed = 0;
  std::size_t parallel = 1;
};

// Monte Carlo mean of |R(A(S)) - R_S(A(S))| over fresh (S, path) pairs.
RiskEstimate estimate_first_moment_gap(const SgdProblem& problem, const GapOptions& opts);

}  // namespace stabilab
