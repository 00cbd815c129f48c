#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stabilab/data.hpp"
#include "stabilab/losses.hpp"

namespace stabilab {

// Step-size schedule; t is 1-based throughout.
//   constant:     eta_t = eta
//   inverse-sqrt: eta_t = c / sqrt(t)
//   inverse-t:    eta_t = 1 / (L nu t)
//   horizon:      eta_t = c / T^power (constant in t, scaled by the horizon)
//   explicit:     eta_t = steps[t-1]; entries may be zero
struct Schedule {
  enum class Kind { kConstant, kInverseSqrt, kInverseT, kHorizon, kExplicit };

  Kind kind = Kind::kConstant;
  double eta = 0.0;
  double c = 0.0;
  double L = 0.0;
  double nu = 1.0;
  double power = 0.0;
  Vector steps;

  static Schedule constant(double eta);
  static Schedule inverse_sqrt(double c);
  static Schedule inverse_t(double L, double nu);
  static Schedule horizon(double c, double power);
  static Schedule explicit_steps(Vector steps);

  double at(std::size_t t, std::size_t T) const;
  // eta_1, ..., eta_T. Explicit schedules must have exactly T entries.
  Vector materialize(std::size_t T) const;
  std::string describe() const;
  void validate() const;

  bool operator==(const Schedule&) const = default;
};

void to_json(nlohmann::json& j, const Schedule& s);
void from_json(const nlohmann::json& j, Schedule& s);

// Throws std::invalid_argument when a step exceeds the cap its loss regime
// needs: 2/L for smooth convex losses, 1/L for smooth non-convex losses.
void check_schedule_cap(const LossSpec& loss, std::span<const double> etas);

enum class SamplerMode { kWithReplacement, kWithoutReplacement };

std::string to_string(SamplerMode m);
SamplerMode sampler_mode_from_string(const std::string& s);

// The algorithm's random bits: 0-based sample indices xi_1..xi_T.
struct RandomPath {
  SamplerMode mode = SamplerMode::kWithReplacement;
  std::size_t n = 0;
  std::vector<std::size_t> indices;

  std::size_t length() const { return indices.size(); }
  bool operator==(const RandomPath&) const = default;
};

RandomPath draw_path(SamplerMode mode, std::size_t n, std::size_t T, std::uint64_t seed);

// Paths serialize as plain JSON integer arrays.
nlohmann::json path_to_json(const RandomPath& p);
RandomPath path_from_json(const nlohmann::json& j, SamplerMode mode, std::size_t n);

struct SgdOutput {
  Vector w_bar;   // averaged iterate (1/T) sum_t w_t
  Vector w_last;  // diagnostics only
  std::vector<Vector> trajectory;  // w_0..w_T when requested
};

struct SgdOptions {
  bool record_trajectory = false;
};

// w_t = Proj(w_{t-1} - eta_t grad l(w_{t-1}; Z_{xi_t})), t = 1..T.
SgdOutput run_sgd(const LossSpec& loss, std::span<const double> etas, const Dataset& s,
                  const RandomPath& path, std::span<const double> w0, SgdOptions opts = {});
SgdOutput run_sgd(const LossSpec& loss, const Schedule& sched, const Dataset& s,
                  const RandomPath& path, std::span<const double> w0, SgdOptions opts = {});

struct CoupledTrace {
  SgdOutput first;
  SgdOutput second;
  Vector etas;
  Vector distance;             // distance[t] = |w_t - w'_t|, t = 0..T
  std::vector<char> differs;   // differs[t] = 1{Z_{xi_t} != Z'_{xi_t}}, t = 1..T; [0] unused
  std::optional<std::size_t> first_difference;  // t_0 (1-based); empty when never hit

  std::size_t steps() const { return etas.size(); }
};

// Runs SGD on S and S' with the same path and w0.
CoupledTrace run_coupled(const LossSpec& loss, std::span<const double> etas, const Dataset& s,
                         const Dataset& s_prime, const RandomPath& path,
                         std::span<const double> w0);
CoupledTrace run_coupled(const LossSpec& loss, const Schedule& sched, const Dataset& s,
                         const Dataset& s_prime, const RandomPath& path,
                         std::span<const double> w0);

// Per-step audits of coupled trajectories against the distance recursions the
// stability bounds are built from. Comparisons carry an absolute slack.
struct AuditReport {
  std::size_t checks = 0;
  std::size_t violations = 0;
  double worst_excess = 0.0;  // max(lhs - rhs) over all checks

  AuditReport& operator+=(const AuditReport& o);
};

inline constexpr double kAuditTolerance = 1e-12;

// Smooth convex with eta_t <= 2/L:
//   differs_t = 0  =>  d_t <= d_{t-1}
//   differs_t = 1  =>  d_t <= d_{t-1} + 2 G eta_t
AuditReport audit_smooth_convex(const CoupledTrace& tr, double G);

// Non-smooth convex: d_t = 0 for t < t_0 and
//   d_t <= 2 G sqrt(sum_{tau=t_0}^{t} eta_tau^2) + 4 G sum_{tau=t_0+1}^{t} eta_tau differs_tau
AuditReport audit_nonsmooth_trajectory(const CoupledTrace& tr, double G);

// Smooth non-convex with eta_t <= 1/L:
//   differs_t = 0  =>  d_t <= (1 + eta_t L) d_{t-1}
//   differs_t = 1  =>  d_t <= d_{t-1} + 2 G eta_t
AuditReport audit_smooth_nonconvex(const CoupledTrace& tr, double G, double L);

}  // namespace stabilab
