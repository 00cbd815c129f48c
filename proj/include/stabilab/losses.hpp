#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "stabilab/data.hpp"
#include "stabilab/vector_ops.hpp"

namespace stabilab {

enum class LossKind { kLogistic, kHinge, kAbsolute, kNormalizedSigmoid };

// The three analysis regimes the stability bounds are stated for.
enum class Regime { kSmoothConvex, kNonsmoothConvex, kSmoothNonconvex };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);
std::string to_string(Regime r);

// Loss family plus its certified constants over the ball {w : |w| <= D}.
//
//   logistic            log(1 + exp(-y<w,x>))   G = bx, L = bx^2/4,        M = log(1 + exp(D bx))
//   hinge               max(0, 1 - y<w,x>)      G = bx,                    M = 1 + D bx
//   absolute            |y - <w,x>|             G = bx,                    M = by + D bx
//   normalized-sigmoid  1 / (1 + exp(y<w,x>))   G = bx/4, L = bx^2/(6 sqrt3), M = 1
struct LossSpec {
  LossKind kind = LossKind::kLogistic;
  double D = 1.0;
  double G = 1.0;
  std::optional<double> L;
  double M = 1.0;

  static LossSpec derive(LossKind kind, double radius, double bx, double by);

  bool convex() const { return kind != LossKind::kNormalizedSigmoid; }
  bool smooth() const {
    return kind == LossKind::kLogistic || kind == LossKind::kNormalizedSigmoid;
  }
  Regime regime() const;
  // L when smooth, otherwise throws.
  double smoothness() const;

  void validate() const;

  bool operator==(const LossSpec&) const = default;
};

void to_json(nlohmann::json& j, const LossSpec& spec);
// Accepts {kind, D} plus optional explicit {G, L, M}. Missing constants must be
// filled in by the caller via LossSpec::derive; see parse_loss_spec.
LossSpec parse_loss_spec(const nlohmann::json& j, double bx, double by);

double loss_value(const LossSpec& spec, std::span<const double> w, const DataPoint& z);

// Writes a (sub)gradient into out. Kinks use the zero subgradient.
void loss_grad(const LossSpec& spec, std::span<const double> w, const DataPoint& z,
               std::span<double> out);
Vector loss_grad(const LossSpec& spec, std::span<const double> w, const DataPoint& z);

// Euclidean projection onto the centered ball of radius D.
void project_inplace(const LossSpec& spec, std::span<double> w);
Vector project(const LossSpec& spec, std::span<const double> w);

struct CertificationReport {
  std::size_t trials = 0;
  double max_loss = 0.0;
  double min_loss = 0.0;
  double max_grad_norm = 0.0;
  // max |grad(w) - grad(w')| / |w - w'|; only meaningful for smooth kinds.
  double max_grad_ratio = 0.0;
  bool exceeds_M = false;
  bool exceeds_G = false;
  bool exceeds_L = false;

  bool ok() const { return !exceeds_M && !exceeds_G && !exceeds_L && min_loss >= 0.0; }
};

// Random search for the largest loss value, gradient norm and gradient
// difference ratio over w, w' drawn from the ball and z drawn from distro.
CertificationReport certify_constants(const LossSpec& spec, const DistributionSpec& distro,
                                      std::size_t trials, std::uint64_t seed);

// Uniform draw from the ball of radius r in dimension d.
Vector sample_in_ball(Rng& rng, std::size_t d, double r);

}  // namespace stabilab
