#include "stabilab/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace stabilab {
namespace {

// Relative slack for comparing empirical maxima with certified constants.
constexpr double kAuditSlack = 1e-12;

// log(1 + exp(s)) without overflow.
double softplus(double s) { return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

// 1 / (1 + exp(-s)).
double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

}  // namespace

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::kLogistic: return "logistic";
    case LossKind::kHinge: return "hinge";
    case LossKind::kAbsolute: return "absolute";
    case LossKind::kNormalizedSigmoid: return "normalized-sigmoid";
  }
  return "unknown";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "logistic") return LossKind::kLogistic;
  if (s == "hinge") return LossKind::kHinge;
  if (s == "absolute") return LossKind::kAbsolute;
  if (s == "normalized-sigmoid") return LossKind::kNormalizedSigmoid;
  throw std::invalid_argument("unknown loss kind '" + s + "'");
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::kSmoothConvex: return "smooth-convex";
    case Regime::kNonsmoothConvex: return "nonsmooth-convex";
    case Regime::kSmoothNonconvex: return "smooth-nonconvex";
  }
  return "unknown";
}

LossSpec LossSpec::derive(LossKind kind, double radius, double bx, double by) {
  LossSpec s;
  s.kind = kind;
  s.D = radius;
  switch (kind) {
    case LossKind::kLogistic:
      s.G = bx;
      s.L = bx * bx / 4.0;
      s.M = softplus(radius * bx);
      break;
    case LossKind::kHinge:
      s.G = bx;
      s.M = 1.0 + radius * bx;
      break;
    case LossKind::kAbsolute:
      s.G = bx;
      s.M = by + radius * bx;
      break;
    case LossKind::kNormalizedSigmoid:
      // sup |sigma''| = 1 / (6 sqrt 3) for the logistic sigmoid.
      s.G = bx / 4.0;
      s.L = bx * bx / (6.0 * std::sqrt(3.0));
      s.M = 1.0;
      break;
  }
  return s;
}

Regime LossSpec::regime() const {
  if (!convex()) return Regime::kSmoothNonconvex;
  return smooth() ? Regime::kSmoothConvex : Regime::kNonsmoothConvex;
}

double LossSpec::smoothness() const {
  if (!L) throw std::invalid_argument("loss '" + to_string(kind) + "' has no smoothness constant");
  return *L;
}

void LossSpec::validate() const {
  if (!(D > 0.0) || !std::isfinite(D)) throw std::invalid_argument("loss.D must be > 0");
  if (!(G > 0.0) || !std::isfinite(G)) throw std::invalid_argument("loss.G must be > 0");
  if (!(M > 0.0) || !std::isfinite(M)) throw std::invalid_argument("loss.M must be > 0");
  if (smooth()) {
    if (!L || !(*L > 0.0) || !std::isfinite(*L)) {
      throw std::invalid_argument("loss.L must be > 0 for smooth loss '" + to_string(kind) + "'");
    }
  } else if (L) {
    throw std::invalid_argument("loss.L given for non-smooth loss '" + to_string(kind) + "'");
  }
}

void to_json(nlohmann::json& j, const LossSpec& spec) {
  j = nlohmann::json{{"kind", to_string(spec.kind)}, {"D", spec.D}, {"G", spec.G}, {"M", spec.M}};
  if (spec.L) j["L"] = *spec.L;
}

LossSpec parse_loss_spec(const nlohmann::json& j, double bx, double by) {
  if (!j.is_object()) throw std::invalid_argument("loss must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "kind" && key != "D" && key != "G" && key != "L" && key != "M") {
      throw std::invalid_argument("loss: unknown key '" + key + "'");
    }
  }
  if (!j.contains("kind")) throw std::invalid_argument("loss: missing key 'kind'");
  if (!j.contains("D")) throw std::invalid_argument("loss: missing key 'D'");
  LossSpec s = LossSpec::derive(loss_kind_from_string(j.at("kind").get<std::string>()),
                                j.at("D").get<double>(), bx, by);
  if (j.contains("G")) s.G = j.at("G").get<double>();
  if (j.contains("M")) s.M = j.at("M").get<double>();
  if (j.contains("L")) s.L = j.at("L").get<double>();
  s.validate();
  return s;
}

double loss_value(const LossSpec& spec, std::span<const double> w, const DataPoint& z) {
  require_same_dim(w.size(), z.x.size(), "loss_value w vs x");
  const double score = dot(w, z.x);
  switch (spec.kind) {
    case LossKind::kLogistic: return softplus(-z.y * score);
    case LossKind::kHinge: return std::max(0.0, 1.0 - z.y * score);
    case LossKind::kAbsolute: return std::abs(z.y - score);
    case LossKind::kNormalizedSigmoid: return sigmoid(-z.y * score);
  }
  return 0.0;
}

void loss_grad(const LossSpec& spec, std::span<const double> w, const DataPoint& z,
               std::span<double> out) {
  require_same_dim(w.size(), z.x.size(), "loss_grad w vs x");
  require_same_dim(w.size(), out.size(), "loss_grad output");
  const double score = dot(w, z.x);
  double coef = 0.0;  // gradient = coef * x
  switch (spec.kind) {
    case LossKind::kLogistic:
      coef = -z.y * sigmoid(-z.y * score);
      break;
    case LossKind::kHinge:
      coef = z.y * score < 1.0 ? -z.y : 0.0;
      break;
    case LossKind::kAbsolute: {
      const double r = z.y - score;
      coef = r > 0.0 ? -1.0 : (r < 0.0 ? 1.0 : 0.0);
      break;
    }
    case LossKind::kNormalizedSigmoid: {
      const double m = z.y * score;
      coef = -z.y * sigmoid(m) * sigmoid(-m);
      break;
    }
  }
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = coef * z.x[j];
}

Vector loss_grad(const LossSpec& spec, std::span<const double> w, const DataPoint& z) {
  Vector g(w.size());
  loss_grad(spec, w, z, g);
  return g;
}

void project_inplace(const LossSpec& spec, std::span<double> w) {
  const double n = norm2(w);
  if (n > spec.D) {
    const double scale = spec.D / n;
    for (double& v : w) v *= scale;
    // Rounding can leave the norm an ulp above D; shrink until it is inside so
    // the projection is exactly idempotent.
    while (norm2(w) > spec.D) {
      for (double& v : w) v *= 1.0 - 0x1.0p-52;
    }
  }
}

Vector project(const LossSpec& spec, std::span<const double> w) {
  Vector out(w.begin(), w.end());
  project_inplace(spec, out);
  return out;
}

Vector sample_in_ball(Rng& rng, std::size_t d, double r) {
  Vector v(d);
  double n = 0.0;
  while (n == 0.0) {
    for (double& x : v) x = rng.normal();
    n = norm2(v);
  }
  const double radius = r * std::pow(rng.uniform01(), 1.0 / static_cast<double>(d));
  for (double& x : v) x *= radius / n;
  return v;
}

CertificationReport certify_constants(const LossSpec& spec, const DistributionSpec& distro,
                                      std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw std::invalid_argument("certify_constants: trials must be >= 1");
  const PointSampler sampler(distro);
  Rng rng(seed);
  CertificationReport rep;
  rep.trials = trials;
  rep.min_loss = spec.M;
  DataPoint z;
  Vector g(distro.dim), g2(distro.dim);
  for (std::size_t t = 0; t < trials; ++t) {
    sampler.draw(rng, z);
    // Every fourth draw sits on the boundary sphere, where the constants are tightest.
    Vector w = sample_in_ball(rng, distro.dim, spec.D);
    if (t % 4 == 0) {
      const double n = norm2(w);
      if (n > 0.0) for (double& v : w) v *= spec.D / n;
    }
    const Vector w2 = sample_in_ball(rng, distro.dim, spec.D);
    for (const Vector* p : std::array<const Vector*, 2>{&w, &w2}) {
      const double v = loss_value(spec, *p, z);
      rep.max_loss = std::max(rep.max_loss, v);
      rep.min_loss = std::min(rep.min_loss, v);
    }
    loss_grad(spec, w, z, g);
    loss_grad(spec, w2, z, g2);
    rep.max_grad_norm = std::max({rep.max_grad_norm, norm2(g), norm2(g2)});
    const double dw = distance(w, w2);
    if (spec.smooth() && dw > 0.0) rep.max_grad_ratio = std::max(rep.max_grad_ratio, distance(g, g2) / dw);
  }
  rep.exceeds_M = rep.max_loss > spec.M * (1.0 + kAuditSlack);
  rep.exceeds_G = rep.max_grad_norm > spec.G * (1.0 + kAuditSlack);
  rep.exceeds_L = spec.L && rep.max_grad_ratio > *spec.L * (1.0 + kAuditSlack);
  return rep;
}

}  // namespace stabilab
