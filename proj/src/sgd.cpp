#include "stabilab/sgd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stabilab/csv.hpp"

namespace stabilab {

Schedule Schedule::constant(double eta) {
  Schedule s;
  s.kind = Kind::kConstant;
  s.eta = eta;
  return s;
}

Schedule Schedule::inverse_sqrt(double c) {
  Schedule s;
  s.kind = Kind::kInverseSqrt;
  s.c = c;
  return s;
}

Schedule Schedule::inverse_t(double L, double nu) {
  Schedule s;
  s.kind = Kind::kInverseT;
  s.L = L;
  s.nu = nu;
  return s;
}

Schedule Schedule::horizon(double c, double power) {
  Schedule s;
  s.kind = Kind::kHorizon;
  s.c = c;
  s.power = power;
  return s;
}

Schedule Schedule::explicit_steps(Vector steps) {
  Schedule s;
  s.kind = Kind::kExplicit;
  s.steps = std::move(steps);
  return s;
}

double Schedule::at(std::size_t t, std::size_t T) const {
  if (t == 0 || t > T) throw std::invalid_argument("schedule: need 1 <= t <= T");
  const double td = static_cast<double>(t);
  switch (kind) {
    case Kind::kConstant: return eta;
    case Kind::kInverseSqrt: return c / std::sqrt(td);
    case Kind::kInverseT: return 1.0 / (L * nu * td);
    case Kind::kHorizon: return c / std::pow(static_cast<double>(T), power);
    case Kind::kExplicit:
      if (t > steps.size()) throw std::invalid_argument("schedule: explicit list shorter than T");
      return steps[t - 1];
  }
  return 0.0;
}

Vector Schedule::materialize(std::size_t T) const {
  validate();
  if (kind == Kind::kExplicit && steps.size() != T) {
    throw std::invalid_argument("schedule: explicit list has " + std::to_string(steps.size()) +
                                " entries but T = " + std::to_string(T));
  }
  Vector out(T);
  for (std::size_t t = 1; t <= T; ++t) out[t - 1] = at(t, T);
  return out;
}

std::string Schedule::describe() const {
  switch (kind) {
    case Kind::kConstant: return "constant(eta=" + format_double(eta) + ")";
    case Kind::kInverseSqrt: return "inverse-sqrt(c=" + format_double(c) + ")";
    case Kind::kInverseT: return "inverse-t(L=" + format_double(L) + ";nu=" + format_double(nu) + ")";
    case Kind::kHorizon: return "horizon(c=" + format_double(c) + ";power=" + format_double(power) + ")";
    case Kind::kExplicit: return "explicit(T=" + std::to_string(steps.size()) + ")";
  }
  return "unknown";
}

void Schedule::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("schedule: ") + what + " must be > 0");
    }
  };
  switch (kind) {
    case Kind::kConstant: positive(eta, "eta"); break;
    case Kind::kInverseSqrt: positive(c, "c"); break;
    case Kind::kInverseT:
      positive(L, "L");
      positive(nu, "nu");
      break;
    case Kind::kHorizon:
      positive(c, "c");
      if (!(power >= 0.0) || !std::isfinite(power)) throw std::invalid_argument("schedule: power must be >= 0");
      break;
    case Kind::kExplicit:
      for (double v : steps) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
          throw std::invalid_argument("schedule: explicit steps must be finite and >= 0");
        }
      }
      break;
  }
}

void to_json(nlohmann::json& j, const Schedule& s) {
  switch (s.kind) {
    case Schedule::Kind::kConstant: j = {{"kind", "constant"}, {"eta", s.eta}}; break;
    case Schedule::Kind::kInverseSqrt: j = {{"kind", "inverse-sqrt"}, {"c", s.c}}; break;
    case Schedule::Kind::kInverseT: j = {{"kind", "inverse-t"}, {"L", s.L}, {"nu", s.nu}}; break;
    case Schedule::Kind::kHorizon: j = {{"kind", "horizon"}, {"c", s.c}, {"power", s.power}}; break;
    case Schedule::Kind::kExplicit: j = {{"kind", "explicit"}, {"steps", s.steps}}; break;
  }
}

void from_json(const nlohmann::json& j, Schedule& s) {
  if (!j.is_object() || !j.contains("kind")) {
    throw std::invalid_argument("schedule must be an object with a 'kind'");
  }
  const std::string kind = j.at("kind").get<std::string>();
  std::vector<std::string> keys;
  if (kind == "constant") {
    keys = {"kind", "eta"};
  } else if (kind == "inverse-sqrt") {
    keys = {"kind", "c"};
  } else if (kind == "inverse-t") {
    keys = {"kind", "L", "nu"};
  } else if (kind == "horizon") {
    keys = {"kind", "c", "power"};
  } else if (kind == "explicit") {
    keys = {"kind", "steps"};
  } else {
    throw std::invalid_argument("schedule: unknown kind '" + kind + "'");
  }
  for (const auto& [key, _] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw std::invalid_argument("schedule: unknown key '" + key + "' for kind '" + kind + "'");
    }
  }
  for (const auto& k : keys) {
    if (!j.contains(k)) throw std::invalid_argument("schedule: missing key '" + k + "'");
  }
  if (kind == "constant") {
    s = Schedule::constant(j.at("eta").get<double>());
  } else if (kind == "inverse-sqrt") {
    s = Schedule::inverse_sqrt(j.at("c").get<double>());
  } else if (kind == "inverse-t") {
    s = Schedule::inverse_t(j.at("L").get<double>(), j.at("nu").get<double>());
  } else if (kind == "horizon") {
    s = Schedule::horizon(j.at("c").get<double>(), j.at("power").get<double>());
  } else {
    s = Schedule::explicit_steps(j.at("steps").get<Vector>());
  }
  s.validate();
}

void check_schedule_cap(const LossSpec& loss, std::span<const double> etas) {
  if (!loss.smooth()) return;
  const double L = loss.smoothness();
  const bool convex = loss.convex();
  const double cap = convex ? 2.0 / L : 1.0 / L;
  for (std::size_t t = 0; t < etas.size(); ++t) {
    if (etas[t] > cap * (1.0 + 1e-12)) {
      throw std::invalid_argument(
          "schedule: eta_" + std::to_string(t + 1) + " = " + format_double(etas[t]) +
          " exceeds the " + (convex ? "2/L" : "1/L") + " cap " + format_double(cap) +
          " required for " + to_string(loss.regime()) + " losses");
    }
  }
}

std::string to_string(SamplerMode m) {
  return m == SamplerMode::kWithReplacement ? "with-replacement" : "without-replacement";
}

SamplerMode sampler_mode_from_string(const std::string& s) {
  if (s == "with-replacement") return SamplerMode::kWithReplacement;
  if (s == "without-replacement") return SamplerMode::kWithoutReplacement;
  throw std::invalid_argument("unknown sampler '" + s + "'");
}

RandomPath draw_path(SamplerMode mode, std::size_t n, std::size_t T, std::uint64_t seed) {
  if (T == 0) throw std::invalid_argument("draw_path: T must be >= 1");
  if (n == 0) throw std::invalid_argument("draw_path: N must be >= 1");
  RandomPath p;
  p.mode = mode;
  p.n = n;
  Rng rng(seed);
  if (mode == SamplerMode::kWithReplacement) {
    p.indices.resize(T);
    for (auto& i : p.indices) i = static_cast<std::size_t>(rng.index(n));
  } else {
    if (T > n) {
      throw std::invalid_argument("draw_path: without-replacement sampling is single-epoch, needs T = " +
                                  std::to_string(T) + " <= N = " + std::to_string(n));
    }
    p.indices = rng.permutation_prefix(n, T);
  }
  return p;
}

nlohmann::json path_to_json(const RandomPath& p) { return p.indices; }

RandomPath path_from_json(const nlohmann::json& j, SamplerMode mode, std::size_t n) {
  RandomPath p;
  p.mode = mode;
  p.n = n;
  p.indices = j.get<std::vector<std::size_t>>();
  for (auto i : p.indices) {
    if (i >= n) throw std::invalid_argument("path: index out of range");
  }
  if (mode == SamplerMode::kWithoutReplacement) {
    auto sorted = p.indices;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw std::invalid_argument("path: repeated index under without-replacement sampling");
    }
  }
  return p;
}

namespace {

void check_inputs(const LossSpec& loss, std::span<const double> etas, const Dataset& s,
                  const RandomPath& path, std::span<const double> w0) {
  if (etas.size() != path.length()) {
    throw std::invalid_argument("run_sgd: schedule length " + std::to_string(etas.size()) +
                                " != path length " + std::to_string(path.length()));
  }
  if (path.length() == 0) throw std::invalid_argument("run_sgd: empty path");
  require_same_dim(w0.size(), s.dim, "run_sgd w0 vs dataset");
  for (auto i : path.indices) {
    if (i >= s.size()) throw std::invalid_argument("run_sgd: path index out of range for dataset");
  }
  if (norm2(w0) > loss.D * (1.0 + 1e-12)) throw std::invalid_argument("run_sgd: |w0| > D");
  check_schedule_cap(loss, etas);
}

// One projected step, in place. Shared by run_sgd and run_coupled so coupled
// outputs are bit-identical to independent runs.
inline void sgd_step(const LossSpec& loss, double eta, const DataPoint& z, Vector& w, Vector& grad) {
  loss_grad(loss, w, z, grad);
  for (std::size_t j = 0; j < w.size(); ++j) w[j] -= eta * grad[j];
  project_inplace(loss, w);
}

inline void finish_average(Vector& sum, std::size_t T) {
  const double inv = 1.0 / static_cast<double>(T);
  for (double& v : sum) v *= inv;
}

}  // namespace

SgdOutput run_sgd(const LossSpec& loss, std::span<const double> etas, const Dataset& s,
                  const RandomPath& path, std::span<const double> w0, SgdOptions opts) {
  check_inputs(loss, etas, s, path, w0);
  const std::size_t T = path.length();
  SgdOutput out;
  Vector w(w0.begin(), w0.end());
  Vector grad(w.size());
  Vector sum(w.size(), 0.0);
  if (opts.record_trajectory) {
    out.trajectory.reserve(T + 1);
    out.trajectory.push_back(w);
  }
  for (std::size_t t = 0; t < T; ++t) {
    sgd_step(loss, etas[t], s[path.indices[t]], w, grad);
    for (std::size_t j = 0; j < w.size(); ++j) sum[j] += w[j];
    if (opts.record_trajectory) out.trajectory.push_back(w);
  }
  finish_average(sum, T);
  out.w_bar = std::move(sum);
  out.w_last = std::move(w);
  return out;
}

SgdOutput run_sgd(const LossSpec& loss, const Schedule& sched, const Dataset& s,
                  const RandomPath& path, std::span<const double> w0, SgdOptions opts) {
  const Vector etas = sched.materialize(path.length());
  return run_sgd(loss, etas, s, path, w0, opts);
}

CoupledTrace run_coupled(const LossSpec& loss, std::span<const double> etas, const Dataset& s,
                         const Dataset& s_prime, const RandomPath& path,
                         std::span<const double> w0) {
  if (s.size() != s_prime.size()) throw std::invalid_argument("run_coupled: dataset size mismatch");
  require_same_dim(s.dim, s_prime.dim, "run_coupled datasets");
  check_inputs(loss, etas, s, path, w0);
  const std::size_t T = path.length();

  CoupledTrace tr;
  tr.etas.assign(etas.begin(), etas.end());
  tr.distance.assign(T + 1, 0.0);
  tr.differs.assign(T + 1, 0);

  Vector w(w0.begin(), w0.end()), w2(w0.begin(), w0.end());
  Vector g(w.size()), g2(w.size());
  Vector sum(w.size(), 0.0), sum2(w.size(), 0.0);
  for (std::size_t t = 1; t <= T; ++t) {
    const std::size_t i = path.indices[t - 1];
    sgd_step(loss, etas[t - 1], s[i], w, g);
    sgd_step(loss, etas[t - 1], s_prime[i], w2, g2);
    for (std::size_t j = 0; j < w.size(); ++j) {
      sum[j] += w[j];
      sum2[j] += w2[j];
    }
    tr.differs[t] = s[i] == s_prime[i] ? 0 : 1;
    if (tr.differs[t] && !tr.first_difference) tr.first_difference = t;
    tr.distance[t] = distance(w, w2);
  }
  finish_average(sum, T);
  finish_average(sum2, T);
  tr.first.w_bar = std::move(sum);
  tr.first.w_last = std::move(w);
  tr.second.w_bar = std::move(sum2);
  tr.second.w_last = std::move(w2);
  return tr;
}

CoupledTrace run_coupled(const LossSpec& loss, const Schedule& sched, const Dataset& s,
                         const Dataset& s_prime, const RandomPath& path,
                         std::span<const double> w0) {
  const Vector etas = sched.materialize(path.length());
  return run_coupled(loss, etas, s, s_prime, path, w0);
}

AuditReport& AuditReport::operator+=(const AuditReport& o) {
  if (checks == 0 || o.worst_excess > worst_excess) worst_excess = o.worst_excess;
  checks += o.checks;
  violations += o.violations;
  return *this;
}

namespace {

void record(AuditReport& rep, double lhs, double rhs) {
  const double excess = lhs - rhs;
  if (rep.checks == 0 || excess > rep.worst_excess) rep.worst_excess = excess;
  ++rep.checks;
  if (excess > kAuditTolerance) ++rep.violations;
}

}  // namespace

AuditReport audit_smooth_convex(const CoupledTrace& tr, double G) {
  AuditReport rep;
  for (std::size_t t = 1; t <= tr.steps(); ++t) {
    const double rhs = tr.distance[t - 1] + (tr.differs[t] ? 2.0 * G * tr.etas[t - 1] : 0.0);
    record(rep, tr.distance[t], rhs);
  }
  return rep;
}

AuditReport audit_nonsmooth_trajectory(const CoupledTrace& tr, double G) {
  AuditReport rep;
  const std::size_t t0 = tr.first_difference.value_or(tr.steps() + 1);
  double sum_sq = 0.0;
  double sum_hits = 0.0;
  for (std::size_t t = 1; t <= tr.steps(); ++t) {
    if (t < t0) {
      record(rep, tr.distance[t], 0.0);
      continue;
    }
    const double eta = tr.etas[t - 1];
    sum_sq += eta * eta;
    if (t > t0 && tr.differs[t]) sum_hits += eta;
    record(rep, tr.distance[t], 2.0 * G * std::sqrt(sum_sq) + 4.0 * G * sum_hits);
  }
  return rep;
}

AuditReport audit_smooth_nonconvex(const CoupledTrace& tr, double G, double L) {
  AuditReport rep;
  for (std::size_t t = 1; t <= tr.steps(); ++t) {
    const double eta = tr.etas[t - 1];
    const double rhs = tr.differs[t] ? tr.distance[t - 1] + 2.0 * G * eta
                                     : (1.0 + eta * L) * tr.distance[t - 1];
    record(rep, tr.distance[t], rhs);
  }
  return rep;
}

}  // namespace stabilab
