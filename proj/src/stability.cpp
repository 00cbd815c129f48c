#include "stabilab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stabilab/parallel.hpp"
#include "stabilab/rng.hpp"

namespace stabilab {
namespace {

constexpr double kZ975 = 1.959963984540054;

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample standard deviation (n - 1 denominator) around a known mean.
double sample_sd(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

void require_nonnegative_steps(std::span<const double> etas) {
  for (double e : etas) {
    if (!(e >= 0.0) || !std::isfinite(e)) throw std::invalid_argument("bound: steps must be finite and >= 0");
  }
}

void require_single_epoch(std::size_t N, std::size_t T) {
  if (T > N) {
    throw std::invalid_argument("bound: without-replacement bounds are single-epoch, need T = " +
                                std::to_string(T) + " <= N = " + std::to_string(N));
  }
}

BoundReport base_report(Regime regime, SamplerMode sampler, double G, std::size_t N,
                        std::span<const double> etas) {
  if (N == 0) throw std::invalid_argument("bound: N must be >= 1");
  require_nonnegative_steps(etas);
  BoundReport r;
  r.regime = regime;
  r.sampler = sampler;
  r.G = G;
  r.N = N;
  r.T = etas.size();
  for (double e : etas) {
    r.sum_eta += e;
    r.sum_eta_sq += e * e;
  }
  return r;
}

// suffix[t] = sum_{tau > t} eta_tau for 1-based t = 1..T (suffix[T] = 0).
Vector suffix_sums(std::span<const double> etas) {
  const std::size_t T = etas.size();
  Vector suffix(T + 1, 0.0);
  for (std::size_t t = T; t-- > 1;) suffix[t] = suffix[t + 1] + etas[t];
  return suffix;
}

}  // namespace

void SgdProblem::validate() const {
  loss.validate();
  distro.validate();
  if (N == 0) throw std::invalid_argument("N must be >= 1");
  if (T == 0) throw std::invalid_argument("T must be >= 1");
  if (sampler == SamplerMode::kWithoutReplacement && T > N) {
    throw std::invalid_argument("without-replacement sampling is single-epoch: need T = " +
                                std::to_string(T) + " <= N = " + std::to_string(N));
  }
  if (distro.family != Family::kPointMass && norm2(distro.w_true) > loss.D * (1.0 + 1e-12)) {
    throw std::invalid_argument("distro.w_true must lie in the ball of radius D");
  }
  check_schedule_cap(loss, etas());
}

double empirical_risk(const LossSpec& loss, std::span<const double> w, const Dataset& subset) {
  if (subset.size() == 0) throw std::invalid_argument("empirical_risk: empty subset");
  double s = 0.0;
  for (const auto& z : subset.points) s += loss_value(loss, w, z);
  return s / static_cast<double>(subset.size());
}

RiskEstimate estimate_population_risk(const LossSpec& loss, std::span<const double> w,
                                      const DistributionSpec& distro, std::size_t m_pop,
                                      std::uint64_t seed) {
  const Vector model(w.begin(), w.end());
  return estimate_population_risks(loss, std::span<const Vector>(&model, 1), distro, m_pop, seed)[0];
}

std::vector<RiskEstimate> estimate_population_risks(const LossSpec& loss,
                                                    std::span<const Vector> models,
                                                    const DistributionSpec& distro,
                                                    std::size_t m_pop, std::uint64_t seed) {
  if (m_pop < 2) throw std::invalid_argument("population risk: m_pop must be >= 2");
  const PointSampler sampler(distro);
  Rng rng(seed);
  const std::size_t k = models.size();
  std::vector<double> sum(k, 0.0), sum_sq(k, 0.0);
  DataPoint z;
  for (std::size_t m = 0; m < m_pop; ++m) {
    sampler.draw(rng, z);
    for (std::size_t j = 0; j < k; ++j) {
      const double v = loss_value(loss, models[j], z);
      sum[j] += v;
      sum_sq[j] += v * v;
    }
  }
  const double n = static_cast<double>(m_pop);
  std::vector<RiskEstimate> out(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double mean = sum[j] / n;
    const double var = std::max(0.0, (sum_sq[j] - n * mean * mean) / (n - 1.0));
    out[j] = {mean, std::sqrt(var / n), m_pop};
  }
  return out;
}

StabilityEstimate summarize_deltas(std::vector<double> deltas) {
  if (deltas.size() < 2) throw std::invalid_argument("stability: trials must be >= 2");
  StabilityEstimate est;
  est.trials = deltas.size();
  std::vector<double> sq(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i) sq[i] = deltas[i] * deltas[i];
  est.mean_sq = mean_of(sq);
  est.mean_sq_se = sample_sd(sq, est.mean_sq) / std::sqrt(static_cast<double>(sq.size()));
  est.gamma_hat = std::sqrt(est.mean_sq);
  est.ci95_upper = std::sqrt(est.mean_sq + kZ975 * est.mean_sq_se);
  est.deltas = std::move(deltas);
  return est;
}

StabilityEstimate estimate_l2_stability(const SgdProblem& problem, const StabilityOptions& opts) {
  if (opts.trials < 2) throw std::invalid_argument("stability: trials must be >= 2");
  problem.validate();
  if (opts.index_mode == IndexMode::kFixed && opts.fixed_index >= problem.N) {
    throw std::invalid_argument("stability: fixed index out of range");
  }
  const Vector etas = problem.etas();
  const PointSampler sampler(problem.distro);
  const Vector w0(problem.distro.dim, 0.0);

  std::vector<double> deltas(opts.trials);
  parallel_for(opts.trials, opts.parallel, [&](std::size_t trial) {
    const Dataset s = sample_dataset(problem.distro, problem.N,
                                     derive_seed(opts.seed, "stability/dataset", trial));
    std::size_t i = opts.fixed_index;
    if (opts.index_mode == IndexMode::kUniform) {
      Rng irng(derive_seed(opts.seed, "stability/index", trial));
      i = static_cast<std::size_t>(irng.index(problem.N));
    }
    const Dataset s_i = make_neighbor(s, i, problem.distro,
                                      derive_seed(opts.seed, "stability/neighbor", trial));
    Rng zrng(derive_seed(opts.seed, "stability/eval", trial));
    const DataPoint z = sampler.draw(zrng);
    const RandomPath path = draw_path(problem.sampler, problem.N, problem.T,
                                      derive_seed(opts.seed, "stability/path", trial));
    const CoupledTrace tr = run_coupled(problem.loss, etas, s, s_i, path, w0);
    deltas[trial] = loss_value(problem.loss, tr.first.w_bar, z) -
                    loss_value(problem.loss, tr.second.w_bar, z);
  });

  StabilityEstimate est = summarize_deltas(std::move(deltas));
  est.loss = problem.loss.kind;
  est.sampler = problem.sampler;
  est.N = problem.N;
  est.T = problem.T;
  est.schedule = problem.schedule.describe();
  return est;
}

std::string to_string(BoundVariant v) { return v == BoundVariant::kAppendix ? "appendix" : "maintext"; }

BoundVariant bound_variant_from_string(const std::string& s) {
  if (s == "appendix") return BoundVariant::kAppendix;
  if (s == "maintext") return BoundVariant::kMainText;
  throw std::invalid_argument("unknown bound variant '" + s + "' (expected appendix|maintext)");
}

BoundReport bound_sgdw_smooth_convex(double G, std::size_t N, std::span<const double> etas) {
  BoundReport r = base_report(Regime::kSmoothConvex, SamplerMode::kWithReplacement, G, N, etas);
  const double n = static_cast<double>(N);
  r.gamma = G * G * std::sqrt(40.0 / n * (r.sum_eta_sq + r.sum_eta * r.sum_eta / n));
  return r;
}

BoundReport bound_sgdw_nonsmooth_convex(double G, std::size_t N, std::span<const double> etas) {
  BoundReport r = base_report(Regime::kNonsmoothConvex, SamplerMode::kWithReplacement, G, N, etas);
  const double n = static_cast<double>(N);
  r.gamma = G * G * std::sqrt(40.0 * r.sum_eta_sq + 32.0 / (n * n) * r.sum_eta * r.sum_eta);
  return r;
}

BoundReport bound_sgdw_smooth_nonconvex(double G, double L, std::size_t N,
                                        std::span<const double> etas, BoundVariant variant) {
  BoundReport r = base_report(Regime::kSmoothNonconvex, SamplerMode::kWithReplacement, G, N, etas);
  for (std::size_t t = 0; t < etas.size(); ++t) {
    if (etas[t] > (1.0 / L) * (1.0 + 1e-12)) {
      throw std::invalid_argument("bound: eta_" + std::to_string(t + 1) + " exceeds the 1/L cap");
    }
  }
  r.L = L;
  r.variant = variant;
  r.exponent_multiplier = variant == BoundVariant::kAppendix ? 3.0 : 1.0;
  const std::size_t T = etas.size();
  // acc_t = sum_{tau<t} exp(L sum_{i=tau+1}^{t-1} eta_i) eta_tau obeys
  // acc_{t+1} = exp(L eta_t) acc_t + eta_t with acc_1 = 0.
  r.u.resize(T);
  double acc = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    const double eta = etas[t - 1];
    r.u[t - 1] = eta * eta + 2.0 * eta * acc;
    acc = std::exp(L * eta) * acc + eta;
  }
  const Vector suffix = suffix_sums(etas);
  double total = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    total += std::exp(r.exponent_multiplier * L * suffix[t]) * r.u[t - 1];
  }
  r.gamma = 2.0 * G * G * std::sqrt(total / static_cast<double>(N));
  return r;
}

BoundReport bound_sgdwo_smooth_convex(double G, std::size_t N, std::span<const double> etas) {
  require_single_epoch(N, etas.size());
  BoundReport r = base_report(Regime::kSmoothConvex, SamplerMode::kWithoutReplacement, G, N, etas);
  r.gamma = 2.0 * G * G * std::sqrt(r.sum_eta_sq / static_cast<double>(N));
  return r;
}

BoundReport bound_sgdwo_nonsmooth_convex(double G, std::size_t N, std::span<const double> etas) {
  require_single_epoch(N, etas.size());
  BoundReport r = base_report(Regime::kNonsmoothConvex, SamplerMode::kWithoutReplacement, G, N, etas);
  // sum_{t0=1}^{T} sum_{t=t0}^{T} eta_t^2 = sum_t t eta_t^2
  double weighted = 0.0;
  for (std::size_t t = 1; t <= etas.size(); ++t) {
    weighted += static_cast<double>(t) * etas[t - 1] * etas[t - 1];
  }
  r.gamma = 2.0 * G * G * std::sqrt(weighted / static_cast<double>(N));
  return r;
}

BoundReport bound_sgdwo_smooth_nonconvex(double G, double L, std::size_t N,
                                         std::span<const double> etas, BoundVariant variant) {
  require_single_epoch(N, etas.size());
  BoundReport r = base_report(Regime::kSmoothNonconvex, SamplerMode::kWithoutReplacement, G, N, etas);
  r.L = L;
  r.variant = variant;
  r.exponent_multiplier = variant == BoundVariant::kAppendix ? 2.0 : 1.0;
  const Vector suffix = suffix_sums(etas);
  double total = 0.0;
  for (std::size_t t = 1; t <= etas.size(); ++t) {
    total += std::exp(r.exponent_multiplier * L * suffix[t]) * etas[t - 1] * etas[t - 1];
  }
  r.gamma = 2.0 * G * G * std::sqrt(total / static_cast<double>(N));
  return r;
}

BoundReport theoretical_bound(const LossSpec& loss, SamplerMode sampler, std::size_t N,
                              std::span<const double> etas, BoundVariant variant) {
  const bool with = sampler == SamplerMode::kWithReplacement;
  switch (loss.regime()) {
    case Regime::kSmoothConvex:
      return with ? bound_sgdw_smooth_convex(loss.G, N, etas) : bound_sgdwo_smooth_convex(loss.G, N, etas);
    case Regime::kNonsmoothConvex:
      return with ? bound_sgdw_nonsmooth_convex(loss.G, N, etas)
                  : bound_sgdwo_nonsmooth_convex(loss.G, N, etas);
    case Regime::kSmoothNonconvex:
      return with ? bound_sgdw_smooth_nonconvex(loss.G, loss.smoothness(), N, etas, variant)
                  : bound_sgdwo_smooth_nonconvex(loss.G, loss.smoothness(), N, etas, variant);
  }
  throw std::logic_error("unreachable");
}

double first_moment_bound(double gamma, double M, std::size_t N) {
  if (N == 0) throw std::invalid_argument("first_moment_bound: N must be >= 1");
  return 3.0 * gamma + 2.0 * M / std::sqrt(static_cast<double>(N));
}

RiskEstimate estimate_first_moment_gap(const SgdProblem& problem, const GapOptions& opts) {
  if (opts.trials < 2) throw std::invalid_argument("first-moment gap: trials must be >= 2");
  problem.validate();
  const Vector etas = problem.etas();
  const Vector w0(problem.distro.dim, 0.0);
  std::vector<double> gaps(opts.trials);
  parallel_for(opts.trials, opts.parallel, [&](std::size_t trial) {
    const Dataset s = sample_dataset(problem.distro, problem.N, derive_seed(opts.seed, "gap/dataset", trial));
    const RandomPath path = draw_path(problem.sampler, problem.N, problem.T,
                                      derive_seed(opts.seed, "gap/path", trial));
    const SgdOutput out = run_sgd(problem.loss, etas, s, path, w0);
    const double train = empirical_risk(problem.loss, out.w_bar, s);
    const RiskEstimate pop = estimate_population_risk(problem.loss, out.w_bar, problem.distro, opts.m_pop,
                                                      derive_seed(opts.seed, "gap/population", trial));
    gaps[trial] = std::abs(pop.value - train);
  });
  const double mean = mean_of(gaps);
  return {mean, sample_sd(gaps, mean) / std::sqrt(static_cast<double>(gaps.size())), gaps.size()};
}

}  // namespace stabilab
