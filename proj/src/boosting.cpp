#include "stabilab/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "stabilab/parallel.hpp"
#include "stabilab/rng.hpp"

namespace stabilab {
namespace {

constexpr double kAlgebraSlack = 1e-12;

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(std::span<const double> v) {
  MeanSe r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() < 2) return r;
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return r;
}

// Nearest-rank quantile of a sorted sample.
double quantile_sorted(std::span<const double> sorted, double q) {
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(q * n));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

void validate_learner(const Learner& learner, std::size_t n) {
  learner.loss.validate();
  learner.schedule.validate();
  if (learner.T == 0) throw std::invalid_argument("subbagging: T must be >= 1");
  if (learner.sampler == SamplerMode::kWithoutReplacement && learner.T > n) {
    throw std::invalid_argument("subbagging: without-replacement sampling is single-epoch, need T = " +
                                std::to_string(learner.T) + " <= N/K = " + std::to_string(n));
  }
  check_schedule_cap(learner.loss, learner.schedule.materialize(learner.T));
}

Vector train(const Learner& learner, std::span<const double> etas, const Dataset& s,
             std::uint64_t path_seed) {
  const RandomPath path = draw_path(learner.sampler, s.size(), learner.T, path_seed);
  const Vector w0(s.dim, 0.0);
  return run_sgd(learner.loss, etas, s, path, w0).w_bar;
}

}  // namespace

std::string to_string(SelectionRule r) { return r == SelectionRule::kGap ? "gap" : "risk"; }

SelectionRule selection_rule_from_string(const std::string& s) {
  if (s == "gap") return SelectionRule::kGap;
  if (s == "risk") return SelectionRule::kRisk;
  throw std::invalid_argument("unknown selection rule '" + s + "' (expected gap|risk)");
}

std::size_t select_candidate(std::span<const Candidate> candidates, SelectionRule rule) {
  if (candidates.empty()) throw std::invalid_argument("select_candidate: no candidates");
  auto key = [rule](const Candidate& c) { return rule == SelectionRule::kGap ? c.gap : c.validation_risk; };
  std::size_t best = 0;
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    if (key(candidates[k]) < key(candidates[best])) best = k;
  }
  return best;
}

SubbagResult run_subbagging(const Learner& learner, const Dataset& s, std::size_t K,
                            SelectionRule rule, std::uint64_t base_seed, std::size_t parallel) {
  if (K > s.size()) {
    throw std::invalid_argument("subbagging: K = " + std::to_string(K) + " exceeds N = " +
                                std::to_string(s.size()));
  }
  if (K < 2) {
    throw std::invalid_argument("subbagging: K must be >= 2 so every validation set S \\ S_k is non-empty");
  }
  const Partition part(s, K);
  validate_learner(learner, part.block_size());
  const Vector etas = learner.schedule.materialize(learner.T);

  SubbagResult result;
  result.K = K;
  result.rule = rule;
  result.candidates.resize(K);
  parallel_for(K, parallel, [&](std::size_t k) {
    Candidate& c = result.candidates[k];
    c.path_seed = base_seed + k;
    c.w_bar = train(learner, etas, part.block(k), c.path_seed);
    c.train_risk = empirical_risk(learner.loss, c.w_bar, part.block(k));
    c.validation_risk = empirical_risk(learner.loss, c.w_bar, part.complement(k));
    c.gap = std::abs(c.validation_risk - c.train_risk);
    c.full_risk = empirical_risk(learner.loss, c.w_bar, s);
  });
  result.selected = select_candidate(result.candidates, rule);
  return result;
}

double mixture_identity_error(const SubbagResult& result) {
  const auto K = static_cast<double>(result.K);
  double worst = 0.0;
  for (const auto& c : result.candidates) {
    const double mix = c.train_risk / K + (K - 1.0) / K * c.validation_risk;
    worst = std::max(worst, std::abs(c.full_risk - mix));
  }
  return worst;
}

GapDecompositionCheck gap_decomposition_check(const SubbagResult& result,
                                              std::span<const double> pop_risks) {
  if (result.rule != SelectionRule::kGap) {
    throw std::invalid_argument("gap_decomposition_check: needs a gap-rule result");
  }
  if (pop_risks.size() != result.candidates.size()) {
    throw std::invalid_argument("gap_decomposition_check: need one population risk per candidate");
  }
  const auto K = static_cast<double>(result.K);
  double min_gap = std::numeric_limits<double>::infinity();
  double min_train_dev = std::numeric_limits<double>::infinity();
  double max_dev = 0.0;
  for (std::size_t k = 0; k < result.candidates.size(); ++k) {
    const Candidate& c = result.candidates[k];
    min_gap = std::min(min_gap, c.gap);
    min_train_dev = std::min(min_train_dev, std::abs(pop_risks[k] - c.train_risk));
    max_dev = std::max(max_dev, std::abs(pop_risks[k] - c.validation_risk));
  }
  const Candidate& sel = result.chosen();
  const double r_sel = pop_risks[result.selected];

  GapDecompositionCheck out;
  out.lhs = std::abs(r_sel - sel.full_risk);
  out.intermediate = sel.gap / K + std::abs(r_sel - sel.validation_risk);
  out.rhs = min_gap / K + (K + 1.0) / K * max_dev;
  out.rhs_final = min_train_dev / K + (K + 1.0) / K * max_dev;
  out.slack = out.rhs - out.lhs;
  out.slack_final = out.rhs_final - out.lhs;
  out.holds = out.lhs <= out.intermediate + kAlgebraSlack &&
              out.intermediate <= out.rhs + kAlgebraSlack && out.slack >= -kAlgebraSlack &&
              out.slack_final >= -kAlgebraSlack;
  return out;
}

MinimizeResult minimize_empirical_risk(const LossSpec& loss, const Dataset& s, std::size_t max_iter,
                                       double grad_tol) {
  if (s.size() == 0) throw std::invalid_argument("minimize_empirical_risk: empty dataset");
  const std::size_t d = s.dim;
  const bool smooth = loss.smooth() && loss.smoothness() > 0.0;
  const double n = static_cast<double>(s.size());

  Vector w(d, 0.0), grad(d), g(d), next(d);
  auto full_grad = [&](const Vector& at) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double value = 0.0;
    for (const auto& z : s.points) {
      value += loss_value(loss, at, z);
      loss_grad(loss, at, z, g);
      for (std::size_t j = 0; j < d; ++j) grad[j] += g[j];
    }
    for (double& v : grad) v /= n;
    return value / n;
  };

  MinimizeResult best;
  best.w = w;
  best.value = std::numeric_limits<double>::infinity();
  best.grad_norm = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it <= max_iter; ++it) {
    const double value = full_grad(w);
    const double step = smooth ? 1.0 / loss.smoothness()
                               : loss.D / (loss.G * std::sqrt(static_cast<double>(it + 1)));
    for (std::size_t j = 0; j < d; ++j) next[j] = w[j] - step * grad[j];
    project_inplace(loss, next);
    // Gradient-mapping norm: zero exactly at a constrained stationary point.
    const double mapped = distance(w, next) / step;
    if (value < best.value) {
      best.w = w;
      best.value = value;
      best.grad_norm = mapped;
    }
    best.iterations = it;
    if (mapped <= grad_tol || it == max_iter) break;
    w.swap(next);
  }
  return best;
}

MarkovReport markov_boost_experiment(const Learner& learner, const DistributionSpec& distro,
                                     std::size_t N, const MarkovOptions& opts) {
  if (opts.runs < 100) throw std::invalid_argument("markov experiment: runs must be >= 100");
  if (opts.mu_runs < 2) throw std::invalid_argument("markov experiment: mu_runs must be >= 2");
  if (!(opts.alpha > 0.0 && opts.alpha < 1.0)) {
    throw std::invalid_argument("markov experiment: alpha must lie in (0, 1)");
  }
  distro.validate();
  for (std::size_t K : opts.Ks) {
    if (K == 0 || N % K != 0) {
      throw std::invalid_argument("markov experiment: N = " + std::to_string(N) +
                                  " must be a multiple of K = " + std::to_string(K));
    }
    validate_learner(learner, N / K);
  }
  const Vector etas = learner.schedule.materialize(learner.T);

  MarkovReport report;
  report.alpha = opts.alpha;
  report.N = N;
  for (std::size_t K : opts.Ks) {
    const std::size_t n = N / K;
    const std::uint64_t kseed = derive_seed(opts.seed, "markov/K", K);
    MarkovRow row;
    row.K = K;
    row.subset_size = n;
    row.runs = opts.runs;
    row.alpha_pow_K = std::pow(opts.alpha, static_cast<double>(K));

    std::vector<double> mu_samples(opts.mu_runs);
    parallel_for(opts.mu_runs, opts.parallel, [&](std::size_t r) {
      const Dataset s = sample_dataset(distro, n, derive_seed(kseed, "mu/dataset", r));
      const Vector w = train(learner, etas, s, derive_seed(kseed, "mu/path", r));
      const double pop = estimate_population_risk(learner.loss, w, distro, opts.m_pop,
                                                  derive_seed(kseed, "mu/population", r))
                             .value;
      mu_samples[r] = std::abs(pop - empirical_risk(learner.loss, w, s));
    });
    const MeanSe mu = mean_se(mu_samples);
    row.mu = mu.mean;
    row.mu_se = mu.se;
    row.threshold = mu.mean / opts.alpha;

    row.min_gaps.resize(opts.runs);
    row.selected_gaps.resize(opts.runs);
    row.selected_pop_gaps.resize(opts.runs);
    std::vector<char> exceeded(opts.runs, 0), identical(opts.runs, 0);
    parallel_for(opts.runs, opts.parallel, [&](std::size_t r) {
      const Dataset s = sample_dataset(distro, N, derive_seed(kseed, "run/dataset", r));
      const std::uint64_t base = derive_seed(kseed, "run/paths", r);
      std::vector<Vector> models;
      std::vector<double> train_risks;
      std::size_t selected = 0;
      double selected_full = 0.0;
      double selected_gap = 0.0;
      if (K == 1) {
        models.push_back(train(learner, etas, s, base));
        train_risks.push_back(empirical_risk(learner.loss, models[0], s));
        selected_full = train_risks[0];
      } else {
        const SubbagResult res = run_subbagging(learner, s, K, SelectionRule::kGap, base);
        for (const auto& c : res.candidates) {
          models.push_back(c.w_bar);
          train_risks.push_back(c.train_risk);
        }
        selected = res.selected;
        selected_full = res.selected_full_risk();
        selected_gap = res.chosen().gap;
      }
      const auto pops = estimate_population_risks(learner.loss, models, distro, opts.m_pop,
                                                  derive_seed(kseed, "run/population", r));
      double min_gap = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < models.size(); ++k) {
        min_gap = std::min(min_gap, std::abs(pops[k].value - train_risks[k]));
      }
      row.min_gaps[r] = min_gap;
      row.selected_gaps[r] = selected_gap;
      row.selected_pop_gaps[r] = std::abs(pops[selected].value - selected_full);
      exceeded[r] = min_gap >= row.threshold ? 1 : 0;
      identical[r] = K > 1 && std::all_of(models.begin(), models.end(),
                                          [&](const Vector& m) { return m == models[0]; });
    });
    for (std::size_t r = 0; r < opts.runs; ++r) {
      row.exceedances += exceeded[r];
      row.identical_candidate_runs += identical[r];
    }
    row.frequency = static_cast<double>(row.exceedances) / static_cast<double>(opts.runs);
    row.binomial_se = std::sqrt(row.alpha_pow_K * (1.0 - row.alpha_pow_K) / static_cast<double>(opts.runs));
    row.independence_caveat = row.identical_candidate_runs > 0;
    report.rows.push_back(std::move(row));
  }
  return report;
}

ExcessRiskReport excess_risk_experiment(const Learner& learner, const DistributionSpec& distro,
                                        std::size_t N, const ExcessRiskOptions& opts) {
  if (opts.runs < 100) throw std::invalid_argument("excess-risk experiment: runs must be >= 100");
  if (opts.K < 2 || N % opts.K != 0) {
    throw std::invalid_argument("excess-risk experiment: need K >= 2 dividing N = " + std::to_string(N));
  }
  if (opts.wstar_sample_factor == 0) {
    throw std::invalid_argument("excess-risk experiment: wstar_sample_factor must be >= 1");
  }
  distro.validate();
  const std::size_t n = N / opts.K;
  validate_learner(learner, n);

  ExcessRiskReport rep;
  rep.N = N;
  rep.K = opts.K;

  // w*: long descent on an independent large sample. In the noiseless
  // realizable regression model the teacher is an exact minimizer, so it is
  // kept whenever it scores at least as well.
  const Dataset big = sample_dataset(distro, opts.wstar_sample_factor * N,
                                     derive_seed(opts.seed, "excess/wstar-sample", 0));
  const MinimizeResult approx =
      minimize_empirical_risk(learner.loss, big, opts.wstar_max_iter, opts.wstar_grad_tol);
  Vector wstar = approx.w;
  rep.wstar_train_value = approx.value;
  rep.wstar_grad_norm = approx.grad_norm;
  rep.wstar_iterations = approx.iterations;
  const bool teacher_feasible = distro.family != Family::kPointMass &&
                                distro.w_true.size() == distro.dim &&
                                norm2(distro.w_true) <= learner.loss.D * (1.0 + 1e-12);
  if (teacher_feasible) {
    const double teacher = empirical_risk(learner.loss, distro.w_true, big);
    if (teacher <= approx.value) {
      wstar = distro.w_true;
      rep.wstar_train_value = teacher;
      rep.wstar_is_teacher = true;
    }
  }
  rep.risk_wstar = estimate_population_risk(learner.loss, wstar, distro, opts.m_pop,
                                            derive_seed(opts.seed, "excess/wstar-population", 0))
                       .value;

  const std::size_t T_full = learner.schedule.kind == Schedule::Kind::kExplicit ? learner.T
                                                                                : learner.T * opts.K;
  const Vector etas_full = learner.schedule.materialize(T_full);
  check_schedule_cap(learner.loss, etas_full);

  rep.excess.resize(opts.runs);
  std::vector<double> delta_sub(opts.runs), delta_full(opts.runs);
  std::vector<char> mismatch(opts.runs, 0);
  auto suboptimality = [&](const Vector& w, const Dataset& s) {
    const double at_w = empirical_risk(learner.loss, w, s);
    double floor = std::min(at_w, empirical_risk(learner.loss, wstar, s));
    floor = std::min(floor, minimize_empirical_risk(learner.loss, s, opts.erm_max_iter, 0.0).value);
    return at_w - floor;
  };
  parallel_for(opts.runs, opts.parallel, [&](std::size_t r) {
    const Dataset s = sample_dataset(distro, N, derive_seed(opts.seed, "excess/dataset", r));
    const SubbagResult res = run_subbagging(learner, s, opts.K, SelectionRule::kRisk,
                                            derive_seed(opts.seed, "excess/paths", r));
    std::size_t recomputed = 0;
    for (std::size_t k = 1; k < res.candidates.size(); ++k) {
      if (res.candidates[k].validation_risk < res.candidates[recomputed].validation_risk) recomputed = k;
    }
    mismatch[r] = recomputed != res.selected;

    const std::vector<Vector> models{res.chosen().w_bar, wstar};
    const auto pops = estimate_population_risks(learner.loss, models, distro, opts.m_pop,
                                                derive_seed(opts.seed, "excess/population", r));
    rep.excess[r] = pops[0].value - pops[1].value;

    const Partition part(s, opts.K);
    double sub = 0.0;
    for (std::size_t k = 0; k < opts.K; ++k) sub += suboptimality(res.candidates[k].w_bar, part.block(k));
    delta_sub[r] = sub / static_cast<double>(opts.K);

    const RandomPath path = draw_path(learner.sampler, N, T_full, derive_seed(opts.seed, "excess/full-path", r));
    const Vector w0(distro.dim, 0.0);
    const Vector w_full = run_sgd(learner.loss, etas_full, s, path, w0).w_bar;
    delta_full[r] = suboptimality(w_full, s);
  });
  for (char m : mismatch) rep.rule_mismatches += static_cast<std::size_t>(m);

  const MeanSe ex = mean_se(rep.excess);
  rep.mean_excess = ex.mean;
  rep.excess_se = ex.se;
  std::vector<double> sorted = rep.excess;
  std::sort(sorted.begin(), sorted.end());
  rep.q50 = quantile_sorted(sorted, 0.5);
  rep.q90 = quantile_sorted(sorted, 0.9);
  rep.q99 = quantile_sorted(sorted, 0.99);
  const MeanSe ds = mean_se(delta_sub);
  rep.delta_opt = ds.mean;
  rep.delta_opt_se = ds.se;
  const MeanSe df = mean_se(delta_full);
  rep.delta_opt_full = df.mean;
  rep.delta_opt_full_se = df.se;

  SgdProblem sub_problem{learner.loss, learner.schedule, distro, n, learner.T, learner.sampler};
  StabilityOptions sopts;
  sopts.trials = opts.stability_trials;
  sopts.seed = derive_seed(opts.seed, "excess/stability", 0);
  sopts.parallel = opts.parallel;
  rep.gamma = estimate_l2_stability(sub_problem, sopts);

  rep.bound = rep.gamma.ci95_upper + rep.delta_opt;
  rep.tolerance = 3.0 * std::sqrt(rep.excess_se * rep.excess_se + rep.delta_opt_se * rep.delta_opt_se);
  rep.dominated = rep.mean_excess <= rep.bound + rep.tolerance;
  return rep;
}

}  // namespace stabilab
