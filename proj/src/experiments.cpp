#include "stabilab/experiments.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>

#include "stabilab/boosting.hpp"
#include "stabilab/commands.hpp"
#include "stabilab/csv.hpp"
#include "stabilab/parallel.hpp"
#include "stabilab/rng.hpp"
#include "stabilab/stability.hpp"

namespace stabilab {
namespace {

constexpr std::array<LossKind, 4> kAllLosses{LossKind::kLogistic, LossKind::kHinge, LossKind::kAbsolute,
                                             LossKind::kNormalizedSigmoid};
constexpr std::array<SamplerMode, 2> kSamplers{SamplerMode::kWithReplacement,
                                               SamplerMode::kWithoutReplacement};
// One representative loss per analysis regime.
constexpr std::array<LossKind, 3> kRegimeLosses{LossKind::kLogistic, LossKind::kHinge,
                                                LossKind::kNormalizedSigmoid};

std::uint64_t criterion_seed(const AcceptanceSettings& s, int id) {
  return derive_seed(s.seed, "acceptance/criterion", static_cast<std::uint64_t>(id));
}

std::string tag(LossKind k, SamplerMode m) { return to_string(k) + "/" + to_string(m); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

DistributionSpec acceptance_classification() {
  DistributionSpec d;
  d.family = Family::kGaussianClassification;
  d.dim = kAcceptanceDim;
  d.w_true = Vector(kAcceptanceDim, 1.0 / std::sqrt(static_cast<double>(kAcceptanceDim)));
  d.sigma_y = 0.1;
  d.bx = 1.0;
  d.by = 1.0;
  return d;
}

DistributionSpec acceptance_regression(double sigma_y) {
  DistributionSpec d = acceptance_classification();
  d.family = Family::kGaussianRegression;
  d.w_true = Vector{0.6, -0.48, 0.36, 0.0, 0.0};
  d.sigma_y = sigma_y;
  return d;
}

LossSpec acceptance_loss(LossKind kind) { return LossSpec::derive(kind, 1.0, 1.0, 1.0); }

DistributionSpec acceptance_distro_for(LossKind kind) {
  return kind == LossKind::kAbsolute ? acceptance_regression(0.1) : acceptance_classification();
}

Schedule conforming_schedule(const LossSpec& loss) {
  switch (loss.regime()) {
    case Regime::kSmoothConvex: return Schedule::inverse_sqrt(2.0 / loss.smoothness());
    case Regime::kNonsmoothConvex: return Schedule::horizon(1.0, 0.5);
    case Regime::kSmoothNonconvex: return Schedule::horizon(1.0 / loss.smoothness(), 1.0);
  }
  throw std::logic_error("unreachable");
}

CriterionResult criterion_coupling_identity(const AcceptanceSettings& s) {
  CriterionResult r;
  r.id = 1;
  r.title = "coupling identity";
  const std::uint64_t seed = criterion_seed(s, 1);
  constexpr std::size_t kRuns = 500, N = 32, T = 32;
  bool ok = true;
  double worst_distance = 0.0;
  std::size_t runs = 0;
  for (LossKind kind : kAllLosses) {
    const LossSpec loss = acceptance_loss(kind);
    const DistributionSpec distro = acceptance_distro_for(kind);
    const Vector etas = conforming_schedule(loss).materialize(T);
    const PointSampler sampler(distro);
    for (SamplerMode mode : kSamplers) {
      const std::string t = tag(kind, mode);
      std::vector<double> deltas(kRuns), dmax(kRuns);
      std::vector<char> hit(kRuns, 0);
      parallel_for(kRuns, s.parallel, [&](std::size_t i) {
        const Dataset ds = sample_dataset(distro, N, derive_seed(seed, t + "/dataset", i));
        const RandomPath path = draw_path(mode, N, T, derive_seed(seed, t + "/path", i));
        const Vector w0(distro.dim, 0.0);
        const CoupledTrace tr = run_coupled(loss, etas, ds, ds, path, w0);
        dmax[i] = *std::max_element(tr.distance.begin(), tr.distance.end());
        hit[i] = tr.first_difference.has_value();
        Rng zr(derive_seed(seed, t + "/eval", i));
        const DataPoint z = sampler.draw(zr);
        deltas[i] = loss_value(loss, tr.first.w_bar, z) - loss_value(loss, tr.second.w_bar, z);
      });
      const StabilityEstimate est = summarize_deltas(deltas);
      const double worst = *std::max_element(dmax.begin(), dmax.end());
      const bool any_hit = std::any_of(hit.begin(), hit.end(), [](char c) { return c != 0; });
      worst_distance = std::max(worst_distance, worst);
      ok = ok && worst == 0.0 && est.gamma_hat == 0.0 && !any_hit;
      r.add(t + "/max_distance", worst);
      r.add(t + "/gamma_hat", est.gamma_hat);
      runs += kRuns;

      // Same identity through the estimator: under a point mass every
      // neighbor coincides with the original sample.
      DistributionSpec atom = acceptance_classification();
      atom.family = Family::kPointMass;
      SgdProblem problem{loss, conforming_schedule(loss), atom, N, T, mode};
      StabilityOptions opts;
      opts.index_mode = IndexMode::kUniform;
      opts.trials = 100;
      opts.seed = derive_seed(seed, t + "/point-mass", 0);
      opts.parallel = s.parallel;
      const StabilityEstimate pm = estimate_l2_stability(problem, opts);
      ok = ok && pm.gamma_hat == 0.0;
      r.add(t + "/point_mass_gamma_hat", pm.gamma_hat);
    }
  }
  r.passed = ok;
  r.summary = std::to_string(runs) + " coupled runs with S' = S, max d_t = " + fmt(worst_distance);
  return r;
}

CriterionResult criterion_non_expansiveness(const AcceptanceSettings& s) {
  CriterionResult r;
  r.id = 2;
  r.title = "non-expansiveness";
  const LossSpec loss = acceptance_loss(LossKind::kLogistic);
  const DistributionSpec distro = acceptance_classification();
  const PointSampler sampler(distro);
  const double cap = 2.0 / loss.smoothness();
  constexpr std::size_t kChecks = 10000;
  std::vector<double> excess(kChecks);
  const std::uint64_t seed = criterion_seed(s, 2);
  parallel_for(kChecks, s.parallel, [&](std::size_t i) {
    Rng rng(derive_seed(seed, "check", i));
    const Vector w = sample_in_ball(rng, distro.dim, loss.D);
    const Vector w2 = sample_in_ball(rng, distro.dim, loss.D);
    const DataPoint z = sampler.draw(rng);
    const double step = cap * rng.uniform01_open_low();
    auto map = [&](const Vector& v) {
      const Vector g = loss_grad(loss, v, z);
      Vector out(v.size());
      for (std::size_t j = 0; j < v.size(); ++j) out[j] = v[j] - step * g[j];
      project_inplace(loss, out);
      return out;
    };
    excess[i] = distance(map(w), map(w2)) - distance(w, w2);
  });
  std::size_t violations = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (double e : excess) {
    violations += e > kAuditTolerance;
    worst = std::max(worst, e);
  }
  r.add("checks", static_cast<double>(kChecks));
  r.add("violations", static_cast<double>(violations));
  r.add("worst_excess", worst);
  r.passed = violations == 0;
  r.summary = std::to_string(kChecks) + " checks, " + std::to_string(violations) +
              " violations, worst |Gw - Gw'| - |w - w'| = " + fmt(worst);
  return r;
}

CriterionResult criterion_recursion_audits(const AcceptanceSettings& s) {
  CriterionResult r;
  r.id = 3;
  r.title = "per-step recursion audits";
  constexpr std::size_t kRuns = 200, N = 64, T = 64;
  const std::uint64_t seed = criterion_seed(s, 3);
  std::size_t total_checks = 0, total_violations = 0;
  for (LossKind kind : kRegimeLosses) {
    const LossSpec loss = acceptance_loss(kind);
    const DistributionSpec distro = acceptance_distro_for(kind);
    const Vector etas = conforming_schedule(loss).materialize(T);
    for (SamplerMode mode : kSamplers) {
      const std::string t = tag(kind, mode);
      std::vector<AuditReport> reports(kRuns);
      parallel_for(kRuns, s.parallel, [&](std::size_t i) {
        const Dataset ds = sample_dataset(distro, N, derive_seed(seed, t + "/dataset", i));
        Rng ir(derive_seed(seed, t + "/index", i));
        const std::size_t idx = static_cast<std::size_t>(ir.index(N));
        const Dataset nb = make_neighbor(ds, idx, distro, derive_seed(seed, t + "/neighbor", i));
        const RandomPath path = draw_path(mode, N, T, derive_seed(seed, t + "/path", i));
        const Vector w0(distro.dim, 0.0);
        const CoupledTrace tr = run_coupled(loss, etas, ds, nb, path, w0);
        switch (loss.regime()) {
          case Regime::kSmoothConvex: reports[i] = audit_smooth_convex(tr, loss.G); break;
          case Regime::kNonsmoothConvex: reports[i] = audit_nonsmooth_trajectory(tr, loss.G); break;
          case Regime::kSmoothNonconvex: reports[i] = audit_smooth_nonconvex(tr, loss.G, loss.smoothness()); break;
        }
      });
      AuditReport sum;
      sum.worst_excess = -std::numeric_limits<double>::infinity();
      for (const auto& rep : reports) sum += rep;
      r.add(t + "/checks", static_cast<double>(sum.checks));
      r.add(t + "/violations", static_cast<double>(sum.violations));
      r.add(t + "/worst_excess", sum.worst_excess);
      total_checks += sum.checks;
      total_violations += sum.violations;
    }
  }
  r.passed = total_violations == 0 && total_checks > 0;
  r.summary = std::to_string(total_checks) + " step checks over 3 regimes x 2 samplers, " +
              std::to_string(total_violations) + " violations";
  return r;
}

CriterionResult criterion_stability_dominance(const AcceptanceSettings& s) {
  CriterionResult r;
  r.id = 4;
  r.title = "stability dominance";
  const std::uint64_t seed = criterion_seed(s, 4);
  std::size_t failures = 0, cells = 0;
  double worst_ratio = 0.0;
  for (LossKind kind : kRegimeLosses) {
    const LossSpec loss = acceptance_loss(kind);
    for (SamplerMode mode : kSamplers) {
      for (std::size_t N : {32u, 64u, 128u}) {
        const std::string t = tag(kind, mode) + "/N=" + std::to_string(N);
        SgdProblem problem{loss, conforming_schedule(loss), acceptance_distro_for(kind), N, N, mode};
        StabilityOptions opts;
        opts.index_mode = IndexMode::kUniform;
        opts.trials = 2000;
        opts.seed = derive_seed(seed, t, 0);
        opts.parallel = s.parallel;
        const StabilityEstimate est = estimate_l2_stability(problem, opts);
        const BoundReport bound = theoretical_bound(loss, mode, N, problem.etas(), BoundVariant::kAppendix);
        r.add(t + "/gamma_hat", est.gamma_hat);
        r.add(t + "/ci95_upper", est.ci95_upper);
        r.add(t + "/gamma_theory", bound.gamma);
        worst_ratio = std::max(worst_ratio, est.ci95_upper / bound.gamma);
        failures += !(est.ci95_upper <= bound.gamma);
        ++cells;
      }
    }
  }
  r.add("worst_ratio", worst_ratio);
  r.passed = failures == 0;
  r.summary = std::to_string(cells) + " (regime, sampler, N) cells, " + std::to_string(failures) +
              " failures, max ci95_upper / gamma_theory = " + fmt(worst_ratio);
  return r;
}

CriterionResult criterion_scaling_law(const AcceptanceSettings& s) {
  CriterionResult r;
  r.id = 5;
  r.title = "scaling law";
  // The horizon is held fixed while N doubles, so the step size and the
  // exponential factors are unchanged and only the 1/N factor moves.
  constexpr std::size_t T = 32, N1 = 64, N2 = 128;
  const std::uint64_t seed = criterion_seed(s, 5);
  const LossSpec loss = acceptance_loss(LossKind::kNormalizedSigmoid);
  const Schedule sched = conforming_schedule(loss);
  const Vector etas = sched.materialize(T);
  const double expected = 1.0 / std::sqrt(2.0);

  bool ok = true;
  for (SamplerMode mode : kSamplers) {
    const std::string t = to_string(mode);
    const double g1 = theoretical_bound(loss, mode, N1, etas).gamma;
    const double g2 = theoretical_bound(loss, mode, N2, etas).gamma;
    const double theory_ratio = g2 / g1;
    r.add(t + "/theory_ratio", theory_ratio);
    r.add(t + "/theory_ratio_error", std::abs(theory_ratio - expected));
    ok = ok && std::abs(theory_ratio - expected) <= 1e-12;
  }

  const SamplerMode mode = SamplerMode::kWithReplacement;
  std::array<double, 2> gam{};
  for (std::size_t j = 0; j < 2; ++j) {
    const std::size_t N = j == 0 ? N1 : N2;
    SgdProblem problem{loss, sched, acceptance_classification(), N, T, mode};
    StabilityOptions opts;
    opts.index_mode = IndexMode::kUniform;
    opts.trials = 4000;
    opts.seed = derive_seed(seed, "empirical", N);
    opts.parallel = s.parallel;
    gam[j] = estimate_l2_stability(problem, opts).gamma_hat;
    r.add("gamma_hat/N=" + std::to_string(N), gam[j]);
  }
  const double ratio = gam[1] / gam[0];
  r.add("empirical_ratio", ratio);
  ok = ok && ratio >= 0.57 && ratio <= 0.85;
  r.passed = ok;
  r.summary = "theory ratio 1/sqrt(2) exact; empirical gamma ratio N=" + std::to_string(N1) + "->" +
              std::to_string(N2) + " at T=" + std::to_string(T) + ": " + fmt(ratio) + " (target [0.57, 0.85])";
  return r;
}

CriterionResult criterion_first_moment(const AcceptanceSettings& s) {
  CriterionResult r;
  r.id = 6;
  r.title = "first-moment dominance";
  const std::uint64_t seed = criterion_seed(s, 6);
  const LossSpec loss = acceptance_loss(LossKind::kLogistic);
  bool ok = true;
  std::string detail;
  for (std::size_t N : {32u, 64u}) {
    const std::string t = "N=" + std::to_string(N);
    SgdProblem problem{loss, conforming_schedule(loss), acceptance_classification(), N, N,
                       SamplerMode::kWithReplacement};
    StabilityOptions sopts;
    sopts.index_mode = IndexMode::kUniform;
    sopts.trials = 2000;
    sopts.seed = derive_seed(seed, t + "/stability", 0);
    sopts.parallel = s.parallel;
    const StabilityEstimate est = estimate_l2_stability(problem, sopts);
    GapOptions gopts;
    gopts.trials = 1000;
    gopts.m_pop = 100000;
    gopts.seed = derive_seed(seed, t + "/gap", 0);
    gopts.parallel = s.parallel;
    const RiskEstimate gap = estimate_first_moment_gap(problem, gopts);
    const double bound = first_moment_bound(est.ci95_upper, loss.M, N);
    r.add(t + "/gap", gap.value);
    r.add(t + "/gap_se", gap.standard_error);
    r.add(t + "/gamma_upper", est.ci95_upper);
    r.add(t + "/bound", bound);
    ok = ok && gap.value <= bound + 3.0 * gap.standard_error;
    detail += " " + t + ": " + fmt(gap.value) + " <= " + fmt(bound) + ";";
  }
  r.passed = ok;
  r.summary = "E|R - R_S| vs 3 gamma + 2M/sqrt(N):" + detail;
  return r;
}

CriterionResult criterion_gap_decomposition(const AcceptanceSettings& s) {
  CriterionResult r;
  r.id = 7;
  r.title = "generalization-gap decomposition";
  constexpr std::size_t kRuns = 1000, N = 128, K = 4, m_pop = 10000;
  const std::uint64_t seed = criterion_seed(s, 7);
  const LossSpec loss = acceptance_loss(LossKind::kLogistic);
  const DistributionSpec distro = acceptance_classification();
  const Learner learner{loss, conforming_schedule(loss), N / K, SamplerMode::kWithReplacement};
  std::vector<GapDecompositionCheck> checks(kRuns);
  std::vector<double> mixture(kRuns);
  std::vector<char> optimal(kRuns, 0);
  parallel_for(kRuns, s.parallel, [&](std::size_t i) {
    const Dataset ds = sample_dataset(distro, N, derive_seed(seed, "dataset", i));
    const SubbagResult res = run_subbagging(learner, ds, K, SelectionRule::kGap, derive_seed(seed, "paths", i));
    std::vector<Vector> models;
    for (const auto& c : res.candidates) models.push_back(c.w_bar);
    const auto pops = estimate_population_risks(loss, models, distro, m_pop, derive_seed(seed, "population", i));
    std::vector<double> values;
    for (const auto& p : pops) values.push_back(p.value);
    checks[i] = gap_decomposition_check(res, values);
    mixture[i] = mixture_identity_error(res);
    optimal[i] = std::none_of(res.candidates.begin(), res.candidates.end(),
                              [&](const Candidate& c) { return c.gap < res.chosen().gap; });
  });
  std::size_t violations = 0, mixture_violations = 0, selection_violations = 0;
  double min_slack = std::numeric_limits<double>::infinity(), worst_mixture = 0.0, mean_lhs = 0.0;
  for (std::size_t i = 0; i < kRuns; ++i) {
    violations += !checks[i].holds;
    min_slack = std::min(min_slack, checks[i].slack);
    mean_lhs += checks[i].lhs / kRuns;
    worst_mixture = std::max(worst_mixture, mixture[i]);
    mixture_violations += mixture[i] > 1e-12;
    selection_violations += !optimal[i];
  }
  r.add("runs", kRuns);
  r.add("violations", static_cast<double>(violations));
  r.add("min_slack", min_slack);
  r.add("mean_lhs", mean_lhs);
  r.add("mixture_violations", static_cast<double>(mixture_violations));
  r.add("worst_mixture_error", worst_mixture);
  r.add("selection_violations", static_cast<double>(selection_violations));
  r.passed = violations == 0 && mixture_violations == 0 && selection_violations == 0;
  r.summary = std::to_string(kRuns) + " runs (K=4, logistic): " + std::to_string(violations) +
              " violations, min slack " + fmt(min_slack) + ", worst mixture error " + fmt(worst_mixture);
  return r;
}

CriterionResult criterion_markov_boosting(const AcceptanceSettings& s) {
  CriterionResult r;
  r.id = 8;
  r.title = "Markov boosting";
  constexpr std::size_t N = 128, T = 16;
  const LossSpec loss = acceptance_loss(LossKind::kLogistic);
  const Learner learner{loss, conforming_schedule(loss), T, SamplerMode::kWithReplacement};
  MarkovOptions opts;
  opts.Ks = {2, 4, 8};
  opts.alpha = 0.5;
  opts.runs = 2000;
  opts.mu_runs = 2000;
  opts.m_pop = 10000;
  opts.seed = criterion_seed(s, 8);
  opts.parallel = s.parallel;
  const MarkovReport rep = markov_boost_experiment(learner, acceptance_classification(), N, opts);
  bool ok = true;
  std::string detail;
  double previous = std::numeric_limits<double>::infinity();
  for (const auto& row : rep.rows) {
    const std::string t = "K=" + std::to_string(row.K);
    r.add(t + "/mu", row.mu);
    r.add(t + "/frequency", row.frequency);
    r.add(t + "/alpha_pow_K", row.alpha_pow_K);
    r.add(t + "/binomial_se", row.binomial_se);
    ok = ok && row.frequency <= row.alpha_pow_K + 3.0 * row.binomial_se;
    ok = ok && row.frequency <= previous;
    previous = row.frequency;
    detail += " " + t + ": " + fmt(row.frequency) + " vs " + fmt(row.alpha_pow_K) + ";";
  }
  r.passed = ok;
  r.summary = "exceedance frequency vs 0.5^K:" + detail;
  return r;
}

CriterionResult criterion_hitting_time(const AcceptanceSettings& s) {
  CriterionResult r;
  r.id = 9;
  r.title = "without-replacement hitting time";
  constexpr std::size_t kRuns = 10000, N = 20, T = 20;
  const std::uint64_t seed = criterion_seed(s, 9);
  const LossSpec loss = acceptance_loss(LossKind::kLogistic);
  const DistributionSpec distro = acceptance_classification();
  const Vector etas = conforming_schedule(loss).materialize(T);
  std::vector<std::size_t> t0(kRuns, 0);
  parallel_for(kRuns, s.parallel, [&](std::size_t i) {
    const Dataset ds = sample_dataset(distro, N, derive_seed(seed, "dataset", i));
    Rng ir(derive_seed(seed, "index", i));
    const std::size_t idx = static_cast<std::size_t>(ir.index(N));
    const Dataset nb = make_neighbor(ds, idx, distro, derive_seed(seed, "neighbor", i));
    const RandomPath path = draw_path(SamplerMode::kWithoutReplacement, N, T, derive_seed(seed, "path", i));
    const Vector w0(distro.dim, 0.0);
    const CoupledTrace tr = run_coupled(loss, etas, ds, nb, path, w0);
    t0[i] = tr.first_difference.value_or(0);
  });
  std::vector<double> counts(N, 0.0);
  std::size_t missing = 0;
  for (std::size_t v : t0) {
    if (v == 0) {
      ++missing;
    } else {
      counts[v - 1] += 1.0;
    }
  }
  const double expected = static_cast<double>(kRuns) / static_cast<double>(N);
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  const boost::math::chi_squared dist(static_cast<double>(N - 1));
  const double p_value = boost::math::cdf(boost::math::complement(dist, chi2));
  const double critical = boost::math::quantile(boost::math::complement(dist, 0.01));
  r.add("chi2", chi2);
  r.add("critical_0.01", critical);
  r.add("p_value", p_value);
  r.add("never_hit", static_cast<double>(missing));
  r.passed = missing == 0 && p_value >= 0.01;
  r.summary = "chi-square " + fmt(chi2) + " on 19 df (critical " + fmt(critical) + "), p = " + fmt(p_value);
  return r;
}

CriterionResult criterion_excess_risk(const AcceptanceSettings& s) {
  CriterionResult r;
  r.id = 10;
  r.title = "excess-risk dominance";
  constexpr std::size_t N = 128, K = 4;
  const LossSpec loss = acceptance_loss(LossKind::kAbsolute);
  const Learner learner{loss, conforming_schedule(loss), N / K, SamplerMode::kWithReplacement};
  ExcessRiskOptions opts;
  opts.K = K;
  opts.runs = 500;
  opts.m_pop = 20000;
  opts.stability_trials = 2000;
  opts.seed = criterion_seed(s, 10);
  opts.parallel = s.parallel;
  const ExcessRiskReport rep = excess_risk_experiment(learner, acceptance_regression(0.0), N, opts);
  const double min_excess = *std::min_element(rep.excess.begin(), rep.excess.end());
  r.add("mean_excess", rep.mean_excess);
  r.add("excess_se", rep.excess_se);
  r.add("min_excess", min_excess);
  r.add("q50", rep.q50);
  r.add("q90", rep.q90);
  r.add("q99", rep.q99);
  r.add("gamma_upper", rep.gamma.ci95_upper);
  r.add("delta_opt", rep.delta_opt);
  r.add("delta_opt_se", rep.delta_opt_se);
  r.add("delta_opt_full_sample", rep.delta_opt_full);
  r.add("risk_wstar", rep.risk_wstar);
  r.add("wstar_is_teacher", rep.wstar_is_teacher ? 1.0 : 0.0);
  r.add("rule_mismatches", static_cast<double>(rep.rule_mismatches));
  r.add("bound_plus_tolerance", rep.bound + rep.tolerance);
  r.passed = rep.dominated && rep.rule_mismatches == 0 && rep.risk_wstar == 0.0 && min_excess >= 0.0;
  r.summary = "mean excess " + fmt(rep.mean_excess) + " <= gamma_upper " + fmt(rep.gamma.ci95_upper) +
              " + delta_opt " + fmt(rep.delta_opt) + " + 3 SE " + fmt(rep.tolerance);
  return r;
}

CriterionResult run_criterion(int id, const AcceptanceSettings& s) {
  switch (id) {
    case 1: return criterion_coupling_identity(s);
    case 2: return criterion_non_expansiveness(s);
    case 3: return criterion_recursion_audits(s);
    case 4: return criterion_stability_dominance(s);
    case 5: return criterion_scaling_law(s);
    case 6: return criterion_first_moment(s);
    case 7: return criterion_gap_decomposition(s);
    case 8: return criterion_markov_boosting(s);
    case 9: return criterion_hitting_time(s);
    case 10: return criterion_excess_risk(s);
    default: throw std::invalid_argument("run_criterion: id must be in 1..10");
  }
}

namespace {

// Small CLI configs exercising every CSV renderer.
std::vector<std::pair<std::string, ExperimentConfig>> renderer_configs(std::uint64_t seed) {
  ExperimentConfig base;
  base.losses = {acceptance_loss(LossKind::kLogistic)};
  base.distro = acceptance_classification();
  base.schedule = conforming_schedule(base.losses[0]);
  base.N = {32, 64};
  base.trials = 200;
  base.runs = 20;
  base.m_pop = 2000;
  base.seed = seed;
  ExperimentConfig boost = base;
  boost.N = {64};
  boost.K = {4};
  boost.T = 16;
  return {{"stability", base}, {"bounds", base}, {"boost", boost}, {"traj", boost}};
}

std::string render(const std::string& name, const ExperimentConfig& cfg) {
  if (name == "stability") return render_stability_csv(cfg);
  if (name == "bounds") return render_bounds_csv(cfg);
  if (name == "boost") return render_boost_csv(cfg);
  return render_traj_csv(cfg);
}

}  // namespace

CriterionResult criterion_determinism(std::span<const CriterionResult> baseline,
                                      const AcceptanceSettings& s) {
  CriterionResult r;
  r.id = 11;
  r.title = "determinism";
  std::size_t compared = 0, mismatches = 0;
  std::string detail;
  for (std::size_t workers : {std::size_t{1}, std::size_t{8}}) {
    if (workers == s.parallel) continue;
    AcceptanceSettings other = s;
    other.parallel = workers;
    for (const auto& b : baseline) {
      if (b.id == 11) continue;
      const CriterionResult again = run_criterion(b.id, other);
      const bool same = criteria_csv(std::span(&b, 1)) == criteria_csv(std::span(&again, 1));
      ++compared;
      if (!same) {
        ++mismatches;
        detail += " criterion " + std::to_string(b.id) + " differs at parallel " + std::to_string(workers) + ";";
      }
    }
  }
  for (auto& [name, cfg] : renderer_configs(derive_seed(s.seed, "acceptance/renderers", 0))) {
    ExperimentConfig a = cfg, b = cfg;
    a.parallel = 1;
    b.parallel = 8;
    const std::string first = render(name, a);
    const bool same = first == render(name, b) && first == render(name, a);
    ++compared;
    if (!same) {
      ++mismatches;
      detail += " " + name + " csv differs;";
    }
  }
  r.add("comparisons", static_cast<double>(compared));
  r.add("mismatches", static_cast<double>(mismatches));
  r.passed = mismatches == 0;
  r.summary = std::to_string(compared) + " CSV comparisons at parallelism 1 vs 8, " +
              std::to_string(mismatches) + " mismatches" + detail;
  return r;
}

std::vector<CriterionResult> run_acceptance(std::span<const int> ids, const AcceptanceSettings& s,
                                            bool verbose) {
  std::vector<CriterionResult> results;
  bool want_determinism = false;
  for (int id : ids) {
    if (id == 11) {
      want_determinism = true;
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    results.push_back(run_criterion(id, s));
    if (verbose) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cerr << "criterion " << id << " done in " << fmt(secs) << " s\n";
    }
  }
  if (want_determinism) {
    std::vector<CriterionResult> baseline = results;
    if (baseline.empty()) {
      for (int id = 1; id <= 10; ++id) baseline.push_back(run_criterion(id, s));
    }
    results.push_back(criterion_determinism(baseline, s));
  }
  return results;
}

std::string criteria_csv(std::span<const CriterionResult> results) {
  std::ostringstream os;
  os << "criterion,metric,value\n";
  for (const auto& r : results) {
    os << r.id << ",passed," << (r.passed ? 1 : 0) << '\n';
    for (const auto& m : r.metrics) os << r.id << ',' << m.name << ',' << format_double(m.value) << '\n';
  }
  return os.str();
}

}  // namespace stabilab
