#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "stabilab/boosting.hpp"

using namespace stabilab;

namespace {

DistributionSpec classification() {
  DistributionSpec s;
  s.family = Family::kGaussianClassification;
  s.dim = 5;
  s.w_true = Vector(5, 1.0 / std::sqrt(5.0));
  s.sigma_y = 0.1;
  s.bx = 1.0;
  s.by = 1.0;
  return s;
}

DistributionSpec noiseless_regression() {
  DistributionSpec s = classification();
  s.family = Family::kGaussianRegression;
  s.w_true = {0.6, -0.48, 0.36, 0.0, 0.0};
  s.sigma_y = 0.0;
  return s;
}

Learner logistic_learner(std::size_t T) {
  Learner l;
  l.loss = LossSpec::derive(LossKind::kLogistic, 1.0, 1.0, 1.0);
  l.schedule = Schedule::inverse_sqrt(2.0 / *l.loss.L);
  l.T = T;
  return l;
}

// Two subsets, each holding two copies of one point, so any path visits the
// same point and every value below follows by hand.
Dataset two_block_instance() {
  Dataset s;
  s.dim = 1;
  s.points = {{{1.0}, 1.0}, {{1.0}, 1.0}, {{0.5}, -1.0}, {{0.5}, -1.0}};
  return s;
}

}  // namespace

TEST_CASE("hand-built two-subset instance") {
  Learner l;
  l.loss = LossSpec::derive(LossKind::kAbsolute, 1.0, 1.0, 1.0);
  l.schedule = Schedule::constant(0.5);
  l.T = 1;
  const Dataset s = two_block_instance();

  // k = 0 trains on (1, 1): w = 0.5. k = 1 trains on (0.5, -1): w = -0.25.
  const SubbagResult gap = run_subbagging(l, s, 2, SelectionRule::kGap, 10);
  REQUIRE(gap.candidates.size() == 2);
  const auto& c0 = gap.candidates[0];
  const auto& c1 = gap.candidates[1];
  CHECK(c0.w_bar == Vector{0.5});
  CHECK(c1.w_bar == Vector{-0.25});
  CHECK(std::abs(c0.train_risk - 0.5) <= 1e-12);
  CHECK(std::abs(c0.validation_risk - 1.25) <= 1e-12);
  CHECK(std::abs(c0.gap - 0.75) <= 1e-12);
  CHECK(std::abs(c0.full_risk - 0.875) <= 1e-12);
  CHECK(std::abs(c1.train_risk - 0.875) <= 1e-12);
  CHECK(std::abs(c1.validation_risk - 1.25) <= 1e-12);
  CHECK(std::abs(c1.gap - 0.375) <= 1e-12);
  CHECK(std::abs(c1.full_risk - 1.0625) <= 1e-12);
  CHECK(gap.selected == 1);
  CHECK(gap.selected_full_risk() == c1.full_risk);
  CHECK(c0.path_seed == 10);
  CHECK(c1.path_seed == 11);

  // Equal validation risks: the tie goes to the first subset.
  const SubbagResult risk = run_subbagging(l, s, 2, SelectionRule::kRisk, 10);
  CHECK(risk.selected == 0);
}

TEST_CASE("zero steps make all candidates equal and the first one wins") {
  Learner l = logistic_learner(8);
  l.schedule = Schedule::explicit_steps(Vector(8, 0.0));
  const Dataset s = sample_dataset(classification(), 32, 3);
  for (auto rule : {SelectionRule::kGap, SelectionRule::kRisk}) {
    const SubbagResult r = run_subbagging(l, s, 2, rule, 0);
    CHECK(r.candidates[0].w_bar == r.candidates[1].w_bar);
    CHECK(r.selected == 0);
  }
}

TEST_CASE("subbagging preconditions") {
  const Learner l = logistic_learner(4);
  const Dataset s = sample_dataset(classification(), 12, 1);
  CHECK_THROWS_AS(run_subbagging(l, s, 13, SelectionRule::kGap, 0), std::invalid_argument);
  CHECK_THROWS_AS(run_subbagging(l, s, 1, SelectionRule::kGap, 0), std::invalid_argument);
  CHECK_THROWS_AS(run_subbagging(l, s, 5, SelectionRule::kGap, 0), std::invalid_argument);  // 12 % 5
  Learner wo = l;
  wo.sampler = SamplerMode::kWithoutReplacement;
  wo.T = 4;
  CHECK_THROWS_AS(run_subbagging(wo, s, 4, SelectionRule::kGap, 0), std::invalid_argument);  // T > 3
  CHECK_NOTHROW(run_subbagging(wo, s, 3, SelectionRule::kGap, 0));
  Learner hot = l;
  hot.schedule = Schedule::constant(9.0);
  CHECK_THROWS_AS(run_subbagging(hot, s, 2, SelectionRule::kGap, 0), std::invalid_argument);
  CHECK(selection_rule_from_string("risk") == SelectionRule::kRisk);
  CHECK_THROWS_AS(selection_rule_from_string("vote"), std::invalid_argument);
}

TEST_CASE("selection optimality, mixture identity and determinism over random runs") {
  for (auto mode : {SamplerMode::kWithReplacement, SamplerMode::kWithoutReplacement}) {
    Learner l = logistic_learner(8);
    l.sampler = mode;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const Dataset s = sample_dataset(classification(), 32, seed);
      for (auto rule : {SelectionRule::kGap, SelectionRule::kRisk}) {
        const SubbagResult r = run_subbagging(l, s, 4, rule, seed * 10);
        CHECK(mixture_identity_error(r) <= 1e-12);
        const auto& k = r.chosen();
        for (std::size_t j = 0; j < r.candidates.size(); ++j) {
          const auto& c = r.candidates[j];
          if (rule == SelectionRule::kGap) {
            CHECK_FALSE(c.gap < k.gap);
            if (j < r.selected) CHECK(c.gap > k.gap);
          } else {
            CHECK_FALSE(c.validation_risk < k.validation_risk);
            if (j < r.selected) CHECK(c.validation_risk > k.validation_risk);
          }
          CHECK(c.path_seed == seed * 10 + j);
          CHECK(c.train_risk >= 0.0);
          CHECK(c.validation_risk <= l.loss.M);
        }
        if (seed % 10 == 0) {
          const SubbagResult p = run_subbagging(l, s, 4, rule, seed * 10, 3);
          for (std::size_t j = 0; j < 4; ++j) {
            CHECK(p.candidates[j].w_bar == r.candidates[j].w_bar);
            CHECK(p.candidates[j].gap == r.candidates[j].gap);
          }
          CHECK(p.selected == r.selected);
        }
      }
    }
  }
}

TEST_CASE("gap decomposition holds on every run") {
  const Learner l = logistic_learner(8);
  const auto distro = classification();
  std::size_t violations = 0, final_violations = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Dataset s = sample_dataset(distro, 32, seed);
    const SubbagResult r = run_subbagging(l, s, 4, SelectionRule::kGap, seed);
    std::vector<Vector> models;
    for (const auto& c : r.candidates) models.push_back(c.w_bar);
    std::vector<double> pop;
    for (const auto& e : estimate_population_risks(l.loss, models, distro, 500, seed)) pop.push_back(e.value);
    const auto chk = gap_decomposition_check(r, pop);
    if (!chk.holds) ++violations;
    if (chk.slack_final < -1e-12) ++final_violations;
    CHECK(chk.lhs <= chk.intermediate + 1e-12);
    CHECK(chk.intermediate <= chk.rhs + 1e-12);
  }
  CHECK(violations == 0);
  CHECK(final_violations == 0);
}

TEST_CASE("gap decomposition on fixed numbers") {
  Learner l = logistic_learner(4);
  const Dataset s = sample_dataset(classification(), 8, 2);
  const SubbagResult r = run_subbagging(l, s, 2, SelectionRule::kGap, 5);
  // Population risk equal to every validation risk: only the gap term remains.
  std::vector<double> pop{r.candidates[0].validation_risk, r.candidates[1].validation_risk};
  const auto chk = gap_decomposition_check(r, pop);
  CHECK(chk.holds);
  // R_S = (1/K) R_{S_k} + ((K-1)/K) R_{S\S_k}, so |R_val - R_S| = gap / K.
  CHECK(chk.lhs == doctest::Approx(r.chosen().gap / 2.0).epsilon(1e-12));
  CHECK(chk.slack >= 0.0);

  l.schedule = Schedule::explicit_steps(Vector(4, 0.0));
  const SubbagResult flat = run_subbagging(l, s, 2, SelectionRule::kGap, 5);
  const std::vector<double> pop_flat{0.7, 0.7};
  const auto chk_flat = gap_decomposition_check(flat, pop_flat);
  const double gap = flat.chosen().gap;
  const double dev = std::abs(0.7 - flat.chosen().validation_risk);
  CHECK(chk_flat.holds);
  CHECK(chk_flat.rhs == doctest::Approx(gap / 2.0 + 1.5 * dev).epsilon(1e-12));

  const SubbagResult risk = run_subbagging(l, s, 2, SelectionRule::kRisk, 5);
  CHECK_THROWS_AS(gap_decomposition_check(risk, pop_flat), std::invalid_argument);
  const std::vector<double> short_pop{0.7};
  CHECK_THROWS_AS(gap_decomposition_check(flat, short_pop), std::invalid_argument);
}

TEST_CASE("empirical risk minimization") {
  const auto distro = classification();
  const Dataset s = sample_dataset(distro, 64, 4);
  const LossSpec logistic = LossSpec::derive(LossKind::kLogistic, 1.0, 1.0, 1.0);
  const auto m = minimize_empirical_risk(logistic, s);
  CHECK(norm2(m.w) <= logistic.D);
  CHECK(m.value == doctest::Approx(empirical_risk(logistic, m.w, s)).epsilon(1e-15));
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Vector w = sample_in_ball(rng, 5, 1.0);
    CHECK(m.value <= empirical_risk(logistic, w, s) + 1e-9);
  }

  const LossSpec hinge = LossSpec::derive(LossKind::kHinge, 1.0, 1.0, 1.0);
  const auto h = minimize_empirical_risk(hinge, s, 2000);
  CHECK(h.value <= 1.0);
  CHECK(h.iterations <= 2000);

  const LossSpec absolute = LossSpec::derive(LossKind::kAbsolute, 1.0, 1.0, 1.0);
  const Dataset r = sample_dataset(noiseless_regression(), 64, 5);
  const auto a = minimize_empirical_risk(absolute, r, 5000);
  CHECK(a.value <= empirical_risk(absolute, Vector(5, 0.0), r));
  CHECK(a.value < 0.05);

  CHECK_THROWS_AS(minimize_empirical_risk(logistic, Dataset{5, {}}), std::invalid_argument);
}

TEST_CASE("Markov boosting with a single subset and with frozen candidates") {
  const Learner l = logistic_learner(8);
  const auto distro = classification();
  MarkovOptions o;
  o.Ks = {1};
  o.runs = 400;
  o.mu_runs = 400;
  o.m_pop = 2000;
  o.seed = 9;
  const auto rep = markov_boost_experiment(l, distro, 32, o);
  REQUIRE(rep.rows.size() == 1);
  const auto& row = rep.rows[0];
  CHECK(row.frequency >= 0.0);
  CHECK(row.frequency <= 1.0);
  CHECK(row.frequency <= o.alpha + 3.0 * std::sqrt(o.alpha * (1 - o.alpha) / o.runs));
  CHECK(row.threshold == doctest::Approx(row.mu / o.alpha));
  CHECK(row.min_gaps.size() == o.runs);

  Learner frozen = l;
  frozen.schedule = Schedule::explicit_steps(Vector(8, 0.0));
  o.Ks = {2};
  o.runs = 200;
  o.mu_runs = 200;
  const auto fr = markov_boost_experiment(frozen, distro, 32, o);
  CHECK(fr.rows[0].independence_caveat);
  CHECK(fr.rows[0].identical_candidate_runs == 200);
  CHECK(fr.rows[0].frequency <= o.alpha + 3.0 * std::sqrt(o.alpha * (1 - o.alpha) / o.runs));

  MarkovOptions bad = o;
  bad.runs = 99;
  CHECK_THROWS_AS(markov_boost_experiment(l, distro, 32, bad), std::invalid_argument);
  bad = o;
  bad.alpha = 1.0;
  CHECK_THROWS_AS(markov_boost_experiment(l, distro, 32, bad), std::invalid_argument);
  bad = o;
  bad.Ks = {3};
  CHECK_THROWS_AS(markov_boost_experiment(l, distro, 32, bad), std::invalid_argument);
}

TEST_CASE("Markov boosting is reproducible across worker counts") {
  const Learner l = logistic_learner(4);
  MarkovOptions o;
  o.Ks = {2, 4};
  o.runs = 100;
  o.mu_runs = 100;
  o.m_pop = 500;
  o.seed = 3;
  const auto a = markov_boost_experiment(l, classification(), 16, o);
  o.parallel = 4;
  const auto b = markov_boost_experiment(l, classification(), 16, o);
  REQUIRE(a.rows.size() == 2);
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(a.rows[r].mu == b.rows[r].mu);
    CHECK(a.rows[r].min_gaps == b.rows[r].min_gaps);
    CHECK(a.rows[r].exceedances == b.rows[r].exceedances);
    CHECK(a.rows[r].alpha_pow_K == doctest::Approx(std::pow(0.5, a.rows[r].K)));
  }
}

TEST_CASE("excess risk on noiseless realizable regression") {
  Learner l;
  l.loss = LossSpec::derive(LossKind::kAbsolute, 1.0, 1.0, 1.0);
  l.schedule = Schedule::horizon(1.0, 0.5);
  l.T = 16;
  l.sampler = SamplerMode::kWithReplacement;
  ExcessRiskOptions o;
  o.K = 2;
  o.runs = 100;
  o.m_pop = 2000;
  o.stability_trials = 200;
  o.seed = 6;
  o.wstar_max_iter = 2000;
  o.erm_max_iter = 300;
  const auto rep = excess_risk_experiment(l, noiseless_regression(), 32, o);
  CHECK(rep.risk_wstar == 0.0);
  CHECK(rep.wstar_is_teacher);
  CHECK(rep.rule_mismatches == 0);
  REQUIRE(rep.excess.size() == 100);
  for (double e : rep.excess) CHECK(e >= 0.0);
  CHECK(rep.q50 <= rep.q90);
  CHECK(rep.q90 <= rep.q99);
  CHECK(rep.delta_opt >= 0.0);
  CHECK(rep.bound == doctest::Approx(rep.gamma.ci95_upper + rep.delta_opt));

  ExcessRiskOptions bad = o;
  bad.runs = 50;
  CHECK_THROWS_AS(excess_risk_experiment(l, noiseless_regression(), 32, bad), std::invalid_argument);
  bad = o;
  bad.K = 3;
  CHECK_THROWS_AS(excess_risk_experiment(l, noiseless_regression(), 32, bad), std::invalid_argument);
}
