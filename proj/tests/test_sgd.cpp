#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stabilab/sgd.hpp"

using namespace stabilab;

namespace {

DistributionSpec classification(std::size_t d = 3) {
  DistributionSpec s;
  s.family = Family::kGaussianClassification;
  s.dim = d;
  s.w_true = Vector(d, 0.0);
  s.w_true[0] = 0.8;
  s.sigma_y = 0.2;
  s.bx = 1.0;
  s.by = 1.0;
  return s;
}

DistributionSpec regression(std::size_t d = 3) {
  DistributionSpec s = classification(d);
  s.family = Family::kGaussianRegression;
  s.sigma_y = 0.1;
  return s;
}

Dataset one_point(double x, double y) {
  Dataset s;
  s.dim = 1;
  s.points.push_back({{x}, y});
  return s;
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 2) return std::accumulate(v.begin(), v.end(), 0.0);
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.subspan(0, h)) + pairwise_sum(v.subspan(h));
}

struct Regime {
  LossSpec loss;
  DistributionSpec distro;
  Schedule schedule;
};

std::vector<Regime> regimes() {
  const auto cls = classification();
  const auto reg = regression();
  const LossSpec logistic = LossSpec::derive(LossKind::kLogistic, 1.0, 1.0, 1.0);
  const LossSpec hinge = LossSpec::derive(LossKind::kHinge, 1.0, 1.0, 1.0);
  const LossSpec absolute = LossSpec::derive(LossKind::kAbsolute, 1.0, 1.0, 1.0);
  const LossSpec sigmoid = LossSpec::derive(LossKind::kNormalizedSigmoid, 1.0, 1.0, 1.0);
  return {
      {logistic, cls, Schedule::inverse_sqrt(2.0 / *logistic.L)},
      {hinge, cls, Schedule::constant(0.3)},
      {absolute, reg, Schedule::inverse_sqrt(0.5)},
      {sigmoid, cls, Schedule::constant(1.0 / *sigmoid.L)},
  };
}

}  // namespace

TEST_CASE("schedules evaluate their closed forms") {
  CHECK(Schedule::constant(0.1).materialize(3) == Vector{0.1, 0.1, 0.1});
  const Vector isq = Schedule::inverse_sqrt(2.0).materialize(4);
  CHECK(isq[0] == 2.0);
  CHECK(isq[3] == 1.0);
  const Vector it = Schedule::inverse_t(2.0, 0.5).materialize(3);
  CHECK(it[0] == 1.0);
  CHECK(it[2] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const Vector hz = Schedule::horizon(1.0, 0.5).materialize(16);
  CHECK(std::all_of(hz.begin(), hz.end(), [](double v) { return v == 0.25; }));
  CHECK(Schedule::horizon(3.0, 1.0).materialize(6)[5] == 0.5);
  CHECK(Schedule::explicit_steps({0.0, 0.2}).materialize(2) == Vector{0.0, 0.2});

  CHECK_THROWS_AS(Schedule::explicit_steps({0.1}).materialize(2), std::invalid_argument);
  CHECK_THROWS_AS(Schedule::constant(0.0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(Schedule::constant(-1.0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(Schedule::inverse_t(0.0, 1.0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(Schedule::horizon(1.0, -0.5).validate(), std::invalid_argument);
  CHECK_THROWS_AS(Schedule::explicit_steps({0.1, -0.1}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(Schedule::constant(0.1).at(0, 3), std::invalid_argument);
  CHECK_THROWS_AS(Schedule::constant(0.1).at(4, 3), std::invalid_argument);
}

TEST_CASE("schedule JSON round trip and strict keys") {
  for (const Schedule& s : {Schedule::constant(0.25), Schedule::inverse_sqrt(0.7),
                            Schedule::inverse_t(4.0, 2.0), Schedule::horizon(1.5, 0.5),
                            Schedule::explicit_steps({0.1, 0.0, 0.3})}) {
    const nlohmann::json j = s;
    CHECK(j.get<Schedule>() == s);
    nlohmann::json extra = j;
    extra["bogus"] = 1;
    CHECK_THROWS_AS(extra.get<Schedule>(), std::invalid_argument);
  }
  CHECK_THROWS_AS(nlohmann::json({{"kind", "cosine"}}).get<Schedule>(), std::invalid_argument);
  CHECK_THROWS_AS(nlohmann::json({{"kind", "constant"}}).get<Schedule>(), std::invalid_argument);
  CHECK(Schedule::horizon(1.0, 0.5).describe() == "horizon(c=1;power=0.5)");
}

TEST_CASE("step-size caps follow the loss regime") {
  const LossSpec logistic = LossSpec::derive(LossKind::kLogistic, 1.0, 1.0, 1.0);  // L = 1/4
  const Vector at_cap{8.0};
  CHECK_NOTHROW(check_schedule_cap(logistic, at_cap));
  const Vector over{8.01};
  CHECK_THROWS_AS(check_schedule_cap(logistic, over), std::invalid_argument);

  const LossSpec sigmoid = LossSpec::derive(LossKind::kNormalizedSigmoid, 1.0, 1.0, 1.0);
  const double cap = 1.0 / *sigmoid.L;
  const Vector ok{cap};
  const Vector bad{0.1, 1.01 * cap};
  CHECK_NOTHROW(check_schedule_cap(sigmoid, ok));
  CHECK_THROWS_AS(check_schedule_cap(sigmoid, bad), std::invalid_argument);

  const LossSpec hinge = LossSpec::derive(LossKind::kHinge, 1.0, 1.0, 1.0);
  const Vector huge{100.0};
  CHECK_NOTHROW(check_schedule_cap(hinge, huge));
}

TEST_CASE("without-replacement paths are permutation prefixes") {
  const RandomPath p = draw_path(SamplerMode::kWithoutReplacement, 5, 5, 3);
  auto sorted = p.indices;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<std::size_t>{0, 1, 2, 3, 4});

  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto idx = draw_path(SamplerMode::kWithoutReplacement, 20, 7, seed).indices;
    std::sort(idx.begin(), idx.end());
    CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
    CHECK(idx.back() < 20);
  }
  CHECK_THROWS_AS(draw_path(SamplerMode::kWithoutReplacement, 4, 6, 1), std::invalid_argument);
  CHECK_THROWS_AS(draw_path(SamplerMode::kWithReplacement, 4, 0, 1), std::invalid_argument);
}

TEST_CASE("with-replacement index frequencies are uniform") {
  const std::size_t n = 10, T = 100000;
  const RandomPath p = draw_path(SamplerMode::kWithReplacement, n, T, 17);
  std::vector<double> count(n, 0.0);
  for (auto i : p.indices) count[i] += 1.0;
  for (double c : count) CHECK(std::abs(c / T - 1.0 / n) <= 0.01);
  CHECK(draw_path(SamplerMode::kWithReplacement, n, 50, 17) ==
        draw_path(SamplerMode::kWithReplacement, n, 50, 17));
}

TEST_CASE("path JSON round trip") {
  const RandomPath p = draw_path(SamplerMode::kWithoutReplacement, 9, 6, 4);
  CHECK(path_from_json(path_to_json(p), p.mode, p.n) == p);
  CHECK_THROWS_AS(path_from_json(nlohmann::json{0, 9}, SamplerMode::kWithReplacement, 9),
                  std::invalid_argument);
  CHECK_THROWS_AS(path_from_json(nlohmann::json{1, 1}, SamplerMode::kWithoutReplacement, 9),
                  std::invalid_argument);
  CHECK_NOTHROW(path_from_json(nlohmann::json{1, 1}, SamplerMode::kWithReplacement, 9));
}

TEST_CASE("one absolute-loss step by hand") {
  const LossSpec loss = LossSpec::derive(LossKind::kAbsolute, 1.0, 1.0, 1.0);
  const Dataset s = one_point(1.0, 1.0);
  RandomPath path{SamplerMode::kWithReplacement, 1, {0}};
  const Vector w0{0.0};
  const Vector etas{0.5};
  const SgdOutput out = run_sgd(loss, etas, s, path, w0);
  CHECK(out.w_last == Vector{0.5});
  CHECK(out.w_bar == Vector{0.5});
}

TEST_CASE("zero steps return the initial point") {
  const auto distro = classification();
  const Dataset s = sample_dataset(distro, 8, 2);
  const LossSpec loss = LossSpec::derive(LossKind::kLogistic, 1.0, 1.0, 1.0);
  const Vector w0{0.2, -0.3, 0.1};
  const RandomPath path = draw_path(SamplerMode::kWithReplacement, 8, 12, 5);
  const SgdOutput out = run_sgd(loss, Schedule::explicit_steps(Vector(12, 0.0)), s, path, w0);
  for (std::size_t j = 0; j < 3; ++j) CHECK(out.w_bar[j] == doctest::Approx(w0[j]).epsilon(1e-15));
  CHECK(out.w_last == w0);
}

TEST_CASE("run_sgd is deterministic, contained in the ball, and averages its trajectory") {
  for (const auto& r : regimes()) {
    const Dataset s = sample_dataset(r.distro, 16, 7);
    const RandomPath path = draw_path(SamplerMode::kWithReplacement, 16, 40, 8);
    const Vector w0(3, 0.0);
    const SgdOutput a = run_sgd(r.loss, r.schedule, s, path, w0, {.record_trajectory = true});
    const SgdOutput b = run_sgd(r.loss, r.schedule, s, path, w0, {.record_trajectory = true});
    CHECK(a.w_bar == b.w_bar);
    CHECK(a.trajectory == b.trajectory);
    REQUIRE(a.trajectory.size() == 41);
    CHECK(a.trajectory.front() == w0);
    CHECK(a.trajectory.back() == a.w_last);
    for (const auto& w : a.trajectory) CHECK(norm2(w) <= r.loss.D);
    CHECK(norm2(a.w_bar) <= r.loss.D * (1.0 + 1e-15));

    for (std::size_t j = 0; j < 3; ++j) {
      Vector coord;
      for (std::size_t t = 1; t <= 40; ++t) coord.push_back(a.trajectory[t][j]);
      const double oracle = pairwise_sum(coord) / 40.0;
      CHECK(std::abs(a.w_bar[j] - oracle) <= 1e-12);
    }

    // Recompute every step from the recorded iterates.
    const Vector etas = r.schedule.materialize(40);
    for (std::size_t t = 1; t <= 40; ++t) {
      const Vector& prev = a.trajectory[t - 1];
      const Vector g = loss_grad(r.loss, prev, s[path.indices[t - 1]]);
      Vector next = prev;
      for (std::size_t j = 0; j < 3; ++j) next[j] -= etas[t - 1] * g[j];
      CHECK(project(r.loss, next) == a.trajectory[t]);
    }
  }
}

TEST_CASE("run_sgd input errors") {
  const LossSpec loss = LossSpec::derive(LossKind::kLogistic, 1.0, 1.0, 1.0);
  const Dataset s = sample_dataset(classification(), 4, 1);
  const RandomPath path = draw_path(SamplerMode::kWithReplacement, 4, 3, 1);
  const Vector w0(3, 0.0);
  CHECK_THROWS_AS(run_sgd(loss, Schedule::constant(9.0), s, path, w0), std::invalid_argument);
  const Vector wrong_dim(2, 0.0);
  CHECK_THROWS_AS(run_sgd(loss, Schedule::constant(1.0), s, path, wrong_dim), std::invalid_argument);
  const Vector outside{2.0, 0.0, 0.0};
  CHECK_THROWS_AS(run_sgd(loss, Schedule::constant(1.0), s, path, outside), std::invalid_argument);
  const RandomPath long_path = draw_path(SamplerMode::kWithReplacement, 9, 3, 1);
  RandomPath bad = long_path;
  bad.indices = {0, 1, 8};
  CHECK_THROWS_AS(run_sgd(loss, Schedule::constant(1.0), s, bad, w0), std::invalid_argument);
  const Vector short_etas{0.1};
  CHECK_THROWS_AS(run_sgd(loss, short_etas, s, path, w0), std::invalid_argument);
}

TEST_CASE("coupled runs on identical data never separate") {
  for (const auto& r : regimes()) {
    const Dataset s = sample_dataset(r.distro, 10, 3);
    const RandomPath path = draw_path(SamplerMode::kWithReplacement, 10, 30, 4);
    const Vector w0(3, 0.0);
    const CoupledTrace tr = run_coupled(r.loss, r.schedule, s, s, path, w0);
    CHECK_FALSE(tr.first_difference.has_value());
    for (double d : tr.distance) CHECK(d == 0.0);
    CHECK(tr.first.w_bar == tr.second.w_bar);
  }
}

TEST_CASE("coupled outputs equal independent runs and stay together before the first difference") {
  for (const auto& r : regimes()) {
    for (auto mode : {SamplerMode::kWithReplacement, SamplerMode::kWithoutReplacement}) {
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t n = 12, T = 12;
        const Dataset s = sample_dataset(r.distro, n, seed);
        const std::size_t i = seed % n;
        const Dataset sp = make_neighbor(s, i, r.distro, seed + 100);
        const RandomPath path = draw_path(mode, n, T, seed + 200);
        const Vector w0(3, 0.0);
        const CoupledTrace tr = run_coupled(r.loss, r.schedule, s, sp, path, w0);

        CHECK(tr.first.w_bar == run_sgd(r.loss, r.schedule, s, path, w0).w_bar);
        CHECK(tr.second.w_bar == run_sgd(r.loss, r.schedule, sp, path, w0).w_bar);
        CHECK(tr.first.w_last == run_sgd(r.loss, r.schedule, s, path, w0).w_last);

        const auto hit = std::find(path.indices.begin(), path.indices.end(), i);
        if (hit == path.indices.end()) {
          CHECK_FALSE(tr.first_difference.has_value());
        } else {
          REQUIRE(tr.first_difference.has_value());
          CHECK(*tr.first_difference == static_cast<std::size_t>(hit - path.indices.begin()) + 1);
        }
        const std::size_t t0 = tr.first_difference.value_or(T + 1);
        for (std::size_t t = 0; t <= T; ++t) {
          CHECK(tr.distance[t] >= 0.0);
          if (t < t0) CHECK(tr.distance[t] == 0.0);
          if (t >= 1) CHECK(tr.differs[t] == (path.indices[t - 1] == i ? 1 : 0));
        }
      }
    }
  }
  const Dataset a = sample_dataset(classification(), 4, 1);
  const Dataset b = sample_dataset(classification(), 5, 1);
  const LossSpec loss = LossSpec::derive(LossKind::kHinge, 1.0, 1.0, 1.0);
  const RandomPath path = draw_path(SamplerMode::kWithReplacement, 4, 3, 1);
  CHECK_THROWS_AS(run_coupled(loss, Schedule::constant(0.1), a, b, path, Vector(3, 0.0)),
                  std::invalid_argument);
}

TEST_CASE("per-step distance recursions hold on every coupled step") {
  AuditReport convex, nonsmooth, nonconvex;
  for (auto mode : {SamplerMode::kWithReplacement, SamplerMode::kWithoutReplacement}) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const std::size_t n = 16, T = 16;
      const Vector w0(3, 0.0);
      const auto rs = regimes();
      {
        const auto& r = rs[0];
        const Dataset s = sample_dataset(r.distro, n, seed);
        const Dataset sp = make_neighbor(s, seed % n, r.distro, seed + 1);
        const auto tr = run_coupled(r.loss, r.schedule, s, sp, draw_path(mode, n, T, seed), w0);
        convex += audit_smooth_convex(tr, r.loss.G);
        // beta_t = 0 => contraction, on its own
        for (std::size_t t = 1; t <= T; ++t) {
          if (!tr.differs[t]) CHECK(tr.distance[t] <= tr.distance[t - 1] + kAuditTolerance);
        }
      }
      for (std::size_t k : {1, 2}) {
        const auto& r = rs[k];
        const Dataset s = sample_dataset(r.distro, n, seed);
        const Dataset sp = make_neighbor(s, seed % n, r.distro, seed + 1);
        nonsmooth += audit_nonsmooth_trajectory(
            run_coupled(r.loss, r.schedule, s, sp, draw_path(mode, n, T, seed), w0), r.loss.G);
      }
      {
        const auto& r = rs[3];
        const Dataset s = sample_dataset(r.distro, n, seed);
        const Dataset sp = make_neighbor(s, seed % n, r.distro, seed + 1);
        nonconvex += audit_smooth_nonconvex(
            run_coupled(r.loss, r.schedule, s, sp, draw_path(mode, n, T, seed), w0), r.loss.G,
            *r.loss.L);
      }
    }
  }
  CHECK(convex.checks == 2 * 100 * 16);
  CHECK(convex.violations == 0);
  CHECK(nonsmooth.violations == 0);
  CHECK(nonconvex.violations == 0);
}

TEST_CASE("audits flag a planted violation") {
  CoupledTrace tr;
  tr.etas = {0.1, 0.1};
  tr.distance = {0.0, 0.0, 0.5};
  tr.differs = {0, 0, 0};
  const AuditReport a = audit_smooth_convex(tr, 1.0);
  CHECK(a.checks == 2);
  CHECK(a.violations == 1);
  CHECK(a.worst_excess == doctest::Approx(0.5));
  CHECK(audit_smooth_nonconvex(tr, 1.0, 1.0).violations == 1);
  CHECK(audit_nonsmooth_trajectory(tr, 1.0).violations == 1);

  tr.differs = {0, 0, 1};
  tr.first_difference = 2;
  CHECK(audit_smooth_convex(tr, 1.0).violations == 1);  // 0.5 > 0 + 2 * 0.1
  CHECK(audit_smooth_convex(tr, 3.0).violations == 0);  // 0.5 <= 0.6
  CHECK(audit_nonsmooth_trajectory(tr, 3.0).violations == 0);
}

TEST_CASE("without-replacement first-hit time is uniform over the steps") {
  // 10^4 coupled runs with T = N = 16: t_0 is the position of the replaced
  // index in the permutation. Chi-square with 15 degrees of freedom; the 0.99
  // quantile is 30.5779.
  const std::size_t n = 16, runs = 10000;
  const auto r = regimes()[0];
  const Dataset s = sample_dataset(r.distro, n, 1);
  const Dataset sp = make_neighbor(s, 5, r.distro, 2);
  const Vector etas = r.schedule.materialize(n);
  std::vector<double> count(n, 0.0);
  for (std::size_t run = 0; run < runs; ++run) {
    const RandomPath path =
        draw_path(SamplerMode::kWithoutReplacement, n, n, derive_seed(77, "t0", run));
    const auto tr = run_coupled(r.loss, etas, s, sp, path, Vector(3, 0.0));
    REQUIRE(tr.first_difference.has_value());
    count[*tr.first_difference - 1] += 1.0;
  }
  const double expected = static_cast<double>(runs) / n;
  double chi2 = 0.0;
  for (double c : count) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 30.5779);
}

TEST_CASE("nonnegative sequences bounded through their own partial sums") {
  // If u_t^2 <= S_t + sum_{tau<=t} alpha_tau u_tau with S increasing and
  // alpha >= 0, then u_t <= sqrt(S_t) + sum_{tau<=t} alpha_tau. Sequences are
  // built at or below the largest u_t the hypothesis allows.
  Rng rng(2024);
  std::size_t checked = 0;
  for (int seq = 0; seq < 10000; ++seq) {
    const std::size_t len = 1 + rng.index(30);
    double S = rng.uniform01();
    double acc = 0.0;        // sum alpha_tau u_tau, tau < t
    double alpha_sum = 0.0;  // sum alpha_tau, tau <= t
    for (std::size_t t = 1; t <= len; ++t) {
      S += rng.uniform01() * 2.0;
      const double alpha = rng.uniform01() < 0.2 ? 0.0 : rng.uniform01() * 3.0;
      alpha_sum += alpha;
      const double c = S + acc;
      const double u_max = 0.5 * (alpha + std::sqrt(alpha * alpha + 4.0 * c));
      const double u = rng.uniform01() < 0.5 ? u_max : u_max * rng.uniform01();
      REQUIRE(u * u <= (S + acc + alpha * u) * (1.0 + 1e-12));
      acc += alpha * u;
      const double rhs = std::sqrt(S) + alpha_sum;
      CHECK(u <= rhs * (1.0 + 1e-12));
      ++checked;
    }
  }
  CHECK(checked > 10000);
}
