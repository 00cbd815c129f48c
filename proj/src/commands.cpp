#include "stabilab/commands.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "stabilab/csv.hpp"
#include "stabilab/parallel.hpp"
#include "stabilab/rng.hpp"

namespace stabilab {
namespace {

using nlohmann::json;

// Raised for problems that make a config unusable for a given command, after
// the generic schema checks have passed.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

void require_single(const ExperimentConfig& cfg, const std::string& cmd, bool need_k) {
  if (cfg.losses.size() != 1) throw UsageError(cmd + ": takes a single loss, not a sweep");
  if (cfg.N.size() != 1) throw UsageError(cmd + ": takes a single N, not a sweep");
  if (need_k && cfg.K.size() != 1) throw UsageError(cmd + ": needs exactly one K (config 'K' or --k)");
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << content;
  os.flush();
  if (!os) throw std::runtime_error("failed writing '" + path + "'");
}

// Fails early, before any computation, when the output path is unusable.
void probe_writable(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::app);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
}

}  // namespace

std::string to_string(Command c) {
  switch (c) {
    case Command::kStability: return "stability";
    case Command::kBounds: return "bounds";
    case Command::kBoost: return "boost";
    case Command::kExperiment: return "experiment";
    case Command::kTraj: return "traj";
  }
  return "unknown";
}

Command command_from_string(const std::string& s) {
  for (Command c : {Command::kStability, Command::kBounds, Command::kBoost, Command::kExperiment, Command::kTraj}) {
    if (to_string(c) == s) return c;
  }
  throw std::invalid_argument("unknown subcommand '" + s + "'");
}

std::string render_stability_csv(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "trial,regime,sampler,N,T,schedule,delta_loss\n";
  for (std::size_t li = 0; li < cfg.losses.size(); ++li) {
    for (std::size_t n : cfg.N) {
      const LossSpec& loss = cfg.losses[li];
      SgdProblem problem{loss, cfg.schedule, cfg.distro, n, cfg.horizon(n), cfg.sampler};
      StabilityOptions opts;
      opts.index_mode = cfg.index_mode;
      opts.fixed_index = cfg.index;
      opts.trials = cfg.trials;
      opts.seed = derive_seed(derive_seed(cfg.seed, "stability/loss", li), "stability/N", n);
      opts.parallel = cfg.parallel;
      const StabilityEstimate est = estimate_l2_stability(problem, opts);
      const std::string prefix = to_string(loss.regime()) + "," + to_string(cfg.sampler) + "," +
                                 std::to_string(n) + "," + std::to_string(problem.T) + "," + est.schedule + ",";
      for (std::size_t t = 0; t < est.deltas.size(); ++t) {
        os << t << ',' << prefix << format_double(est.deltas[t]) << '\n';
      }
    }
  }
  return os.str();
}

std::string render_bounds_csv(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "regime,sampler,N,T,schedule,gamma_theory,variant\n";
  for (const auto& loss : cfg.losses) {
    for (std::size_t n : cfg.N) {
      const std::size_t T = cfg.horizon(n);
      const BoundReport b = theoretical_bound(loss, cfg.sampler, n, cfg.schedule.materialize(T), cfg.variant);
      os << to_string(b.regime) << ',' << to_string(cfg.sampler) << ',' << n << ',' << T << ','
         << cfg.schedule.describe() << ',' << format_double(b.gamma) << ',' << to_string(cfg.variant) << '\n';
    }
  }
  return os.str();
}

std::string render_boost_csv(const ExperimentConfig& cfg) {
  require_single(cfg, "boost", true);
  const std::size_t n = cfg.N[0], K = cfg.K[0];
  const Learner learner{cfg.losses[0], cfg.schedule, cfg.horizon(n), cfg.sampler};
  std::vector<std::string> rows(cfg.runs);
  parallel_for(cfg.runs, cfg.parallel, [&](std::size_t r) {
    const Dataset s = sample_dataset(cfg.distro, n, derive_seed(cfg.seed, "boost/dataset", r));
    const SubbagResult res = run_subbagging(learner, s, K, cfg.rule, derive_seed(cfg.seed, "boost/paths", r));
    std::vector<Vector> models;
    for (const auto& c : res.candidates) models.push_back(c.w_bar);
    const auto pops = estimate_population_risks(learner.loss, models, cfg.distro, cfg.m_pop,
                                                derive_seed(cfg.seed, "boost/population", r));
    std::ostringstream os;
    for (std::size_t k = 0; k < K; ++k) {
      const Candidate& c = res.candidates[k];
      os << r << ',' << k << ',' << format_double(c.train_risk) << ',' << format_double(c.validation_risk) << ','
         << format_double(c.gap) << ',' << (k == res.selected ? 1 : 0) << ',' << format_double(pops[k].value) << ','
         << format_double(std::abs(pops[k].value - c.full_risk)) << '\n';
    }
    rows[r] = os.str();
  });
  std::string out = "run,k,train_risk,val_risk,gap,selected,pop_risk,pop_gap\n";
  for (const auto& row : rows) out += row;
  return out;
}

std::string render_traj_csv(const ExperimentConfig& cfg) {
  require_single(cfg, "traj", false);
  const std::size_t n = cfg.N[0], T = cfg.horizon(n);
  const LossSpec& loss = cfg.losses[0];
  SgdProblem problem{loss, cfg.schedule, cfg.distro, n, T, cfg.sampler};
  problem.validate();
  const Dataset s = sample_dataset(cfg.distro, n, derive_seed(cfg.seed, "traj/dataset", 0));
  const RandomPath path = draw_path(cfg.sampler, n, T, derive_seed(cfg.seed, "traj/path", 0));
  const Vector etas = problem.etas();
  const Vector w0(cfg.distro.dim, 0.0);
  const SgdOutput out = run_sgd(loss, etas, s, path, w0, SgdOptions{true});
  std::ostringstream os;
  os << "t,eta,xi,wnorm,loss\n";
  for (std::size_t t = 0; t <= T; ++t) {
    const Vector& w = out.trajectory[t];
    os << t << ',';
    if (t > 0) os << format_double(etas[t - 1]);
    os << ',';
    if (t > 0) os << path.indices[t - 1];
    os << ',' << format_double(norm2(w)) << ',' << format_double(empirical_risk(loss, w, s)) << '\n';
  }
  return os.str();
}

json to_json(const RunManifest& m) {
  json outputs = json::array();
  for (const auto& o : m.outputs) {
    outputs.push_back({{"path", o.path}, {"fnv1a64", hex64(o.fnv1a64)}, {"bytes", o.bytes}});
  }
  return json{{"stabilab_manifest", true},
              {"command", m.command},
              {"version", m.version},
              {"config_hash", m.config_hash},
              {"wall_clock_seconds", m.wall_clock_seconds},
              {"outputs", outputs},
              {"config", m.config}};
}

json unwrap_manifest(const json& j) {
  if (j.is_object() && j.contains("stabilab_manifest")) return j.at("config");
  return j;
}

int run_command(Command cmd, const json& raw_in, std::ostream& log) {
  const json raw = unwrap_manifest(raw_in);
  json canonical;
  std::string out_path;
  ExperimentConfig cfg;
  AcceptanceConfig acc;
  try {
    if (cmd == Command::kExperiment) {
      if (!is_acceptance_config(raw)) throw ConfigError({"experiment: config needs \"experiment\": \"acceptance\""});
      acc = validate_acceptance_config(raw);
      canonical = to_json(acc);
      out_path = acc.out;
    } else {
      if (is_acceptance_config(raw)) throw ConfigError({to_string(cmd) + ": acceptance configs only run under 'experiment'"});
      cfg = validate_config(raw);
      if (cmd == Command::kBoost) require_single(cfg, "boost", true);
      if (cmd == Command::kTraj) require_single(cfg, "traj", false);
      canonical = to_json(cfg);
      out_path = cfg.out;
    }
  } catch (const ConfigError& e) {
    log << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    log << "invalid configuration: " << e.what() << '\n';
    return kExitInvalid;
  }

  const auto start = std::chrono::steady_clock::now();
  std::string csv;
  int status = kExitOk;
  try {
    if (!out_path.empty()) probe_writable(out_path);
    log << "stabilab " << to_string(cmd) << ": running\n";
    switch (cmd) {
      case Command::kStability: csv = render_stability_csv(cfg); break;
      case Command::kBounds: csv = render_bounds_csv(cfg); break;
      case Command::kBoost: csv = render_boost_csv(cfg); break;
      case Command::kTraj: csv = render_traj_csv(cfg); break;
      case Command::kExperiment: {
        const AcceptanceSettings settings{acc.seed, acc.parallel};
        const auto results = run_acceptance(acc.criteria, settings, true);
        for (const auto& r : results) {
          log << "[" << (r.passed ? "PASS" : "FAIL") << "] criterion " << r.id << " (" << r.title
              << "): " << r.summary << '\n';
          if (!r.passed) status = kExitRuntime;
        }
        csv = criteria_csv(results);
        break;
      }
    }
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitRuntime;
  }

  try {
    if (out_path.empty()) {
      std::cout << csv;
      std::cout.flush();
    } else {
      write_file(out_path, csv);
      RunManifest m;
      m.command = to_string(cmd);
      m.config = canonical;
      m.config_hash = hex64(fnv1a64(canonical.dump()));
      m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      m.outputs.push_back({out_path, fnv1a64(csv), csv.size()});
      write_file(out_path + ".manifest.json", to_json(m).dump(2) + "\n");
      log << "wrote " << out_path << " (" << csv.size() << " bytes)\n";
    }
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return status;
}

}  // namespace stabilab
