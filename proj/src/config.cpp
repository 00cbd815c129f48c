#include "stabilab/config.hpp"

#include <algorithm>
#include <functional>
#include <set>

namespace stabilab {
namespace {

using nlohmann::json;

const std::set<std::string> kRequired{"loss", "distro", "schedule", "N"};
const std::set<std::string> kOptional{"T",    "sampler", "K",       "rule",   "trials", "runs",
                                      "m_pop", "seed",   "parallel", "out",   "variant",
                                      "index_mode", "index"};
const std::set<std::string> kAcceptanceKeys{"experiment", "seed", "parallel", "criteria", "out"};

std::string join(const std::vector<std::string>& parts) {
  std::string s = "invalid configuration:";
  for (const auto& p : parts) s += "\n  - " + p;
  return s;
}

// Runs fn, turning any exception into a recorded violation.
void collect(std::vector<std::string>& errors, const std::string& where, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    errors.push_back(where + ": " + e.what());
  }
}

std::size_t positive_count(const json& v, const std::string& key) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw std::invalid_argument("'" + key + "' must be a non-negative integer");
  }
  const auto n = v.get<std::size_t>();
  if (n == 0) throw std::invalid_argument("'" + key + "' must be >= 1");
  return n;
}

std::vector<std::size_t> count_list(const json& v, const std::string& key) {
  std::vector<std::size_t> out;
  if (v.is_array()) {
    if (v.empty()) throw std::invalid_argument("'" + key + "' sweep list is empty");
    for (const auto& e : v) out.push_back(positive_count(e, key));
  } else {
    out.push_back(positive_count(v, key));
  }
  return out;
}

json count_list_json(const std::vector<std::size_t>& v) {
  if (v.size() == 1) return v.front();
  return v;
}

IndexMode index_mode_from_string(const std::string& s) {
  if (s == "fixed") return IndexMode::kFixed;
  if (s == "uniform") return IndexMode::kUniform;
  throw std::invalid_argument("unknown index_mode '" + s + "' (expected fixed|uniform)");
}

std::string to_string(IndexMode m) { return m == IndexMode::kFixed ? "fixed" : "uniform"; }

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error(join(violations)), violations_(std::move(violations)) {}

ExperimentConfig validate_config(const std::string& raw_json) {
  json j;
  try {
    j = json::parse(raw_json);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("malformed JSON: ") + e.what()});
  }
  return validate_config(j);
}

ExperimentConfig validate_config(const json& j) {
  if (!j.is_object()) throw ConfigError({"configuration must be a JSON object"});
  std::vector<std::string> errors;
  for (const auto& [key, _] : j.items()) {
    if (!kRequired.count(key) && !kOptional.count(key)) errors.push_back("unknown key '" + key + "'");
  }
  for (const auto& key : kRequired) {
    if (!j.contains(key)) errors.push_back("missing required key '" + key + "'");
  }

  ExperimentConfig cfg;
  bool distro_ok = false, schedule_ok = false, loss_ok = false, n_ok = false;
  if (j.contains("distro")) {
    collect(errors, "distro", [&] {
      cfg.distro = j.at("distro").get<DistributionSpec>();
      cfg.distro.validate();
      distro_ok = true;
    });
  }
  if (j.contains("loss")) {
    collect(errors, "loss", [&] {
      const json& l = j.at("loss");
      const std::vector<json> items = l.is_array() ? l.get<std::vector<json>>() : std::vector<json>{l};
      if (items.empty()) throw std::invalid_argument("loss sweep list is empty");
      for (const auto& item : items) cfg.losses.push_back(parse_loss_spec(item, cfg.distro.bx, cfg.distro.by));
      loss_ok = true;
    });
  }
  if (j.contains("schedule")) {
    collect(errors, "schedule", [&] {
      cfg.schedule = j.at("schedule").get<Schedule>();
      schedule_ok = true;
    });
  }
  if (j.contains("N")) collect(errors, "N", [&] { cfg.N = count_list(j.at("N"), "N"); n_ok = true; });
  bool t_ok = true;
  if (j.contains("T")) {
    t_ok = false;
    collect(errors, "T", [&] {
      const json& t = j.at("T");
      if (t.is_string()) {
        if (t.get<std::string>() != "N") throw std::invalid_argument("'T' must be an integer or \"N\"");
      } else {
        cfg.T = positive_count(t, "T");
      }
      t_ok = true;
    });
  }
  if (j.contains("K")) collect(errors, "K", [&] { cfg.K = count_list(j.at("K"), "K"); });
  if (j.contains("sampler")) {
    collect(errors, "sampler", [&] { cfg.sampler = sampler_mode_from_string(j.at("sampler").get<std::string>()); });
  }
  if (j.contains("rule")) {
    collect(errors, "rule", [&] { cfg.rule = selection_rule_from_string(j.at("rule").get<std::string>()); });
  }
  if (j.contains("variant")) {
    collect(errors, "variant", [&] { cfg.variant = bound_variant_from_string(j.at("variant").get<std::string>()); });
  }
  if (j.contains("index_mode")) {
    collect(errors, "index_mode", [&] { cfg.index_mode = index_mode_from_string(j.at("index_mode").get<std::string>()); });
  }
  if (j.contains("index")) {
    collect(errors, "index", [&] {
      const json& v = j.at("index");
      if (!v.is_number_integer() || v.get<long long>() < 0) throw std::invalid_argument("'index' must be a non-negative integer");
      cfg.index = v.get<std::size_t>();
    });
  }
  if (j.contains("trials")) {
    collect(errors, "trials", [&] {
      cfg.trials = positive_count(j.at("trials"), "trials");
      if (cfg.trials < 2) throw std::invalid_argument("'trials' must be >= 2");
    });
  }
  if (j.contains("runs")) collect(errors, "runs", [&] { cfg.runs = positive_count(j.at("runs"), "runs"); });
  if (j.contains("m_pop")) {
    collect(errors, "m_pop", [&] {
      cfg.m_pop = positive_count(j.at("m_pop"), "m_pop");
      if (cfg.m_pop < 2) throw std::invalid_argument("'m_pop' must be >= 2");
    });
  }
  if (j.contains("seed")) {
    collect(errors, "seed", [&] {
      const json& v = j.at("seed");
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
        throw std::invalid_argument("'seed' must be an unsigned 64-bit integer");
      }
      cfg.seed = v.get<std::uint64_t>();
    });
  }
  if (j.contains("parallel")) collect(errors, "parallel", [&] { cfg.parallel = positive_count(j.at("parallel"), "parallel"); });
  if (j.contains("out")) {
    collect(errors, "out", [&] {
      if (!j.at("out").is_string()) throw std::invalid_argument("'out' must be a string path");
      cfg.out = j.at("out").get<std::string>();
    });
  }

  // Cross-field preconditions, checked for every point of the sweep.
  if (distro_ok && loss_ok) {
    for (const auto& loss : cfg.losses) {
      if (cfg.distro.family != Family::kPointMass && cfg.distro.w_true.size() == cfg.distro.dim &&
          norm2(cfg.distro.w_true) > loss.D * (1.0 + 1e-12)) {
        errors.push_back("distro.w_true has norm " + std::to_string(norm2(cfg.distro.w_true)) +
                         " outside the parameter ball of radius D = " + std::to_string(loss.D));
      }
    }
  }
  if (n_ok && t_ok) {
    for (std::size_t n : cfg.N) {
      const std::size_t T = cfg.horizon(n);
      if (cfg.sampler == SamplerMode::kWithoutReplacement && T > n) {
        errors.push_back("without-replacement sampling is single-epoch: T = " + std::to_string(T) +
                         " exceeds N = " + std::to_string(n));
      }
      for (std::size_t k : cfg.K) {
        if (n % k != 0) {
          errors.push_back("N = " + std::to_string(n) + " is not a multiple of K = " + std::to_string(k) +
                           " (subbagging splits S into K equal disjoint subsets)");
          continue;
        }
        if (k < 2) errors.push_back("K = 1 leaves the validation set S \\ S_1 empty; need K >= 2");
        if (cfg.sampler == SamplerMode::kWithoutReplacement && T > n / k) {
          errors.push_back("without-replacement sampling is single-epoch: T = " + std::to_string(T) +
                           " exceeds the subset size N/K = " + std::to_string(n / k));
        }
      }
      if (cfg.index_mode == IndexMode::kFixed && cfg.index >= n) {
        errors.push_back("index = " + std::to_string(cfg.index) + " is out of range for N = " + std::to_string(n));
      }
      if (schedule_ok && loss_ok) {
        for (const auto& loss : cfg.losses) {
          collect(errors, "schedule at N = " + std::to_string(n), [&] {
            check_schedule_cap(loss, cfg.schedule.materialize(T));
          });
        }
      }
    }
  }

  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  if (cfg.losses.size() == 1) {
    j["loss"] = cfg.losses.front();
  } else {
    j["loss"] = json::array();
    for (const auto& l : cfg.losses) j["loss"].push_back(l);
  }
  j["distro"] = cfg.distro;
  j["schedule"] = cfg.schedule;
  j["sampler"] = to_string(cfg.sampler);
  j["N"] = count_list_json(cfg.N);
  if (cfg.T) {
    j["T"] = *cfg.T;
  } else {
    j["T"] = "N";
  }
  if (!cfg.K.empty()) j["K"] = count_list_json(cfg.K);
  j["rule"] = to_string(cfg.rule);
  j["trials"] = cfg.trials;
  j["runs"] = cfg.runs;
  j["m_pop"] = cfg.m_pop;
  j["seed"] = cfg.seed;
  j["parallel"] = cfg.parallel;
  if (!cfg.out.empty()) j["out"] = cfg.out;
  j["variant"] = to_string(cfg.variant);
  j["index_mode"] = to_string(cfg.index_mode);
  j["index"] = cfg.index;
  return j;
}

std::string serialize(const ExperimentConfig& cfg) { return to_json(cfg).dump(2); }

bool is_acceptance_config(const json& j) { return j.is_object() && j.contains("experiment"); }

AcceptanceConfig validate_acceptance_config(const json& j) {
  std::vector<std::string> errors;
  AcceptanceConfig cfg;
  for (const auto& [key, _] : j.items()) {
    if (!kAcceptanceKeys.count(key)) errors.push_back("unknown key '" + key + "'");
  }
  collect(errors, "experiment", [&] {
    if (j.at("experiment") != "acceptance") throw std::invalid_argument("only \"acceptance\" is supported");
  });
  if (j.contains("seed")) {
    collect(errors, "seed", [&] {
      if (!j.at("seed").is_number_unsigned()) throw std::invalid_argument("'seed' must be an unsigned 64-bit integer");
      cfg.seed = j.at("seed").get<std::uint64_t>();
    });
  }
  if (j.contains("parallel")) collect(errors, "parallel", [&] { cfg.parallel = positive_count(j.at("parallel"), "parallel"); });
  if (j.contains("criteria")) {
    collect(errors, "criteria", [&] {
      cfg.criteria.clear();
      for (const auto& c : j.at("criteria")) {
        const int id = c.get<int>();
        if (id < 1 || id > 11) throw std::invalid_argument("criterion ids run from 1 to 11");
        cfg.criteria.push_back(id);
      }
      std::sort(cfg.criteria.begin(), cfg.criteria.end());
      cfg.criteria.erase(std::unique(cfg.criteria.begin(), cfg.criteria.end()), cfg.criteria.end());
      if (cfg.criteria.empty()) throw std::invalid_argument("criteria list is empty");
    });
  }
  if (j.contains("out")) {
    collect(errors, "out", [&] { cfg.out = j.at("out").get<std::string>(); });
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

json to_json(const AcceptanceConfig& cfg) {
  json j{{"experiment", "acceptance"}, {"seed", cfg.seed}, {"parallel", cfg.parallel}, {"criteria", cfg.criteria}};
  if (!cfg.out.empty()) j["out"] = cfg.out;
  return j;
}

}  // namespace stabilab
