#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "stabilab/commands.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> parallel;
  std::optional<std::string> variant;
  std::optional<std::size_t> trials;
  std::optional<std::size_t> k;
  std::optional<std::string> rule;
};

void add_flags(CLI::App* sub, Flags& f, bool experiment) {
  sub->add_option("--config", f.config, "JSON config (or a run manifest)")->required();
  sub->add_option("--seed", f.seed, "root seed (u64)");
  sub->add_option("--out", f.out, "output CSV path; a manifest is written next to it");
  sub->add_option("--parallel", f.parallel, "worker threads")->check(CLI::PositiveNumber);
  if (experiment) return;
  sub->add_option("--variant", f.variant, "bound variant")->check(CLI::IsMember({"appendix", "maintext"}));
  sub->add_option("--trials", f.trials, "Monte Carlo trials");
  sub->add_option("--k", f.k, "number of subsets");
  sub->add_option("--rule", f.rule, "selection rule")->check(CLI::IsMember({"gap", "risk"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stabilab: stability estimation, stability bounds and confidence-boosted subbagging for SGD"};
  app.require_subcommand(1);
  Flags flags;
  for (const char* name : {"stability", "bounds", "boost", "experiment", "traj"}) {
    auto* sub = app.add_subcommand(name);
    add_flags(sub, flags, std::string(name) == "experiment");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : stabilab::kExitInvalid;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  const stabilab::Command cmd = stabilab::command_from_string(name);

  std::ifstream in(flags.config);
  if (!in) {
    std::cerr << "cannot read config '" << flags.config << "'\n";
    return stabilab::kExitInvalid;
  }
  nlohmann::json raw;
  try {
    raw = stabilab::unwrap_manifest(nlohmann::json::parse(in));
  } catch (const std::exception& e) {
    std::cerr << "malformed JSON in '" << flags.config << "': " << e.what() << '\n';
    return stabilab::kExitInvalid;
  }
  if (!raw.is_object()) {
    std::cerr << "config must be a JSON object\n";
    return stabilab::kExitInvalid;
  }
  if (flags.seed) raw["seed"] = *flags.seed;
  if (flags.out) raw["out"] = *flags.out;
  if (flags.parallel) raw["parallel"] = *flags.parallel;
  if (flags.variant) raw["variant"] = *flags.variant;
  if (flags.trials) raw["trials"] = *flags.trials;
  if (flags.k) raw["K"] = *flags.k;
  if (flags.rule) raw["rule"] = *flags.rule;
  return stabilab::run_command(cmd, raw, std::cerr);
}
