#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sqc/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"sqc: stochastic quantization simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::optional<sqc::Step> steps;
  std::string mode;
  std::string seeds;
  std::string out = ".";

  auto* simulate = app.add_subcommand("simulate", "Run a closed-loop scenario and write trajectory.csv");
  simulate->add_option("--scenario", scenario_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  simulate->add_option("--seed", seed, "Override the scenario seed");
  simulate->add_option("--steps", steps, "Override the horizon");
  simulate->add_option("--mode", mode, "belief or sampled")->check(CLI::IsMember({"belief", "sampled"}));
  simulate->add_option("--seeds", seeds, "Seed sweep a..b, one subdirectory per seed");
  simulate->add_option("--out", out, "Output directory");

  std::string obs_path;
  auto* filter = app.add_subcommand("filter", "Filter an observation CSV and write beliefs.csv");
  filter->add_option("--scenario", scenario_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  filter->add_option("--obs", obs_path, "Observation CSV (step,y1,...,yk)")->required()->check(CLI::ExistingFile);
  filter->add_option("--out", out, "Output directory");

  std::string level = "fast";
  std::optional<std::string> validate_out;
  std::string mutation = "none";
  auto* validate = app.add_subcommand("validate", "Run the oracle suite and print a JSON report");
  validate->add_option("--level", level, "fast or full")->check(CLI::IsMember({"fast", "full"}));
  validate->add_option("--out", validate_out, "Directory for validation.json");
  validate->add_option("--mutation", mutation, "Inject a known defect to check the suite fails (gain-sign)")
      ->check(CLI::IsMember({"none", "gain-sign"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sqc::cli::ExitCode::failure;
  }

  try {
    if (*simulate) {
      sqc::cli::SimulateOptions opt;
      opt.seed = seed;
      opt.steps = steps;
      if (!mode.empty()) opt.mode = sqc::parse_mode(mode);
      if (!seeds.empty()) opt.seeds = sqc::cli::parse_seed_range(seeds);
      opt.out = out;
      return sqc::cli::cmd_simulate(sqc::parse_scenario(scenario_path), opt);
    }
    if (*filter) return sqc::cli::cmd_filter(sqc::parse_scenario(scenario_path), obs_path, out);
    if (*validate) {
      std::optional<std::filesystem::path> dir;
      if (validate_out) dir = *validate_out;
      return sqc::cli::cmd_validate(sqc::cli::parse_level(level), dir, sqc::cli::parse_mutation(mutation));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return sqc::cli::ExitCode::failure;
  }
  return sqc::cli::ExitCode::failure;
}
