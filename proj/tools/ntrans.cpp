#include <CLI11.hpp>

#include <iostream>

#include "ntrans/scenario.hpp"
#include "ntrans/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-species neutron transport engine"};
  app.set_version_flag("--version", ntrans::kVersion);
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  long n_paths = 0;
  bool paths_set = false;
  int workers = 1;
  bool check = false;
  std::string solve_route = "both";
  std::string eigen_route = "both";

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--scenario", scenario_path, "Scenario file")->required();
    cmd->add_option("--out", out_dir, "Output directory for CSV artifacts");
    cmd->add_option("--seed", seed, "Override the scenario seed")
        ->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--paths", n_paths, "Override the scenario path count")
        ->each([&](const std::string&) { paths_set = true; });
    cmd->add_option("--workers", workers, "Worker threads (results are identical)");
    cmd->add_flag("--check", check, "Exit nonzero when a built-in check fails");
  };

  add_common(app.add_subcommand("validate", "Audit the library invariants"));
  add_common(app.add_subcommand("branch", "Branching-process estimate of psi_t[g]"));
  add_common(app.add_subcommand("walk", "Weighted random-walk estimate of phi_t[g]"));
  auto* solve = app.add_subcommand("solve", "Deterministic semigroup evolution");
  add_common(solve);
  solve->add_option("--route", solve_route, "acp | mild | both");
  auto* eigen = app.add_subcommand("eigen", "Criticality eigenvalue analysis");
  add_common(eigen);
  eigen->add_option("--route", eigen_route, "power | root | both | mc");
  add_common(app.add_subcommand("compare", "Run all routes and diff them"));

  CLI11_PARSE(app, argc, argv);

  const auto parsed = ntrans::parse_scenario(scenario_path);

  ntrans::RunOptions options;
  options.out_dir = out_dir;
  options.route = app.get_subcommands().front()->get_name();
  options.sub_route = options.route == "solve" ? solve_route
                      : options.route == "eigen" ? eigen_route
                                                 : "";
  if (seed_set) options.seed = seed;
  if (paths_set) options.n_paths = n_paths;
  options.workers = workers;
  options.check = check;

  return ntrans::run_scenario(parsed, options);
}
