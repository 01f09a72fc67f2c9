#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ntrans/branching.hpp"
#include "ntrans/geometry.hpp"
#include "ntrans/operators.hpp"
#include "ntrans/species.hpp"

namespace ntrans {

struct SolverParams {
  double dt = std::numeric_limits<double>::quiet_NaN();  // default 0.2 * admissible
  int n_picard = 80;
  int n_quad = 48;
  double eigen_delta = std::numeric_limits<double>::quiet_NaN();
  double eigen_tol = 1e-12;
  double root_tol = 1e-10;
  double lambda_floor = std::numeric_limits<double>::quiet_NaN();
};

struct SourceSpec {
  int species = 0;  // 0-based in memory, 1-based in files
  Vec3 position;
  int velocity = 0;
};

struct DetectorSpec {
  enum class Kind { kConstant, kIndicator, kFile } kind = Kind::kConstant;
  double value = 1.0;
  std::vector<int> species;  // indicator: empty selects all species
  double x_min = -std::numeric_limits<double>::infinity();
  double x_max = std::numeric_limits<double>::infinity();
  std::string file;  // file kind: CSV of species,cell,velocity,value
};

struct Scenario {
  std::string name;
  std::string path;
  std::string library_path;
  Domain domain = Domain::slab(0.0, 1.0);
  int nx = 1, ny = 1, nz = 1;
  SourceSpec source;
  DetectorSpec detector;
  std::vector<double> t_grid;
  long n_paths = 10000;
  std::uint64_t seed = 1;
  long population_cap = 10000000;
  bool deterministic_exact = false;
  SolverParams solver;
  std::vector<std::string> routes;
  std::uint64_t content_hash = 0;  // scenario + library bytes
};

struct ParsedScenario {
  std::shared_ptr<CrossSectionLibrary> library;
  Scenario scenario;
  std::vector<std::string> errors;  // located as "field: message"
  bool ok() const { return errors.empty(); }
};

// Loads and fully validates a scenario file plus its library file. Never
// throws on content problems; every located error lands in `errors`.
ParsedScenario parse_scenario(const std::string& path);

// Library file loading, exposed for tests and the validate subcommand.
std::shared_ptr<CrossSectionLibrary> load_library(const std::string& path,
                                                  const Domain& domain, int nx, int ny,
                                                  int nz,
                                                  std::vector<std::string>& errors);

// All detectors materialise to a per-cell grid so the Monte Carlo engines
// and the deterministic routes score the identical function.
Vector detector_grid(const ParsedScenario& parsed);
DetectorFn detector_fn(const ParsedScenario& parsed,
                       const std::shared_ptr<const Vector>& grid);

// Deterministic per-purpose seed streams, so e.g. branch and walk estimates
// of one scenario are statistically independent.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose);

struct RunOptions {
  std::string out_dir = ".";
  std::string route;  // subcommand: validate|branch|walk|solve|eigen|compare
  std::string sub_route;  // solve: acp|mild|both; eigen: power|root|both|mc
  std::optional<std::uint64_t> seed;
  std::optional<long> n_paths;
  int workers = 1;
  bool check = false;
};

// Dispatches one route, writes the CSV artifacts, returns the process exit
// code (0 success, 1 failed --check, 2 usage/content errors).
int run_scenario(const ParsedScenario& parsed, const RunOptions& options);

}  // namespace ntrans
