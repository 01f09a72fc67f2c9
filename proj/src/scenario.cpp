#include "ntrans/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ntrans/criticality.hpp"
#include "ntrans/csv.hpp"
#include "ntrans/random_walk.hpp"
#include "ntrans/version.hpp"

namespace ntrans {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_file(const std::string& path, std::vector<std::string>& errors) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    errors.push_back(path + ": cannot open file");
    return {};
  }
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Guarded field access that records a located error instead of throwing.
template <typename T>
std::optional<T> field(const json& obj, const std::string& where, const std::string& key,
                       std::vector<std::string>& errors) {
  if (!obj.contains(key)) {
    errors.push_back(where + "." + key + ": missing field");
    return std::nullopt;
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    errors.push_back(where + "." + key + ": " + e.what());
    return std::nullopt;
  }
}

template <typename T>
T field_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  return obj.at(key).get<T>();
}

std::optional<Domain> parse_domain(const json& j, std::vector<std::string>& errors) {
  const auto shape = field<std::string>(j, "domain", "shape", errors);
  if (!shape) return std::nullopt;
  try {
    if (*shape == "slab") {
      const auto lo = field<double>(j, "domain", "x_min", errors);
      const auto hi = field<double>(j, "domain", "x_max", errors);
      if (!lo || !hi) return std::nullopt;
      return Domain::slab(*lo, *hi);
    }
    if (*shape == "box") {
      const auto lo = field<std::vector<double>>(j, "domain", "lo", errors);
      const auto hi = field<std::vector<double>>(j, "domain", "hi", errors);
      if (!lo || !hi) return std::nullopt;
      if (lo->size() != 3 || hi->size() != 3) {
        errors.push_back("domain.lo/hi: need 3 components");
        return std::nullopt;
      }
      return Domain::box({(*lo)[0], (*lo)[1], (*lo)[2]}, {(*hi)[0], (*hi)[1], (*hi)[2]});
    }
    if (*shape == "ball") {
      const auto center = field<std::vector<double>>(j, "domain", "center", errors);
      const auto radius = field<double>(j, "domain", "radius", errors);
      if (!center || !radius) return std::nullopt;
      if (center->size() != 3) {
        errors.push_back("domain.center: need 3 components");
        return std::nullopt;
      }
      return Domain::ball({(*center)[0], (*center)[1], (*center)[2]}, *radius);
    }
  } catch (const std::exception& e) {
    errors.push_back(std::string("domain: ") + e.what());
    return std::nullopt;
  }
  errors.push_back("domain.shape: unknown shape '" + *shape + "'");
  return std::nullopt;
}

// Reads a nested numeric array into flat storage, checking every level's
// length and reporting the offending path.
bool read_nested(const json& node, const std::vector<int>& dims, std::size_t level,
                 const std::string& where, std::vector<double>& out,
                 std::vector<std::string>& errors) {
  if (level == dims.size()) {
    if (!node.is_number()) {
      errors.push_back(where + ": expected a number");
      return false;
    }
    out.push_back(node.get<double>());
    return true;
  }
  if (!node.is_array() || static_cast<int>(node.size()) != dims[level]) {
    errors.push_back(where + ": expected an array of length " +
                     std::to_string(dims[level]));
    return false;
  }
  for (std::size_t q = 0; q < node.size(); ++q)
    if (!read_nested(node[q], dims, level + 1, where + "[" + std::to_string(q) + "]",
                     out, errors))
      return false;
  return true;
}

}  // namespace

std::shared_ptr<CrossSectionLibrary> load_library(const std::string& path,
                                                  const Domain& domain, int nx, int ny,
                                                  int nz,
                                                  std::vector<std::string>& errors) {
  const std::string text = read_file(path, errors);
  if (text.empty() && !errors.empty()) return nullptr;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    errors.push_back(path + ": " + e.what());
    return nullptr;
  }

  const auto species = field<json>(j, "library", "species", errors);
  if (!species) return nullptr;
  const auto m = field<int>(*species, "library.species", "total", errors);
  const auto ell = field<int>(*species, "library.species", "prompt", errors);
  if (!m || !ell) return nullptr;
  SpeciesLayout layout{*m, *ell};
  if (layout.prompt < 1 || layout.prompt > layout.total) {
    errors.push_back("library.species: need 1 <= prompt <= total");
    return nullptr;
  }

  const auto vel = field<json>(j, "library", "velocities", errors);
  if (!vel) return nullptr;
  VelocityTable vtable;
  {
    const auto vmin = field<double>(*vel, "library.velocities", "v_min", errors);
    const auto vmax = field<double>(*vel, "library.velocities", "v_max", errors);
    const auto rows =
        field<std::vector<std::vector<double>>>(*vel, "library.velocities", "rows", errors);
    if (!vmin || !vmax || !rows) return nullptr;
    vtable.v_min = *vmin;
    vtable.v_max = *vmax;
    for (std::size_t q = 0; q < rows->size(); ++q) {
      if ((*rows)[q].size() != 4) {
        errors.push_back("library.velocities.rows[" + std::to_string(q) +
                         "]: expected [vx, vy, vz, w]");
        return nullptr;
      }
      vtable.velocity.push_back({(*rows)[q][0], (*rows)[q][1], (*rows)[q][2]});
      vtable.weight.push_back((*rows)[q][3]);
    }
  }
  const int K = vtable.count();
  if (K < 1) {
    errors.push_back("library.velocities.rows: need at least one velocity");
    return nullptr;
  }

  const int md = layout.delayed();
  std::vector<double> lambda = field_or<std::vector<double>>(j, "lambda_delay", {});
  if (static_cast<int>(lambda.size()) != md) {
    errors.push_back("library.lambda_delay: expected " + std::to_string(md) +
                     " entries");
    return nullptr;
  }

  const auto zones = field<json>(j, "library", "zones", errors);
  if (!zones || !zones->is_array() || zones->empty()) {
    errors.push_back("library.zones: need a non-empty array");
    return nullptr;
  }
  const int Z = static_cast<int>(zones->size());

  CrossSectionLibrary::Tables tables;
  tables.n_max = field_or<int>(j, "n_max", 1);
  tables.lambda_delay = lambda;

  // Per-zone tables are concatenated as [species][zone][...], so collect
  // zone-major first and transpose while flattening.
  std::vector<std::vector<double>> zone_sigma_s(Z), zone_sigma_f(Z), zone_pi_s(Z),
      zone_pi_f(Z), zone_m(Z);
  struct ZoneRegion {
    bool all = true;
    double x_min = 0.0, x_max = 0.0;
  };
  std::vector<ZoneRegion> regions(Z);

  for (int z = 0; z < Z; ++z) {
    const json& zj = (*zones)[z];
    const std::string where = "library.zones[" + std::to_string(z) + "]";
    if (zj.contains("x_range")) {
      const auto range = zj.at("x_range").get<std::vector<double>>();
      if (range.size() != 2) {
        errors.push_back(where + ".x_range: expected [lo, hi]");
        return nullptr;
      }
      regions[z] = {false, range[0], range[1]};
    }
    bool ok = true;
    ok &= zj.contains("sigma_s") &&
          read_nested(zj.at("sigma_s"), {layout.prompt, K}, 0, where + ".sigma_s",
                      zone_sigma_s[z], errors);
    ok &= zj.contains("sigma_f") &&
          read_nested(zj.at("sigma_f"), {layout.prompt, K}, 0, where + ".sigma_f",
                      zone_sigma_f[z], errors);
    ok &= zj.contains("pi_s") &&
          read_nested(zj.at("pi_s"), {layout.prompt, K, K}, 0, where + ".pi_s",
                      zone_pi_s[z], errors);
    ok &= zj.contains("pi_f") &&
          read_nested(zj.at("pi_f"), {layout.total, layout.prompt, K, K}, 0,
                      where + ".pi_f", zone_pi_f[z], errors);
    if (md > 0) {
      ok &= zj.contains("m_yield") &&
            read_nested(zj.at("m_yield"), {md, K}, 0, where + ".m_yield", zone_m[z],
                        errors);
    }
    if (!ok) {
      if (!zj.contains("sigma_s") || !zj.contains("sigma_f") || !zj.contains("pi_s") ||
          !zj.contains("pi_f") || (md > 0 && !zj.contains("m_yield")))
        errors.push_back(where + ": missing cross-section table");
      return nullptr;
    }
  }

  // Flatten to [i][z][...] order.
  auto splice = [Z](const std::vector<std::vector<double>>& per_zone, int n_outer,
                    int inner) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(n_outer) * Z * inner);
    for (int i = 0; i < n_outer; ++i)
      for (int z = 0; z < Z; ++z)
        flat.insert(flat.end(), per_zone[z].begin() + static_cast<std::size_t>(i) * inner,
                    per_zone[z].begin() + static_cast<std::size_t>(i + 1) * inner);
    return flat;
  };
  tables.sigma_s = splice(zone_sigma_s, layout.prompt, K);
  tables.sigma_f = splice(zone_sigma_f, layout.prompt, K);
  tables.pi_s = splice(zone_pi_s, layout.prompt, K * K);
  tables.pi_f = splice(zone_pi_f, layout.total * layout.prompt, K * K);
  if (md > 0)
    tables.m_yield = splice(zone_m, md, K);

  SpatialMesh mesh(domain, nx, ny, nz);
  std::vector<int> cell_zone(mesh.n_cells(), 0);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double x = mesh.cell_center(c).x;
    int chosen = -1;
    for (int z = 0; z < Z; ++z) {
      if (regions[z].all || (x >= regions[z].x_min && x < regions[z].x_max)) {
        chosen = z;
        break;
      }
    }
    if (chosen < 0) {
      errors.push_back("library.zones: no zone covers cell " + std::to_string(c + 1));
      return nullptr;
    }
    cell_zone[c] = chosen;
  }

  try {
    return std::make_shared<CrossSectionLibrary>(layout, std::move(vtable), mesh,
                                                 std::move(cell_zone), Z,
                                                 std::move(tables));
  } catch (const std::exception& e) {
    errors.push_back(std::string("library: ") + e.what());
    return nullptr;
  }
}

ParsedScenario parse_scenario(const std::string& path) {
  ParsedScenario out;
  auto& errors = out.errors;
  const std::string text = read_file(path, errors);
  if (!errors.empty()) return out;

  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    errors.push_back(path + ": " + e.what());
    return out;
  }

  Scenario& sc = out.scenario;
  sc.path = path;
  sc.name = field_or<std::string>(j, "name", fs::path(path).stem().string());

  const auto domain = parse_domain(field_or<json>(j, "domain", json::object()), errors);
  if (domain) sc.domain = *domain;

  const json mesh = field_or<json>(j, "mesh", json::object());
  sc.nx = field_or<int>(mesh, "nx", 1);
  sc.ny = field_or<int>(mesh, "ny", 1);
  sc.nz = field_or<int>(mesh, "nz", 1);
  if (sc.nx < 1 || sc.ny < 1 || sc.nz < 1)
    errors.push_back("mesh: cell counts must be >= 1");

  const auto lib_rel = field<std::string>(j, "scenario", "library", errors);
  std::string lib_text;
  if (lib_rel && domain) {
    sc.library_path = (fs::path(path).parent_path() / *lib_rel).string();
    out.library = load_library(sc.library_path, *domain, sc.nx, sc.ny, sc.nz, errors);
    lib_text = read_file(sc.library_path, errors);
  }

  // Source.
  const json source = field_or<json>(j, "source", json::object());
  const auto src_species = field<int>(source, "source", "species", errors);
  const auto src_pos = field<std::vector<double>>(source, "source", "position", errors);
  const auto src_vel = field<int>(source, "source", "velocity_index", errors);
  if (src_species && src_pos && src_vel && out.library) {
    const int m = out.library->layout().total;
    const int K = out.library->n_velocities();
    if (*src_species < 1 || *src_species > m)
      errors.push_back("source.species: index " + std::to_string(*src_species) +
                       " outside 1.." + std::to_string(m));
    if (*src_vel < 1 || *src_vel > K)
      errors.push_back("source.velocity_index: index " + std::to_string(*src_vel) +
                       " outside 1.." + std::to_string(K));
    if (src_pos->size() != 3)
      errors.push_back("source.position: need 3 components");
    if (errors.empty()) {
      sc.source.species = *src_species - 1;
      sc.source.velocity = *src_vel - 1;
      sc.source.position = {(*src_pos)[0], (*src_pos)[1], (*src_pos)[2]};
      if (domain && !domain->contains(sc.source.position))
        errors.push_back("source.position: not inside the domain");
    }
  }

  // Detector.
  const json det = field_or<json>(j, "detector", json{{"kind", "constant"}, {"value", 1.0}});
  const std::string kind = field_or<std::string>(det, "kind", "constant");
  if (kind == "constant") {
    sc.detector.kind = DetectorSpec::Kind::kConstant;
    sc.detector.value = field_or<double>(det, "value", 1.0);
    if (!(sc.detector.value >= 0.0))
      errors.push_back("detector.value: must be non-negative");
  } else if (kind == "indicator") {
    sc.detector.kind = DetectorSpec::Kind::kIndicator;
    sc.detector.value = field_or<double>(det, "value", 1.0);
    for (int s : field_or<std::vector<int>>(det, "species", {})) {
      if (out.library &&
          (s < 1 || s > out.library->layout().total))
        errors.push_back("detector.species: index out of range");
      else
        sc.detector.species.push_back(s - 1);
    }
    if (det.contains("x_range")) {
      const auto range = det.at("x_range").get<std::vector<double>>();
      if (range.size() != 2) {
        errors.push_back("detector.x_range: expected [lo, hi]");
      } else {
        sc.detector.x_min = range[0];
        sc.detector.x_max = range[1];
      }
    }
  } else if (kind == "file") {
    sc.detector.kind = DetectorSpec::Kind::kFile;
    const auto file = field<std::string>(det, "detector", "path", errors);
    if (file) sc.detector.file = (fs::path(path).parent_path() / *file).string();
  } else {
    errors.push_back("detector.kind: unknown kind '" + kind + "'");
  }

  // Time grid.
  sc.t_grid = field_or<std::vector<double>>(j, "t_grid", {});
  if (sc.t_grid.empty()) errors.push_back("t_grid: missing or empty");
  for (std::size_t q = 1; q < sc.t_grid.size(); ++q)
    if (!(sc.t_grid[q] > sc.t_grid[q - 1])) {
      errors.push_back("t_grid: values must be strictly increasing (entry " +
                       std::to_string(q + 1) + ")");
      break;
    }
  if (!sc.t_grid.empty() && !(sc.t_grid.front() > 0.0))
    errors.push_back("t_grid: values must be positive");

  sc.n_paths = field_or<long>(j, "n_paths", 10000);
  if (sc.n_paths < 1) errors.push_back("n_paths: must be >= 1");
  sc.seed = field_or<std::uint64_t>(j, "seed", 1);
  sc.population_cap = field_or<long>(j, "population_cap", 10000000);
  sc.deterministic_exact = field_or<bool>(j, "deterministic_exact", false);
  sc.routes = field_or<std::vector<std::string>>(j, "routes", {});

  const json solver = field_or<json>(j, "solver", json::object());
  sc.solver.dt = field_or<double>(solver, "dt", sc.solver.dt);
  sc.solver.n_picard = field_or<int>(solver, "n_picard", sc.solver.n_picard);
  sc.solver.n_quad = field_or<int>(solver, "n_quad", sc.solver.n_quad);
  sc.solver.eigen_delta = field_or<double>(solver, "eigen_delta", sc.solver.eigen_delta);
  sc.solver.eigen_tol = field_or<double>(solver, "eigen_tol", sc.solver.eigen_tol);
  sc.solver.root_tol = field_or<double>(solver, "root_tol", sc.solver.root_tol);
  sc.solver.lambda_floor = field_or<double>(solver, "lambda_floor", sc.solver.lambda_floor);

  sc.content_hash = fnv1a64(text) ^ (fnv1a64(lib_text) * 0x9e3779b97f4a7c15ULL);
  return out;
}

Vector detector_grid(const ParsedScenario& parsed) {
  const auto& lib = *parsed.library;
  const auto& sc = parsed.scenario;
  StateSpace space(lib.layout(), lib.mesh(), lib.vtable());
  Vector g = Vector::Zero(space.size());

  switch (sc.detector.kind) {
    case DetectorSpec::Kind::kConstant:
      g.setConstant(sc.detector.value);
      break;
    case DetectorSpec::Kind::kIndicator: {
      auto species_selected = [&](int i) {
        if (sc.detector.species.empty()) return true;
        return std::find(sc.detector.species.begin(), sc.detector.species.end(), i) !=
               sc.detector.species.end();
      };
      for (int i = 0; i < lib.layout().total; ++i) {
        if (!species_selected(i)) continue;
        for (int c = 0; c < lib.mesh().n_cells(); ++c) {
          const double x = lib.mesh().cell_center(c).x;
          if (x < sc.detector.x_min || x >= sc.detector.x_max) continue;
          for (int k = 0; k < lib.n_velocities(); ++k)
            g[space.index(i, c, k)] = sc.detector.value;
        }
      }
      break;
    }
    case DetectorSpec::Kind::kFile: {
      std::ifstream in(sc.detector.file);
      if (!in) throw std::runtime_error("detector: cannot open " + sc.detector.file);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || std::isalpha(line[0])) continue;
        std::istringstream row(line);
        std::string cell_text;
        std::vector<double> cells;
        while (std::getline(row, cell_text, ',')) cells.push_back(std::stod(cell_text));
        if (cells.size() != 4)
          throw std::runtime_error("detector: expected species,cell,velocity,value rows");
        const int i = static_cast<int>(cells[0]) - 1;
        const int c = static_cast<int>(cells[1]) - 1;
        const int k = static_cast<int>(cells[2]) - 1;
        if (i < 0 || i >= lib.layout().total || c < 0 || c >= lib.mesh().n_cells() ||
            k < 0 || k >= lib.n_velocities())
          throw std::runtime_error("detector: index out of range in " + sc.detector.file);
        g[space.index(i, c, k)] = cells[3];
      }
      break;
    }
  }
  return g;
}

DetectorFn detector_fn(const ParsedScenario& parsed,
                       const std::shared_ptr<const Vector>& grid) {
  const auto lib = parsed.library;
  StateSpace space(lib->layout(), lib->mesh(), lib->vtable());
  return [lib, grid, space](int i, const Vec3& r, int k) {
    return (*grid)[space.index(i, lib->mesh().cell_of(r), k)];
  };
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose) {
  std::uint64_t state = seed ^ (purpose * 0xd1342543de82ef95ULL);
  return splitmix64(state);
}

namespace {

std::string provenance(const Scenario& sc, std::uint64_t seed, long n_paths) {
  std::ostringstream os;
  os << "seed=" << seed << " paths=" << n_paths << " version=" << kVersion
     << " scenario=" << std::hex << sc.content_hash;
  return os.str();
}

struct RouteContext {
  const ParsedScenario& parsed;
  const RunOptions& options;
  std::uint64_t seed;
  long n_paths;
  fs::path out;
};

SimOptions sim_options(const RouteContext& ctx, std::uint64_t purpose) {
  SimOptions opt;
  opt.seed = derive_seed(ctx.seed, purpose);
  opt.n_paths = ctx.n_paths;
  opt.n_workers = ctx.options.workers;
  opt.population_cap = ctx.parsed.scenario.population_cap;
  return opt;
}

constexpr std::uint64_t kPurposeBranch = 1;
constexpr std::uint64_t kPurposeWalk = 2;

std::vector<TallyEstimate> branch_series(const RouteContext& ctx, const DetectorFn& g) {
  const auto& sc = ctx.parsed.scenario;
  const auto& lib = *ctx.parsed.library;
  Particle source{sc.source.species, sc.source.position, sc.source.velocity};
  std::vector<TallyEstimate> series;
  for (double t : sc.t_grid)
    series.push_back(estimate_psi(lib, sc.domain, g, source, t,
                                  sim_options(ctx, kPurposeBranch)));
  return series;
}

std::vector<TallyEstimate> walk_series(const RouteContext& ctx, const DetectorFn& g,
                                       const CollapsedKernel& kernel) {
  const auto& sc = ctx.parsed.scenario;
  const auto& lib = *ctx.parsed.library;
  WalkContext wctx{kernel, sc.domain, lib.mesh(), lib.vtable()};
  WalkState source;
  source.species = sc.source.species;
  source.r = sc.source.position;
  source.velocity = sc.source.velocity;
  std::vector<TallyEstimate> series;
  for (double t : sc.t_grid)
    series.push_back(estimate_phi(wctx, g, source, t, sim_options(ctx, kPurposeWalk)));
  return series;
}

void write_series(const RouteContext& ctx, const std::string& name,
                  const std::vector<TallyEstimate>& series) {
  CsvWriter csv((ctx.out / (name + ".csv")).string(),
                provenance(ctx.parsed.scenario, ctx.seed, ctx.n_paths),
                {"t", "mean", "stderr", "n_paths"});
  for (const auto& est : series)
    csv.row({format_g17(est.t), format_g17(est.mean), format_g17(est.std_error),
             std::to_string(est.n_paths)});
}

bool growth_bound_ok(const RouteContext& ctx, const std::vector<TallyEstimate>& series,
                     double g_sup) {
  const auto& lib = *ctx.parsed.library;
  for (const auto& est : series)
    if (est.mean - 3.0 * est.std_error > growth_bound(lib, g_sup, est.t)) return false;
  return true;
}

int run_branch_or_walk(const RouteContext& ctx, bool branch) {
  const auto& lib = *ctx.parsed.library;
  auto grid = std::make_shared<const Vector>(detector_grid(ctx.parsed));
  const DetectorFn g = detector_fn(ctx.parsed, grid);
  std::vector<TallyEstimate> series;
  std::optional<CollapsedKernel> kernel;
  if (branch) {
    series = branch_series(ctx, g);
  } else {
    kernel.emplace(collapse(lib));
    series = walk_series(ctx, g, *kernel);
  }
  write_series(ctx, branch ? "branch" : "walk", series);
  if (ctx.options.check) {
    const double g_sup = grid->size() ? grid->cwiseAbs().maxCoeff() : 0.0;
    if (!growth_bound_ok(ctx, series, g_sup)) {
      std::cerr << (branch ? "branch" : "walk")
                << ": --check failed, a tally exceeds the growth bound\n";
      return 1;
    }
  }
  return 0;
}

int run_solve(const RouteContext& ctx) {
  const auto& sc = ctx.parsed.scenario;
  const auto& lib = *ctx.parsed.library;
  const std::string route = ctx.options.sub_route.empty() ? "both" : ctx.options.sub_route;
  const bool do_acp = route == "acp" || route == "both";
  const bool do_mild = route == "mild" || route == "both";

  auto grid = std::make_shared<const Vector>(detector_grid(ctx.parsed));
  OperatorMatrices mats = assemble(lib, sc.domain);
  const double dt =
      std::isnan(sc.solver.dt) ? 0.2 * admissible_dt(mats) : sc.solver.dt;
  const StateSpace& space = mats.space;

  auto write_grid = [&](const std::string& name,
                        const std::vector<std::pair<double, Vector>>& sols) {
    CsvWriter csv((ctx.out / (name + ".csv")).string(),
                  provenance(sc, ctx.seed, ctx.n_paths),
                  {"t", "species", "cell", "velocity", "value"});
    for (const auto& [t, u] : sols)
      for (int idx = 0; idx < space.size(); ++idx) {
        int i, c, k;
        space.coords(idx, i, c, k);
        csv.row({format_g17(t), std::to_string(i + 1), std::to_string(c + 1),
                 std::to_string(k + 1), format_g17(u[idx])});
      }
  };

  std::vector<std::pair<double, Vector>> acp, mild;
  if (do_acp)
    for (double t : sc.t_grid) acp.emplace_back(t, evolve_acp(mats, *grid, t, dt));
  if (do_mild)
    for (double t : sc.t_grid)
      mild.emplace_back(t, mild_solve(lib, sc.domain, *grid, t, sc.solver.n_picard,
                                      sc.solver.n_quad));
  if (do_acp) write_grid("solve_acp", acp);
  if (do_mild) write_grid("solve_mild", mild);

  if (ctx.options.check && do_acp && do_mild) {
    for (std::size_t q = 0; q < sc.t_grid.size(); ++q) {
      const double scale = std::max(1e-12, acp[q].second.cwiseAbs().maxCoeff());
      const double diff = (acp[q].second - mild[q].second).cwiseAbs().maxCoeff();
      if (diff > std::max(1e-6, 0.05 * scale)) {
        std::cerr << "solve: --check failed, ACP and mild routes disagree at t = "
                  << sc.t_grid[q] << " (sup diff " << diff << ")\n";
        return 1;
      }
    }
  }
  return 0;
}

int run_eigen(const RouteContext& ctx) {
  const auto& sc = ctx.parsed.scenario;
  const auto& lib = *ctx.parsed.library;
  const std::string route = ctx.options.sub_route.empty() ? "both" : ctx.options.sub_route;

  OperatorMatrices mats = assemble(lib, sc.domain);
  std::ostringstream summary;
  int exit_code = 0;

  double lambda_power = std::numeric_limits<double>::quiet_NaN();
  double lambda_root = std::numeric_limits<double>::quiet_NaN();
  Eigensolution eig;

  if (route == "power" || route == "both") {
    eig = leading_eigenpair(mats, sc.solver.eigen_delta, sc.solver.eigen_tol);
    lambda_power = eig.lambda_c;
    summary << "lambda_c (power iteration on V_delta): " << format_g17(lambda_power)
            << "\n  right residual: " << format_g17(eig.residual_right)
            << "\n  left residual:  " << format_g17(eig.residual_left)
            << "\n  <phi, phi~> = " << format_g17(mats.space.inner(eig.phi, eig.phi_tilde))
            << "\n  gap estimate: " << format_g17(eig.gap) << "\n";
  }
  if (route == "root" || route == "both") {
    lambda_root = lambda_c_by_root(mats, sc.solver.root_tol, sc.solver.lambda_floor);
    summary << "lambda_c (resolvent spectral-radius root): " << format_g17(lambda_root)
            << "\n";
  }
  if (route == "both") {
    const double delta = std::abs(lambda_power - lambda_root);
    summary << "route agreement |delta|: " << format_g17(delta) << "\n";
    if (!mats.lambda_delay.empty()) {
      summary << "-lambda_{ell+1} = " << format_g17(-mats.lambda_delay.front())
              << " (lambda_c above: " << (lambda_power > -mats.lambda_delay.front())
              << ")\n";
    }
    if (ctx.options.check &&
        !(delta < 1e-8 * std::max(1.0, std::abs(lambda_power)))) {
      std::cerr << "eigen: --check failed, route disagreement " << delta << "\n";
      exit_code = 1;
    }
  }
  if (route == "mc") {
    auto grid = std::make_shared<const Vector>(detector_grid(ctx.parsed));
    const DetectorFn g = detector_fn(ctx.parsed, grid);
    const auto series = branch_series(ctx, g);
    write_series(ctx, "eigen_mc_series", series);
    const auto fit = mc_growth_rate(series);
    summary << "lambda_c (MC growth rate): " << format_g17(fit.slope) << " +- "
            << format_g17(fit.ci95) << " (95% CI, " << fit.n_used << " points)\n";
  }

  CsvWriter csv((ctx.out / "eigen.csv").string(), provenance(sc, ctx.seed, ctx.n_paths),
                {"lambda_power", "lambda_root", "gap", "residual_right",
                 "residual_left"});
  csv.row({format_g17(lambda_power), format_g17(lambda_root), format_g17(eig.gap),
           format_g17(eig.residual_right), format_g17(eig.residual_left)});

  std::ofstream txt(ctx.out / "eigen_summary.txt");
  txt << summary.str();
  std::cout << summary.str();
  return exit_code;
}

int run_compare(const RouteContext& ctx) {
  const auto& sc = ctx.parsed.scenario;
  const auto& lib = *ctx.parsed.library;

  auto grid = std::make_shared<const Vector>(detector_grid(ctx.parsed));
  const DetectorFn g = detector_fn(ctx.parsed, grid);

  const auto psi = branch_series(ctx, g);
  const CollapsedKernel kernel = collapse(lib);
  const auto phi = walk_series(ctx, g, kernel);

  OperatorMatrices mats = assemble(lib, sc.domain);
  const double dt =
      std::isnan(sc.solver.dt) ? 0.2 * admissible_dt(mats) : sc.solver.dt;
  const int source_idx = mats.space.index(sc.source.species,
                                          lib.mesh().cell_of(sc.source.position),
                                          sc.source.velocity);

  CsvWriter csv((ctx.out / "compare.csv").string(), provenance(sc, ctx.seed, ctx.n_paths),
                {"t", "psi_mean", "psi_stderr", "phi_mean", "phi_stderr", "det_value",
                 "z_psi_phi", "z_psi_det", "z_phi_det"});
  bool ok = true;
  for (std::size_t q = 0; q < sc.t_grid.size(); ++q) {
    const double det_value = evolve_acp(mats, *grid, sc.t_grid[q], dt)[source_idx];
    const double se_pair = std::sqrt(psi[q].std_error * psi[q].std_error +
                                     phi[q].std_error * phi[q].std_error);
    const double z_pair =
        se_pair > 0.0 ? std::abs(psi[q].mean - phi[q].mean) / se_pair : 0.0;
    const double z_psi_det = psi[q].std_error > 0.0
                                 ? std::abs(psi[q].mean - det_value) / psi[q].std_error
                                 : 0.0;
    const double z_phi_det = phi[q].std_error > 0.0
                                 ? std::abs(phi[q].mean - det_value) / phi[q].std_error
                                 : 0.0;
    csv.row({format_g17(sc.t_grid[q]), format_g17(psi[q].mean),
             format_g17(psi[q].std_error), format_g17(phi[q].mean),
             format_g17(phi[q].std_error), format_g17(det_value), format_g17(z_pair),
             format_g17(z_psi_det), format_g17(z_phi_det)});
    if (z_pair >= 3.0) ok = false;
    if (sc.deterministic_exact && (z_psi_det >= 3.0 || z_phi_det >= 3.0)) ok = false;
  }
  if (ctx.options.check && !ok) {
    std::cerr << "compare: --check failed, a z-score reached 3\n";
    return 1;
  }
  return 0;
}

}  // namespace

int run_scenario(const ParsedScenario& parsed, const RunOptions& options) {
  if (!parsed.ok()) {
    for (const auto& err : parsed.errors) std::cerr << err << "\n";
    return 2;
  }

  RouteContext ctx{parsed, options,
                   options.seed.value_or(parsed.scenario.seed),
                   options.n_paths.value_or(parsed.scenario.n_paths),
                   fs::path(options.out_dir)};
  fs::create_directories(ctx.out);

  try {
    if (options.route == "validate") {
      const auto report = validate_library(*parsed.library);
      if (!report.ok()) {
        std::cerr << report.to_string();
        return 1;
      }
      const auto collapsed_report =
          check_collapsed(collapse(*parsed.library), *parsed.library);
      if (!collapsed_report.ok()) {
        std::cerr << collapsed_report.to_string();
        return 1;
      }
      std::cout << "library ok\n";
      return 0;
    }
    if (options.route == "branch") return run_branch_or_walk(ctx, true);
    if (options.route == "walk") return run_branch_or_walk(ctx, false);
    if (options.route == "solve") return run_solve(ctx);
    if (options.route == "eigen") return run_eigen(ctx);
    if (options.route == "compare") return run_compare(ctx);
  } catch (const std::exception& e) {
    std::cerr << options.route << ": " << e.what() << "\n";
    return 2;
  }
  std::cerr << "unknown route '" << options.route << "'\n";
  return 2;
}

}  // namespace ntrans
