#include <doctest.h>

#include <cmath>

#include "ntrans/branching.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace ntrans;
using namespace ntrans::testing;

namespace {

// Slightly supercritical homogeneous oracle library (m = 3, ell = 2, one
// delayed species; 12 states with K = 4).
LibrarySpec oracle_spec() {
  LibrarySpec spec;
  spec.total = 3;
  spec.prompt = 2;
  spec.n_velocities = 4;
  spec.sigma_s = {1.0, 0.8};
  spec.sigma_f = {0.5, 0.3};
  spec.yield = {{1.6, 0.4}, {0.9, 0.2}, {1.0, 0.0}};
  spec.m_yield = {0.3};
  spec.lambda_delay = {1.0};
  return spec;
}

Particle prompt_source() { return {0, {0, 0, 0}, 0}; }

}  // namespace

TEST_CASE("sample_event: exponential flight times at constant rate") {
  LibrarySpec spec;
  spec.total = 1;
  spec.prompt = 1;
  spec.n_velocities = 2;
  spec.sigma_s = {1.5};
  spec.sigma_f = {0.5};  // total rate 2.0
  const auto lib = make_library(spec, huge_box());
  const Domain domain = huge_box();

  Rng rng(101, 0);
  const int n = 100000;
  double sum = 0.0;
  for (int q = 0; q < n; ++q) {
    const auto ev = sample_event(prompt_source(), lib, domain, rng);
    REQUIRE(ev.kind != EventKind::kBoundaryExit);
    sum += ev.dt;
  }
  const double mean = sum / n;
  const double se = 0.5 / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean - 0.5) < 3.0 * se);
}

TEST_CASE("sample_event: zero rates stream to the boundary") {
  LibrarySpec spec;
  spec.total = 1;
  spec.prompt = 1;
  spec.n_velocities = 2;
  spec.sigma_s = {0.0};
  spec.sigma_f = {0.0};
  const Domain box = Domain::box({-1, -1, -1}, {1, 1, 1});
  const auto lib = make_library(spec, box);
  Rng rng(5, 0);
  for (int q = 0; q < 50; ++q) {
    const auto ev = sample_event(prompt_source(), lib, box, rng);
    CHECK(ev.kind == EventKind::kBoundaryExit);
    CHECK(ev.dt == doctest::Approx(1.0).epsilon(1e-14));  // speed 1 from center
  }
}

TEST_CASE("sample_event: piecewise-constant rate survival function") {
  // Slab [0,1], rates 1.0 on [0,0.5) and 3.0 on [0.5,1), start 0.25, vx=1.
  LibrarySpec spec;
  spec.total = 1;
  spec.prompt = 1;
  spec.n_velocities = 2;
  spec.sigma_s = {1.0};
  const Domain slab = Domain::slab(0.0, 1.0);
  auto lib_left = make_library(spec, slab, 2);

  CrossSectionLibrary::Tables tables;
  const int K = 2;
  tables.n_max = 4;
  tables.sigma_s = {1.0, 1.0, 3.0, 3.0};  // [i=0][z][k]
  tables.sigma_f = {0.0, 0.0, 0.0, 0.0};
  tables.pi_s.assign(1 * 2 * K * K, 0.0);
  for (int z = 0; z < 2; ++z)
    for (int k = 0; k < K; ++k)
      for (int kp = 0; kp < K; ++kp)
        tables.pi_s[(z * K + k) * K + kp] = 1.0 / (K * lib_left.vtable().weight[kp]) * 1.0;
  tables.pi_f.assign(1 * 1 * 2 * K * K, 0.0);
  const SpatialMesh mesh(slab, 2);
  CrossSectionLibrary lib({1, 1}, lib_left.vtable(), mesh, {0, 1}, 2, std::move(tables));

  Rng rng(77, 0);
  const int n = 100000;
  int beyond_half = 0;   // event time > 0.5 (interface at flight time 0.25)
  int beyond_quarter = 0;
  for (int q = 0; q < n; ++q) {
    const auto ev = sample_event({0, {0.25, 0, 0}, 0}, lib, slab, rng);
    const double t_event = ev.kind == EventKind::kBoundaryExit ? 1e30 : ev.dt;
    if (t_event > 0.5) ++beyond_half;
    if (t_event > 0.25) ++beyond_quarter;
  }
  // P(T > 0.25) = exp(-0.25), P(T > 0.5) = exp(-0.25 - 3*0.25).
  const double p1 = std::exp(-0.25), p2 = std::exp(-1.0);
  CHECK(std::abs(beyond_quarter / double(n) - p1) <
        3.0 * std::sqrt(p1 * (1 - p1) / n));
  CHECK(std::abs(beyond_half / double(n) - p2) < 3.0 * std::sqrt(p2 * (1 - p2) / n));
}

TEST_CASE("scatter: degenerate and categorical kernels") {
  LibrarySpec spec;
  spec.total = 1;
  spec.prompt = 1;
  spec.n_velocities = 4;
  spec.sigma_s = {1.0};

  SUBCASE("identity kernel keeps the velocity") {
    std::vector<std::vector<double>> probs(4, std::vector<double>(4, 0.0));
    for (int k = 0; k < 4; ++k) probs[k][k] = 1.0;
    spec.scatter_probs = probs;
    const auto lib = make_library(spec, huge_box());
    Rng rng(1, 0);
    for (int q = 0; q < 200; ++q)
      CHECK(scatter({0, {0, 0, 0}, 2}, lib, rng).velocity == 2);
  }

  SUBCASE("uniform kernel over 4 groups") {
    const auto lib = make_library(spec, huge_box());
    Rng rng(2, 0);
    const int n = 100000;
    int counts[4] = {0, 0, 0, 0};
    for (int q = 0; q < n; ++q) ++counts[scatter({0, {0, 0, 0}, 0}, lib, rng).velocity];
    const double se = std::sqrt(0.25 * 0.75 / n);
    for (int k = 0; k < 4; ++k)
      CHECK(std::abs(counts[k] / double(n) - 0.25) < 3.0 * se);
  }

  SUBCASE("two-group 0.3 / 0.7 kernel") {
    spec.n_velocities = 2;
    spec.scatter_probs = {{0.3, 0.7}, {0.3, 0.7}};
    const auto lib = make_library(spec, huge_box());
    Rng rng(3, 0);
    const int n = 100000;
    int hit = 0;
    for (int q = 0; q < n; ++q)
      hit += scatter({0, {0, 0, 0}, 0}, lib, rng).velocity == 1 ? 1 : 0;
    const double se = std::sqrt(0.3 * 0.7 / n);
    CHECK(std::abs(hit / double(n) - 0.7) < 3.0 * se);
  }
}

TEST_CASE("fission offspring laws") {
  LibrarySpec spec;
  spec.total = 1;
  spec.prompt = 1;
  spec.n_velocities = 2;
  spec.sigma_s = {0.1};
  spec.sigma_f = {1.0};

  SUBCASE("zero yields capture the particle") {
    spec.yield = {{0.0}};
    const auto lib = make_library(spec, huge_box());
    Rng rng(4, 0);
    for (int q = 0; q < 100; ++q)
      CHECK(fission(prompt_source(), lib, rng).empty());
  }

  SUBCASE("integer mean is deterministic") {
    spec.yield = {{2.0}};
    const auto lib = make_library(spec, huge_box());
    Rng rng(5, 0);
    for (int q = 0; q < 1000; ++q)
      CHECK(fission(prompt_source(), lib, rng).size() == 2);
  }

  SUBCASE("fractional mean 1.5 gives floor + Bernoulli per channel") {
    // Concentrate the whole mass in one channel so counts are {1, 2}.
    spec.n_velocities = 1;
    spec.yield = {{1.5}};
    const auto lib = make_library(spec, huge_box());
    Rng rng(6, 0);
    const int n = 100000;
    double sum = 0.0;
    for (int q = 0; q < n; ++q) {
      const auto kids = fission(prompt_source(), lib, rng);
      REQUIRE((kids.size() == 1 || kids.size() == 2));
      sum += static_cast<double>(kids.size());
    }
    const double se = 0.5 / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(sum / n - 1.5) < 3.0 * se);
  }
}

TEST_CASE("simulate_population: pure transport and monotone capture") {
  SUBCASE("no events: straight advection") {
    LibrarySpec spec;
    spec.total = 1;
    spec.prompt = 1;
    spec.n_velocities = 2;
    const auto lib = make_library(spec, huge_box());
    Rng rng(7, 0);
    Population init;
    init.particles = {{0, {1.0, 2.0, 3.0}, 0}};
    const auto out = simulate_population(init, lib, huge_box(), 2.5, rng);
    REQUIRE(out.particles.size() == 1);
    const Vec3 expected = Vec3{1.0, 2.0, 3.0} + 2.5 * lib.vtable().velocity[0];
    CHECK(out.particles[0].r.x == doctest::Approx(expected.x).epsilon(1e-14));
  }

  SUBCASE("pure capture never grows") {
    LibrarySpec spec;
    spec.total = 1;
    spec.prompt = 1;
    spec.n_velocities = 2;
    spec.sigma_s = {0.2};
    spec.sigma_f = {1.0};
    spec.yield = {{0.0}};
    const auto lib = make_library(spec, huge_box());
    Rng rng(8, 0);
    Population init;
    init.particles = {{0, {0, 0, 0}, 0}};
    int survivors = 0;
    const int n = 20000;
    for (int q = 0; q < n; ++q) {
      const auto out = simulate_population(init, lib, huge_box(), 1.0, rng);
      CHECK(out.particles.size() <= 1);
      survivors += static_cast<int>(out.particles.size());
    }
    const double p = std::exp(-1.0);  // capture rate 1, t = 1
    CHECK(std::abs(survivors / double(n) - p) < 3.0 * std::sqrt(p * (1 - p) / n));
  }
}

TEST_CASE("simulate_population: mean-2 binary fission grows like exp(bt)") {
  LibrarySpec spec;
  spec.total = 1;
  spec.prompt = 1;
  spec.n_velocities = 2;
  spec.sigma_s = {0.05};
  spec.sigma_f = {1.0};  // b = 1
  spec.yield = {{2.0}};
  const auto lib = make_library(spec, huge_box());
  const Domain domain = huge_box();

  SimOptions opt;
  opt.seed = 909;
  opt.n_paths = 10000;
  const auto est = estimate_psi(lib, domain, constant_detector(1.0),
                                prompt_source(), 1.0, opt);
  const double expected = std::exp(1.0);  // one-state mean matrix: (2-1)*b
  CHECK(std::abs(est.mean - expected) < 3.0 * est.std_error);
}

TEST_CASE("estimate_psi: conservation without interactions") {
  LibrarySpec spec;
  spec.total = 1;
  spec.prompt = 1;
  spec.n_velocities = 2;
  const auto lib = make_library(spec, huge_box());
  SimOptions opt;
  opt.seed = 11;
  opt.n_paths = 500;
  const auto est =
      estimate_psi(lib, huge_box(), constant_detector(1.0), prompt_source(), 3.0, opt);
  CHECK(est.mean == 1.0);
  CHECK(est.std_error == 0.0);
}

TEST_CASE("estimate_psi: pure capture decays like exp(-ct)") {
  LibrarySpec spec;
  spec.total = 1;
  spec.prompt = 1;
  spec.n_velocities = 2;
  spec.sigma_s = {0.3};
  spec.sigma_f = {1.0};
  spec.yield = {{0.0}};
  const auto lib = make_library(spec, huge_box());
  SimOptions opt;
  opt.seed = 12;
  opt.n_paths = 100000;
  const auto est =
      estimate_psi(lib, huge_box(), constant_detector(1.0), prompt_source(), 1.0, opt);
  CHECK(std::abs(est.mean - std::exp(-1.0)) < 3.0 * est.std_error);
}

TEST_CASE("estimate_psi matches the dense matrix-exponential oracle") {
  const auto lib = make_library(oracle_spec(), huge_box());
  REQUIRE(validate_library(lib).ok());
  const int K = lib.n_velocities();

  // A non-trivial detector over (species, velocity).
  Eigen::VectorXd g0(3 * K);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < K; ++k) g0[i * K + k] = 0.5 + 0.5 * ((i + k) % 3);
  DetectorFn g = [&](int i, const Vec3&, int k) { return g0[i * K + k]; };

  SimOptions opt;
  opt.seed = 13;
  opt.n_paths = 100000;
  for (const double t : {0.5, 1.5}) {
    const Eigen::VectorXd expected = expected_psi(lib, g0, t);
    for (const int species : {0, 2}) {
      const auto est =
          estimate_psi(lib, huge_box(), g, {species, {0, 0, 0}, 1}, t, opt);
      CHECK(std::abs(est.mean - expected[species * K + 1]) < 3.0 * est.std_error);
    }
  }
}

TEST_CASE("branching property: psi_{t+s} composes") {
  const auto lib = make_library(oracle_spec(), huge_box());
  const int K = lib.n_velocities();
  const double s = 0.7, t = 0.8;

  Eigen::VectorXd g0 = Eigen::VectorXd::Ones(3 * K);
  const Eigen::VectorXd inner = expected_psi(lib, g0, s);  // exact psi_s[g]
  DetectorFn g_inner = [&](int i, const Vec3&, int k) { return inner[i * K + k]; };

  SimOptions opt;
  opt.seed = 14;
  opt.n_paths = 100000;
  const auto direct = estimate_psi(lib, huge_box(), constant_detector(1.0),
                                   prompt_source(), t + s, opt);
  SimOptions opt2 = opt;
  opt2.seed = 15;
  const auto composed =
      estimate_psi(lib, huge_box(), g_inner, prompt_source(), t, opt2);
  const double se = std::sqrt(direct.std_error * direct.std_error +
                              composed.std_error * composed.std_error);
  CHECK(std::abs(direct.mean - composed.mean) < 3.0 * se);
}

TEST_CASE("growth bound holds on the oracle scenario") {
  const auto lib = make_library(oracle_spec(), huge_box());
  SimOptions opt;
  opt.seed = 16;
  opt.n_paths = 20000;
  for (const double t : {0.5, 1.0, 2.0}) {
    const auto est = estimate_psi(lib, huge_box(), constant_detector(1.0),
                                  prompt_source(), t, opt);
    CHECK(est.mean - 3.0 * est.std_error <= growth_bound(lib, 1.0, t));
  }
}

TEST_CASE("population cap raises a blowup error") {
  LibrarySpec spec;
  spec.total = 1;
  spec.prompt = 1;
  spec.n_velocities = 2;
  spec.sigma_s = {0.05};
  spec.sigma_f = {4.0};
  spec.yield = {{4.0}};
  const auto lib = make_library(spec, huge_box());
  Rng rng(17, 0);
  Population init;
  init.particles = {{0, {0, 0, 0}, 0}};
  CHECK_THROWS_WITH_AS(simulate_population(init, lib, huge_box(), 6.0, rng, 100),
                       doctest::Contains("population cap 100"), std::runtime_error);
}

TEST_CASE("dominating Galton-Watson counts never decrease in t") {
  DominatingProcess proc{1.3, 3};
  const std::vector<double> times = {0.1, 0.4, 0.9, 1.5, 2.0};
  for (int path = 0; path < 200; ++path) {
    Rng rng(18, static_cast<std::uint64_t>(path));
    const auto counts = proc.sample_counts(times, rng, 100000);
    for (std::size_t q = 1; q < counts.size(); ++q) CHECK(counts[q] >= counts[q - 1]);
  }
  CHECK(proc.mean_at(2.0) == doctest::Approx(std::exp(1.3 * 2.0 * 2.0)));
}

TEST_CASE("tally merge is independent of the worker count") {
  const auto lib = make_library(oracle_spec(), huge_box());
  SimOptions a;
  a.seed = 19;
  a.n_paths = 4000;
  a.n_workers = 1;
  SimOptions b = a;
  b.n_workers = 4;
  const auto ea = estimate_psi(lib, huge_box(), constant_detector(1.0),
                               prompt_source(), 1.0, a);
  const auto eb = estimate_psi(lib, huge_box(), constant_detector(1.0),
                               prompt_source(), 1.0, b);
  CHECK(ea.mean == eb.mean);
  CHECK(ea.std_error == eb.std_error);
}
