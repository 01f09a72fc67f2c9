#include <doctest.h>

#include <cmath>

#include "ntrans/species.hpp"
#include "test_helpers.hpp"

using namespace ntrans;
using namespace ntrans::testing;

namespace {

LibrarySpec standard_spec() {
  LibrarySpec spec;
  spec.total = 3;
  spec.prompt = 2;
  spec.n_velocities = 4;
  spec.sigma_s = {1.0, 0.8};
  spec.sigma_f = {0.5, 0.3};
  spec.yield = {{1.2, 0.4}, {0.8, 0.2}, {1.0, 0.0}};
  spec.m_yield = {0.3};
  spec.lambda_delay = {1.0};
  return spec;
}

}  // namespace

TEST_CASE("validate_library flags broken normalisation") {
  auto spec = standard_spec();
  auto lib = make_library(spec, huge_box());
  REQUIRE(validate_library(lib).ok());

  // Same tables with a pi_s row shaved to 0.97 total mass.
  std::vector<std::vector<double>> probs(4, std::vector<double>(4, 0.25));
  probs[1] = {0.25, 0.25, 0.25, 0.22};
  spec.scatter_probs = probs;
  auto broken = make_library(spec, huge_box());
  const auto report = validate_library(broken);
  REQUIRE(!report.ok());
  bool found = false;
  for (const auto& issue : report.issues) found = found || issue.check == "pi_s_row_sum";
  CHECK(found);
}

TEST_CASE("validate_library on a no-fission library") {
  LibrarySpec spec;
  spec.total = 2;
  spec.prompt = 2;  // ell = m: no delayed species at all
  spec.n_velocities = 3;
  spec.sigma_s = {1.0, 0.5};
  spec.sigma_f = {0.0, 0.0};
  const auto lib = make_library(spec, huge_box());
  CHECK(validate_library(lib).ok());

  // With a delayed species present, sigma_f = 0 breaks isotope production.
  LibrarySpec with_delayed = spec;
  with_delayed.total = 3;
  with_delayed.prompt = 2;
  with_delayed.m_yield = {0.2};
  with_delayed.lambda_delay = {1.0};
  with_delayed.yield = {{0, 0}, {0, 0}, {1.0, 0.0}};
  const auto report = validate_library(make_library(with_delayed, huge_box()));
  REQUIRE(!report.ok());
  for (const auto& issue : report.issues)
    CHECK(issue.check == "isotope_production_positive");
}

TEST_CASE("validate_library flags decay-rate ordering") {
  auto spec = standard_spec();
  spec.total = 4;
  spec.m_yield = {0.3, 0.1};
  spec.lambda_delay = {3.0, 2.0};
  spec.yield.push_back({1.0, 0.0});
  const auto report = validate_library(make_library(spec, huge_box()));
  REQUIRE(!report.ok());
  bool found = false;
  for (const auto& issue : report.issues)
    found = found || issue.check == "decay_rate_ordering";
  CHECK(found);
}

TEST_CASE("total_rate") {
  auto spec = standard_spec();
  spec.sigma_s = {1.0, 0.0};
  spec.sigma_f = {0.5, 0.0};
  spec.lambda_delay = {0.1};
  const auto lib = make_library(spec, huge_box());
  CHECK(lib.total_rate(0, 0, 0) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(lib.total_rate(2, 0, 0) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(lib.total_rate(1, 0, 0) == 0.0);  // pure streaming species
  CHECK_THROWS_AS(lib.total_rate(3, 0, 0), std::out_of_range);
}

TEST_CASE("structural mismatch is a hard constructor error") {
  auto spec = standard_spec();
  auto lib = make_library(spec, huge_box());
  CrossSectionLibrary::Tables tables;  // all empty: wrong sizes
  tables.lambda_delay = {1.0};
  CHECK_THROWS_AS(CrossSectionLibrary(lib.layout(), lib.vtable(), lib.mesh(), {0}, 1,
                                      std::move(tables)),
                  std::invalid_argument);
}

TEST_CASE("collapse reduces to scattering when fission is off") {
  LibrarySpec spec;
  spec.total = 2;
  spec.prompt = 2;
  spec.n_velocities = 4;
  spec.sigma_s = {1.3, 0.7};
  spec.sigma_f = {0.0, 0.0};
  const auto lib = make_library(spec, huge_box());
  const auto kernel = collapse(lib);

  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 4; ++k) {
      CHECK(kernel.alpha_z(i, 0, k) == doctest::Approx(lib.sigma_s_z(i, 0, k)));
      CHECK(kernel.beta_z(i, 0, k) == 0.0);
      for (int kp = 0; kp < 4; ++kp)
        CHECK(kernel.pi_density_z(i, 0, k, i, kp) ==
              doctest::Approx(lib.pi_s_z(i, 0, k, kp)).epsilon(1e-12));
    }
}

TEST_CASE("collapse hand values: alpha = 2.0, beta = 0.5") {
  // One prompt species, sigma_s = 1, sigma_f = 0.5, total yield mass 2.
  LibrarySpec spec;
  spec.total = 1;
  spec.prompt = 1;
  spec.n_velocities = 2;
  spec.sigma_s = {1.0};
  spec.sigma_f = {0.5};
  spec.yield = {{2.0}};
  const auto lib = make_library(spec, huge_box());
  const auto kernel = collapse(lib);
  CHECK(kernel.alpha_z(0, 0, 0) == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(kernel.beta_z(0, 0, 0) == doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("collapse rows are probability distributions") {
  const auto lib = make_library(standard_spec(), huge_box());
  const auto kernel = collapse(lib);
  const auto report = check_collapsed(kernel, lib);
  for (const auto& issue : report.issues) CHECK(issue.check != "pi_row_sum");

  const int m = lib.layout().total, K = lib.n_velocities();
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < K; ++k) {
      double row = 0.0;
      for (int j = 0; j < m; ++j)
        for (int kp = 0; kp < K; ++kp) row += kernel.jump_prob_z(i, 0, k, j, kp);
      CHECK(std::abs(row - 1.0) <= 1e-12);
    }
}

TEST_CASE("collapse of a clean delayed library passes every kernel invariant") {
  auto spec = standard_spec();
  // Delayed row mass exactly 1 and all prompt yields above 1 where fission
  // is active: alpha = lambda and beta >= 0 hold.
  spec.yield = {{1.2, 0.4}, {0.8, 0.3}, {1.0, 0.0}};
  const auto lib = make_library(spec, huge_box());
  REQUIRE(validate_library(lib).ok());
  const auto kernel = collapse(lib);
  const auto report = check_collapsed(kernel, lib);
  CHECK(report.ok());
  CHECK(kernel.alpha_z(2, 0, 0) == doctest::Approx(lib.lambda_delay(2)).epsilon(1e-13));
}

TEST_CASE("fission yield mass below one makes the potential negative") {
  // Capture regime: the kernel is still usable, the audit flags it.
  LibrarySpec spec;
  spec.total = 1;
  spec.prompt = 1;
  spec.n_velocities = 2;
  spec.sigma_s = {1.0};
  spec.sigma_f = {0.5};
  spec.yield = {{0.0}};  // pure capture
  const auto lib = make_library(spec, huge_box());
  const auto kernel = collapse(lib);
  CHECK(kernel.beta_z(0, 0, 0) == doctest::Approx(-0.5).epsilon(1e-13));
  const auto report = check_collapsed(kernel, lib);
  bool flagged = false;
  for (const auto& issue : report.issues)
    flagged = flagged || issue.check == "beta_nonnegative";
  CHECK(flagged);
}

TEST_CASE("kernel_k entries") {
  const auto lib = make_library(standard_spec(), huge_box());
  const int c = 0, k = 1, kp = 2;
  const auto& w = lib.vtable().weight;
  (void)w;

  const double diag = kernel_k(lib, 0, 0, c, k, kp);
  CHECK(diag == doctest::Approx(lib.sigma_s(0, c, k) * lib.pi_s(0, c, k, kp) +
                                lib.sigma_f(0, c, k) * lib.pi_f(0, 0, c, k, kp))
                    .epsilon(1e-14));

  const double off = kernel_k(lib, 0, 1, c, k, kp);
  CHECK(off == doctest::Approx(lib.sigma_f(0, c, k) * lib.pi_f(0, 1, c, k, kp))
                   .epsilon(1e-14));

  const double delayed = kernel_k(lib, 2, 0, c, k, kp);
  CHECK(delayed == doctest::Approx(lib.lambda_delay(2) * lib.pi_f(2, 0, c, k, kp))
                       .epsilon(1e-14));

  LibrarySpec zero = standard_spec();
  zero.sigma_s = {0.0, 0.0};
  zero.sigma_f = {0.0, 0.0};
  CHECK(kernel_k(make_library(zero, huge_box()), 0, 0, c, k, kp) == 0.0);
}

TEST_CASE("beta recomputes from the defining identity") {
  const auto lib = make_library(standard_spec(), huge_box());
  const auto kernel = collapse(lib);
  const auto& lay = lib.layout();
  for (int i = 0; i < lay.total; ++i)
    for (int k = 0; k < lib.n_velocities(); ++k) {
      const double removal = lay.is_prompt(i)
                                 ? lib.sigma_s_z(i, 0, k) + lib.sigma_f_z(i, 0, k)
                                 : lib.lambda_delay(i);
      CHECK(kernel.beta_z(i, 0, k) ==
            doctest::Approx(kernel.alpha_z(i, 0, k) - removal).epsilon(1e-15));
      if (lay.is_prompt(i))
        CHECK(lib.total_rate_z(i, 0, k) ==
              doctest::Approx(kernel.alpha_z(i, 0, k) - kernel.beta_z(i, 0, k))
                  .epsilon(1e-12));
    }
}
