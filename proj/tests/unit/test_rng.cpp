#include <doctest.h>

#include <cmath>

#include "ntrans/rng.hpp"

using namespace ntrans;

TEST_CASE("streams are reproducible and distinct") {
  Rng a(42, 7), b(42, 7), c(42, 8);
  bool all_equal = true, any_diff = false;
  for (int q = 0; q < 100; ++q) {
    const auto va = a.next_u64();
    all_equal = all_equal && (va == b.next_u64());
    any_diff = any_diff || (va != c.next_u64());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("uniform lies in [0,1) with the right mean") {
  Rng rng(1, 0);
  double sum = 0.0;
  const int n = 100000;
  for (int q = 0; q < n; ++q) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  const double se = std::sqrt(1.0 / 12.0 / n);
  CHECK(std::abs(sum / n - 0.5) < 3.0 * se);
}

TEST_CASE("exponential has mean 1/rate") {
  Rng rng(2, 0);
  const double rate = 2.0;
  double sum = 0.0;
  const int n = 100000;
  for (int q = 0; q < n; ++q) sum += rng.exponential(rate);
  const double mean = sum / n;
  const double se = (1.0 / rate) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean - 0.5) < 3.0 * se);
}

TEST_CASE("bernoulli fraction matches p") {
  Rng rng(3, 0);
  const double p = 0.3;
  long hits = 0;
  const int n = 100000;
  for (int q = 0; q < n; ++q) hits += rng.bernoulli(p) ? 1 : 0;
  const double se = std::sqrt(p * (1 - p) / n);
  CHECK(std::abs(static_cast<double>(hits) / n - p) < 3.0 * se);
}
