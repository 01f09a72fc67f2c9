#include <doctest.h>

#include <cmath>

#include "ntrans/geometry.hpp"
#include "ntrans/rng.hpp"

using namespace ntrans;

namespace {

// Independent oracle: bisection on the indicator r + t v in D.
double exit_time_bisection(const Domain& d, const Vec3& r, const Vec3& v) {
  double lo = 0.0, hi = 1.0;
  while (d.contains(r + hi * v)) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e12) return kInfiniteTime;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (d.contains(r + mid * v) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("exit_time closed forms") {
  const Domain box = Domain::box({0, 0, 0}, {1, 1, 1});
  CHECK(box.exit_time({0.5, 0.5, 0.5}, {1, 0, 0}) == doctest::Approx(0.5).epsilon(1e-14));

  const Domain ball = Domain::ball({0, 0, 0}, 2.0);
  CHECK(ball.exit_time({0, 0, 0}, {1, 0, 0}) == doctest::Approx(2.0).epsilon(1e-14));

  // Oblique ray exits through the y-face first; cross-checked by bisection.
  const Vec3 r{0.5, 0.5, 0.5}, v{1.0, 2.0, 0.0};
  const double kappa = box.exit_time(r, v);
  CHECK(kappa == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(kappa == doctest::Approx(exit_time_bisection(box, r, v)).epsilon(1e-10));
}

TEST_CASE("exit_time error and sentinel cases") {
  const Domain box = Domain::box({0, 0, 0}, {1, 1, 1});
  CHECK_THROWS_AS(box.exit_time({2, 0.5, 0.5}, {1, 0, 0}), std::domain_error);
  CHECK(std::isinf(box.exit_time({0.5, 0.5, 0.5}, {0, 0, 0})));

  const Domain slab = Domain::slab(0.0, 2.0);
  CHECK(std::isinf(slab.exit_time({1.0, 0.0, 0.0}, {0.0, 1.0, 0.0})));
  CHECK(slab.exit_time({0.5, 3.0, -8.0}, {-1.0, 5.0, 2.0}) ==
        doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("advect identity, exit, and semigroup shift") {
  const Domain box = Domain::box({0, 0, 0}, {1, 1, 1});
  const Vec3 r{0.2, 0.3, 0.4}, v{1.0, 0.5, -0.25};

  const auto id = advect(box, r, v, 0.0);
  CHECK(id.inside);
  CHECK(id.position.x == r.x);

  const double kappa = box.exit_time(r, v);
  const auto out = advect(box, r, v, kappa + 0.5);
  CHECK(!out.inside);
  CHECK(out.exit_time == doctest::Approx(kappa));

  // U_s U_t = U_{s+t} as indicator evaluations.
  Rng rng(99, 0);
  int checked = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const Vec3 p{rng.uniform(), rng.uniform(), rng.uniform()};
    const Vec3 u{2 * rng.uniform() - 1, 2 * rng.uniform() - 1, 2 * rng.uniform() - 1};
    if (!box.contains(p) || u.norm() < 1e-3) continue;
    const double s = rng.uniform(), t = rng.uniform();
    const double k0 = box.exit_time(p, u);
    if (std::abs(s + t - k0) < 1e-9 || std::abs(s - k0) < 1e-9) continue;  // FP ties
    const auto one = advect(box, p, u, s);
    const auto direct = advect(box, p, u, s + t);
    if (!one.inside) {
      CHECK(!direct.inside);
    } else {
      const auto two = advect(box, one.position, u, t);
      CHECK(two.inside == direct.inside);
    }
    ++checked;
  }
  CHECK(checked > 1000);
}

TEST_CASE("exit-time bracketing over random rays") {
  Rng rng(7, 0);
  const Domain shapes[2] = {Domain::box({0, 0, 0}, {1, 2, 3}),
                            Domain::ball({1, -1, 0}, 1.5)};
  for (const auto& d : shapes) {
    int checked = 0;
    while (checked < 10000) {
      const Vec3 span = d.hi() - d.lo();
      const Vec3 r{d.lo().x + rng.uniform() * span.x, d.lo().y + rng.uniform() * span.y,
                   d.lo().z + rng.uniform() * span.z};
      if (!d.contains(r)) continue;
      Vec3 v{2 * rng.uniform() - 1, 2 * rng.uniform() - 1, 2 * rng.uniform() - 1};
      if (v.norm() < 0.1) continue;
      const double kappa = d.exit_time(r, v);
      CHECK(d.contains(r + (kappa - 1e-9) * v));
      CHECK(!d.contains(r + (kappa + 1e-9) * v));
      ++checked;
    }
  }
}

TEST_CASE("trace_segments basics") {
  const Domain slab = Domain::slab(0.0, 1.0);

  SUBCASE("single cell") {
    const SpatialMesh mesh(slab, 1);
    const auto segs = trace_segments(mesh, slab, {0.25, 0, 0}, {1, 0, 0}, 10.0);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].cell == 0);
    CHECK(segs[0].t_in == 0.0);
    CHECK(segs[0].t_out == doctest::Approx(0.75).epsilon(1e-14));
  }

  SUBCASE("two cells split at 0.5") {
    const SpatialMesh mesh(slab, 2);
    const auto segs = trace_segments(mesh, slab, {0.25, 0, 0}, {1, 0, 0}, 1.0);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].cell == 0);
    CHECK(segs[0].t_out == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(segs[1].cell == 1);
    CHECK(segs[1].t_out == doctest::Approx(0.75).epsilon(1e-14));
  }

  SUBCASE("reversed velocity mirrors the cell sequence") {
    const SpatialMesh mesh(slab, 4);
    const auto fwd = trace_segments(mesh, slab, {0.51, 0, 0}, {1, 0, 0}, 10.0);
    const auto bwd = trace_segments(mesh, slab, {0.49, 0, 0}, {-1, 0, 0}, 10.0);
    REQUIRE(fwd.size() == bwd.size());
    for (std::size_t q = 0; q < fwd.size(); ++q) {
      CHECK(fwd[q].cell + bwd[q].cell == 3);  // mirrored indices
      CHECK(fwd[q].t_out - fwd[q].t_in ==
            doctest::Approx(bwd[q].t_out - bwd[q].t_in).epsilon(1e-10));
    }
  }
}

TEST_CASE("trace_segments invariants over random rays") {
  Rng rng(11, 0);
  const Domain box = Domain::box({0, 0, 0}, {1, 1, 1});
  const SpatialMesh mesh(box, 4, 3, 5);
  for (int trial = 0; trial < 3000; ++trial) {
    const Vec3 r{rng.uniform(), rng.uniform(), rng.uniform()};
    if (!box.contains(r)) continue;
    const Vec3 v{2 * rng.uniform() - 1, 2 * rng.uniform() - 1, 2 * rng.uniform() - 1};
    if (v.norm() < 0.05) continue;
    const double t = 2.0 * rng.uniform() + 1e-6;
    const double t_end = std::min(t, box.exit_time(r, v));
    const auto segs = trace_segments(mesh, box, r, v, t);
    REQUIRE(!segs.empty());
    CHECK(segs.front().t_in == 0.0);
    double total = 0.0;
    for (std::size_t q = 0; q < segs.size(); ++q) {
      CHECK(segs[q].t_out > segs[q].t_in);
      if (q > 0) CHECK(segs[q].t_in == doctest::Approx(segs[q - 1].t_out));
      total += segs[q].t_out - segs[q].t_in;
    }
    CHECK(std::abs(segs.back().t_out - t_end) <= 1e-12 * (1.0 + t));
    CHECK(std::abs(total - t_end) <= 1e-12 * (1.0 + t));
    // Piecewise-constant line integral: midpoint of each segment lies in
    // the reported cell.
    for (const auto& seg : segs) {
      const Vec3 mid = r + (0.5 * (seg.t_in + seg.t_out)) * v;
      CHECK(mesh.cell_of(mid) == seg.cell);
    }
  }
}
