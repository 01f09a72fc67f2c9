#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "ntrans/geometry.hpp"
#include "ntrans/species.hpp"

namespace ntrans::testing {

// Compact single-zone library factory for tests. Kernels default to
// uniform: pi_s rows integrate to one, pi_f rows carry the requested yield
// mass spread evenly over prompt targets and velocities.
struct LibrarySpec {
  int total = 1;
  int prompt = 1;
  int n_velocities = 2;
  std::vector<double> speeds;       // per velocity; defaults to 1.0
  std::vector<double> sigma_s;      // per prompt species
  std::vector<double> sigma_f;      // per prompt species
  std::vector<std::vector<double>>
      yield;                        // [m][ell] prompt yield mass per source row
  std::vector<double> m_yield;      // per delayed species (from type-1 fission)
  std::vector<double> lambda_delay; // per delayed species
  int n_max = 4;
  // Optional explicit scatter kernel [K][K] shared by all prompt species,
  // expressed as probabilities per target (converted to densities inside).
  std::vector<std::vector<double>> scatter_probs;
};

inline CrossSectionLibrary make_library(const LibrarySpec& spec, const Domain& domain,
                                        int nx = 1, int ny = 1, int nz = 1) {
  const int m = spec.total, ell = spec.prompt, K = spec.n_velocities;
  VelocityTable vt;
  for (int k = 0; k < K; ++k) {
    const double speed =
        spec.speeds.empty() ? 1.0 : spec.speeds[k % spec.speeds.size()];
    // Alternate +x / -x directions so slab transport is two-sided.
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    vt.velocity.push_back({sign * speed, 0.0, 0.0});
  }
  double smin = vt.velocity[0].norm(), smax = smin;
  for (const auto& v : vt.velocity) {
    smin = std::min(smin, v.norm());
    smax = std::max(smax, v.norm());
  }
  vt.v_min = 0.5 * smin;
  vt.v_max = std::cbrt(std::pow(vt.v_min, 3) + 1.0);  // annulus of volume 4*pi/3
  if (vt.v_max < smax) vt.v_max = smax + 0.5;
  const double volume = vt.annulus_volume();
  for (int k = 0; k < K - 1; ++k) vt.weight.push_back(volume / K);
  double last = volume;
  for (int k = 0; k < K - 1; ++k) last -= vt.weight[k];
  vt.weight.push_back(last);

  CrossSectionLibrary::Tables tables;
  tables.n_max = spec.n_max;
  tables.lambda_delay = spec.lambda_delay;

  auto at = [&](const std::vector<double>& src, int i, double fallback) {
    return i < static_cast<int>(src.size()) ? src[i] : fallback;
  };

  tables.sigma_s.assign(static_cast<std::size_t>(ell) * K, 0.0);
  tables.sigma_f.assign(static_cast<std::size_t>(ell) * K, 0.0);
  for (int i = 0; i < ell; ++i)
    for (int k = 0; k < K; ++k) {
      tables.sigma_s[i * K + k] = at(spec.sigma_s, i, 0.0);
      tables.sigma_f[i * K + k] = at(spec.sigma_f, i, 0.0);
    }

  tables.pi_s.assign(static_cast<std::size_t>(ell) * K * K, 0.0);
  for (int i = 0; i < ell; ++i)
    for (int k = 0; k < K; ++k)
      for (int kp = 0; kp < K; ++kp) {
        const double prob = spec.scatter_probs.empty()
                                ? 1.0 / K
                                : spec.scatter_probs[k][kp];
        tables.pi_s[(i * K + k) * K + kp] = prob / vt.weight[kp];
      }

  tables.pi_f.assign(static_cast<std::size_t>(m) * ell * K * K, 0.0);
  for (int i = 0; i < m; ++i) {
    if (spec.yield.empty() || i >= static_cast<int>(spec.yield.size())) continue;
    for (int j = 0; j < ell; ++j) {
      const double mass = at(spec.yield[i], j, 0.0);
      for (int k = 0; k < K; ++k)
        for (int kp = 0; kp < K; ++kp)
          tables.pi_f[((static_cast<std::size_t>(i) * ell + j) * K + k) * K + kp] =
              mass / volume;
    }
  }

  tables.m_yield.assign(static_cast<std::size_t>(m - ell) * K, 0.0);
  for (int j = 0; j < m - ell; ++j)
    for (int k = 0; k < K; ++k)
      tables.m_yield[j * K + k] = at(spec.m_yield, j, 0.0);

  SpatialMesh mesh(domain, nx, ny, nz);
  std::vector<int> cell_zone(mesh.n_cells(), 0);
  return CrossSectionLibrary({m, ell}, std::move(vt), mesh, std::move(cell_zone), 1,
                             std::move(tables));
}

inline Domain huge_box() {
  return Domain::box({-5e3, -5e3, -5e3}, {5e3, 5e3, 5e3});
}

}  // namespace ntrans::testing
