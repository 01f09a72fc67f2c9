#include "ntrans/random_walk.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <stdexcept>

namespace ntrans {

namespace {

// Samples a flat jump-row index over (j, kp); the row sums to one.
int sample_jump(const CollapsedKernel& kernel, int i, int z, int k, Rng& rng) {
  const int m = kernel.layout().total;
  const int K = kernel.n_velocities();
  const double u = rng.uniform();
  double acc = 0.0;
  int last = -1;
  for (int j = 0; j < m; ++j)
    for (int kp = 0; kp < K; ++kp) {
      const double prob = kernel.jump_prob_z(i, z, k, j, kp);
      if (prob <= 0.0) continue;
      acc += prob;
      last = j * K + kp;
      if (u < acc) return last;
    }
  if (last < 0) throw std::runtime_error("step_walk: empty jump row with alpha > 0");
  return last;  // u landed in roundoff slack past the final channel
}

}  // namespace

WalkState step_walk(const WalkState& state, const WalkContext& ctx, double t_max,
                    Rng& rng) {
  if (!state.alive) return state;
  WalkState out = state;
  const double budget = t_max - state.time;
  if (budget <= 0.0) return out;

  const auto& lay = ctx.kernel.layout();
  const int K = ctx.kernel.n_velocities();

  if (!lay.is_prompt(state.species)) {
    // Dormant phase: motionless, constant rate and potential.
    const int z = ctx.kernel.zone_of_cell(ctx.mesh.cell_of(state.r));
    const double alpha = ctx.kernel.alpha_z(state.species, z, state.velocity);
    const double beta = ctx.kernel.beta_z(state.species, z, state.velocity);
    const double hold = alpha > 0.0 ? rng.std_exponential() / alpha : kInfiniteTime;
    if (hold >= budget) {
      out.log_weight += beta * budget;
      out.time = t_max;
      return out;
    }
    out.log_weight += beta * hold;
    out.time += hold;
    const int target = sample_jump(ctx.kernel, state.species, z, state.velocity, rng);
    out.species = target / K;
    out.velocity = target % K;
    return out;
  }

  const Vec3 v = ctx.vtable.velocity[state.velocity];
  const double kappa = ctx.domain.exit_time(state.r, v);
  const double target = rng.std_exponential();
  const double horizon = std::min(kappa, budget);

  if (std::isinf(horizon))
    throw std::runtime_error("step_walk: unbounded flight with no time horizon");

  const auto segments = trace_segments(ctx.mesh, ctx.domain, state.r, v, horizon);
  double remaining = target;
  for (const auto& seg : segments) {
    const int z = ctx.kernel.zone_of_cell(seg.cell);
    const double alpha = ctx.kernel.alpha_z(state.species, z, state.velocity);
    const double beta = ctx.kernel.beta_z(state.species, z, state.velocity);
    const double len = seg.t_out - seg.t_in;
    if (alpha > 0.0 && remaining <= alpha * len) {
      const double s_jump = seg.t_in + remaining / alpha;
      out.log_weight += beta * (s_jump - seg.t_in);
      out.time += s_jump;
      out.r = state.r + s_jump * v;
      const int target_idx =
          sample_jump(ctx.kernel, state.species, z, state.velocity, rng);
      out.species = target_idx / K;
      out.velocity = target_idx % K;
      return out;
    }
    out.log_weight += beta * len;
    if (alpha > 0.0) remaining -= alpha * len;
  }

  if (budget < kappa) {
    out.time = t_max;
    out.r = state.r + budget * v;
    return out;
  }
  // Boundary exit: the potential has been accumulated up to kappa.
  out.time += kappa;
  out.alive = false;
  return out;
}

TallyEstimate estimate_phi(const WalkContext& ctx, const DetectorFn& g,
                           const WalkState& source, double t,
                           const SimOptions& options) {
  if (!ctx.domain.contains(source.r))
    throw std::invalid_argument("estimate_phi: source position outside the domain");
  const double weight_cap = ctx.kernel.max_beta() * t + 1e-9 * (1.0 + std::abs(t));

  return run_paths(options, t, [&](long, Rng& rng) {
    WalkState state = source;
    while (state.alive && state.time < t) state = step_walk(state, ctx, t, rng);
    if (!state.alive) return 0.0;
    if (state.log_weight > weight_cap)
      throw std::logic_error("estimate_phi: path weight exceeds exp(beta_max * t)");
    return std::exp(state.log_weight) * g(state.species, state.r, state.velocity);
  });
}

std::vector<double> tabulate_phi_homogeneous(const CollapsedKernel& kernel,
                                             const CrossSectionLibrary& lib,
                                             const DetectorFn& g, double t) {
  if (lib.n_zones() != 1)
    throw std::invalid_argument("tabulate_phi: scenario is not homogeneous");
  const int m = kernel.layout().total;
  const int K = kernel.n_velocities();
  const int n = m * K;

  // Generator of the weighted walk on (species, velocity):
  // G = alpha * (Pi - I) + diag(beta).
  Eigen::MatrixXd gen = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < K; ++k) {
      const int row = i * K + k;
      const double alpha = kernel.alpha_z(i, 0, k);
      for (int j = 0; j < m; ++j)
        for (int kp = 0; kp < K; ++kp)
          gen(row, j * K + kp) += alpha * kernel.jump_prob_z(i, 0, k, j, kp);
      gen(row, row) += -alpha + kernel.beta_z(i, 0, k);
    }

  Eigen::VectorXd g0(n);
  const Vec3 origin{0.0, 0.0, 0.0};
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < K; ++k) g0[i * K + k] = g(i, origin, k);

  const Eigen::VectorXd phi = (t * gen).exp() * g0;
  return {phi.data(), phi.data() + n};
}

SemigroupCheck check_semigroup_phi(const WalkContext& ctx,
                                   const CrossSectionLibrary& lib, const DetectorFn& g,
                                   const WalkState& source, double s, double t,
                                   const SimOptions& options) {
  if (lib.n_zones() != 1)
    throw std::invalid_argument(
        "check_semigroup_phi: unsupported scenario (cross sections not homogeneous)");
  // No path may reach the boundary within s + t.
  const double reach = (s + t) * lib.vtable().max_speed();
  const auto& d = ctx.domain;
  double clearance = kInfiniteTime;
  if (d.shape() == Shape::kBall) {
    clearance = d.radius() - (source.r - d.center()).norm();
  } else {
    clearance = std::min(source.r.x - d.lo().x, d.hi().x - source.r.x);
    if (d.shape() == Shape::kBox) {
      clearance = std::min({clearance, source.r.y - d.lo().y, d.hi().y - source.r.y,
                            source.r.z - d.lo().z, d.hi().z - source.r.z});
    }
  }
  if (clearance <= reach)
    throw std::invalid_argument(
        "check_semigroup_phi: unsupported scenario (domain not boundary-free over s+t)");

  SemigroupCheck result;
  result.direct = estimate_phi(ctx, g, source, s + t, options);

  const auto table = tabulate_phi_homogeneous(ctx.kernel, lib, g, t);
  const int K = ctx.kernel.n_velocities();
  DetectorFn inner = [&table, K](int i, const Vec3&, int k) { return table[i * K + k]; };
  SimOptions composed_options = options;
  composed_options.seed = options.seed + 0x9e3779b97f4a7c15ULL;
  result.composed = estimate_phi(ctx, inner, source, s, composed_options);

  const double se = std::sqrt(result.direct.std_error * result.direct.std_error +
                              result.composed.std_error * result.composed.std_error);
  result.z = se > 0.0 ? std::abs(result.direct.mean - result.composed.mean) / se : 0.0;
  result.pass = result.z < 3.0;
  return result;
}

}  // namespace ntrans
