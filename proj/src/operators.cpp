#include "ntrans/operators.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ntrans/rng.hpp"

namespace ntrans {

namespace {

using Triplet = Eigen::Triplet<double>;

// Upwind stencil of v . grad at one prompt state: neighbor gains along the
// travel direction, diagonal loss; absorbing faces simply drop the exterior
// neighbor. Pushes neighbor triplets, returns the diagonal coefficient.
double upwind_row(const StateSpace& space, int i, int c, int k,
                  std::vector<Triplet>& out) {
  const auto& mesh = space.mesh();
  const Vec3& v = space.vtable().velocity[k];
  int ix, iy, iz;
  mesh.cell_coords(c, ix, iy, iz);
  const double vel[3] = {v.x, v.y, v.z};
  const double h[3] = {mesh.hx(), mesh.hy(), mesh.hz()};
  const int n[3] = {mesh.nx(), mesh.ny(), mesh.nz()};
  const int coord[3] = {ix, iy, iz};
  const bool active[3] = {true, !mesh.one_dimensional(), !mesh.one_dimensional()};

  const int row = space.index(i, c, k);
  double diag = 0.0;
  for (int a = 0; a < 3; ++a) {
    if (!active[a] || vel[a] == 0.0) continue;
    const double coef = std::abs(vel[a]) / h[a];
    diag -= coef;
    const int step = vel[a] > 0.0 ? 1 : -1;
    const int na = coord[a] + step;
    if (na < 0 || na >= n[a]) continue;  // outflow face: value 0 outside
    int jx = ix, jy = iy, jz = iz;
    (a == 0 ? jx : a == 1 ? jy : jz) = na;
    out.emplace_back(row, space.index(i, mesh.cell_index(jx, jy, jz), k), coef);
  }
  return diag;
}

SpMat from_triplets(int rows, int cols, std::vector<Triplet>& trip) {
  SpMat m(rows, cols);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

double inf_norm(const SpMat& a) {
  Eigen::VectorXd row_sum = Eigen::VectorXd::Zero(a.rows());
  for (int outer = 0; outer < a.outerSize(); ++outer)
    for (SpMat::InnerIterator it(a, outer); it; ++it)
      row_sum[it.row()] += std::abs(it.value());
  return row_sum.size() > 0 ? row_sum.maxCoeff() : 0.0;
}

}  // namespace

StateSpace::StateSpace(SpeciesLayout layout, SpatialMesh mesh, VelocityTable vtable)
    : layout_(layout),
      mesh_(mesh),
      vtable_(std::move(vtable)),
      n_vel_(vtable_.count()) {
  n_ = layout_.total * mesh_.n_cells() * n_vel_;
  w_.resize(n_);
  for (int i = 0; i < layout_.total; ++i)
    for (int c = 0; c < mesh_.n_cells(); ++c)
      for (int k = 0; k < n_vel_; ++k)
        w_[index(i, c, k)] = mesh_.cell_volume(c) * vtable_.weight[k];
}

OperatorMatrices assemble(const CrossSectionLibrary& lib, const Domain& domain) {
  if (domain.shape() == Shape::kBall)
    throw std::invalid_argument(
        "assemble: ball domains are Monte Carlo only (no conforming voxel mesh)");

  OperatorMatrices mats;
  mats.space = StateSpace(lib.layout(), lib.mesh(), lib.vtable());
  const StateSpace& space = mats.space;
  const auto& lay = lib.layout();
  const auto& w = lib.vtable().weight;
  const int ell = lay.prompt, m = lay.total, Nc = lib.mesh().n_cells(),
            K = lib.n_velocities();
  const int Np = space.prompt_size();
  const int Nd = space.delayed_size();

  std::vector<Triplet> trip_a, trip_t, trip_ktop, trip_m, trip_kbot;

  for (int c = 0; c < Nc; ++c) {
    for (int k = 0; k < K; ++k) {
      // Prompt rows: upwind transport, total removal, gain kernels.
      for (int i = 0; i < ell; ++i) {
        const int row = space.index(i, c, k);
        std::vector<Triplet> adv;
        const double adv_diag = upwind_row(space, i, c, k, adv);
        const double t_diag = adv_diag - lib.total_rate(i, c, k);

        for (const auto& entry : adv) {
          trip_a.push_back(entry);
          trip_t.push_back(entry);
        }
        trip_t.emplace_back(row, row, t_diag);

        double gain_diag = 0.0;
        for (int j = 0; j < ell; ++j)
          for (int kp = 0; kp < K; ++kp) {
            const double gain = kernel_k(lib, i, j, c, k, kp) * w[kp];
            if (j == i && kp == k) {
              gain_diag = gain;
              trip_ktop.emplace_back(row, row, gain);
            } else {
              trip_ktop.emplace_back(row, space.index(j, c, kp), gain);
              if (gain != 0.0) trip_a.emplace_back(row, space.index(j, c, kp), gain);
            }
          }
        trip_a.emplace_back(row, row, t_diag + gain_diag);

        if (i == 0)
          for (int j = ell; j < m; ++j) {
            const double prod = lib.sigma_f(0, c, k) * lib.m_yield(j, c, k);
            trip_m.emplace_back(row, space.index(j, c, k) - Np, prod);
            if (prod != 0.0) trip_a.emplace_back(row, space.index(j, c, k), prod);
          }
      }
      // Delayed rows: pure decay plus conversion into prompt emissions.
      for (int i = ell; i < m; ++i) {
        const int row = space.index(i, c, k);
        for (int j = 0; j < ell; ++j)
          for (int kp = 0; kp < K; ++kp) {
            const double gain = kernel_k(lib, i, j, c, k, kp) * w[kp];
            trip_kbot.emplace_back(row - Np, space.index(j, c, kp), gain);
            if (gain != 0.0) trip_a.emplace_back(row, space.index(j, c, kp), gain);
          }
        trip_a.emplace_back(row, row, -lib.lambda_delay(i));
      }
    }
  }

  mats.A_bwd = from_triplets(space.size(), space.size(), trip_a);
  mats.T_block = from_triplets(Np, Np, trip_t);
  mats.K_top = from_triplets(Np, Np, trip_ktop);
  mats.M_block = from_triplets(Np, Nd, trip_m);
  mats.K_bottom = from_triplets(Nd, Np, trip_kbot);

  mats.lambda_states.resize(Nd);
  for (int i = ell; i < m; ++i)
    for (int c = 0; c < Nc; ++c)
      for (int k = 0; k < K; ++k)
        mats.lambda_states[space.index(i, c, k) - Np] = lib.lambda_delay(i);

  mats.lambda_delay.assign(lay.delayed(), 0.0);
  for (int i = ell; i < m; ++i) mats.lambda_delay[i - ell] = lib.lambda_delay(i);

  // Weighted adjoint: A_fwd = W^{-1} A^T W.
  const Vector& wts = space.weights();
  SpMat at = SpMat(mats.A_bwd.transpose());
  mats.A_fwd = wts.cwiseInverse().asDiagonal() * at * wts.asDiagonal();

  mats.sigma_min_prompt = kInfiniteTime;
  for (int i = 0; i < ell; ++i)
    for (int z = 0; z < lib.n_zones(); ++z)
      for (int k = 0; k < K; ++k)
        mats.sigma_min_prompt = std::min(mats.sigma_min_prompt, lib.total_rate_z(i, z, k));
  mats.max_rate = lib.max_total_rate();
  mats.norm_inf = inf_norm(mats.A_bwd);
  return mats;
}

SpMat compose_blocks(const OperatorMatrices& mats) {
  const int n = mats.space.size();
  const int np = mats.space.prompt_size();
  const int nd = mats.space.delayed_size();

  std::vector<Triplet> trip;
  auto append = [&trip](const SpMat& block, int row0, int col0) {
    for (int outer = 0; outer < block.outerSize(); ++outer)
      for (SpMat::InnerIterator it(block, outer); it; ++it)
        trip.emplace_back(row0 + it.row(), col0 + it.col(), it.value());
  };
  // [T, 0; 0, -Lambda]
  append(mats.T_block, 0, 0);
  for (int d = 0; d < nd; ++d)
    trip.emplace_back(np + d, np + d, -mats.lambda_states[d]);
  SpMat transport = from_triplets(n, n, trip);

  trip.clear();
  append(mats.K_top, 0, 0);
  append(mats.M_block, 0, np);
  append(mats.K_bottom, np, 0);
  SpMat kernels = from_triplets(n, n, trip);

  return transport + kernels;
}

double admissible_dt(const OperatorMatrices& mats) {
  const auto& mesh = mats.space.mesh();
  const auto& vt = mats.space.vtable();
  double vx = 0.0, vy = 0.0, vz = 0.0;
  for (const auto& v : vt.velocity) {
    vx = std::max(vx, std::abs(v.x));
    vy = std::max(vy, std::abs(v.y));
    vz = std::max(vz, std::abs(v.z));
  }
  double dt = mats.max_rate > 0.0 ? 1.0 / mats.max_rate : kInfiniteTime;
  if (vx > 0.0) dt = std::min(dt, mesh.hx() / vx);
  if (!mesh.one_dimensional()) {
    if (vy > 0.0) dt = std::min(dt, mesh.hy() / vy);
    if (vz > 0.0) dt = std::min(dt, mesh.hz() / vz);
  }
  return dt;
}

Vector evolve_acp(const OperatorMatrices& mats, const Vector& g, double t, double dt) {
  if (g.size() != mats.space.size())
    throw std::invalid_argument("evolve_acp: state size mismatch");
  if (!(t >= 0.0)) throw std::invalid_argument("evolve_acp: negative time");
  if (t == 0.0) return g;
  const double adm = admissible_dt(mats);
  if (!(dt > 0.0) || dt > adm * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "evolve_acp: dt = " << dt << " violates the stability bound; admissible dt <= "
       << adm;
    throw std::invalid_argument(os.str());
  }
  const long n = static_cast<long>(std::ceil(t / dt - 1e-12));
  const double h = t / static_cast<double>(n);
  Vector u = g;
  Vector k1, k2, k3, k4;
  for (long s = 0; s < n; ++s) {
    k1 = mats.A_bwd * u;
    k2 = mats.A_bwd * (u + 0.5 * h * k1);
    k3 = mats.A_bwd * (u + 0.5 * h * k2);
    k4 = mats.A_bwd * (u + h * k3);
    u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return u;
}

Vector evolve_reference(const OperatorMatrices& mats, const Vector& g, double t) {
  if (mats.space.size() > 2000)
    throw std::invalid_argument(
        "evolve_reference: dense exponential limited to N <= 2000");
  Eigen::MatrixXd dense = Eigen::MatrixXd(mats.A_bwd);
  return (t * dense).exp() * g;
}

namespace {

// Clamped piecewise-linear evaluation of a per-(species, velocity) grid
// function at shifted cell centers, zero outside the domain. Identity on
// delayed species (holders never advect).
SpMat build_shift(const StateSpace& space, const Domain& domain, double s) {
  const auto& mesh = space.mesh();
  const int K = space.n_velocities();
  const int Nc = mesh.n_cells();
  const int ell = space.layout().prompt;
  const int m = space.layout().total;
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(space.size()) * 2);

  struct AxisInterp {
    int i0, i1;
    double w0, w1;
  };
  auto axis_interp = [](double coord, double lo, double h, int n) {
    const double u = (coord - lo) / h - 0.5;
    const int i0 = static_cast<int>(std::floor(u));
    const double frac = u - i0;
    if (i0 < 0) return AxisInterp{0, 0, 1.0, 0.0};
    if (i0 >= n - 1) return AxisInterp{n - 1, n - 1, 1.0, 0.0};
    return AxisInterp{i0, i0 + 1, 1.0 - frac, frac};
  };

  for (int k = 0; k < K; ++k) {
    const Vec3& v = space.vtable().velocity[k];
    for (int c = 0; c < Nc; ++c) {
      const Vec3 target = mesh.cell_center(c) + s * v;
      Vec3 probe = target;
      if (mesh.one_dimensional()) probe.y = probe.z = 0.0;
      if (!domain.contains(probe) && s > 0.0) continue;  // killed rows stay zero
      const auto ax = axis_interp(target.x, domain.lo().x, mesh.hx(), mesh.nx());
      for (int i = 0; i < ell; ++i) {
        const int row = space.index(i, c, k);
        if (mesh.one_dimensional()) {
          trip.emplace_back(row, space.index(i, mesh.cell_index(ax.i0, 0, 0), k), ax.w0);
          if (ax.w1 != 0.0)
            trip.emplace_back(row, space.index(i, mesh.cell_index(ax.i1, 0, 0), k), ax.w1);
        } else {
          const auto ay = axis_interp(target.y, domain.lo().y, mesh.hy(), mesh.ny());
          const auto az = axis_interp(target.z, domain.lo().z, mesh.hz(), mesh.nz());
          const AxisInterp axes[3] = {ax, ay, az};
          for (int bx = 0; bx < 2; ++bx)
            for (int by = 0; by < 2; ++by)
              for (int bz = 0; bz < 2; ++bz) {
                const double weight = (bx ? axes[0].w1 : axes[0].w0) *
                                      (by ? axes[1].w1 : axes[1].w0) *
                                      (bz ? axes[2].w1 : axes[2].w0);
                if (weight == 0.0) continue;
                const int cc = mesh.cell_index(bx ? axes[0].i1 : axes[0].i0,
                                               by ? axes[1].i1 : axes[1].i0,
                                               bz ? axes[2].i1 : axes[2].i0);
                trip.emplace_back(row, space.index(i, cc, k), weight);
              }
        }
      }
    }
  }
  for (int i = ell; i < m; ++i)
    for (int c = 0; c < Nc; ++c)
      for (int k = 0; k < K; ++k) {
        const int row = space.index(i, c, k);
        trip.emplace_back(row, row, 1.0);
      }
  return from_triplets(space.size(), space.size(), trip);
}

}  // namespace

SpMat build_collision(const CrossSectionLibrary& lib, const StateSpace& space) {
  const auto& lay = lib.layout();
  const auto& w = lib.vtable().weight;
  const int ell = lay.prompt, m = lay.total, Nc = lib.mesh().n_cells(),
            K = lib.n_velocities();
  std::vector<Triplet> trip;
  for (int c = 0; c < Nc; ++c)
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < ell; ++i) {
        const int row = space.index(i, c, k);
        for (int j = 0; j < ell; ++j)
          for (int kp = 0; kp < K; ++kp) {
            double gain = kernel_k(lib, i, j, c, k, kp) * w[kp];
            if (j == i && kp == k) gain -= lib.total_rate(i, c, k);
            if (gain != 0.0) trip.emplace_back(row, space.index(j, c, kp), gain);
          }
        if (i == 0)
          for (int j = ell; j < m; ++j) {
            const double prod = lib.sigma_f(0, c, k) * lib.m_yield(j, c, k);
            if (prod != 0.0) trip.emplace_back(row, space.index(j, c, k), prod);
          }
      }
      for (int i = ell; i < m; ++i) {
        const int row = space.index(i, c, k);
        for (int j = 0; j < ell; ++j)
          for (int kp = 0; kp < K; ++kp) {
            const double gain = kernel_k(lib, i, j, c, k, kp) * w[kp];
            if (gain != 0.0) trip.emplace_back(row, space.index(j, c, kp), gain);
          }
        trip.emplace_back(row, row, -lib.lambda_delay(i));
      }
    }
  return from_triplets(space.size(), space.size(), trip);
}

Vector mild_solve(const CrossSectionLibrary& lib, const Domain& domain, const Vector& g,
                  double t, int n_picard, int n_quad) {
  StateSpace space(lib.layout(), lib.mesh(), lib.vtable());
  if (g.size() != space.size())
    throw std::invalid_argument("mild_solve: state size mismatch");
  if (t == 0.0) return g;
  if (n_quad < 2) throw std::invalid_argument("mild_solve: n_quad must be >= 2");

  const SpMat collision = build_collision(lib, space);
  const double collision_norm = inf_norm(collision);

  // Split the horizon so each window is a contraction for the Picard map.
  const double window_max = collision_norm > 0.0 ? 0.5 / collision_norm : t;
  const int n_windows = std::max(1, static_cast<int>(std::ceil(t / window_max - 1e-12)));
  const double tau = t / n_windows;
  const double ds = tau / n_quad;

  std::vector<SpMat> shift(n_quad + 1);
  for (int q = 0; q <= n_quad; ++q) shift[q] = build_shift(space, domain, q * ds);

  Vector g_win = g;
  for (int win = 0; win < n_windows; ++win) {
    std::vector<Vector> u(n_quad + 1), u_next(n_quad + 1), cu(n_quad + 1);
    std::vector<Vector> base(n_quad + 1);
    for (int q = 0; q <= n_quad; ++q) {
      base[q] = shift[q] * g_win;
      u[q] = base[q];
    }

    bool converged = false;
    double diff = kInfiniteTime;
    for (int p = 0; p < n_picard; ++p) {
      for (int q = 0; q <= n_quad; ++q) cu[q] = collision * u[q];
      diff = 0.0;
      for (int n = 0; n <= n_quad; ++n) {
        Vector acc = base[n];
        for (int q = 0; n > 0 && q <= n; ++q) {
          const double wq = (q == 0 || q == n) ? 0.5 * ds : ds;
          acc += wq * (shift[q] * cu[n - q]);
        }
        diff = std::max(diff, (acc - u[n]).lpNorm<Eigen::Infinity>());
        u_next[n] = std::move(acc);
      }
      u.swap(u_next);
      if (diff < 1e-10) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      std::ostringstream os;
      os << "mild_solve: Picard iteration did not converge within " << n_picard
         << " sweeps (last sup-norm residual " << diff << ")";
      throw std::runtime_error(os.str());
    }
    g_win = u[n_quad];
  }
  return g_win;
}

CollapseIdentityResult collapse_identity_check(const OperatorMatrices& mats,
                                               const CollapsedKernel& kernel,
                                               int n_probes) {
  const StateSpace& space = mats.space;
  const auto& lay = kernel.layout();
  const int m = lay.total, Nc = space.mesh().n_cells(), K = space.n_velocities();

  // L + diag(beta) with the same upwind stencil as the assembled generator.
  std::vector<Triplet> trip;
  for (int c = 0; c < Nc; ++c)
    for (int k = 0; k < K; ++k)
      for (int i = 0; i < m; ++i) {
        const int row = space.index(i, c, k);
        double diag = 0.0;
        if (lay.is_prompt(i)) {
          std::vector<Triplet> adv;
          diag += upwind_row(space, i, c, k, adv);
          for (const auto& e : adv) trip.push_back(e);
        }
        const int z = kernel.zone_of_cell(c);
        const double alpha = kernel.alpha_z(i, z, k);
        for (int j = 0; j < m; ++j)
          for (int kp = 0; kp < K; ++kp) {
            const double gain = alpha * kernel.jump_prob_z(i, z, k, j, kp);
            if (gain == 0.0) continue;
            if (j == i && kp == k)
              diag += gain;
            else
              trip.emplace_back(row, space.index(j, c, kp), gain);
          }
        diag += -alpha + kernel.beta_z(i, z, k);
        trip.emplace_back(row, row, diag);
      }
  SpMat l_beta = from_triplets(space.size(), space.size(), trip);

  CollapseIdentityResult result;
  result.norm_a = mats.norm_inf;
  Rng rng(0x5eed, 0);
  for (int p = 0; p < n_probes; ++p) {
    Vector v(space.size());
    for (int idx = 0; idx < space.size(); ++idx) v[idx] = 2.0 * rng.uniform() - 1.0;
    const Vector resid = mats.A_bwd * v - l_beta * v;
    result.residual = std::max(result.residual, resid.lpNorm<Eigen::Infinity>());
  }
  result.pass = result.residual <= 1e-10 * result.norm_a;
  return result;
}

}  // namespace ntrans
