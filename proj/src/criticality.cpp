#include "ntrans/criticality.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ntrans {

namespace {

// One-sided power iteration on a matvec closure; returns the converged
// eigenvalue-of-the-map and leaves the iterate in v.
struct PowerResult {
  double ratio = 0.0;
  int iterations = 0;
  double last_delta = 0.0;
  std::vector<double> ratio_history;
};

template <typename Apply>
PowerResult power_iterate(Vector& v, const Apply& apply, const StateSpace& space,
                          double tol, int max_iter, bool clamp_positive) {
  PowerResult res;
  double ratio_prev = 0.0;
  v /= space.norm2(v);
  for (int it = 1; it <= max_iter; ++it) {
    Vector next = apply(v);
    if (clamp_positive) next = next.cwiseMax(0.0);
    const double norm = space.norm2(next);
    if (!(norm > 0.0))
      throw std::runtime_error("power iteration: iterate collapsed to zero");
    const double ratio = space.inner(next, v) >= 0.0 ? norm : -norm;
    next /= norm;
    res.iterations = it;
    res.last_delta = std::abs(ratio - ratio_prev);
    res.ratio_history.push_back(ratio);
    v = next;
    if (it > 3 && res.last_delta < tol * std::max(1.0, std::abs(ratio))) {
      res.ratio = ratio;
      return res;
    }
    ratio_prev = ratio;
    res.ratio = ratio;
  }
  std::ostringstream os;
  os << "power iteration: no convergence after " << max_iter
     << " iterations (last two estimates " << ratio_prev << ", " << res.ratio << ")";
  throw std::runtime_error(os.str());
}

}  // namespace

Eigensolution leading_eigenpair(const OperatorMatrices& mats, double delta, double tol,
                                int max_iter) {
  const StateSpace& space = mats.space;
  const int n = space.size();
  if (!(delta > 0.0)) delta = 0.1 / std::max(mats.norm_inf, 1e-30);

  const bool dense_path = n <= 2000;
  Eigen::MatrixXd propagator;
  double dt_rk4 = 0.0;
  if (dense_path) {
    Eigen::MatrixXd dense = Eigen::MatrixXd(mats.A_bwd);
    propagator = (delta * dense).exp();
  } else {
    dt_rk4 = 0.2 * admissible_dt(mats);
  }

  auto step_right = [&](const Vector& v) -> Vector {
    if (dense_path) return propagator * v;
    return evolve_acp(mats, v, delta, dt_rk4);
  };

  Eigensolution eig;

  // Right eigenfunction.
  Vector v = Vector::Ones(n);
  auto res_r = power_iterate(v, step_right, space, tol, max_iter, true);

  // Polish: iterate until the generator residual stabilises at its floor.
  double lambda = std::log(res_r.ratio) / delta;
  double residual = kInfiniteTime;
  for (int extra = 0; extra < max_iter; ++extra) {
    const Vector av = mats.A_bwd * v;
    lambda = space.inner(av, v) / space.inner(v, v);
    const double res = space.norm2(av - lambda * v) / space.norm2(v);
    if (res < 1e-10 * std::max(1.0, std::abs(lambda)) || res > 0.99 * residual) {
      residual = std::min(res, residual);
      break;
    }
    residual = res;
    Vector next = step_right(v).cwiseMax(0.0);
    v = next / space.norm2(next);
    ++res_r.iterations;
  }
  eig.phi = v;
  eig.lambda_c = lambda;
  eig.residual_right = residual;
  eig.iterations = res_r.iterations;

  // Left eigenfunction on the forward adjoint; for the dense path reuse the
  // propagator through W^{-1} E^T W.
  Eigen::MatrixXd propagator_fwd;
  if (dense_path) {
    const Vector& w = space.weights();
    propagator_fwd =
        w.cwiseInverse().asDiagonal() * propagator.transpose() * w.asDiagonal();
  }
  auto step_left = [&](const Vector& u) -> Vector {
    if (dense_path) return propagator_fwd * u;
    // Same RK4 scheme on the adjoint matrix.
    const double adm = dt_rk4;
    const long steps = static_cast<long>(std::ceil(delta / adm - 1e-12));
    const double h = delta / static_cast<double>(steps);
    Vector y = u;
    Vector k1, k2, k3, k4;
    for (long s = 0; s < steps; ++s) {
      k1 = mats.A_fwd * y;
      k2 = mats.A_fwd * (y + 0.5 * h * k1);
      k3 = mats.A_fwd * (y + 0.5 * h * k2);
      k4 = mats.A_fwd * (y + h * k3);
      y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return y;
  };

  Vector u = Vector::Ones(n);
  power_iterate(u, step_left, space, tol, max_iter, true);
  double residual_left = kInfiniteTime;
  for (int extra = 0; extra < max_iter; ++extra) {
    const Vector au = mats.A_fwd * u;
    const double lam_l = space.inner(au, u) / space.inner(u, u);
    const double res = space.norm2(au - lam_l * u) / space.norm2(u);
    if (res < 1e-10 * std::max(1.0, std::abs(lam_l)) || res > 0.99 * residual_left) {
      residual_left = std::min(res, residual_left);
      break;
    }
    residual_left = res;
    Vector next = step_left(u).cwiseMax(0.0);
    u = next / space.norm2(next);
  }
  eig.residual_left = residual_left;

  // Sign and normalization conventions.
  if (eig.phi.sum() < 0.0) eig.phi = -eig.phi;
  if (u.sum() < 0.0) u = -u;
  const double pairing = space.inner(eig.phi, u);
  if (!(std::abs(pairing) > 0.0))
    throw std::runtime_error("leading_eigenpair: degenerate <phi, phi_tilde> pairing");
  eig.phi_tilde = u / pairing;

  // Gap estimate from the tail convergence ratio of the power iteration.
  const auto& hist = res_r.ratio_history;
  if (hist.size() >= 6) {
    double num = 0.0;
    int cnt = 0;
    for (std::size_t q = hist.size() - 4; q < hist.size(); ++q) {
      const double d1 = std::abs(hist[q] - hist[q - 1]);
      const double d0 = std::abs(hist[q - 1] - hist[q - 2]);
      if (d0 > 0.0 && d1 > 0.0 && d1 < d0) {
        num += d1 / d0;
        ++cnt;
      }
    }
    if (cnt > 0) eig.gap = -std::log(num / cnt) / delta;
  }
  eig.gap_is_dense = false;
  return eig;
}

SpMat build_klambda(const OperatorMatrices& mats, double lambda) {
  if (!mats.lambda_delay.empty() && lambda <= -mats.lambda_delay.front()) {
    std::ostringstream os;
    os << "build_klambda: lambda = " << lambda << " is not above -lambda_{ell+1} = "
       << -mats.lambda_delay.front();
    throw std::domain_error(os.str());
  }
  if (mats.lambda_delay.empty()) return mats.K_top;
  Vector d = (mats.lambda_states.array() + lambda).inverse();
  SpMat middle = mats.M_block * d.asDiagonal() * mats.K_bottom;
  return mats.K_top + middle;
}

double resolvent_floor(const OperatorMatrices& mats, double configured_floor) {
  double floor = configured_floor;
  if (!mats.lambda_delay.empty())
    floor = std::max(floor, -mats.lambda_delay.front());
  // The discrete transport block keeps spectrum below -min(sigma); the
  // resolvent route is meaningful (an M-matrix solve) only above it.
  floor = std::max(floor, -mats.sigma_min_prompt);
  return floor;
}

double spectral_radius_r(const OperatorMatrices& mats, double lambda, double tol,
                         int max_iter) {
  const SpMat klam = build_klambda(mats, lambda);
  if (lambda <= -mats.sigma_min_prompt) {
    std::ostringstream os;
    os << "spectral_radius_r: lambda = " << lambda
       << " is below the transport spectral bound " << -mats.sigma_min_prompt;
    throw std::domain_error(os.str());
  }
  const int np = mats.space.prompt_size();
  SpMat resolvent_matrix = -mats.T_block;
  for (int d = 0; d < np; ++d) resolvent_matrix.coeffRef(d, d) += lambda;
  resolvent_matrix.makeCompressed();

  Eigen::SparseLU<SpMat> lu;
  lu.compute(resolvent_matrix);
  if (lu.info() != Eigen::Success)
    throw std::runtime_error("spectral_radius_r: resolvent factorisation failed");

  Vector w = Vector::Ones(np);
  w /= w.norm();
  double ratio_prev = 0.0, ratio = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    Vector next = lu.solve(klam * w);
    if (lu.info() != Eigen::Success)
      throw std::runtime_error("spectral_radius_r: resolvent solve failed");
    next = next.cwiseMax(0.0);  // positive eigenfunction (Krein-Rutman)
    const double norm = next.norm();
    if (!(norm > 0.0))
      throw std::runtime_error("spectral_radius_r: iterate vanished (kernel empty?)");
    ratio = norm;  // w is kept at unit norm
    w = next / norm;
    if (it > 3 && std::abs(ratio - ratio_prev) < tol * std::max(1.0, ratio))
      return ratio;
    ratio_prev = ratio;
  }
  std::ostringstream os;
  os << "spectral_radius_r: no convergence after " << max_iter
     << " iterations (last estimates " << ratio_prev << ", " << ratio << ")";
  throw std::runtime_error(os.str());
}

double lambda_c_by_root(const OperatorMatrices& mats, double tol,
                        double configured_floor) {
  double user_floor = configured_floor;
  if (std::isnan(user_floor)) user_floor = -10.0 * std::max(mats.max_rate, 1e-30);
  const double floor = resolvent_floor(mats, user_floor);

  const double delta0 = 1e-6 * std::max(1.0, std::abs(floor));
  double lo = floor + delta0;
  double r_lo = spectral_radius_r(mats, lo);
  if (r_lo <= 1.0) {
    std::ostringstream os;
    os << "lambda_c_by_root: no bracket, r(" << lo << ") = " << r_lo
       << " <= 1 already at the search floor " << floor
       << " (library subcritical beyond the admissible region)";
    throw std::runtime_error(os.str());
  }

  double step = std::max(0.25, 0.25 * std::abs(floor));
  double hi = lo + step;
  double r_hi = spectral_radius_r(mats, hi);
  int expansions = 0;
  while (r_hi >= 1.0) {
    lo = hi;
    r_lo = r_hi;
    step *= 2.0;
    hi = lo + step;
    if (++expansions > 60)
      throw std::runtime_error("lambda_c_by_root: bracket expansion budget exceeded");
    r_hi = spectral_radius_r(mats, hi);
  }

  // Bisection; monotonicity of r makes it safe.
  double mid = 0.5 * (lo + hi), r_mid = 0.0;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    r_mid = spectral_radius_r(mats, mid);
    if (std::abs(r_mid - 1.0) < tol || hi - lo < 1e-14 * (1.0 + std::abs(mid))) break;
    if (r_mid > 1.0)
      lo = mid;
    else
      hi = mid;
  }
  return mid;
}

Vector delayed_from_prompt(const OperatorMatrices& mats, double lambda_c,
                           const Vector& phi_prompt) {
  if (!mats.lambda_delay.empty() && lambda_c <= -mats.lambda_delay.front())
    throw std::domain_error("delayed_from_prompt: lambda_c not above -lambda_{ell+1}");
  const int np = mats.space.prompt_size();
  const int nd = mats.space.delayed_size();
  Vector full(np + nd);
  full.head(np) = phi_prompt;
  if (nd > 0) {
    Vector d = (mats.lambda_states.array() + lambda_c).inverse();
    full.tail(nd) = d.asDiagonal() * (mats.K_bottom * phi_prompt);
  }
  return full;
}

double measure_gap_dense(const OperatorMatrices& mats, double lambda_c) {
  if (mats.space.size() > 2000)
    throw std::invalid_argument("measure_gap_dense: dense spectrum limited to N <= 2000");
  Eigen::MatrixXd dense = Eigen::MatrixXd(mats.A_bwd);
  Eigen::EigenSolver<Eigen::MatrixXd> solver(dense, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("measure_gap_dense: eigensolver failed");

  const auto& vals = solver.eigenvalues();
  const double sep = 1e-6 * std::max(1.0, std::abs(lambda_c));
  double second = -kInfiniteTime;
  for (int q = 0; q < vals.size(); ++q) {
    const double re = vals[q].real();
    if (re < lambda_c - sep) second = std::max(second, re);
  }
  double bound = second;
  if (!mats.lambda_delay.empty())
    bound = std::max(bound, -mats.lambda_delay.front());
  return lambda_c - bound;
}

DecayReport asymptotic_decay_check(const OperatorMatrices& mats,
                                   const Eigensolution& eig, const Vector& f,
                                   const std::vector<double>& t_grid) {
  if (t_grid.empty()) throw std::invalid_argument("asymptotic_decay_check: empty grid");
  for (std::size_t q = 1; q < t_grid.size(); ++q)
    if (!(t_grid[q] > t_grid[q - 1]))
      throw std::invalid_argument("asymptotic_decay_check: t_grid must increase");

  DecayReport report;
  report.eps = eig.gap;
  const StateSpace& space = mats.space;
  const double proj = space.inner(f, eig.phi_tilde);

  const double dt = 0.2 * admissible_dt(mats);
  Vector y = f;  // y(t) = e^{-lambda_c t} V_t[f], advanced stepwise
  double t_cur = 0.0;
  for (double t_q : t_grid) {
    const double step = t_q - t_cur;
    if (step > 0.0) {
      y = evolve_acp(mats, y, step, dt);
      y *= std::exp(-eig.lambda_c * step);
      t_cur = t_q;
    }
    report.t.push_back(t_q);
    report.rho.push_back(space.norm2(y - proj * eig.phi));
  }

  // Least-squares slope of log rho over points above the numerical floor.
  constexpr double kFloor = 1e-13;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t q = 0; q < report.t.size(); ++q) {
    if (report.rho[q] <= kFloor) continue;
    const double x = report.t[q], yv = std::log(report.rho[q]);
    sx += x;
    sy += yv;
    sxx += x * x;
    sxy += x * yv;
    ++n;
  }
  if (n < 2) {
    report.saturated = true;
    report.pass = true;
    return report;
  }
  report.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  report.pass = report.slope <= -report.eps + 0.1 * std::abs(report.eps);
  return report;
}

GrowthFit mc_growth_rate(const std::vector<TallyEstimate>& series,
                         double burn_in_fraction) {
  if (series.size() < 4)
    throw std::invalid_argument("mc_growth_rate: need at least 4 time points");
  const double t_max = series.back().t;
  const double t_min_keep = burn_in_fraction * t_max;

  double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
  int n = 0;
  for (const auto& est : series) {
    if (est.t < t_min_keep) continue;
    if (!(est.mean > 0.0))
      throw std::runtime_error(
          "mc_growth_rate: non-positive mean tally in the fit window (population died; "
          "subcritical with too few paths)");
    const double x = est.t;
    const double y = std::log(est.mean);
    const double rel = est.std_error / est.mean;  // delta method on log(mean)
    const double var = std::max(rel * rel, 1e-30);
    const double wt = 1.0 / var;
    sw += wt;
    swx += wt * x;
    swy += wt * y;
    swxx += wt * x * x;
    swxy += wt * x * y;
    ++n;
  }
  if (n < 4)
    throw std::invalid_argument(
        "mc_growth_rate: fewer than 4 time points past the burn-in window");

  const double det = sw * swxx - swx * swx;
  GrowthFit fit;
  fit.n_used = n;
  fit.slope = (sw * swxy - swx * swy) / det;
  fit.ci95 = 1.96 * std::sqrt(sw / det);
  return fit;
}

}  // namespace ntrans
