#pragma once

#include <vector>

#include "ntrans/operators.hpp"
#include "ntrans/tally.hpp"

namespace ntrans {

// Leading eigentriple of the discretised generator with the measured (or
// estimated) spectral gap.
struct Eigensolution {
  double lambda_c = 0.0;
  Vector phi;        // right eigenfunction, entrywise >= 0, ||phi||_w = 1
  Vector phi_tilde;  // left eigenfunction, <phi, phi_tilde>_w = 1
  double gap = 0.0;  // epsilon; dense-spectrum value or fit estimate
  bool gap_is_dense = false;
  int iterations = 0;
  double residual_right = 0.0;  // ||A phi - lambda phi||_w / ||phi||_w
  double residual_left = 0.0;
};

// Power iteration on the evolved semigroup V_delta (exponential power
// iteration); the left eigenfunction comes from the same iteration on the
// forward adjoint. delta <= 0 selects the default 0.1 / ||A||_inf.
Eigensolution leading_eigenpair(const OperatorMatrices& mats, double delta,
                                double tol = 1e-12, int max_iter = 20000);

// K(lambda) = K_top + M (lambda I + Lambda)^{-1} K_bottom; lambda must lie
// above -lambda_{ell+1}.
SpMat build_klambda(const OperatorMatrices& mats, double lambda);

// Spectral radius of (lambda I - T)^{-1} K(lambda) by positive power
// iteration on the resolvent route.
double spectral_radius_r(const OperatorMatrices& mats, double lambda,
                         double tol = 1e-12, int max_iter = 5000);

// Lowest admissible lambda for the resolvent route: above both the delayed
// pole and the spectral bound of the transport block.
double resolvent_floor(const OperatorMatrices& mats, double configured_floor);

// Root of r(lambda) = 1 by bracketing plus bisection (r is decreasing).
// configured_floor is used only when the library has no delayed species;
// NaN selects the default -10 * max total rate.
double lambda_c_by_root(const OperatorMatrices& mats, double tol = 1e-10,
                        double configured_floor =
                            std::numeric_limits<double>::quiet_NaN());

// Delayed components from the prompt eigenfunction:
// phi_delayed = (lambda I + Lambda)^{-1} K_bottom phi_prompt. Returns the
// concatenated full-space eigenfunction.
Vector delayed_from_prompt(const OperatorMatrices& mats, double lambda_c,
                           const Vector& phi_prompt);

// Dense-spectrum gap measurement (N <= 2000): lambda_c minus the larger of
// the second-highest real part and -lambda_{ell+1}.
double measure_gap_dense(const OperatorMatrices& mats, double lambda_c);

struct DecayReport {
  std::vector<double> t;
  std::vector<double> rho;  // || e^{-lambda_c t} V_t f - <f, phi~> phi ||_2
  double slope = 0.0;       // least-squares slope of log rho
  double eps = 0.0;         // gap used for the assertion
  bool saturated = false;   // all residuals at the numerical floor
  bool pass = false;        // slope <= -eps + 0.1 |eps| (or saturated)
};

DecayReport asymptotic_decay_check(const OperatorMatrices& mats,
                                   const Eigensolution& eig, const Vector& f,
                                   const std::vector<double>& t_grid);

struct GrowthFit {
  double slope = 0.0;
  double ci95 = 0.0;  // half-width from the delta method
  int n_used = 0;
};

// Weighted least-squares slope of log(mean) over the post-burn-in window of
// a Monte Carlo tally series.
GrowthFit mc_growth_rate(const std::vector<TallyEstimate>& series,
                         double burn_in_fraction = 0.3);

}  // namespace ntrans
