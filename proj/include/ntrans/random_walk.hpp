#pragma once

#include "ntrans/branching.hpp"
#include "ntrans/geometry.hpp"
#include "ntrans/species.hpp"
#include "ntrans/tally.hpp"

namespace ntrans {

// Single weighted walker (J_t, R_t, Upsilon_t) with accumulated potential.
// The weight is kept in the log domain and exponentiated only at tally time.
struct WalkState {
  int species = 0;
  Vec3 r;
  int velocity = 0;
  double log_weight = 0.0;
  bool alive = true;
  double time = 0.0;
};

// Everything a walker consumes: the collapsed jump kernel plus geometry.
// The walk deliberately shares the ray-tracing and event-inversion code
// with the branching engine so discrepancies isolate the collapse itself.
struct WalkContext {
  const CollapsedKernel& kernel;
  const Domain& domain;
  const SpatialMesh& mesh;
  const VelocityTable& vtable;
};

// Advances the walker by one jump, by the boundary kill, or to the time
// horizon, whichever comes first, accumulating the potential along the way.
WalkState step_walk(const WalkState& state, const WalkContext& ctx, double t_max,
                    Rng& rng);

// Monte Carlo estimate of the Feynman-Kac average
// E[ exp(int_0^t beta) g(J_t, R_t, Y_t) ; t < tau_D ].
TallyEstimate estimate_phi(const WalkContext& ctx, const DetectorFn& g,
                           const WalkState& source, double t,
                           const SimOptions& options);

struct SemigroupCheck {
  TallyEstimate direct;    // phi_{s+t}[g]
  TallyEstimate composed;  // phi_s[phi_t[g]] with the inner layer tabulated
  double z = 0.0;
  bool pass = false;
};

// Two-sided 3-sigma z-test of the semigroup property phi_{s+t} = phi_s o
// phi_t on a homogeneous boundary-free scenario (the inner layer is then a
// function of (species, velocity) only and is tabulated exactly).
SemigroupCheck check_semigroup_phi(const WalkContext& ctx,
                                   const CrossSectionLibrary& lib, const DetectorFn& g,
                                   const WalkState& source, double s, double t,
                                   const SimOptions& options);

// Exact phi_t[g] table on the (species, velocity) state space of a
// homogeneous boundary-free problem; entry (i*K + k).
std::vector<double> tabulate_phi_homogeneous(const CollapsedKernel& kernel,
                                             const CrossSectionLibrary& lib,
                                             const DetectorFn& g, double t);

}  // namespace ntrans
