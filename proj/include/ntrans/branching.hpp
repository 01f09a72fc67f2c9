#pragma once

#include <functional>
#include <vector>

#include "ntrans/geometry.hpp"
#include "ntrans/species.hpp"
#include "ntrans/tally.hpp"

namespace ntrans {

// Detector functional g(species, position, velocity index); bounded and
// non-negative.
using DetectorFn = std::function<double(int, const Vec3&, int)>;

inline DetectorFn constant_detector(double value) {
  return [value](int, const Vec3&, int) { return value; };
}

struct Particle {
  int species = 0;
  Vec3 r;
  int velocity = 0;  // index into the velocity table; a mark for holders
};

struct Population {
  double time = 0.0;
  std::vector<Particle> particles;
};

enum class EventKind { kScatter, kFission, kDecay, kBoundaryExit };

struct SampledEvent {
  double dt = 0.0;
  EventKind kind = EventKind::kBoundaryExit;
};

// Time and kind of the next event for one emission, sampled by exact
// inversion of the piecewise-constant cumulative rate along its ray.
// Prompt emissions compete scatter against fission at the event location;
// delayed holders are stationary and only ever decay.
SampledEvent sample_event(const Particle& p, const CrossSectionLibrary& lib,
                          const Domain& domain, Rng& rng);

// New velocity from the scatter row at the particle's cell.
Particle scatter(const Particle& p, const CrossSectionLibrary& lib, Rng& rng);

// Offspring of a fission (prompt parent) or decay (delayed parent) event.
// Channel counts are floor(mean) + Bernoulli(frac), independent across
// channels; isotope offspring inherit the parent configuration as a mark.
std::vector<Particle> fission(const Particle& p, const CrossSectionLibrary& lib,
                              Rng& rng);

// Event-driven evolution of a whole population to time t. Throws when the
// number of tracked emissions exceeds population_cap.
Population simulate_population(const Population& initial, const CrossSectionLibrary& lib,
                               const Domain& domain, double t, Rng& rng,
                               long population_cap = 10000000);

// Monte Carlo estimate of the expected detector response <g, X_t> from a
// single source emission.
TallyEstimate estimate_psi(const CrossSectionLibrary& lib, const Domain& domain,
                           const DetectorFn& g, const Particle& source, double t,
                           const SimOptions& options);

// Uniform a-priori bound sup psi_t[g] <= ||g||_inf * exp(eta*(n_max*m - 1)*t)
// from the continuous-time Galton-Watson comparison.
double growth_bound(const CrossSectionLibrary& lib, double g_sup, double t);

// The comparison Galton-Watson process itself: every individual branches at
// rate eta into `offspring` individuals. Used for the blowup diagnostics and
// for the monotone-coupling property test.
struct DominatingProcess {
  double eta = 0.0;
  int offspring = 1;

  double mean_at(double t) const;
  // Counts along one path at the given increasing times; non-decreasing
  // since every event replaces one individual by at least one.
  std::vector<long> sample_counts(const std::vector<double>& times, Rng& rng,
                                  long cap) const;
};

DominatingProcess dominating_process(const CrossSectionLibrary& lib);

}  // namespace ntrans
