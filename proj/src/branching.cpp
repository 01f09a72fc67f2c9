#include "ntrans/branching.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ntrans {

namespace {

// Inversion of P(T > s) = exp(-int_0^s rate) for a piecewise-constant rate
// along the flight; returns the event time or +inf if the target exceeds
// the accumulated rate before min(kappa, horizon).
double invert_event_time(const RaySegmentation& segments,
                         const std::function<double(int)>& rate_of_cell,
                         double target) {
  for (const auto& seg : segments) {
    const double rate = rate_of_cell(seg.cell);
    if (rate <= 0.0) continue;
    const double need = rate * (seg.t_out - seg.t_in);
    if (target <= need) return seg.t_in + target / rate;
    target -= need;
  }
  return kInfiniteTime;
}

}  // namespace

SampledEvent sample_event(const Particle& p, const CrossSectionLibrary& lib,
                          const Domain& domain, Rng& rng) {
  const auto& lay = lib.layout();
  if (!lay.is_prompt(p.species)) {
    return {rng.exponential(lib.lambda_delay(p.species)), EventKind::kDecay};
  }

  const Vec3 v = lib.vtable().velocity[p.velocity];
  const double kappa = domain.exit_time(p.r, v);
  const double target = rng.std_exponential();

  double event_time;
  if (std::isinf(kappa)) {
    // Only possible for slab motion with no x component: the ray stays in
    // one cell forever.
    const double rate = lib.total_rate(p.species, lib.mesh().cell_of(p.r), p.velocity);
    if (rate <= 0.0)
      throw std::runtime_error(
          "sample_event: zero total rate on a ray that never exits the domain");
    event_time = target / rate;
  } else {
    const auto segments = trace_segments(lib.mesh(), domain, p.r, v, kappa);
    event_time = invert_event_time(
        segments, [&](int c) { return lib.total_rate(p.species, c, p.velocity); },
        target);
    if (event_time >= kappa) return {kappa, EventKind::kBoundaryExit};
  }

  const Vec3 site = p.r + event_time * v;
  const int c = lib.mesh().cell_of(site);
  const double sig_s = lib.sigma_s(p.species, c, p.velocity);
  const double sig_f = lib.sigma_f(p.species, c, p.velocity);
  const bool is_scatter = rng.uniform() * (sig_s + sig_f) < sig_s;
  return {event_time, is_scatter ? EventKind::kScatter : EventKind::kFission};
}

Particle scatter(const Particle& p, const CrossSectionLibrary& lib, Rng& rng) {
  const int c = lib.mesh().cell_of(p.r);
  const int K = lib.n_velocities();
  const auto& w = lib.vtable().weight;

  double total = 0.0;
  for (int kp = 0; kp < K; ++kp) total += lib.pi_s(p.species, c, p.velocity, kp) * w[kp];
  if (!(total > 0.0))
    throw std::runtime_error("scatter: pi_s row has no mass (library not validated?)");

  const double u = rng.uniform() * total;
  double acc = 0.0;
  int chosen = K - 1;
  for (int kp = 0; kp < K; ++kp) {
    acc += lib.pi_s(p.species, c, p.velocity, kp) * w[kp];
    if (u < acc) {
      chosen = kp;
      break;
    }
  }
  Particle out = p;
  out.velocity = chosen;
  return out;
}

std::vector<Particle> fission(const Particle& p, const CrossSectionLibrary& lib,
                              Rng& rng) {
  const auto& lay = lib.layout();
  const int c = lib.mesh().cell_of(p.r);
  const int K = lib.n_velocities();
  const auto& w = lib.vtable().weight;

  std::vector<Particle> offspring;
  auto emit = [&](double mean, int j, int kp) {
    if (mean <= 0.0) return;
    const double base = std::floor(mean);
    long n = static_cast<long>(base);
    if (rng.bernoulli(mean - base)) ++n;
    for (long q = 0; q < n; ++q) offspring.push_back({j, p.r, kp});
  };

  for (int j = 0; j < lay.prompt; ++j)
    for (int kp = 0; kp < K; ++kp)
      emit(lib.pi_f(p.species, j, c, p.velocity, kp) * w[kp], j, kp);

  // Isotope production happens only at type-1 fission; holders inherit the
  // parent configuration as a mark.
  if (p.species == 0)
    for (int j = lay.prompt; j < lay.total; ++j)
      emit(lib.m_yield(j, c, p.velocity), j, p.velocity);

  return offspring;
}

namespace {

struct PendingParticle {
  Particle particle;
  double birth_time;
};

}  // namespace

Population simulate_population(const Population& initial, const CrossSectionLibrary& lib,
                               const Domain& domain, double t, Rng& rng,
                               long population_cap) {
  const auto& lay = lib.layout();
  Population out;
  out.time = t;
  if (initial.particles.empty()) return out;

  std::vector<PendingParticle> stack;
  stack.reserve(initial.particles.size());
  for (const auto& p : initial.particles) stack.push_back({p, initial.time});

  while (!stack.empty()) {
    auto [p, clock] = stack.back();
    stack.pop_back();

    bool alive = true;
    while (alive) {
      const double remaining = t - clock;
      if (remaining <= 0.0) break;
      const auto event = sample_event(p, lib, domain, rng);
      const bool prompt = lay.is_prompt(p.species);
      if (event.dt >= remaining) {
        if (prompt) p.r = p.r + remaining * lib.vtable().velocity[p.velocity];
        clock = t;
        break;
      }
      clock += event.dt;
      switch (event.kind) {
        case EventKind::kBoundaryExit:
          alive = false;
          break;
        case EventKind::kScatter:
          p.r = p.r + event.dt * lib.vtable().velocity[p.velocity];
          p = scatter(p, lib, rng);
          break;
        case EventKind::kFission:
        case EventKind::kDecay: {
          if (prompt) p.r = p.r + event.dt * lib.vtable().velocity[p.velocity];
          auto children = fission(p, lib, rng);
          alive = false;
          const long tracked = static_cast<long>(stack.size() + out.particles.size() +
                                                 children.size());
          if (tracked > population_cap) {
            std::ostringstream os;
            os << "simulate_population: supercritical blowup, tracked emissions exceed "
               << "the population cap " << population_cap
               << " (Galton-Watson mean bound at t = " << t << ": "
               << dominating_process(lib).mean_at(t) << " per source emission)";
            throw std::runtime_error(os.str());
          }
          for (const auto& child : children) stack.push_back({child, clock});
          break;
        }
      }
    }
    if (alive && clock >= t) out.particles.push_back(p);
  }
  return out;
}

TallyEstimate estimate_psi(const CrossSectionLibrary& lib, const Domain& domain,
                           const DetectorFn& g, const Particle& source, double t,
                           const SimOptions& options) {
  if (!domain.contains(source.r))
    throw std::invalid_argument("estimate_psi: source position outside the domain");
  Population initial;
  initial.time = 0.0;
  initial.particles.push_back(source);

  return run_paths(options, t, [&](long, Rng& rng) {
    const Population final = simulate_population(initial, lib, domain, t, rng,
                                                 options.population_cap);
    double score = 0.0;
    for (const auto& p : final.particles) score += g(p.species, p.r, p.velocity);
    return score;
  });
}

double growth_bound(const CrossSectionLibrary& lib, double g_sup, double t) {
  const auto proc = dominating_process(lib);
  return g_sup * std::exp(proc.eta * (static_cast<double>(lib.n_max()) *
                                          lib.layout().total -
                                      1.0) *
                          t);
}

double DominatingProcess::mean_at(double t) const {
  return std::exp(eta * (offspring - 1) * t);
}

std::vector<long> DominatingProcess::sample_counts(const std::vector<double>& times,
                                                   Rng& rng, long cap) const {
  std::vector<long> counts;
  counts.reserve(times.size());
  long z = 1;
  double clock = 0.0;
  for (double t_query : times) {
    while (z > 0 && z <= cap && eta > 0.0) {
      const double dt = rng.std_exponential() / (eta * static_cast<double>(z));
      if (clock + dt > t_query) break;
      clock += dt;
      z += offspring - 1;
    }
    counts.push_back(z);
  }
  return counts;
}

DominatingProcess dominating_process(const CrossSectionLibrary& lib) {
  DominatingProcess proc;
  proc.eta = lib.max_fission_rate() + lib.max_decay_rate();
  proc.offspring = lib.n_max() * lib.layout().total;
  return proc;
}

}  // namespace ntrans
