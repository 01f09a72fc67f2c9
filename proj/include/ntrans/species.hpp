#pragma once

#include <string>
#include <vector>

#include "ntrans/geometry.hpp"
#include "ntrans/vec3.hpp"

namespace ntrans {

// Species 1..ell are prompt emissions (type 1 are the neutrons), species
// ell+1..m are delayed-emission isotopes. Indices are 0-based in code and
// 1-based in configuration files and reports.
struct SpeciesLayout {
  int total = 1;   // m
  int prompt = 1;  // ell

  int delayed() const { return total - prompt; }
  bool is_prompt(int i) const { return i < prompt; }
};

// Finite velocity set with quadrature weights standing in for the annulus
// V = { v_min < |v| < v_max }. Weights carry the velocity-space measure, so
// kernel rows integrate as weighted sums.
struct VelocityTable {
  std::vector<Vec3> velocity;
  std::vector<double> weight;
  double v_min = 0.0;
  double v_max = 0.0;

  int count() const { return static_cast<int>(velocity.size()); }
  double annulus_volume() const;
  double max_speed() const;
  double max_axis_speed() const;
};

struct ValidationIssue {
  std::string check;   // stable identifier of the violated invariant
  std::string detail;  // human-readable, with 1-based coordinates
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
  std::string to_string() const;
};

// All rates and kernels of the problem on mesh cells x velocity table.
// Cross sections are piecewise constant in space: cells map to material
// zones, tables are stored per zone. Immutable after construction;
// construction performs structural (size) checks only, physics invariants
// are the job of validate_library().
class CrossSectionLibrary {
 public:
  struct Tables {
    std::vector<double> sigma_s;       // [ell][Z][K] scatter rate, 1/s
    std::vector<double> sigma_f;       // [ell][Z][K] fission rate, 1/s
    std::vector<double> pi_s;          // [ell][Z][K][K'] scatter yield density
    std::vector<double> pi_f;          // [m][ell][Z][K][K'] mean prompt yield density
    std::vector<double> m_yield;       // [m-ell][Z][K] mean isotope yield per type-1 fission
    std::vector<double> lambda_delay;  // [m-ell] decay rates, 1/s
    int n_max = 1;                     // offspring cap per channel
  };

  CrossSectionLibrary(SpeciesLayout layout, VelocityTable vtable,
                      SpatialMesh mesh, std::vector<int> cell_zone,
                      int n_zones, Tables tables);

  const SpeciesLayout& layout() const { return layout_; }
  const VelocityTable& vtable() const { return vtable_; }
  const SpatialMesh& mesh() const { return mesh_; }
  int n_zones() const { return n_zones_; }
  int n_velocities() const { return n_vel_; }
  int n_max() const { return tables_.n_max; }
  int zone_of_cell(int c) const { return cell_zone_[c]; }

  // Zone-level tables (i, j species; z zone; k, kp velocity indices).
  double sigma_s_z(int i, int z, int k) const;
  double sigma_f_z(int i, int z, int k) const;
  double pi_s_z(int i, int z, int k, int kp) const;
  double pi_f_z(int i, int j, int z, int k, int kp) const;
  double m_yield_z(int j, int z, int k) const;  // j in [ell, m)
  double lambda_delay(int i) const;             // i in [ell, m)

  // Cell-level views.
  double sigma_s(int i, int c, int k) const { return sigma_s_z(i, cell_zone_[c], k); }
  double sigma_f(int i, int c, int k) const { return sigma_f_z(i, cell_zone_[c], k); }
  double pi_s(int i, int c, int k, int kp) const {
    return pi_s_z(i, cell_zone_[c], k, kp);
  }
  double pi_f(int i, int j, int c, int k, int kp) const {
    return pi_f_z(i, j, cell_zone_[c], k, kp);
  }
  double m_yield(int j, int c, int k) const {
    return m_yield_z(j, cell_zone_[c], k);
  }

  // Total event rate: sigma_s + sigma_f for prompt species, the decay rate
  // for delayed holders.
  double total_rate(int i, int c, int k) const;
  double total_rate_z(int i, int z, int k) const;

  // Weighted mass of the prompt fission-yield row (sum over j <= ell and k').
  double prompt_yield_mass_z(int i, int z, int k) const;
  // Total mean isotope yield from a type-1 fission.
  double isotope_yield_mass_z(int z, int k) const;

  double max_total_rate() const;
  double max_fission_rate() const;
  double max_decay_rate() const;

 private:
  void check_index(int i, int c, int k) const;

  SpeciesLayout layout_;
  VelocityTable vtable_;
  SpatialMesh mesh_;
  std::vector<int> cell_zone_;
  int n_zones_ = 0;
  int n_vel_ = 0;
  Tables tables_;
};

// Physics-invariant audit. Structural problems throw at construction; this
// reports every violated model assumption with coordinates.
ValidationReport validate_library(const CrossSectionLibrary& lib);

// Integral-operator kernel entry k_{i,j}(r, v, v'): scatter contributes on
// the prompt diagonal only, fission everywhere; rows with i > ell carry the
// decay-rate kernel. j must be prompt.
double kernel_k(const CrossSectionLibrary& lib, int i, int j, int c, int k, int kp);

// Single-walker event law obtained by collapsing scattering and fission
// into one jump kernel plus a multiplicative potential. Jump targets are
// stored as ready-to-sample probabilities over (species j, velocity k');
// the isotope channel is a point mass at the incoming velocity.
class CollapsedKernel {
 public:
  CollapsedKernel(SpeciesLayout layout, int n_zones, int n_vel,
                  std::vector<int> cell_zone, std::vector<double> weight);

  const SpeciesLayout& layout() const { return layout_; }
  int n_zones() const { return n_zones_; }
  int n_velocities() const { return n_vel_; }
  int zone_of_cell(int c) const { return cell_zone_[c]; }

  double alpha(int i, int c, int k) const { return alpha_z(i, cell_zone_[c], k); }
  double beta(int i, int c, int k) const { return beta_z(i, cell_zone_[c], k); }
  double alpha_z(int i, int z, int k) const;
  double beta_z(int i, int z, int k) const;

  // Probability of jumping to (j, kp) from (i, ., k); rows sum to one
  // wherever alpha > 0.
  double jump_prob_z(int i, int z, int k, int j, int kp) const;
  double jump_prob(int i, int c, int k, int j, int kp) const {
    return jump_prob_z(i, cell_zone_[c], k, j, kp);
  }
  // Density view: probability divided by the quadrature weight.
  double pi_density_z(int i, int z, int k, int j, int kp) const {
    return jump_prob_z(i, z, k, j, kp) / weight_[kp];
  }

  double max_beta() const;  // the uniform potential bound
  double min_beta() const;

  double& alpha_mut(int i, int z, int k);
  double& beta_mut(int i, int z, int k);
  double& jump_prob_mut(int i, int z, int k, int j, int kp);

 private:
  SpeciesLayout layout_;
  int n_zones_ = 0;
  int n_vel_ = 0;
  std::vector<int> cell_zone_;
  std::vector<double> weight_;
  std::vector<double> alpha_;      // [m][Z][K]
  std::vector<double> beta_;       // [m][Z][K]
  std::vector<double> jump_prob_;  // [m][Z][K][m*K]
};

// Collapse per the alpha/pi/beta construction, velocity integrals replaced
// by weighted sums. Requires a structurally complete library.
CollapsedKernel collapse(const CrossSectionLibrary& lib);

// CollapsedKernel invariant audit: jump rows stochastic (hard, 1e-12), the
// potential non-negative and the delayed jump rate equal to the decay rate
// (both hold exactly when fission yield masses are >= 1 and delayed yield
// rows have unit mass; reported as flags otherwise).
ValidationReport check_collapsed(const CollapsedKernel& kernel,
                                 const CrossSectionLibrary& lib);

}  // namespace ntrans
