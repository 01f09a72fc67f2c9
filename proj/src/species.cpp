#include "ntrans/species.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ntrans {

namespace {

constexpr double kNormTol = 1e-12;

std::string at(int i, int z, int k, int kp = -1, int j = -1) {
  std::ostringstream os;
  os << "(species " << i + 1;
  if (j >= 0) os << ", target " << j + 1;
  os << ", zone " << z << ", velocity " << k + 1;
  if (kp >= 0) os << " -> " << kp + 1;
  os << ")";
  return os.str();
}

}  // namespace

double VelocityTable::annulus_volume() const {
  return 4.0 / 3.0 * std::numbers::pi * (v_max * v_max * v_max - v_min * v_min * v_min);
}

double VelocityTable::max_speed() const {
  double s = 0.0;
  for (const auto& v : velocity) s = std::max(s, v.norm());
  return s;
}

double VelocityTable::max_axis_speed() const {
  double s = 0.0;
  for (const auto& v : velocity)
    s = std::max({s, std::abs(v.x), std::abs(v.y), std::abs(v.z)});
  return s;
}

std::string ValidationReport::to_string() const {
  if (issues.empty()) return "ok\n";
  std::ostringstream os;
  for (const auto& issue : issues) os << issue.check << ": " << issue.detail << "\n";
  return os.str();
}

CrossSectionLibrary::CrossSectionLibrary(SpeciesLayout layout, VelocityTable vtable,
                                         SpatialMesh mesh, std::vector<int> cell_zone,
                                         int n_zones, Tables tables)
    : layout_(layout),
      vtable_(std::move(vtable)),
      mesh_(mesh),
      cell_zone_(std::move(cell_zone)),
      n_zones_(n_zones),
      n_vel_(vtable_.count()),
      tables_(std::move(tables)) {
  if (layout_.prompt < 1 || layout_.prompt > layout_.total)
    throw std::invalid_argument("library: need 1 <= ell <= m");
  if (n_vel_ < 1 || vtable_.weight.size() != vtable_.velocity.size())
    throw std::invalid_argument("library: velocity table malformed");
  if (n_zones_ < 1) throw std::invalid_argument("library: need at least one zone");
  if (static_cast<int>(cell_zone_.size()) != mesh_.n_cells())
    throw std::invalid_argument("library: cell-to-zone map size mismatch");
  for (int z : cell_zone_)
    if (z < 0 || z >= n_zones_)
      throw std::invalid_argument("library: zone index out of range");

  const std::size_t m = layout_.total, ell = layout_.prompt, md = layout_.delayed();
  const std::size_t Z = n_zones_, K = n_vel_;
  auto expect = [](const char* name, std::size_t got, std::size_t want) {
    if (got != want) {
      std::ostringstream os;
      os << "library: table " << name << " has " << got << " entries, expected " << want;
      throw std::invalid_argument(os.str());
    }
  };
  expect("sigma_s", tables_.sigma_s.size(), ell * Z * K);
  expect("sigma_f", tables_.sigma_f.size(), ell * Z * K);
  expect("pi_s", tables_.pi_s.size(), ell * Z * K * K);
  expect("pi_f", tables_.pi_f.size(), m * ell * Z * K * K);
  expect("m_yield", tables_.m_yield.size(), md * Z * K);
  expect("lambda_delay", tables_.lambda_delay.size(), md);
  if (tables_.n_max < 1) throw std::invalid_argument("library: n_max must be >= 1");
}

double CrossSectionLibrary::sigma_s_z(int i, int z, int k) const {
  return tables_.sigma_s[(static_cast<std::size_t>(i) * n_zones_ + z) * n_vel_ + k];
}

double CrossSectionLibrary::sigma_f_z(int i, int z, int k) const {
  return tables_.sigma_f[(static_cast<std::size_t>(i) * n_zones_ + z) * n_vel_ + k];
}

double CrossSectionLibrary::pi_s_z(int i, int z, int k, int kp) const {
  return tables_.pi_s[((static_cast<std::size_t>(i) * n_zones_ + z) * n_vel_ + k) * n_vel_ + kp];
}

double CrossSectionLibrary::pi_f_z(int i, int j, int z, int k, int kp) const {
  const std::size_t idx =
      (((static_cast<std::size_t>(i) * layout_.prompt + j) * n_zones_ + z) * n_vel_ + k) * n_vel_ + kp;
  return tables_.pi_f[idx];
}

double CrossSectionLibrary::m_yield_z(int j, int z, int k) const {
  return tables_.m_yield[(static_cast<std::size_t>(j - layout_.prompt) * n_zones_ + z) * n_vel_ + k];
}

double CrossSectionLibrary::lambda_delay(int i) const {
  if (i < layout_.prompt || i >= layout_.total)
    throw std::out_of_range("lambda_delay: species is not delayed");
  return tables_.lambda_delay[i - layout_.prompt];
}

double CrossSectionLibrary::total_rate_z(int i, int z, int k) const {
  if (i < 0 || i >= layout_.total || z < 0 || z >= n_zones_ || k < 0 || k >= n_vel_)
    throw std::out_of_range("total_rate: index out of range");
  if (layout_.is_prompt(i)) return sigma_s_z(i, z, k) + sigma_f_z(i, z, k);
  return lambda_delay(i);
}

double CrossSectionLibrary::total_rate(int i, int c, int k) const {
  if (c < 0 || c >= mesh_.n_cells()) throw std::out_of_range("total_rate: bad cell");
  return total_rate_z(i, cell_zone_[c], k);
}

double CrossSectionLibrary::prompt_yield_mass_z(int i, int z, int k) const {
  double mass = 0.0;
  for (int j = 0; j < layout_.prompt; ++j)
    for (int kp = 0; kp < n_vel_; ++kp)
      mass += pi_f_z(i, j, z, k, kp) * vtable_.weight[kp];
  return mass;
}

double CrossSectionLibrary::isotope_yield_mass_z(int z, int k) const {
  double mass = 0.0;
  for (int j = layout_.prompt; j < layout_.total; ++j) mass += m_yield_z(j, z, k);
  return mass;
}

double CrossSectionLibrary::max_total_rate() const {
  double r = 0.0;
  for (int i = 0; i < layout_.total; ++i)
    for (int z = 0; z < n_zones_; ++z)
      for (int k = 0; k < n_vel_; ++k) r = std::max(r, total_rate_z(i, z, k));
  return r;
}

double CrossSectionLibrary::max_fission_rate() const {
  double r = 0.0;
  for (int i = 0; i < layout_.prompt; ++i)
    for (int z = 0; z < n_zones_; ++z)
      for (int k = 0; k < n_vel_; ++k) r = std::max(r, sigma_f_z(i, z, k));
  return r;
}

double CrossSectionLibrary::max_decay_rate() const {
  double r = 0.0;
  for (double l : tables_.lambda_delay) r = std::max(r, l);
  return r;
}

ValidationReport validate_library(const CrossSectionLibrary& lib) {
  ValidationReport report;
  const auto& lay = lib.layout();
  const int ell = lay.prompt, m = lay.total, Z = lib.n_zones(), K = lib.n_velocities();
  const auto& w = lib.vtable().weight;

  auto flag = [&report](const std::string& check, const std::string& detail) {
    report.issues.push_back({check, detail});
  };

  // Velocity table consistency.
  if (!(lib.vtable().v_min > 0.0) || !(lib.vtable().v_min <= lib.vtable().v_max))
    flag("speed_bounds", "need 0 < v_min <= v_max");
  for (int k = 0; k < K; ++k) {
    const double speed = lib.vtable().velocity[k].norm();
    if (speed < lib.vtable().v_min - kNormTol || speed > lib.vtable().v_max + kNormTol)
      flag("speed_bounds", "velocity " + std::to_string(k + 1) + " outside [v_min, v_max]");
    if (!(w[k] > 0.0))
      flag("weight_positive", "weight " + std::to_string(k + 1) + " not positive");
  }
  double wsum = 0.0;
  for (double wk : w) wsum += wk;
  const double vol = lib.vtable().annulus_volume();
  if (std::abs(wsum - vol) > 1e-12 * std::max(1.0, vol)) {
    std::ostringstream os;
    os << "sum of weights " << wsum << " != annulus volume " << vol;
    flag("weight_volume", os.str());
  }

  auto entry_ok = [&flag](double v, const std::string& where) {
    if (!(v >= 0.0) || !std::isfinite(v)) flag("nonnegative_finite", where);
  };

  for (int z = 0; z < Z; ++z) {
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < ell; ++i) {
        entry_ok(lib.sigma_s_z(i, z, k), "sigma_s " + at(i, z, k));
        entry_ok(lib.sigma_f_z(i, z, k), "sigma_f " + at(i, z, k));
        double row = 0.0;
        for (int kp = 0; kp < K; ++kp) {
          entry_ok(lib.pi_s_z(i, z, k, kp), "pi_s " + at(i, z, k, kp));
          row += lib.pi_s_z(i, z, k, kp) * w[kp];
        }
        if (std::abs(row - 1.0) > kNormTol) {
          std::ostringstream os;
          os << "pi_s row sums to " << row << " at " << at(i, z, k);
          flag("pi_s_row_sum", os.str());
        }
      }
      for (int i = 0; i < m; ++i) {
        double mass = 0.0;
        for (int j = 0; j < ell; ++j)
          for (int kp = 0; kp < K; ++kp) {
            entry_ok(lib.pi_f_z(i, j, z, k, kp), "pi_f " + at(i, z, k, kp, j));
            mass += lib.pi_f_z(i, j, z, k, kp) * w[kp];
          }
        if (mass > lib.n_max() + kNormTol) {
          std::ostringstream os;
          os << "pi_f yield mass " << mass << " exceeds n_max " << lib.n_max() << " at "
             << at(i, z, k);
          flag("yield_cap", os.str());
        }
      }
      for (int j = ell; j < m; ++j) {
        entry_ok(lib.m_yield_z(j, z, k), "m_yield " + at(j, z, k));
        if (lib.m_yield_z(j, z, k) > lib.n_max() + kNormTol)
          flag("yield_cap", "m_yield exceeds n_max at " + at(j, z, k));
        if (!(lib.sigma_f_z(0, z, k) * lib.m_yield_z(j, z, k) > 0.0))
          flag("isotope_production_positive",
               "sigma_f^1 * m_yield vanishes at " + at(j, z, k));
      }
    }
  }

  // Prompt species must scatter everywhere (sigma_s * pi_s bounded away
  // from zero on the whole table).
  for (int i = 0; i < ell; ++i) {
    double lower = kInfiniteTime;
    for (int z = 0; z < Z; ++z)
      for (int k = 0; k < K; ++k)
        for (int kp = 0; kp < K; ++kp)
          lower = std::min(lower, lib.sigma_s_z(i, z, k) * lib.pi_s_z(i, z, k, kp));
    if (!(lower > 0.0))
      flag("scatter_positive",
           "sigma_s * pi_s not bounded away from zero for species " + std::to_string(i + 1));
  }

  for (int i = ell; i < m; ++i) {
    const double l = lib.lambda_delay(i);
    if (!(l > 0.0))
      flag("decay_rate_positive", "lambda <= 0 for species " + std::to_string(i + 1));
    if (i > ell && !(lib.lambda_delay(i - 1) < l))
      flag("decay_rate_ordering", "lambda_delay not strictly increasing at species " +
                                      std::to_string(i + 1));
  }

  return report;
}

double kernel_k(const CrossSectionLibrary& lib, int i, int j, int c, int k, int kp) {
  const auto& lay = lib.layout();
  if (i < 0 || i >= lay.total || j < 0 || j >= lay.prompt)
    throw std::out_of_range("kernel_k: species index out of range");
  if (c < 0 || c >= lib.mesh().n_cells() || k < 0 || k >= lib.n_velocities() ||
      kp < 0 || kp >= lib.n_velocities())
    throw std::out_of_range("kernel_k: coordinate out of range");
  if (lay.is_prompt(i)) {
    double value = lib.sigma_f(i, c, k) * lib.pi_f(i, j, c, k, kp);
    if (i == j) value += lib.sigma_s(i, c, k) * lib.pi_s(i, c, k, kp);
    return value;
  }
  return lib.lambda_delay(i) * lib.pi_f(i, j, c, k, kp);
}

CollapsedKernel::CollapsedKernel(SpeciesLayout layout, int n_zones, int n_vel,
                                 std::vector<int> cell_zone, std::vector<double> weight)
    : layout_(layout),
      n_zones_(n_zones),
      n_vel_(n_vel),
      cell_zone_(std::move(cell_zone)),
      weight_(std::move(weight)) {
  const std::size_t states = static_cast<std::size_t>(layout_.total) * n_zones_ * n_vel_;
  alpha_.assign(states, 0.0);
  beta_.assign(states, 0.0);
  jump_prob_.assign(states * layout_.total * n_vel_, 0.0);
}

double CollapsedKernel::alpha_z(int i, int z, int k) const {
  return alpha_[(static_cast<std::size_t>(i) * n_zones_ + z) * n_vel_ + k];
}

double CollapsedKernel::beta_z(int i, int z, int k) const {
  return beta_[(static_cast<std::size_t>(i) * n_zones_ + z) * n_vel_ + k];
}

double CollapsedKernel::jump_prob_z(int i, int z, int k, int j, int kp) const {
  const std::size_t row = (static_cast<std::size_t>(i) * n_zones_ + z) * n_vel_ + k;
  return jump_prob_[row * layout_.total * n_vel_ + static_cast<std::size_t>(j) * n_vel_ + kp];
}

double& CollapsedKernel::alpha_mut(int i, int z, int k) {
  return alpha_[(static_cast<std::size_t>(i) * n_zones_ + z) * n_vel_ + k];
}

double& CollapsedKernel::beta_mut(int i, int z, int k) {
  return beta_[(static_cast<std::size_t>(i) * n_zones_ + z) * n_vel_ + k];
}

double& CollapsedKernel::jump_prob_mut(int i, int z, int k, int j, int kp) {
  const std::size_t row = (static_cast<std::size_t>(i) * n_zones_ + z) * n_vel_ + k;
  return jump_prob_[row * layout_.total * n_vel_ + static_cast<std::size_t>(j) * n_vel_ + kp];
}

double CollapsedKernel::max_beta() const {
  double b = -kInfiniteTime;
  for (double v : beta_) b = std::max(b, v);
  return b;
}

double CollapsedKernel::min_beta() const {
  double b = kInfiniteTime;
  for (double v : beta_) b = std::min(b, v);
  return b;
}

CollapsedKernel collapse(const CrossSectionLibrary& lib) {
  const auto& lay = lib.layout();
  const int ell = lay.prompt, m = lay.total, Z = lib.n_zones(), K = lib.n_velocities();
  const auto& w = lib.vtable().weight;

  std::vector<int> cell_zone(lib.mesh().n_cells());
  for (int c = 0; c < lib.mesh().n_cells(); ++c) cell_zone[c] = lib.zone_of_cell(c);
  CollapsedKernel out(lay, Z, K, std::move(cell_zone), w);

  for (int z = 0; z < Z; ++z) {
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < m; ++i) {
        const bool prompt = lay.is_prompt(i);
        const double yield_mass = lib.prompt_yield_mass_z(i, z, k);
        const double iso_mass = (i == 0 && m > ell) ? lib.isotope_yield_mass_z(z, k) : 0.0;

        double alpha;
        if (prompt) {
          alpha = lib.sigma_s_z(i, z, k) + lib.sigma_f_z(i, z, k) * (yield_mass + iso_mass);
        } else {
          alpha = lib.lambda_delay(i) * yield_mass;
        }
        out.alpha_mut(i, z, k) = alpha;
        out.beta_mut(i, z, k) =
            alpha - (prompt ? lib.sigma_s_z(i, z, k) + lib.sigma_f_z(i, z, k)
                            : lib.lambda_delay(i));
        if (alpha == 0.0) continue;  // never sampled; row stays zero

        if (prompt) {
          const double sig_s = lib.sigma_s_z(i, z, k);
          const double sig_f = lib.sigma_f_z(i, z, k);
          for (int j = 0; j < ell; ++j)
            for (int kp = 0; kp < K; ++kp) {
              double numer = sig_f * lib.pi_f_z(i, j, z, k, kp);
              if (i == j) numer += sig_s * lib.pi_s_z(i, z, k, kp);
              out.jump_prob_mut(i, z, k, j, kp) = numer * w[kp] / alpha;
            }
          if (i == 0)
            for (int j = ell; j < m; ++j)
              out.jump_prob_mut(i, z, k, j, k) = sig_f * lib.m_yield_z(j, z, k) / alpha;
        } else {
          const double l = lib.lambda_delay(i);
          for (int j = 0; j < ell; ++j)
            for (int kp = 0; kp < K; ++kp)
              out.jump_prob_mut(i, z, k, j, kp) = l * lib.pi_f_z(i, j, z, k, kp) * w[kp] / alpha;
        }
      }
    }
  }
  return out;
}

ValidationReport check_collapsed(const CollapsedKernel& kernel,
                                 const CrossSectionLibrary& lib) {
  ValidationReport report;
  const auto& lay = kernel.layout();
  const int m = lay.total, Z = kernel.n_zones(), K = kernel.n_velocities();

  for (int i = 0; i < m; ++i)
    for (int z = 0; z < Z; ++z)
      for (int k = 0; k < K; ++k) {
        const double alpha = kernel.alpha_z(i, z, k);
        if (alpha > 0.0) {
          double row = 0.0;
          for (int j = 0; j < m; ++j)
            for (int kp = 0; kp < K; ++kp) row += kernel.jump_prob_z(i, z, k, j, kp);
          if (std::abs(row - 1.0) > kNormTol) {
            std::ostringstream os;
            os << "jump row sums to " << row << " at " << at(i, z, k);
            report.issues.push_back({"pi_row_sum", os.str()});
          }
        }
        if (kernel.beta_z(i, z, k) < -kNormTol)
          report.issues.push_back(
              {"beta_nonnegative", "beta = " + std::to_string(kernel.beta_z(i, z, k)) +
                                       " at " + at(i, z, k)});
        if (!lay.is_prompt(i) &&
            std::abs(alpha - lib.lambda_delay(i)) > kNormTol * std::max(1.0, lib.lambda_delay(i)))
          report.issues.push_back(
              {"alpha_equals_decay_rate",
               "alpha != lambda for delayed species at " + at(i, z, k)});
      }
  return report;
}

}  // namespace ntrans
