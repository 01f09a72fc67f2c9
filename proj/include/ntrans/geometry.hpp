#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ntrans/vec3.hpp"

namespace ntrans {

constexpr double kInfiniteTime = std::numeric_limits<double>::infinity();

enum class Shape { kSlab, kBox, kBall };

// Bounded open convex region with absorbing boundary. The slab is a 1-D
// interval in x with transverse coordinates ignored; particles keep full
// 3-D velocities but only the x component can take them out of the domain.
class Domain {
 public:
  static Domain slab(double x_min, double x_max);
  static Domain box(const Vec3& lo, const Vec3& hi);
  static Domain ball(const Vec3& center, double radius);

  Shape shape() const { return shape_; }
  const Vec3& lo() const { return lo_; }
  const Vec3& hi() const { return hi_; }
  const Vec3& center() const { return center_; }
  double radius() const { return radius_; }

  // Open-set membership; points exactly on the boundary count as exited.
  bool contains(const Vec3& r) const;

  // First time r + s*v leaves the domain. Requires r inside; returns
  // +infinity when the ray never exits (zero velocity, or slab motion
  // with no x component).
  double exit_time(const Vec3& r, const Vec3& v) const;

 private:
  Shape shape_ = Shape::kBox;
  Vec3 lo_, hi_;
  Vec3 center_;
  double radius_ = 0.0;
};

struct Advected {
  bool inside = false;
  Vec3 position;     // valid when inside
  double exit_time;  // always the exact exit time of the ray
};

// Free streaming for time t with killing at the boundary.
Advected advect(const Domain& domain, const Vec3& r, const Vec3& v, double t);

// Axis-aligned voxel grid over the domain's bounding box. Slab domains get
// a 1-D grid in x; cell volume there is the cell width (unit transverse
// cross-section).
class SpatialMesh {
 public:
  SpatialMesh() = default;
  SpatialMesh(const Domain& domain, int nx, int ny = 1, int nz = 1);

  int n_cells() const { return nx_ * ny_ * nz_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  bool one_dimensional() const { return slab_; }

  double hx() const { return hx_; }
  double hy() const { return hy_; }
  double hz() const { return hz_; }
  double min_spacing() const;

  int cell_of(const Vec3& r) const;
  Vec3 cell_center(int c) const;
  double cell_volume(int c) const;

  int cell_index(int ix, int iy, int iz) const {
    return (iz * ny_ + iy) * nx_ + ix;
  }
  void cell_coords(int c, int& ix, int& iy, int& iz) const {
    ix = c % nx_;
    iy = (c / nx_) % ny_;
    iz = c / (nx_ * ny_);
  }

 private:
  Vec3 lo_, hi_;
  int nx_ = 1, ny_ = 1, nz_ = 1;
  double hx_ = 1.0, hy_ = 1.0, hz_ = 1.0;
  bool slab_ = false;
};

struct RaySegment {
  int cell = -1;
  double t_in = 0.0;
  double t_out = 0.0;
};

using RaySegmentation = std::vector<RaySegment>;

// Cells visited by r + s*v for s in [0, min(t, exit time)), with entry and
// exit times per cell. Segments are contiguous and strictly increasing;
// zero-length crossings are dropped.
RaySegmentation trace_segments(const SpatialMesh& mesh, const Domain& domain,
                               const Vec3& r, const Vec3& v, double t);

}  // namespace ntrans
