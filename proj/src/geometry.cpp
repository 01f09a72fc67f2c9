#include "ntrans/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace ntrans {

Domain Domain::slab(double x_min, double x_max) {
  if (!(x_min < x_max)) throw std::invalid_argument("slab: x_min must be < x_max");
  Domain d;
  d.shape_ = Shape::kSlab;
  d.lo_ = {x_min, 0.0, 0.0};
  d.hi_ = {x_max, 0.0, 0.0};
  return d;
}

Domain Domain::box(const Vec3& lo, const Vec3& hi) {
  if (!(lo.x < hi.x && lo.y < hi.y && lo.z < hi.z))
    throw std::invalid_argument("box: lo must be componentwise < hi");
  Domain d;
  d.shape_ = Shape::kBox;
  d.lo_ = lo;
  d.hi_ = hi;
  return d;
}

Domain Domain::ball(const Vec3& center, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("ball: radius must be > 0");
  Domain d;
  d.shape_ = Shape::kBall;
  d.center_ = center;
  d.radius_ = radius;
  d.lo_ = center - Vec3{radius, radius, radius};
  d.hi_ = center + Vec3{radius, radius, radius};
  return d;
}

bool Domain::contains(const Vec3& r) const {
  switch (shape_) {
    case Shape::kSlab:
      return r.x > lo_.x && r.x < hi_.x;
    case Shape::kBox:
      return r.x > lo_.x && r.x < hi_.x && r.y > lo_.y && r.y < hi_.y &&
             r.z > lo_.z && r.z < hi_.z;
    case Shape::kBall:
      return (r - center_).norm2() < radius_ * radius_;
  }
  return false;
}

namespace {

// Smallest positive crossing parameter along one axis; +inf if parallel.
double axis_exit(double r, double v, double lo, double hi) {
  if (v > 0.0) return (hi - r) / v;
  if (v < 0.0) return (lo - r) / v;
  return kInfiniteTime;
}

}  // namespace

double Domain::exit_time(const Vec3& r, const Vec3& v) const {
  if (!contains(r)) throw std::domain_error("exit_time: point not inside domain");
  switch (shape_) {
    case Shape::kSlab:
      return axis_exit(r.x, v.x, lo_.x, hi_.x);
    case Shape::kBox: {
      // Face selection by minimum positive intersection parameter; ties
      // resolve to the smallest axis index via strict comparison.
      double t = axis_exit(r.x, v.x, lo_.x, hi_.x);
      t = std::min(t, axis_exit(r.y, v.y, lo_.y, hi_.y));
      t = std::min(t, axis_exit(r.z, v.z, lo_.z, hi_.z));
      return t;
    }
    case Shape::kBall: {
      const double a = v.norm2();
      if (a == 0.0) return kInfiniteTime;
      const Vec3 rc = r - center_;
      const double b = dot(rc, v);
      const double c = rc.norm2() - radius_ * radius_;  // negative inside
      const double disc = b * b - a * c;
      return (-b + std::sqrt(disc)) / a;
    }
  }
  return kInfiniteTime;
}

Advected advect(const Domain& domain, const Vec3& r, const Vec3& v, double t) {
  const double kappa = domain.exit_time(r, v);
  if (t < kappa) return {true, r + t * v, kappa};
  return {false, {}, kappa};
}

SpatialMesh::SpatialMesh(const Domain& domain, int nx, int ny, int nz) {
  if (nx < 1 || ny < 1 || nz < 1)
    throw std::invalid_argument("mesh: cell counts must be >= 1");
  slab_ = domain.shape() == Shape::kSlab;
  if (slab_ && (ny != 1 || nz != 1))
    throw std::invalid_argument("mesh: slab domains take a 1-D grid (ny = nz = 1)");
  lo_ = domain.lo();
  hi_ = domain.hi();
  nx_ = nx;
  ny_ = ny;
  nz_ = nz;
  hx_ = (hi_.x - lo_.x) / nx_;
  hy_ = slab_ ? 1.0 : (hi_.y - lo_.y) / ny_;
  hz_ = slab_ ? 1.0 : (hi_.z - lo_.z) / nz_;
}

double SpatialMesh::min_spacing() const {
  double h = hx_;
  if (ny_ > 1) h = std::min(h, hy_);
  if (nz_ > 1) h = std::min(h, hz_);
  return h;
}

namespace {

int clamp_index(double u, double lo, double h, int n) {
  int i = static_cast<int>(std::floor((u - lo) / h));
  return std::clamp(i, 0, n - 1);
}

}  // namespace

int SpatialMesh::cell_of(const Vec3& r) const {
  const int ix = clamp_index(r.x, lo_.x, hx_, nx_);
  const int iy = slab_ ? 0 : clamp_index(r.y, lo_.y, hy_, ny_);
  const int iz = slab_ ? 0 : clamp_index(r.z, lo_.z, hz_, nz_);
  return cell_index(ix, iy, iz);
}

Vec3 SpatialMesh::cell_center(int c) const {
  int ix, iy, iz;
  cell_coords(c, ix, iy, iz);
  Vec3 p;
  p.x = lo_.x + (ix + 0.5) * hx_;
  p.y = slab_ ? 0.0 : lo_.y + (iy + 0.5) * hy_;
  p.z = slab_ ? 0.0 : lo_.z + (iz + 0.5) * hz_;
  return p;
}

double SpatialMesh::cell_volume(int) const { return hx_ * hy_ * hz_; }

RaySegmentation trace_segments(const SpatialMesh& mesh, const Domain& domain,
                               const Vec3& r, const Vec3& v, double t) {
  const double t_end = std::min(t, domain.exit_time(r, v));
  RaySegmentation segments;
  if (!(t_end > 0.0)) return segments;

  int ix = 0, iy = 0, iz = 0;
  mesh.cell_coords(mesh.cell_of(r), ix, iy, iz);
  int idx[3] = {ix, iy, iz};
  const int n[3] = {mesh.nx(), mesh.ny(), mesh.nz()};
  const double h[3] = {mesh.hx(), mesh.hy(), mesh.hz()};
  const double lo[3] = {domain.lo().x, domain.lo().y, domain.lo().z};
  const double pos[3] = {r.x, r.y, r.z};
  const double vel[3] = {v.x, v.y, v.z};
  const bool active[3] = {true, !mesh.one_dimensional(), !mesh.one_dimensional()};

  double t_cur = 0.0;
  while (t_cur < t_end) {
    // Next grid-plane crossing per axis from the current cell.
    double t_next = kInfiniteTime;
    int step_axis = -1;
    for (int a = 0; a < 3; ++a) {
      if (!active[a] || vel[a] == 0.0) continue;
      const int face = vel[a] > 0.0 ? idx[a] + 1 : idx[a];
      const double ta = (lo[a] + face * h[a] - pos[a]) / vel[a];
      if (ta < t_next) {
        t_next = ta;
        step_axis = a;
      }
    }
    const int cell = mesh.cell_index(idx[0], idx[1], idx[2]);
    if (t_next >= t_end || step_axis < 0) {
      segments.push_back({cell, t_cur, t_end});
      break;
    }
    // Degenerate corner crossings (t_next == t_cur) advance the cell index
    // without emitting an empty segment.
    if (t_next > t_cur) segments.push_back({cell, t_cur, t_next});
    idx[step_axis] += vel[step_axis] > 0.0 ? 1 : -1;
    if (idx[step_axis] < 0 || idx[step_axis] >= n[step_axis]) {
      // Leaving the grid can only happen within roundoff of the domain
      // exit; close the trace at t_end.
      if (segments.empty()) segments.push_back({cell, t_cur, t_end});
      segments.back().t_out = t_end;
      break;
    }
    t_cur = std::max(t_next, t_cur);
  }
  return segments;
}

}  // namespace ntrans
