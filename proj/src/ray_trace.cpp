#include "denois/ray_trace.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>

#include "denois/error.hpp"

namespace denois {

namespace {

// Liang-Barsky clip of p0 + a (p1 - p0), a in [0, 1], against the grid box.
std::optional<std::pair<double, double>> clip_parameters(const ImagingGrid& grid,
                                                         Point2 p0, Point2 p1) {
  double a_lo = 0.0;
  double a_hi = 1.0;
  const double dx = p1.x - p0.x;
  const double dz = p1.z - p0.z;
  auto clip_axis = [&](double start, double delta, double lo, double hi) {
    if (delta == 0.0) return start >= lo && start <= hi;
    double t0 = (lo - start) / delta;
    double t1 = (hi - start) / delta;
    if (t0 > t1) std::swap(t0, t1);
    a_lo = std::max(a_lo, t0);
    a_hi = std::min(a_hi, t1);
    return a_lo < a_hi;
  };
  if (!clip_axis(p0.x, dx, grid.x_min(), grid.x_max())) return std::nullopt;
  if (!clip_axis(p0.z, dz, grid.z_min(), grid.z_max())) return std::nullopt;
  if (!(a_lo < a_hi)) return std::nullopt;
  return std::pair{a_lo, a_hi};
}

// Parameters in (a_lo, a_hi) where the segment crosses boundary lines
// lo + k * h, in increasing order.
void plane_crossings(double start, double delta, double lo, double h, int n,
                     double a_lo, double a_hi, std::vector<double>& out) {
  out.clear();
  if (delta == 0.0) return;
  for (int k = 0; k <= n; ++k) {
    const double a = (lo + k * h - start) / delta;
    if (a > a_lo && a < a_hi) out.push_back(a);
  }
  if (delta < 0.0) std::reverse(out.begin(), out.end());
}

}  // namespace

double clipped_length(const ImagingGrid& grid, Point2 p0, Point2 p1) {
  const double length = std::hypot(p1.x - p0.x, p1.z - p0.z);
  const auto clip = clip_parameters(grid, p0, p1);
  if (!clip) return 0.0;
  return (clip->second - clip->first) * length;
}

std::vector<PathSegment> trace_ray(const ImagingGrid& grid, Point2 p0, Point2 p1) {
  if (p0 == p1) throw GeometryError("trace_ray: zero-length segment");
  const double dx = p1.x - p0.x;
  const double dz = p1.z - p0.z;
  const double length = std::hypot(dx, dz);

  std::vector<PathSegment> path;
  const auto clip = clip_parameters(grid, p0, p1);
  if (!clip) return path;
  const auto [a_lo, a_hi] = *clip;

  const double h = grid.pixel_size_m;
  std::vector<double> ax;
  std::vector<double> az;
  plane_crossings(p0.x, dx, grid.x_min(), h, grid.nx, a_lo, a_hi, ax);
  plane_crossings(p0.z, dz, grid.z_min(), h, grid.ny, a_lo, a_hi, az);

  std::vector<double> breaks;
  breaks.reserve(ax.size() + az.size() + 2);
  breaks.push_back(a_lo);
  std::merge(ax.begin(), ax.end(), az.begin(), az.end(), std::back_inserter(breaks));
  breaks.push_back(a_hi);

  path.reserve(breaks.size());
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double a0 = breaks[k];
    const double a1 = breaks[k + 1];
    if (!(a1 > a0)) continue;  // coincident breakpoints: zero length
    const double mid = 0.5 * (a0 + a1);
    const int ix = std::clamp(
        static_cast<int>(std::floor((p0.x + mid * dx - grid.x_min()) / h)), 0, grid.nx - 1);
    const int iz = std::clamp(
        static_cast<int>(std::floor((p0.z + mid * dz - grid.z_min()) / h)), 0, grid.ny - 1);
    const int pixel = static_cast<int>(grid.index(ix, iz));
    const double piece = (a1 - a0) * length;
    if (!path.empty() && path.back().pixel == pixel) {
      path.back().length_m += piece;
    } else {
      path.push_back({pixel, piece});
    }
  }
  return path;
}

}  // namespace denois
