#pragma once

#include <vector>

#include "denois/geometry.hpp"

namespace denois {

struct PathSegment {
  int pixel = 0;  // flat index into the grid
  double length_m = 0.0;
};

/// Per-pixel intersection lengths of the segment [p0, p1] clipped to the grid.
///
/// Incremental parametric traversal: every crossing of a pixel boundary line
/// becomes a breakpoint and each piece between consecutive breakpoints is
/// assigned to the pixel containing its midpoint. Pixels are half-open
/// [lo, hi), so a segment running exactly along a boundary line is counted
/// once. Entries come out in traversal order, each pixel at most once.
/// Throws GeometryError if p0 == p1.
std::vector<PathSegment> trace_ray(const ImagingGrid& grid, Point2 p0, Point2 p1);

/// Length of [p0, p1] inside the grid's physical extent.
double clipped_length(const ImagingGrid& grid, Point2 p0, Point2 p1);

}  // namespace denois
