#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace denois {

// All geometry is in SI meters. Lateral x increases to the right, axial z
// increases with depth, and the transducer face sits at z = 0.

struct Point2 {
  double x = 0.0;
  double z = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Square-pixel imaging grid. Pixel (ix, iz) is stored at iz * nx + ix.
struct ImagingGrid {
  int nx = 0;
  int ny = 0;
  double pixel_size_m = 0.0;
  /// Center of pixel (0, 0).
  Point2 origin_m;

  std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }
  double width_m() const { return nx * pixel_size_m; }
  double depth_m() const { return ny * pixel_size_m; }
  double x_min() const { return origin_m.x - 0.5 * pixel_size_m; }
  double z_min() const { return origin_m.z - 0.5 * pixel_size_m; }
  double x_max() const { return x_min() + width_m(); }
  double z_max() const { return z_min() + depth_m(); }
  double center_x(int ix) const { return origin_m.x + ix * pixel_size_m; }
  double center_z(int iz) const { return origin_m.z + iz * pixel_size_m; }
  std::size_t index(int ix, int iz) const {
    return static_cast<std::size_t>(iz) * nx + ix;
  }

  /// Same physical extent at twice the resolution per axis.
  ImagingGrid refined() const;

  friend bool operator==(const ImagingGrid&, const ImagingGrid&) = default;
};

/// Linear array, element positions centered on x = 0.
struct TransducerConfig {
  int n_elements = 0;
  double pitch_m = 0.0;
  double center_freq_hz = 0.0;  // metadata only
  std::vector<double> element_positions_m;

  double aperture_width_m() const { return (n_elements - 1) * pitch_m; }

  friend bool operator==(const TransducerConfig&, const TransducerConfig&) = default;
};

struct TransmitSet {
  std::vector<double> aperture_centers_m;
  /// Consecutive transmit index pairs (i, i + 1).
  std::vector<std::pair<int, int>> pairs;

  int n_transmits() const { return static_cast<int>(aperture_centers_m.size()); }

  friend bool operator==(const TransmitSet&, const TransmitSet&) = default;
};

/// Sample positions of one measurement plane; every transmit pair is sampled
/// on the same lattice.
struct MeasurementLattice {
  int nu = 0;
  int nv = 0;
  std::vector<double> lateral_m;  // nu entries
  std::vector<double> axial_m;    // nv entries

  Point2 position(int u, int v) const { return {lateral_m[u], axial_m[v]}; }

  friend bool operator==(const MeasurementLattice&, const MeasurementLattice&) = default;
};

/// Shape of a (pairs x nu x nv) measurement tensor, row-major.
struct MeasurementShape {
  int pairs = 0;
  int nu = 0;
  int nv = 0;

  std::size_t size() const { return static_cast<std::size_t>(pairs) * nu * nv; }
  std::size_t plane_size() const { return static_cast<std::size_t>(nu) * nv; }
  std::size_t index(int pair, int u, int v) const {
    return (static_cast<std::size_t>(pair) * nu + u) * nv + v;
  }
  std::string str() const;

  friend bool operator==(const MeasurementShape&, const MeasurementShape&) = default;
};

struct Geometry {
  ImagingGrid grid;
  TransducerConfig transducer;
  TransmitSet transmits;
  MeasurementLattice lattice;
  /// Largest transmit-leg angle from vertical that still counts as a valid
  /// measurement in the aperture mask.
  double max_leg_angle_rad = 0.0;

  MeasurementShape measurement_shape() const {
    return {static_cast<int>(transmits.pairs.size()), lattice.nu, lattice.nv};
  }

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

/// Positive rational scale factor num/den.
struct Scale {
  long num = 1;
  long den = 1;

  /// Accepts "n/d", an integer, or a decimal such as "0.25".
  static Scale parse(const std::string& text);
  double value() const { return static_cast<double>(num) / den; }
  std::string str() const;
};

/// Raw parameters from which a Geometry is derived.
struct GeometryParams {
  int nx = 64;
  int ny = 64;
  double pixel_size_m = 0.6e-3;
  int n_elements = 128;
  double pitch_m = 0.3e-3;
  double center_freq_hz = 5.0e6;
  int n_transmits = 9;
  /// Lateral samples per plane; 0 means one per element.
  int nu = 0;
  /// Axial samples per plane; 0 means one per grid row.
  int nv = 0;
  double max_leg_angle_deg = 45.0;
};

/// Builds and validates a geometry; throws GeometryError on degenerate input.
Geometry make_geometry(const GeometryParams& params);

/// 128 elements at 0.3 mm pitch, 9 transmits, 64x64 grid at 0.6 mm.
Geometry make_default_geometry();

/// Scales every count of the default geometry and rounds half-up, keeping the
/// physical extents. The transmit count is derived from the scaled number of
/// transmit pairs (observations), so 1/4 gives 8/4 = 2 pairs and 3 transmits.
Geometry scaled_geometry(Scale scale);

/// round(count * num / den) with halves rounded up, in exact integer math.
int scale_count(int count, Scale scale);

void validate(const Geometry& geometry);

nlohmann::json to_json(const Geometry& geometry);
Geometry geometry_from_json(const nlohmann::json& j);

}  // namespace denois
