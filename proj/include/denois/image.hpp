#pragma once

#include <span>
#include <vector>

#include "denois/geometry.hpp"

namespace denois {

/// Reference (beamforming) speed of sound for simulated and phantom data.
inline constexpr double kDefaultC0 = 1510.0;
/// Tissue SoS range of the synthetic dataset.
inline constexpr double kSosMin = 1400.0;
inline constexpr double kSosMax = 1650.0;
/// Guard band accepted for any SoS image.
inline constexpr double kSosGuardMin = 1300.0;
inline constexpr double kSosGuardMax = 1750.0;

/// Half the slowness span of [kSosMin, kSosMax]. Solvers and denoisers work on
/// slowness deviation divided by this value, so tissue maps onto roughly
/// [-1, 1] and zero means c0.
inline constexpr double kSlownessHalfSpan = 0.5 * (1.0 / kSosMin - 1.0 / kSosMax);

/// Per-pixel speed of sound in m/s.
struct SosImage {
  ImagingGrid grid;
  std::vector<double> values;
};

/// Per-pixel slowness deviation 1/c - 1/c0 in s/m.
struct SlownessImage {
  ImagingGrid grid;
  std::vector<double> values;
  double c0_ref_mps = kDefaultC0;
};

SosImage constant_sos(const ImagingGrid& grid, double value);

/// Throws NumericalError if any value is non-finite or outside the guard band.
void check_sos_range(const SosImage& image);

/// Throws NumericalError on nonpositive or non-finite SoS.
SlownessImage sos_to_slowness(const SosImage& image, double c0);
SosImage slowness_to_sos(const SlownessImage& image);

/// Slowness deviation expressed in solver units (divided by kSlownessHalfSpan).
std::vector<double> to_solver_units(const SlownessImage& image);
SlownessImage from_solver_units(const ImagingGrid& grid, std::span<const double> values,
                                double c0);

/// Bilinear 2x upsampling onto grid.refined(), sampling the coarse image at
/// each fine pixel center with edge clamping.
std::vector<double> upsample2(const ImagingGrid& grid, std::span<const double> values);

/// Separable Gaussian blur with reflective (half-sample symmetric) borders
/// and a normalized kernel truncated at 4 sigma. sigma_px <= 0 copies.
std::vector<double> gaussian_blur(std::span<const double> values, int nx, int ny,
                                  double sigma_px);

/// 8-bit binary PGM, values mapped linearly from [lo, hi] and clamped.
void write_pgm(const std::string& path, std::span<const double> values, int nx, int ny,
               double lo, double hi);

}  // namespace denois
