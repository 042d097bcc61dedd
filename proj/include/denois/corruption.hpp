#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "denois/forward_operator.hpp"
#include "denois/geometry.hpp"
#include "denois/image.hpp"

namespace denois {

enum class Provenance { clean, corrupted, refined };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& name);

/// Delays in seconds on the (pairs x nu x nv) lattice. Entries where valid is
/// 0 hold exactly 0.
struct MeasurementSet {
  MeasurementShape shape;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;
  Provenance provenance = Provenance::clean;

  std::size_t valid_count() const;
};

/// Throws ShapeError/NumericalError if sizes disagree, a valid value is not
/// finite, or an invalid entry is nonzero.
void check_measurements(const MeasurementSet& b);

/// Auxiliary observation priors.
struct PriorMasks {
  MeasurementShape shape;
  /// Fixed geometric validity.
  std::vector<std::uint8_t> aperture;
  /// Entries that survived tracking-quality dropout; subset of aperture.
  std::vector<std::uint8_t> low_corr;
  /// Angular/depth weight in [0, 1].
  std::vector<double> directivity;
};

/// aperture[pair, u, v] is set when the sample lies laterally within
/// [c_i - W/2, c_{i+1} + W/2] (W the aperture width) and both transmit legs
/// make at most max_leg_angle with the vertical, which gives triangular valid
/// regions widening with depth. directivity = cos of the larger leg angle.
/// low_corr starts out equal to aperture.
PriorMasks make_prior_masks(const Geometry& geometry);

struct CorruptionConfig {
  /// Noise std relative to the RMS of the clean valid values.
  double noise_rel_sigma = 0.05;
  /// Smoothing of the dropout field, in lattice samples.
  double dropout_field_sigma_px = 2.0;
  /// Samples whose standardized dropout field exceeds this are dropped.
  double dropout_threshold = 1.2815515655446004;  // ~10 % dropout
  std::uint64_t seed = 0;

  /// Threshold on a standard normal field that drops the given fraction.
  static double threshold_for_fraction(double fraction);
};

struct CorruptionResult {
  MeasurementSet measurements;
  PriorMasks masks;
  double realized_dropout = 0.0;
};

/// b' = m(b) + eta. Adds Gaussian noise to the valid entries, drops entries
/// where the smoothed random field exceeds the threshold, and zero-fills every
/// entry outside aperture AND low_corr. Throws ConfigError for out-of-range
/// config or a realized dropout fraction above 0.9.
CorruptionResult corrupt(const MeasurementSet& b, const PriorMasks& masks,
                         const CorruptionConfig& cfg);

/// Clean observations of a SoS map through a (typically high-resolution)
/// operator. If the operator's grid is finer than the image grid the image is
/// upsampled with upsample2 first. Validity is the aperture mask.
MeasurementSet simulate_measurements(const SparseImagingOperator& op, const SosImage& truth,
                                     double c0, const PriorMasks& masks);

}  // namespace denois
