#include "denois/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "denois/error.hpp"

namespace denois {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::clean: return "clean";
    case Provenance::corrupted: return "corrupted";
    case Provenance::refined: return "refined";
  }
  return "unknown";
}

Provenance provenance_from_string(const std::string& name) {
  for (auto p : {Provenance::clean, Provenance::corrupted, Provenance::refined}) {
    if (to_string(p) == name) return p;
  }
  throw ConfigError("unknown provenance '" + name + "'");
}

std::size_t MeasurementSet::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1));
}

void check_measurements(const MeasurementSet& b) {
  if (b.values.size() != b.shape.size() || b.valid.size() != b.shape.size()) {
    throw ShapeError("measurement set arrays do not match shape " + b.shape.str());
  }
  for (std::size_t i = 0; i < b.values.size(); ++i) {
    if (b.valid[i] ? !std::isfinite(b.values[i]) : b.values[i] != 0.0) {
      throw NumericalError("measurement entry " + std::to_string(i) +
                           (b.valid[i] ? " is not finite" : " is invalid but nonzero"));
    }
  }
}

PriorMasks make_prior_masks(const Geometry& geometry) {
  validate(geometry);
  const MeasurementShape shape = geometry.measurement_shape();
  PriorMasks m{shape, std::vector<std::uint8_t>(shape.size(), 0), {},
               std::vector<double>(shape.size(), 0.0)};
  const double half_w = 0.5 * geometry.transducer.aperture_width_m();
  const auto& centers = geometry.transmits.aperture_centers_m;
  for (int pair = 0; pair < shape.pairs; ++pair) {
    const auto [i0, i1] = geometry.transmits.pairs[pair];
    const double lo = std::min(centers[i0], centers[i1]) - half_w;
    const double hi = std::max(centers[i0], centers[i1]) + half_w;
    for (int u = 0; u < shape.nu; ++u) {
      for (int v = 0; v < shape.nv; ++v) {
        const Point2 p = geometry.lattice.position(u, v);
        const double theta = std::max(std::atan2(std::abs(p.x - centers[i0]), p.z),
                                      std::atan2(std::abs(p.x - centers[i1]), p.z));
        const std::size_t k = shape.index(pair, u, v);
        m.directivity[k] = std::clamp(std::cos(theta), 0.0, 1.0);
        m.aperture[k] = p.x >= lo && p.x <= hi && theta <= geometry.max_leg_angle_rad;
      }
    }
  }
  m.low_corr = m.aperture;
  return m;
}

double CorruptionConfig::threshold_for_fraction(double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ConfigError("dropout fraction must lie in [0, 1)");
  }
  if (fraction == 0.0) return std::numeric_limits<double>::infinity();
  // Upper-tail quantile of the standard normal by bisection on erfc.
  double lo = -40.0;
  double hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double tail = 0.5 * std::erfc(mid / std::sqrt(2.0));
    (tail > fraction ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

CorruptionResult corrupt(const MeasurementSet& b, const PriorMasks& masks,
                         const CorruptionConfig& cfg) {
  check_measurements(b);
  if (b.provenance != Provenance::clean) {
    throw ConfigError("corrupt expects clean measurements, got " + to_string(b.provenance));
  }
  if (!(masks.shape == b.shape)) {
    throw ShapeError("prior masks " + masks.shape.str() + " vs measurements " + b.shape.str());
  }
  if (!(cfg.noise_rel_sigma >= 0.0) || !std::isfinite(cfg.noise_rel_sigma)) {
    throw ConfigError("noise_rel_sigma must be finite and >= 0");
  }
  if (!(cfg.dropout_field_sigma_px >= 0.0) || std::isnan(cfg.dropout_threshold)) {
    throw ConfigError("invalid dropout field parameters");
  }

  const MeasurementShape shape = b.shape;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  double sum_sq = 0.0;
  std::size_t n_valid = 0;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (b.valid[i] && masks.aperture[i]) {
      sum_sq += b.values[i] * b.values[i];
      ++n_valid;
    }
  }
  const double noise_std = n_valid > 0 ? cfg.noise_rel_sigma * std::sqrt(sum_sq / n_valid) : 0.0;

  CorruptionResult out;
  out.masks = masks;
  out.measurements = b;
  out.measurements.provenance = Provenance::corrupted;

  // Spatially correlated dropout, standardized per plane.
  std::vector<double> plane(shape.plane_size());
  std::size_t in_aperture = 0;
  std::size_t dropped = 0;
  for (int pair = 0; pair < shape.pairs; ++pair) {
    for (double& f : plane) f = normal(rng);
    plane = gaussian_blur(plane, shape.nv, shape.nu, cfg.dropout_field_sigma_px);
    double mean = 0.0;
    for (double f : plane) mean += f;
    mean /= static_cast<double>(plane.size());
    double var = 0.0;
    for (double f : plane) var += (f - mean) * (f - mean);
    const double sd = std::sqrt(var / static_cast<double>(plane.size()));
    for (std::size_t k = 0; k < plane.size(); ++k) {
      const std::size_t i = static_cast<std::size_t>(pair) * shape.plane_size() + k;
      const double standardized = sd > 0.0 ? (plane[k] - mean) / sd : 0.0;
      const bool keep = masks.aperture[i] && masks.low_corr[i] &&
                        standardized <= cfg.dropout_threshold;
      out.masks.low_corr[i] = keep ? 1 : 0;
      if (masks.aperture[i]) {
        ++in_aperture;
        if (!keep) ++dropped;
      }
    }
  }
  out.realized_dropout =
      in_aperture > 0 ? static_cast<double>(dropped) / static_cast<double>(in_aperture) : 0.0;
  if (out.realized_dropout > 0.9) {
    throw ConfigError("realized dropout fraction " + std::to_string(out.realized_dropout) +
                      " exceeds 0.9");
  }

  // Noise draws happen for every entry so the stream does not depend on the
  // mask pattern.
  auto& m = out.measurements;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const double eta = normal(rng) * noise_std;
    if (m.valid[i] && out.masks.low_corr[i]) {
      m.values[i] += eta;
    } else {
      m.values[i] = 0.0;
      m.valid[i] = 0;
    }
  }
  return out;
}

MeasurementSet simulate_measurements(const SparseImagingOperator& op, const SosImage& truth,
                                     double c0, const PriorMasks& masks) {
  const SlownessImage slowness = sos_to_slowness(truth, c0);
  std::vector<double> x;
  if (op.grid() == truth.grid) {
    x = slowness.values;
  } else if (op.grid() == truth.grid.refined()) {
    x = upsample2(truth.grid, slowness.values);
  } else {
    throw ShapeError("simulate_measurements: operator grid matches neither the image grid "
                     "nor its 2x refinement");
  }
  if (!(masks.shape == op.measurement_shape())) {
    throw ShapeError("prior masks " + masks.shape.str() + " vs operator rows " +
                     op.measurement_shape().str());
  }
  MeasurementSet b{op.measurement_shape(), op.apply(x), masks.aperture, Provenance::clean};
  const double scale = op.physical_scale();
  for (std::size_t i = 0; i < b.values.size(); ++i) {
    b.values[i] = b.valid[i] ? b.values[i] * scale : 0.0;
  }
  return b;
}

}  // namespace denois
