#include "denois/refinement.hpp"

#include <algorithm>
#include <cmath>

#include "denois/error.hpp"
#include "denois/metrics.hpp"

namespace denois {

std::string to_string(MismatchMethod m) {
  return m == MismatchMethod::highres_diff ? "highres" : "zero";
}

MismatchMethod mismatch_method_from_string(const std::string& name) {
  if (name == "highres" || name == "highres_diff") return MismatchMethod::highres_diff;
  if (name == "zero") return MismatchMethod::zero;
  throw ConfigError("unknown mismatch method '" + name + "'");
}

std::vector<double> project(const SparseImagingOperator& op, const SlownessImage& x) {
  if (!(x.grid == op.grid())) throw ShapeError("project: image grid differs from operator grid");
  auto y = op.apply(x.values);
  for (double& v : y) v *= op.physical_scale();
  return y;
}

ModelMismatchEstimate estimate_model_mismatch(const SlownessImage& x_prime,
                                              const SparseImagingOperator& a_prime,
                                              const SparseImagingOperator& a_high,
                                              MismatchMethod method) {
  if (!(x_prime.grid == a_prime.grid())) {
    throw ShapeError("mismatch: estimate is not on the low-resolution operator grid");
  }
  if (!(a_high.grid() == a_prime.grid().refined()) ||
      !(a_high.measurement_shape() == a_prime.measurement_shape())) {
    throw ShapeError("mismatch: high-resolution operator does not match the 2x grid / rows");
  }
  ModelMismatchEstimate out{std::vector<double>(a_prime.rows(), 0.0), method};
  if (method == MismatchMethod::zero) return out;
  const auto fine = upsample2(x_prime.grid, x_prime.values);
  auto high = a_high.apply(fine);
  const auto low = a_prime.apply(x_prime.values);
  const double s_high = a_high.physical_scale();
  const double s_low = a_prime.physical_scale();
  for (std::size_t i = 0; i < out.delta_b.size(); ++i) {
    out.delta_b[i] = high[i] * s_high - low[i] * s_low;
  }
  return out;
}

std::vector<double> IdentityRefiner::refine(const RefinerInput& input) {
  return input.b_prime.values;
}

std::vector<double> OracleRefiner::refine(const RefinerInput& input) {
  if (!(clean_.shape == input.b_prime.shape)) {
    throw ShapeError("oracle refiner: clean set " + clean_.shape.str() + " vs input " +
                     input.b_prime.shape.str());
  }
  return clean_.values;
}

std::vector<double> ClassicalRefiner::refine(const RefinerInput& input) {
  const auto& b = input.b_prime;
  const MeasurementShape shape = b.shape;
  const std::size_t n = shape.size();

  std::vector<std::uint8_t> known(n, 1);
  if (options_.use_priors) known = b.valid;

  std::vector<double> reference;
  if (options_.use_projected) {
    if (input.projected.size() != n) throw ShapeError("classical refiner: projected size");
    reference = input.projected;
  } else {
    // Normalized convolution of the known entries, plane by plane.
    reference.assign(n, 0.0);
    const std::size_t plane = shape.plane_size();
    std::vector<double> num(plane);
    std::vector<double> den(plane);
    for (int p = 0; p < shape.pairs; ++p) {
      const std::size_t off = static_cast<std::size_t>(p) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        den[k] = known[off + k] ? 1.0 : 0.0;
        num[k] = known[off + k] ? b.values[off + k] : 0.0;
      }
      const auto sn = gaussian_blur(num, shape.nv, shape.nu, options_.self_reference_sigma);
      const auto sd = gaussian_blur(den, shape.nv, shape.nu, options_.self_reference_sigma);
      for (std::size_t k = 0; k < plane; ++k) {
        reference[off + k] = sd[k] > 1e-12 ? sn[k] / sd[k] : 0.0;
      }
    }
  }

  std::vector<double> residual;
  for (std::size_t i = 0; i < n; ++i) {
    if (known[i]) residual.push_back(b.values[i] - reference[i]);
  }
  double tau = 0.0;
  double center = 0.0;
  if (!residual.empty()) {
    center = median(residual);
    std::vector<double> dev(residual.size());
    for (std::size_t i = 0; i < residual.size(); ++i) dev[i] = std::abs(residual[i] - center);
    tau = options_.k * median(std::move(dev));
  }

  // Unknown entries take the reference; known entries are kept unless they are
  // k-MAD outliers of the residual. A zero MAD gives no scale and flags nothing.
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = b.values[i] - reference[i];
    const bool outlier = tau > 0.0 && std::abs(r - center) > tau;
    out[i] = known[i] && !outlier ? b.values[i] : reference[i];
  }
  return out;
}

MeasurementSet refine(const RefinerInput& input, const ModelMismatchEstimate& mismatch,
                      RefinerPlugin& refiner) {
  const MeasurementShape shape = input.b_prime.shape;
  check_measurements(input.b_prime);
  if (!(input.priors.shape == shape) || input.projected.size() != shape.size() ||
      mismatch.delta_b.size() != shape.size()) {
    throw ShapeError("refine: inputs disagree with measurement shape " + shape.str());
  }
  std::vector<double> f;
  try {
    f = refiner.refine(input);
  } catch (const std::exception& e) {
    throw Error("refiner '" + refiner.name() + "' failed: " + e.what());
  }
  if (f.size() != shape.size()) {
    throw ShapeError("refiner '" + refiner.name() + "' returned " + std::to_string(f.size()) +
                     " values, expected " + std::to_string(shape.size()));
  }
  MeasurementSet out{shape, std::vector<double>(shape.size(), 0.0), input.priors.aperture,
                     Provenance::refined};
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (!out.valid[i]) continue;
    if (!std::isfinite(f[i])) {
      throw NumericalError("refiner '" + refiner.name() + "' returned a non-finite value at " +
                           std::to_string(i));
    }
    out.values[i] = f[i] - mismatch.delta_b[i];
  }
  return out;
}

}  // namespace denois
