#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "denois/corruption.hpp"
#include "denois/forward_operator.hpp"
#include "denois/image.hpp"
#include "denois/solvers.hpp"

namespace denois {

struct SigmaRange {
  double min = 0.0;
  double max = 1e300;
};

/// Gaussian denoiser contract on images in solver units.
class DenoiserPlugin {
 public:
  virtual ~DenoiserPlugin() = default;
  virtual std::string name() const = 0;
  virtual SigmaRange sigma_range() const { return {}; }
  /// Returns an image of the same size as `image`.
  virtual std::vector<double> denoise(std::span<const double> image, const ImagingGrid& grid,
                                      double sigma,
                                      std::span<const std::vector<double>> conditions) = 0;
};

class IdentityDenoiser final : public DenoiserPlugin {
 public:
  std::string name() const override { return "identity"; }
  std::vector<double> denoise(std::span<const double> image, const ImagingGrid& grid,
                              double sigma,
                              std::span<const std::vector<double>> conditions) override;
};

/// Gaussian smoothing with kernel std = px_per_sigma * sigma pixels.
class GaussianDenoiser final : public DenoiserPlugin {
 public:
  explicit GaussianDenoiser(double px_per_sigma = 1.0) : px_per_sigma_(px_per_sigma) {}
  std::string name() const override { return "gaussian"; }
  std::vector<double> denoise(std::span<const double> image, const ImagingGrid& grid,
                              double sigma,
                              std::span<const std::vector<double>> conditions) override;

 private:
  double px_per_sigma_;
};

/// argmin_z lambda TV(z) + |x - z|^2 / (2 sigma^2), the denoising subproblem
/// of half-quadratic splitting with nu = 1 / (2 sigma^2). lambda is the
/// absolute weight; tv_weight() gives the one solve_tv would use.
class TvProxDenoiser final : public DenoiserPlugin {
 public:
  explicit TvProxDenoiser(double lambda, TvProxOptions options = {})
      : lambda_(lambda), options_(options) {}
  std::string name() const override { return "tvprox"; }
  std::vector<double> denoise(std::span<const double> image, const ImagingGrid& grid,
                              double sigma,
                              std::span<const std::vector<double>> conditions) override;

 private:
  double lambda_;
  TvProxOptions options_;
};

enum class SigmaScheduleKind { linear_variance, constant };

struct PnPConfig {
  int T = 200;
  int T0 = 15;
  /// Denoising steps per data-consistency step.
  int K = 5;
  SigmaScheduleKind schedule = SigmaScheduleKind::linear_variance;
  /// sigma_1 and sigma_T, in solver units. constant uses sigma_max throughout.
  double sigma_min = 0.01;
  double sigma_max = 0.15;
  CgConfig cg{20, 1e-10};
  std::uint64_t seed = 0;
  /// Indices of the proposals passed to the denoiser as conditions; empty
  /// passes all of them.
  std::vector<int> conditions;

  static PnPConfig in_silico();
  static PnPConfig real_data();
};

/// Throws ConfigError unless 1 <= T0 <= T, K >= 1, 0 < sigma_min <= sigma_max.
void validate(const PnPConfig& cfg);

/// sigma_t for t = 1 .. T (element t - 1). linear_variance interpolates
/// sigma^2 linearly between sigma_min^2 at t = 1 and sigma_max^2 at t = T.
std::vector<double> sigma_schedule(const PnPConfig& cfg);

/// nu_t = 1 / (2 sigma_t^2).
double consistency_weight(double sigma);

struct PnPEvent {
  enum class Kind { init, denoise, consistency };
  Kind kind = Kind::init;
  int t = 0;
  double sigma = 0.0;
  /// Consistency weight; 0 for init and denoise events.
  double nu = 0.0;
  std::span<const double> x;
};

using PnPObserver = std::function<void(const PnPEvent&)>;

/// Loop in solver units. proposals must be nonempty and image-sized.
std::vector<double> pnp_reconstruct_units(const SparseImagingOperator& op,
                                          std::span<const double> b,
                                          std::span<const double> row_weights,
                                          std::span<const std::vector<double>> proposals,
                                          DenoiserPlugin& denoiser, const PnPConfig& cfg,
                                          const PnPObserver& observer = {});

/// Half-quadratic splitting plug-and-play: starts from the mean of the
/// proposals plus seeded N(0, sigma_T0^2) noise, denoises at sigma_t for
/// t = T0 .. 1 and solves the data-consistency problem with nu_t every K-th
/// step and at t = 1. Throws NumericalError with the step trace on NaN.
SosImage pnp_reconstruct(const SparseImagingOperator& op, const MeasurementSet& b,
                         std::span<const SosImage> proposals, DenoiserPlugin& denoiser,
                         const PnPConfig& cfg, double c0 = kDefaultC0,
                         const PnPObserver& observer = {});

}  // namespace denois
