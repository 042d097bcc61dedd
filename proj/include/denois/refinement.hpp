#pragma once

#include <memory>
#include <string>
#include <vector>

#include "denois/corruption.hpp"
#include "denois/forward_operator.hpp"
#include "denois/image.hpp"

namespace denois {

enum class MismatchMethod { highres_diff, zero };

std::string to_string(MismatchMethod m);
MismatchMethod mismatch_method_from_string(const std::string& name);

/// Surrogate of the image-dependent operator error dA(x') x', in seconds.
struct ModelMismatchEstimate {
  std::vector<double> delta_b;
  MismatchMethod method = MismatchMethod::zero;
};

/// Physical projection A' x' in seconds, whatever the operator's scaling.
std::vector<double> project(const SparseImagingOperator& op, const SlownessImage& x);

/// highres_diff: A_H upsample2(x') - A' x' (both physical); zero: all zeros.
/// Throws ShapeError unless a_high lives on a_prime's refined grid with the
/// same measurement rows and x' on a_prime's grid.
ModelMismatchEstimate estimate_model_mismatch(const SlownessImage& x_prime,
                                              const SparseImagingOperator& a_prime,
                                              const SparseImagingOperator& a_high,
                                              MismatchMethod method = MismatchMethod::highres_diff);

/// Everything a refiner may look at.
struct RefinerInput {
  MeasurementSet b_prime;
  /// A' x' in seconds.
  std::vector<double> projected;
  PriorMasks priors;
};

/// f(b') in the measurement-refinement relation A' x ~ f(b') - dA(x') x'.
class RefinerPlugin {
 public:
  virtual ~RefinerPlugin() = default;
  virtual std::string name() const = 0;
  /// Returns refined values in seconds, one per measurement entry.
  virtual std::vector<double> refine(const RefinerInput& input) = 0;
};

/// f(b') = b'.
class IdentityRefiner final : public RefinerPlugin {
 public:
  std::string name() const override { return "identity"; }
  std::vector<double> refine(const RefinerInput& input) override;
};

/// Returns the clean observations it was built with.
class OracleRefiner final : public RefinerPlugin {
 public:
  explicit OracleRefiner(MeasurementSet clean) : clean_(std::move(clean)) {}
  std::string name() const override { return "oracle"; }
  std::vector<double> refine(const RefinerInput& input) override;

 private:
  MeasurementSet clean_;
};

struct ClassicalRefinerOptions {
  /// Known entries further than k * MAD from the median residual count as
  /// outliers and are replaced by the reference; 0 keeps every known entry.
  double k = 0.0;
  /// Use the validity/aperture priors; without them every entry of b',
  /// including zero-filled ones, is taken as an observation.
  bool use_priors = true;
  /// Use A' x' as the reference; without it the reference is a normalized
  /// Gaussian smoothing of the known entries of b' within each pair plane.
  bool use_projected = true;
  double self_reference_sigma = 1.5;
};

/// Non-learned refiner: inpaints unknown entries with the reference and
/// replaces outliers of the residual b' - reference on the known ones.
class ClassicalRefiner final : public RefinerPlugin {
 public:
  explicit ClassicalRefiner(ClassicalRefinerOptions options = {}) : options_(options) {}
  std::string name() const override { return "classical"; }
  std::vector<double> refine(const RefinerInput& input) override;
  const ClassicalRefinerOptions& options() const { return options_; }

 private:
  ClassicalRefinerOptions options_;
};

/// Output = f(b') - delta_b on the aperture and 0 elsewhere, valid exactly on
/// the aperture, provenance refined. Plugin exceptions are rethrown as Error
/// naming the plugin.
MeasurementSet refine(const RefinerInput& input, const ModelMismatchEstimate& mismatch,
                      RefinerPlugin& refiner);

}  // namespace denois
