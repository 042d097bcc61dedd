#pragma once

#include <functional>
#include <span>
#include <vector>

#include "denois/corruption.hpp"
#include "denois/forward_operator.hpp"
#include "denois/image.hpp"

namespace denois {

struct CgConfig {
  int max_iters = 200;
  /// Stop once |r_k| <= tol * |rhs|.
  double tol = 1e-10;
};

struct CgReport {
  int iterations = 0;
  bool converged = false;
  /// |r_k| for k = 0 .. iterations.
  std::vector<double> residual_norms;
};

/// Called after every CG iteration with the current iterate.
using CgObserver = std::function<void(int iteration, std::span<const double> x)>;

/// Symmetric positive (semi)definite map y = H x.
using LinearMap = std::function<void(std::span<const double> x, std::span<double> y)>;

/// Conjugate gradient (conjugate residual variant, so |r_k| never increases)
/// on H x = rhs starting from x (updated in place).
/// Throws NumericalError if a NaN/Inf appears.
void conjugate_gradient(const LinearMap& apply_h, std::span<const double> rhs,
                        std::span<double> x, const CgConfig& cfg, CgReport* report = nullptr,
                        const CgObserver& observer = {});

/// Solves (A^T W A + nu I) x = A^T W b + nu z by CG, W = diag(row_weights).
/// An empty row_weights means all ones; 0/1 weights mask invalid rows out.
/// z may be empty when nu == 0. x0 (optional) warm-starts the iteration.
std::vector<double> solve_cg_normal(const SparseImagingOperator& op,
                                    std::span<const double> b,
                                    std::span<const double> row_weights, double nu,
                                    std::span<const double> z, const CgConfig& cfg,
                                    std::span<const double> x0 = {},
                                    CgReport* report = nullptr,
                                    const CgObserver& observer = {});

/// Forward differences with Neumann boundary (last column of gx and last row
/// of gy are zero). Differences are per pixel, not per meter.
struct ImageGradient {
  std::vector<double> gx;
  std::vector<double> gy;
};

ImageGradient grad_2d(std::span<const double> image, int nx, int ny);
/// Negative adjoint of grad_2d: <grad u, p> = -<u, div p>.
std::vector<double> div_2d(std::span<const double> gx, std::span<const double> gy, int nx,
                           int ny);

/// Isotropic total variation sum_p |grad u|_p.
double total_variation(std::span<const double> image, int nx, int ny);

struct TvProxOptions {
  double tol = 1e-6;
  int max_iters = 5000;
};

/// argmin_z TV(z) + |z - x|^2 / (2 theta), via fast gradient projection on
/// the dual (Chambolle-type). theta <= 0 returns x.
std::vector<double> tv_prox(std::span<const double> x, int nx, int ny, double theta,
                            const TvProxOptions& options = {});

struct TvConfig {
  /// TV weight against the data term of a spectrally normalized operator and
  /// unit-RMS measurements (see tv_weight).
  double lambda_rel = 0.1;
  int norm_p = 2;
  int max_iters = 500;
  /// Stop when |x_k+1 - x_k| <= tol * |x_k+1|.
  double tol = 1e-6;
  /// Floor of the l1 data-term reweighting (Huber smoothing width).
  double eps_data = 1e-6;
  /// Floor of the TV reweighting (Huber smoothing width of |grad x|).
  double eps_tv = 1e-3;
  /// Inner CG per outer iteration.
  CgConfig inner{30, 1e-10};
  /// Ridge weight of the CG warm start that seeds the outer loop.
  double init_ridge = 1e-2;
};

void validate(const TvConfig& cfg);

struct TvReport {
  int iterations = 0;
  bool converged = false;
  /// Objective after the warm start and after each outer iteration.
  std::vector<double> objective;
};

/// Absolute TV weight for data b: lambda_rel applied after scaling b to unit
/// RMS over the weighted rows, i.e. lambda_rel * rms_W(b) for p = 2 and
/// lambda_rel for p = 1. Either way scaling b by s scales the minimizer by s.
double tv_weight(const TvConfig& cfg, std::span<const double> b,
                 std::span<const double> row_weights);

/// Smoothed objective sum_i w_i rho_p(r_i) + tv_weight sum_p phi(|grad x|_p)
/// with rho_2(r) = r^2, rho_1 and phi Huber functions of the eps widths.
double tv_objective(const SparseImagingOperator& op, std::span<const double> b,
                    std::span<const double> row_weights, std::span<const double> x,
                    const TvConfig& cfg);

/// Measurement vector and row weights of b in solver units for op.
struct SolverData {
  std::vector<double> b;
  std::vector<double> weights;
};

SolverData to_solver_data(const SparseImagingOperator& op, const MeasurementSet& b);

/// Minimizes |A x - b|_p^p + lambda TV(x) in solver units by
/// majorize-minimize half-quadratic iterations: every outer step reweights
/// the data residuals (p = 1) and the isotropic gradient magnitudes and
/// solves the resulting quadratic by CG warm-started at the current iterate,
/// so the smoothed objective never increases. Throws NumericalError if the
/// objective rises for 5 consecutive iterations.
std::vector<double> solve_tv_units(const SparseImagingOperator& op,
                                   std::span<const double> b,
                                   std::span<const double> row_weights, const TvConfig& cfg,
                                   TvReport* report = nullptr);

/// L2-TV / L1-TV reconstruction of b on a normalized operator, returned as SoS.
SosImage solve_tv(const SparseImagingOperator& op, const MeasurementSet& b,
                  const TvConfig& cfg, double c0 = kDefaultC0, TvReport* report = nullptr);

}  // namespace denois
