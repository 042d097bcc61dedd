#include "denois/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "denois/error.hpp"

namespace denois {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double huber(double t, double eps) {
  const double a = std::abs(t);
  return a >= eps ? a : 0.5 * (t * t / eps + eps);
}

void require_size(std::size_t actual, std::size_t expected, const char* what) {
  if (actual != expected) {
    throw ShapeError(std::string(what) + ": expected length " + std::to_string(expected) +
                     ", got " + std::to_string(actual));
  }
}

}  // namespace

void conjugate_gradient(const LinearMap& apply_h, std::span<const double> rhs,
                        std::span<double> x, const CgConfig& cfg, CgReport* report,
                        const CgObserver& observer) {
  require_size(x.size(), rhs.size(), "conjugate_gradient x");
  const std::size_t n = rhs.size();
  std::vector<double> r(n);
  std::vector<double> p(n);
  std::vector<double> hr(n);
  std::vector<double> hp(n);

  apply_h(x, hp);
  for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - hp[i];
  double rr = dot(r, r);
  const double rhs_norm = norm2(rhs);
  const double stop = cfg.tol * (rhs_norm > 0.0 ? rhs_norm : 1.0);

  CgReport local;
  CgReport& rep = report != nullptr ? *report : local;
  rep = CgReport{};
  rep.residual_norms.push_back(std::sqrt(rr));
  if (!std::isfinite(rr)) throw NumericalError("CG: non-finite initial residual");
  if (std::sqrt(rr) <= stop) {
    rep.converged = true;
    return;
  }

  // Conjugate residual form: H-conjugate residuals, |r| minimized over the
  // Krylov space, hence non-increasing.
  p = r;
  apply_h(r, hr);
  hp = hr;
  double rhr = dot(r, hr);
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const double hphp = dot(hp, hp);
    if (!(rhr > 0.0) || !(hphp > 0.0)) {
      if (!std::isfinite(rhr) || !std::isfinite(hphp)) {
        throw NumericalError("CG: NaN/Inf in curvature at iteration " + std::to_string(it));
      }
      break;  // residual in the null space of H: nothing left to reduce
    }
    const double alpha = rhr / hphp;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * hp[i];
    }
    const double rr_next = dot(r, r);
    if (!std::isfinite(rr_next) || !std::isfinite(alpha)) {
      throw NumericalError("CG: NaN/Inf at iteration " + std::to_string(it) +
                           " (alpha=" + std::to_string(alpha) + ")");
    }
    rep.iterations = it;
    rep.residual_norms.push_back(std::sqrt(rr_next));
    if (observer) observer(it, x);
    if (std::sqrt(rr_next) <= stop) {
      rep.converged = true;
      return;
    }
    apply_h(r, hr);
    const double rhr_next = dot(r, hr);
    const double beta = rhr_next / rhr;
    rhr = rhr_next;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = r[i] + beta * p[i];
      hp[i] = hr[i] + beta * hp[i];
    }
  }
}

std::vector<double> solve_cg_normal(const SparseImagingOperator& op,
                                    std::span<const double> b,
                                    std::span<const double> row_weights, double nu,
                                    std::span<const double> z, const CgConfig& cfg,
                                    std::span<const double> x0, CgReport* report,
                                    const CgObserver& observer) {
  require_size(b.size(), op.rows(), "solve_cg_normal b");
  if (!row_weights.empty()) require_size(row_weights.size(), op.rows(), "solve_cg_normal weights");
  if (!(nu >= 0.0) || !std::isfinite(nu)) throw ConfigError("solve_cg_normal: nu must be >= 0");
  if (nu > 0.0) require_size(z.size(), op.cols(), "solve_cg_normal z");
  if (!z.empty()) require_size(z.size(), op.cols(), "solve_cg_normal z");

  std::vector<double> weighted(b.begin(), b.end());
  if (!row_weights.empty()) {
    for (std::size_t i = 0; i < weighted.size(); ++i) weighted[i] *= row_weights[i];
  }
  std::vector<double> rhs = op.apply_adjoint(weighted);
  if (nu > 0.0) {
    for (std::size_t j = 0; j < rhs.size(); ++j) rhs[j] += nu * z[j];
  }

  std::vector<double> tmp(op.rows());
  LinearMap normal = [&](std::span<const double> in, std::span<double> out) {
    op.apply(in, tmp);
    if (!row_weights.empty()) {
      for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i] *= row_weights[i];
    }
    op.apply_adjoint(tmp, out);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += nu * in[j];
  };

  std::vector<double> x(op.cols(), 0.0);
  if (!x0.empty()) {
    require_size(x0.size(), op.cols(), "solve_cg_normal x0");
    std::copy(x0.begin(), x0.end(), x.begin());
  }
  conjugate_gradient(normal, rhs, x, cfg, report, observer);
  return x;
}

ImageGradient grad_2d(std::span<const double> u, int nx, int ny) {
  require_size(u.size(), static_cast<std::size_t>(nx) * ny, "grad_2d");
  ImageGradient g{std::vector<double>(u.size(), 0.0), std::vector<double>(u.size(), 0.0)};
  for (int iz = 0; iz < ny; ++iz) {
    for (int ix = 0; ix < nx; ++ix) {
      const std::size_t i = static_cast<std::size_t>(iz) * nx + ix;
      if (ix + 1 < nx) g.gx[i] = u[i + 1] - u[i];
      if (iz + 1 < ny) g.gy[i] = u[i + nx] - u[i];
    }
  }
  return g;
}

std::vector<double> div_2d(std::span<const double> gx, std::span<const double> gy, int nx,
                           int ny) {
  const std::size_t n = static_cast<std::size_t>(nx) * ny;
  require_size(gx.size(), n, "div_2d gx");
  require_size(gy.size(), n, "div_2d gy");
  std::vector<double> d(n, 0.0);
  for (int iz = 0; iz < ny; ++iz) {
    for (int ix = 0; ix < nx; ++ix) {
      const std::size_t i = static_cast<std::size_t>(iz) * nx + ix;
      double v = 0.0;
      if (ix + 1 < nx) v += gx[i];
      if (ix > 0) v -= gx[i - 1];
      if (iz + 1 < ny) v += gy[i];
      if (iz > 0) v -= gy[i - nx];
      d[i] = v;
    }
  }
  return d;
}

double total_variation(std::span<const double> image, int nx, int ny) {
  const auto g = grad_2d(image, nx, ny);
  double tv = 0.0;
  for (std::size_t i = 0; i < image.size(); ++i) tv += std::hypot(g.gx[i], g.gy[i]);
  return tv;
}

std::vector<double> tv_prox(std::span<const double> x, int nx, int ny, double theta,
                            const TvProxOptions& options) {
  const std::size_t n = static_cast<std::size_t>(nx) * ny;
  require_size(x.size(), n, "tv_prox");
  std::vector<double> z(x.begin(), x.end());
  if (!(theta > 0.0)) return z;

  // Dual: min_{|p| <= 1} |x + theta div p|^2, z = x + theta div p.
  // Gradient step 1/(8 theta) in the p-update, with FISTA momentum.
  std::vector<double> px(n, 0.0), py(n, 0.0);
  std::vector<double> qx(n, 0.0), qy(n, 0.0);
  std::vector<double> px_prev(n), py_prev(n);
  std::vector<double> z_prev(z);
  std::vector<double> w(n);
  double t = 1.0;
  const double step = 1.0 / (8.0 * theta);
  for (int it = 0; it < options.max_iters; ++it) {
    const auto dq = div_2d(qx, qy, nx, ny);
    for (std::size_t i = 0; i < n; ++i) w[i] = x[i] + theta * dq[i];
    const auto g = grad_2d(w, nx, ny);
    px_prev = px;
    py_prev = py;
    for (std::size_t i = 0; i < n; ++i) {
      const double ax = qx[i] + step * g.gx[i];
      const double ay = qy[i] + step * g.gy[i];
      const double scale = std::max(1.0, std::hypot(ax, ay));
      px[i] = ax / scale;
      py[i] = ay / scale;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double mom = (t - 1.0) / t_next;
    for (std::size_t i = 0; i < n; ++i) {
      qx[i] = px[i] + mom * (px[i] - px_prev[i]);
      qy[i] = py[i] + mom * (py[i] - py_prev[i]);
    }
    t = t_next;

    const auto dp = div_2d(px, py, nx, ny);
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] + theta * dp[i];
    double diff = 0.0;
    for (std::size_t i = 0; i < n; ++i) diff += (z[i] - z_prev[i]) * (z[i] - z_prev[i]);
    const double zn = norm2(z);
    if (it > 0 && std::sqrt(diff) <= options.tol * std::max(zn, 1e-300)) break;
    z_prev = z;
  }
  return z;
}

void validate(const TvConfig& cfg) {
  if (!(cfg.lambda_rel > 0.0)) throw ConfigError("lambda_rel must be > 0");
  if (cfg.norm_p != 1 && cfg.norm_p != 2) throw ConfigError("norm_p must be 1 or 2");
  if (!(cfg.tol > 0.0)) throw ConfigError("tol must be > 0");
  if (cfg.max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(cfg.eps_data > 0.0) || !(cfg.eps_tv > 0.0)) throw ConfigError("eps must be > 0");
  if (cfg.inner.max_iters < 1 || !(cfg.inner.tol > 0.0)) {
    throw ConfigError("inner CG config must be positive");
  }
}

double tv_objective(const SparseImagingOperator& op, std::span<const double> b,
                    std::span<const double> row_weights, std::span<const double> x,
                    const TvConfig& cfg) {
  const auto r = op.apply(x);
  double data = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double w = row_weights.empty() ? 1.0 : row_weights[i];
    if (w == 0.0) continue;
    const double res = r[i] - b[i];
    data += w * (cfg.norm_p == 2 ? res * res : huber(res, cfg.eps_data));
  }
  const int nx = op.grid().nx;
  const int ny = op.grid().ny;
  const auto g = grad_2d(x, nx, ny);
  double reg = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) reg += huber(std::hypot(g.gx[i], g.gy[i]), cfg.eps_tv);
  return data + tv_weight(cfg, b, row_weights) * reg;
}

double tv_weight(const TvConfig& cfg, std::span<const double> b,
                 std::span<const double> row_weights) {
  if (cfg.norm_p == 1) return cfg.lambda_rel;
  double s = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double w = row_weights.empty() ? 1.0 : row_weights[i];
    s += w * b[i] * b[i];
    count += w;
  }
  return count > 0.0 ? cfg.lambda_rel * std::sqrt(s / count) : 0.0;
}

SolverData to_solver_data(const SparseImagingOperator& op, const MeasurementSet& b) {
  if (!(b.shape == op.measurement_shape())) {
    throw ShapeError("measurements " + b.shape.str() + " vs operator rows " +
                     op.measurement_shape().str());
  }
  check_measurements(b);
  SolverData d{std::vector<double>(b.values.size()), std::vector<double>(b.values.size())};
  const double to_units = 1.0 / (op.physical_scale() * kSlownessHalfSpan);
  for (std::size_t i = 0; i < b.values.size(); ++i) {
    d.weights[i] = b.valid[i] ? 1.0 : 0.0;
    d.b[i] = b.valid[i] ? b.values[i] * to_units : 0.0;
  }
  return d;
}

std::vector<double> solve_tv_units(const SparseImagingOperator& op,
                                   std::span<const double> b,
                                   std::span<const double> row_weights, const TvConfig& cfg,
                                   TvReport* report) {
  validate(cfg);
  require_size(b.size(), op.rows(), "solve_tv b");
  if (!row_weights.empty()) require_size(row_weights.size(), op.rows(), "solve_tv weights");
  const int nx = op.grid().nx;
  const int ny = op.grid().ny;
  const std::size_t n = op.cols();
  const double lambda = tv_weight(cfg, b, row_weights);

  TvReport local;
  TvReport& rep = report != nullptr ? *report : local;
  rep = TvReport{};

  std::vector<double> zeros(n, 0.0);
  std::vector<double> x =
      solve_cg_normal(op, b, row_weights, cfg.init_ridge, zeros, cfg.inner);
  double f = tv_objective(op, b, row_weights, x, cfg);
  rep.objective.push_back(f);

  std::vector<double> omega(op.rows());
  std::vector<double> weighted_b(op.rows());
  std::vector<double> tmp(op.rows());
  std::vector<double> diffusivity(n);
  int increases = 0;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const auto r = op.apply(x);
    for (std::size_t i = 0; i < omega.size(); ++i) {
      const double w = row_weights.empty() ? 1.0 : row_weights[i];
      omega[i] = cfg.norm_p == 2 ? w : w / (2.0 * std::max(std::abs(r[i] - b[i]), cfg.eps_data));
      weighted_b[i] = omega[i] * b[i];
    }
    const auto g = grad_2d(x, nx, ny);
    for (std::size_t j = 0; j < n; ++j) {
      diffusivity[j] = 1.0 / (2.0 * std::max(std::hypot(g.gx[j], g.gy[j]), cfg.eps_tv));
    }
    const auto rhs = op.apply_adjoint(weighted_b);
    LinearMap h = [&](std::span<const double> in, std::span<double> out) {
      op.apply(in, tmp);
      for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i] *= omega[i];
      op.apply_adjoint(tmp, out);
      auto gi = grad_2d(in, nx, ny);
      for (std::size_t j = 0; j < n; ++j) {
        gi.gx[j] *= diffusivity[j];
        gi.gy[j] *= diffusivity[j];
      }
      const auto d = div_2d(gi.gx, gi.gy, nx, ny);
      for (std::size_t j = 0; j < n; ++j) out[j] -= lambda * d[j];
    };
    std::vector<double> x_next(x);
    conjugate_gradient(h, rhs, x_next, cfg.inner);

    const double f_next = tv_objective(op, b, row_weights, x_next, cfg);
    if (!std::isfinite(f_next)) {
      throw NumericalError("solve_tv: objective became non-finite at iteration " +
                           std::to_string(it));
    }
    rep.objective.push_back(f_next);
    if (f_next > f + 1e-9 * std::max(1.0, std::abs(f))) {
      if (++increases >= 5) {
        std::string trace;
        for (std::size_t k = rep.objective.size() - 6; k < rep.objective.size(); ++k) {
          trace += " " + std::to_string(rep.objective[k]);
        }
        throw NumericalError("solve_tv diverged at iteration " + std::to_string(it) +
                             "; objective trace:" + trace);
      }
    } else {
      increases = 0;
    }
    double step = 0.0;
    for (std::size_t j = 0; j < n; ++j) step += (x_next[j] - x[j]) * (x_next[j] - x[j]);
    x = std::move(x_next);
    f = f_next;
    rep.iterations = it;
    if (std::sqrt(step) <= cfg.tol * std::max(norm2(x), 1e-300)) {
      rep.converged = true;
      break;
    }
  }
  return x;
}

SosImage solve_tv(const SparseImagingOperator& op, const MeasurementSet& b,
                  const TvConfig& cfg, double c0, TvReport* report) {
  if (!op.is_normalized()) throw ConfigError("solve_tv requires a normalized operator");
  const SolverData data = to_solver_data(op, b);
  const auto x = solve_tv_units(op, data.b, data.weights, cfg, report);
  return slowness_to_sos(from_solver_units(op.grid(), x, c0));
}

}  // namespace denois
