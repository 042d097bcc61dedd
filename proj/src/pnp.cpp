#include "denois/pnp.hpp"

#include <cmath>
#include <random>

#include "denois/error.hpp"

namespace denois {

namespace {

void check_denoised(const std::vector<double>& z, std::size_t n, const std::string& who) {
  if (z.size() != n) {
    throw ShapeError("denoiser '" + who + "' returned " + std::to_string(z.size()) +
                     " pixels, expected " + std::to_string(n));
  }
}

std::string trace_string(const std::vector<std::string>& trace) {
  std::string out;
  const std::size_t first = trace.size() > 8 ? trace.size() - 8 : 0;
  for (std::size_t i = first; i < trace.size(); ++i) out += "\n  " + trace[i];
  return out;
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

std::vector<double> IdentityDenoiser::denoise(std::span<const double> image, const ImagingGrid&,
                                              double, std::span<const std::vector<double>>) {
  return {image.begin(), image.end()};
}

std::vector<double> GaussianDenoiser::denoise(std::span<const double> image,
                                              const ImagingGrid& grid, double sigma,
                                              std::span<const std::vector<double>>) {
  return gaussian_blur(image, grid.nx, grid.ny, px_per_sigma_ * sigma);
}

std::vector<double> TvProxDenoiser::denoise(std::span<const double> image,
                                            const ImagingGrid& grid, double sigma,
                                            std::span<const std::vector<double>>) {
  return tv_prox(image, grid.nx, grid.ny, lambda_ * sigma * sigma, options_);
}

PnPConfig PnPConfig::in_silico() { return PnPConfig{}; }

PnPConfig PnPConfig::real_data() {
  PnPConfig cfg;
  cfg.T0 = 50;
  cfg.K = 10;
  return cfg;
}

void validate(const PnPConfig& cfg) {
  if (cfg.T < 1) throw ConfigError("PnP: T must be >= 1");
  if (cfg.T0 < 1 || cfg.T0 > cfg.T) {
    throw ConfigError("PnP: T0 = " + std::to_string(cfg.T0) + " outside [1, " +
                      std::to_string(cfg.T) + "]");
  }
  if (cfg.K < 1) throw ConfigError("PnP: K must be >= 1");
  if (!(cfg.sigma_min > 0.0) || !(cfg.sigma_max >= cfg.sigma_min) ||
      !std::isfinite(cfg.sigma_max)) {
    throw ConfigError("PnP: need 0 < sigma_min <= sigma_max");
  }
  if (cfg.cg.max_iters < 1) throw ConfigError("PnP: cg.max_iters must be >= 1");
}

std::vector<double> sigma_schedule(const PnPConfig& cfg) {
  validate(cfg);
  std::vector<double> s(cfg.T);
  const double v0 = cfg.sigma_min * cfg.sigma_min;
  const double v1 = cfg.sigma_max * cfg.sigma_max;
  for (int t = 1; t <= cfg.T; ++t) {
    if (cfg.schedule == SigmaScheduleKind::constant || cfg.T == 1) {
      s[t - 1] = cfg.schedule == SigmaScheduleKind::constant ? cfg.sigma_max : cfg.sigma_min;
      continue;
    }
    const double a = static_cast<double>(t - 1) / (cfg.T - 1);
    s[t - 1] = std::sqrt(v0 + a * (v1 - v0));
  }
  return s;
}

double consistency_weight(double sigma) { return 1.0 / (2.0 * sigma * sigma); }

std::vector<double> pnp_reconstruct_units(const SparseImagingOperator& op,
                                          std::span<const double> b,
                                          std::span<const double> row_weights,
                                          std::span<const std::vector<double>> proposals,
                                          DenoiserPlugin& denoiser, const PnPConfig& cfg,
                                          const PnPObserver& observer) {
  const auto sigmas = sigma_schedule(cfg);
  const std::size_t n = op.cols();
  if (proposals.empty()) throw ConfigError("PnP needs at least one solution proposal");
  for (const auto& p : proposals) {
    if (p.size() != n) throw ShapeError("PnP proposal does not match the operator grid");
    if (!all_finite(p)) throw NumericalError("PnP proposal is not finite");
  }
  if (b.size() != op.rows()) throw ShapeError("PnP measurements do not match operator rows");

  std::vector<std::vector<double>> conditions;
  if (cfg.conditions.empty()) {
    conditions.assign(proposals.begin(), proposals.end());
  } else {
    for (int k : cfg.conditions) {
      if (k < 0 || k >= static_cast<int>(proposals.size())) {
        throw ConfigError("PnP condition index " + std::to_string(k) + " out of range");
      }
      conditions.push_back(proposals[k]);
    }
  }

  const SigmaRange range = denoiser.sigma_range();
  const double s_lo = sigmas[0];
  const double s_hi = sigmas[cfg.T0 - 1];
  if (s_lo < range.min || s_hi > range.max) {
    throw ConfigError("schedule sigma range [" + std::to_string(s_lo) + ", " +
                      std::to_string(s_hi) + "] exceeds denoiser '" + denoiser.name() +
                      "' range [" + std::to_string(range.min) + ", " +
                      std::to_string(range.max) + "]");
  }

  std::vector<double> x(n, 0.0);
  for (const auto& p : proposals) {
    for (std::size_t j = 0; j < n; ++j) x[j] += p[j];
  }
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double s0 = sigmas[cfg.T0 - 1];
  for (std::size_t j = 0; j < n; ++j) {
    x[j] = x[j] / static_cast<double>(proposals.size()) + s0 * normal(rng);
  }
  if (observer) observer({PnPEvent::Kind::init, cfg.T0, s0, 0.0, x});

  std::vector<std::string> trace;
  int since_consistency = 0;
  for (int t = cfg.T0; t >= 1; --t) {
    const double sigma = sigmas[t - 1];
    std::vector<double> z;
    try {
      z = denoiser.denoise(x, op.grid(), sigma, conditions);
    } catch (const std::exception& e) {
      throw Error("denoiser '" + denoiser.name() + "' failed at t = " + std::to_string(t) +
                  ": " + e.what());
    }
    check_denoised(z, n, denoiser.name());
    trace.push_back("t=" + std::to_string(t) + " denoise sigma=" + std::to_string(sigma));
    if (!all_finite(z)) {
      throw NumericalError("PnP: non-finite denoiser output" + trace_string(trace));
    }
    if (observer) observer({PnPEvent::Kind::denoise, t, sigma, 0.0, z});

    if (++since_consistency == cfg.K || t == 1) {
      since_consistency = 0;
      const double nu = consistency_weight(sigma);
      trace.push_back("t=" + std::to_string(t) + " consistency nu=" + std::to_string(nu));
      try {
        x = solve_cg_normal(op, b, row_weights, nu, z, cfg.cg, z);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string("PnP: ") + e.what() + trace_string(trace));
      }
      if (!all_finite(x)) {
        throw NumericalError("PnP: non-finite consistency output" + trace_string(trace));
      }
      if (observer) observer({PnPEvent::Kind::consistency, t, sigma, nu, x});
    } else {
      x = std::move(z);
    }
  }
  return x;
}

SosImage pnp_reconstruct(const SparseImagingOperator& op, const MeasurementSet& b,
                         std::span<const SosImage> proposals, DenoiserPlugin& denoiser,
                         const PnPConfig& cfg, double c0, const PnPObserver& observer) {
  if (!op.is_normalized()) throw ConfigError("pnp_reconstruct requires a normalized operator");
  const SolverData data = to_solver_data(op, b);
  std::vector<std::vector<double>> units;
  for (const auto& p : proposals) {
    if (!(p.grid == op.grid())) throw ShapeError("PnP proposal grid differs from operator grid");
    units.push_back(to_solver_units(sos_to_slowness(p, c0)));
  }
  const auto x = pnp_reconstruct_units(op, data.b, data.weights, units, denoiser, cfg, observer);
  return slowness_to_sos(from_solver_units(op.grid(), x, c0));
}

}  // namespace denois
