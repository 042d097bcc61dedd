#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <random>

#include "denois/error.hpp"
#include "denois/phantom.hpp"
#include "denois/solvers.hpp"
#include "oracles.hpp"

using namespace denois;

namespace {

const Geometry& desk() {
  static const Geometry g = scaled_geometry(Scale{1, 4});
  return g;
}

const SparseImagingOperator& op() {
  static const SparseImagingOperator a = normalize(assemble_operator(desk()));
  return a;
}

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double rms_diff(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / a.size());
}

// Circle phantom in solver units, 60 m/s contrast.
std::vector<double> circle_units() {
  const ImagingGrid g = desk().grid;
  PhantomSpec s;
  s.kind = PhantomKind::circle;
  s.background_mps = kDefaultC0;
  s.inclusion_mps = kDefaultC0 + 60.0;
  s.center_m = {g.center_x(8), g.center_z(7)};
  s.radius_m = 3e-3;
  return to_solver_units(sos_to_slowness(generate_phantom(s, g).image, kDefaultC0));
}

std::vector<double> aperture_weights() {
  const auto masks = make_prior_masks(desk());
  std::vector<double> w(masks.aperture.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = masks.aperture[i];
  return w;
}

}  // namespace

TEST_CASE("CG matches the dense direct solve") {
  std::mt19937_64 rng(2);
  const std::size_t n = 16;
  const auto m = randn(n * n, 3);
  oracle::Dense h{n, n, std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) h.at(i, j) += m[k * n + i] * m[k * n + j];
    }
    h.at(i, i) += 0.1;
  }
  const auto rhs = randn(n, 4);
  const auto direct = oracle::gauss_solve(h, rhs);
  std::vector<double> x(n, 0.0);
  CgReport report;
  conjugate_gradient(
      [&](std::span<const double> v, std::span<double> y) {
        const auto hv = oracle::matvec(h, v);
        std::copy(hv.begin(), hv.end(), y.begin());
      },
      rhs, x, CgConfig{200, 1e-14}, &report);
  for (std::size_t i = 0; i < n; ++i) CHECK(x[i] == doctest::Approx(direct[i]).epsilon(1e-8));
  for (std::size_t k = 1; k < report.residual_norms.size(); ++k) {
    CHECK(report.residual_norms[k] <= report.residual_norms[k - 1]);
  }
}

TEST_CASE("CG on a diagonal operator with no penalty divides") {
  ImagingGrid g;
  g.nx = 3;
  g.ny = 1;
  g.pixel_size_m = 1.0;
  const SparseImagingOperator d(g, MeasurementShape{1, 1, 3}, {0, 1, 2, 3}, {0, 1, 2},
                                {2.0, 0.5, 4.0});
  const std::vector<double> b{1.0, 1.0, -2.0};
  const auto x = solve_cg_normal(d, b, {}, 0.0, {}, CgConfig{50, 1e-14});
  CHECK(x[0] == doctest::Approx(0.5));
  CHECK(x[1] == doctest::Approx(2.0));
  CHECK(x[2] == doctest::Approx(-0.5));
}

TEST_CASE("a huge penalty pins the solution to z") {
  const auto b = randn(op().rows(), 5);
  const auto z = randn(op().cols(), 6);
  const auto x = solve_cg_normal(op(), b, {}, 1e12, z, CgConfig{});
  CHECK(rms_diff(x, z) <= 1e-6 * std::sqrt(dot(z, z) / z.size()));
}

TEST_CASE("masked rows have zero influence") {
  const auto w = aperture_weights();
  auto b = randn(op().rows(), 7);
  const auto z = randn(op().cols(), 8);
  const auto x1 = solve_cg_normal(op(), b, w, 0.3, z, CgConfig{40, 1e-12});
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (w[i] == 0.0) b[i] += 1e3 * (1.0 + i % 5);
  }
  CHECK(solve_cg_normal(op(), b, w, 0.3, z, CgConfig{40, 1e-12}) == x1);

  TvConfig cfg;
  cfg.max_iters = 20;
  auto b2 = randn(op().rows(), 9);
  const auto t1 = solve_tv_units(op(), b2, w, cfg);
  for (std::size_t i = 0; i < b2.size(); ++i) {
    if (w[i] == 0.0) b2[i] = -7.0;
  }
  CHECK(solve_tv_units(op(), b2, w, cfg) == t1);
}

TEST_CASE("the penalized solve is linear in (b, z)") {
  const auto b = randn(op().rows(), 10);
  const auto z = randn(op().cols(), 11);
  const CgConfig cfg{300, 1e-14};
  const auto x = solve_cg_normal(op(), b, {}, 0.05, z, cfg);
  for (double s : {3.0, 1e-3}) {
    std::vector<double> bs(b), zs(z);
    for (double& v : bs) v *= s;
    for (double& v : zs) v *= s;
    const auto xs = solve_cg_normal(op(), bs, {}, 0.05, zs, cfg);
    double worst = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      worst = std::max(worst, std::abs(xs[i] / s - x[i]));
      scale = std::max(scale, std::abs(x[i]));
    }
    CHECK(worst <= 1e-8 * scale);
  }
}

TEST_CASE("NaN input aborts CG") {
  auto b = randn(op().rows(), 12);
  b[3] = std::nan("");
  CHECK_THROWS_AS(solve_cg_normal(op(), b, {}, 0.1, randn(op().cols(), 1), CgConfig{}),
                  NumericalError);
}

TEST_CASE("gradient and divergence") {
  const int nx = 7;
  const int ny = 5;
  const auto u = randn(nx * ny, 13);
  const auto px = randn(nx * ny, 14);
  const auto py = randn(nx * ny, 15);
  const auto g = grad_2d(u, nx, ny);
  const double lhs = dot(g.gx, px) + dot(g.gy, py);
  const double rhs = -dot(u, div_2d(px, py, nx, ny));
  CHECK(std::abs(lhs - rhs) <= 1e-12 * (std::abs(lhs) + 1.0));

  const auto c = grad_2d(std::vector<double>(nx * ny, 2.5), nx, ny);
  for (double v : c.gx) CHECK(v == 0.0);
  for (double v : c.gy) CHECK(v == 0.0);
  CHECK(total_variation(std::vector<double>(nx * ny, 2.5), nx, ny) == 0.0);

  std::vector<double> ramp(nx * ny);
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) ramp[y * nx + x] = 0.25 * x;
  }
  const auto r = grad_2d(ramp, nx, ny);
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      CHECK(r.gx[y * nx + x] == doctest::Approx(x + 1 < nx ? 0.25 : 0.0));
      CHECK(r.gy[y * nx + x] == 0.0);
    }
  }
  CHECK(total_variation(ramp, nx, ny) == doctest::Approx(0.25 * (nx - 1) * ny));
}

TEST_CASE("TV prox") {
  const int n = 12;
  const auto c = tv_prox(std::vector<double>(n * n, -0.7), n, n, 0.5);
  for (double v : c) CHECK(v == doctest::Approx(-0.7).epsilon(1e-9));
  const auto x = randn(n * n, 16);
  CHECK(tv_prox(x, n, n, 0.0) == x);
  const double theta = 0.3;
  auto objective = [&](const std::vector<double>& z) {
    double d = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) d += (z[i] - x[i]) * (z[i] - x[i]);
    return total_variation(z, n, n) + d / (2 * theta);
  };
  const auto z = tv_prox(x, n, n, theta);
  const double best = objective(z);
  CHECK(best <= objective(x));
  for (int k = 0; k < 10; ++k) {
    auto p = z;
    const auto e = randn(p.size(), 100 + k);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += 1e-3 * e[i];
    CHECK(best <= objective(p) + 1e-6);
  }
}

TEST_CASE("zero data reconstructs the reference speed") {
  const auto masks = make_prior_masks(desk());
  MeasurementSet b{op().measurement_shape(), std::vector<double>(op().rows(), 0.0), masks.aperture,
                   Provenance::corrupted};
  for (int p : {1, 2}) {
    TvConfig cfg;
    cfg.norm_p = p;
    const auto x = solve_tv(op(), b, cfg, 1510.0);
    for (double v : x.values) CHECK(v == doctest::Approx(1510.0).epsilon(1e-12));
  }
}

TEST_CASE("objective never increases") {
  const auto x = circle_units();
  auto b = op().apply(x);
  const auto noise = randn(b.size(), 17);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] += 0.05 * noise[i];
  for (int p : {1, 2}) {
    TvConfig cfg;
    cfg.norm_p = p;
    cfg.max_iters = 60;
    TvReport report;
    solve_tv_units(op(), b, aperture_weights(), cfg, &report);
    REQUIRE(report.objective.size() >= 2);
    for (std::size_t k = 1; k < report.objective.size(); ++k) {
      CHECK(report.objective[k] <= report.objective[k - 1] + 1e-9 * report.objective[k - 1]);
    }
  }
}

TEST_CASE("vanishing regularization recovers noiseless data") {
  const auto x = circle_units();
  const auto b = op().apply(x);
  TvConfig cfg;
  cfg.lambda_rel = 1e-6;
  cfg.max_iters = 500;
  cfg.tol = 1e-9;
  const auto r = solve_tv_units(op(), b, {}, cfg);
  const double contrast_units = 60.0 / (kDefaultC0 * kDefaultC0 * kSlownessHalfSpan);
  CHECK(rms_diff(r, x) <= 0.02 * contrast_units);
}

TEST_CASE("L1 data term resists outlier rows") {
  const auto x = circle_units();
  auto b = op().apply(x);
  const auto w = aperture_weights();
  std::mt19937_64 rng(18);
  const auto noise = randn(b.size(), 19);
  double rms = 0.0;
  for (double v : b) rms += v * v;
  rms = std::sqrt(rms / b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    b[i] += 0.01 * rms * noise[i];
    if (rng() % 20 == 0) b[i] += (rng() % 2 ? 5.0 : -5.0) * rms;
  }
  TvConfig l2;
  TvConfig l1;
  l1.norm_p = 1;
  const double e2 = rms_diff(solve_tv_units(op(), b, w, l2), x);
  const double e1 = rms_diff(solve_tv_units(op(), b, w, l1), x);
  MESSAGE("outlier RMSE L1 " << e1 << ", L2 " << e2);
  CHECK(e1 <= e2);
}

TEST_CASE("results do not depend on the thread count") {
  const auto x = circle_units();
  const auto b = op().apply(x);
  TvConfig cfg;
  cfg.max_iters = 30;
  ::setenv("DENOIS_THREADS", "1", 1);
  const auto one = solve_tv_units(op(), b, aperture_weights(), cfg);
  ::setenv("DENOIS_THREADS", "4", 1);
  const auto four = solve_tv_units(op(), b, aperture_weights(), cfg);
  ::unsetenv("DENOIS_THREADS");
  CHECK(one == four);
}

TEST_CASE("TV weight follows the data scale") {
  TvConfig cfg;
  const std::vector<double> b{3.0, -4.0, 100.0};
  const std::vector<double> w{1.0, 1.0, 0.0};
  CHECK(tv_weight(cfg, b, w) == doctest::Approx(0.1 * std::sqrt(12.5)));
  cfg.norm_p = 1;
  CHECK(tv_weight(cfg, b, w) == doctest::Approx(0.1));
}

TEST_CASE("invalid TV configurations") {
  TvConfig cfg;
  cfg.lambda_rel = 0.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = {};
  cfg.norm_p = 3;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = {};
  cfg.tol = -1.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
}
