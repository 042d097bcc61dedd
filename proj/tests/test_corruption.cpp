#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "denois/corruption.hpp"
#include "denois/error.hpp"
#include "denois/phantom.hpp"

using namespace denois;

namespace {

struct Fixture {
  Geometry geometry = scaled_geometry(Scale{1, 4});
  SparseImagingOperator a_high = assemble_highres_operator(geometry);
  PriorMasks masks = make_prior_masks(geometry);
  MeasurementSet clean;

  Fixture() {
    PhantomSpec s;
    s.kind = PhantomKind::circle;
    s.background_mps = 1490.0;
    s.inclusion_mps = 1580.0;
    s.center_m = {geometry.grid.center_x(5), geometry.grid.center_z(9)};
    s.radius_m = 3e-3;
    clean = simulate_measurements(a_high, generate_phantom(s, geometry.grid).image, kDefaultC0,
                                  masks);
  }
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

double rms_valid(const MeasurementSet& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < b.values.size(); ++i) s += b.valid[i] ? b.values[i] * b.values[i] : 0.0;
  return std::sqrt(s / b.valid_count());
}

Geometry single_sample(double lateral, double depth) {
  Geometry g = scaled_geometry(Scale{1, 4});
  g.transmits.aperture_centers_m.assign(g.transmits.aperture_centers_m.size(), 0.0);
  g.lattice.nu = 1;
  g.lattice.nv = 1;
  g.lattice.lateral_m = {lateral};
  g.lattice.axial_m = {depth};
  return g;
}

}  // namespace

TEST_CASE("sample straight below coincident centers is vertical") {
  const auto m = make_prior_masks(single_sample(0.0, 10e-3));
  CHECK(m.aperture[0] == 1);
  CHECK(m.directivity[0] == 1.0);
}

TEST_CASE("shallow sample at the lateral edge has near-zero directivity") {
  const Geometry g = single_sample(0.0, 1e-3);
  Geometry edge = g;
  edge.lattice.lateral_m = {g.grid.x_max()};
  edge.lattice.axial_m = {1e-4};
  const auto m = make_prior_masks(edge);
  CHECK(m.directivity[0] < 0.02);
  CHECK(m.aperture[0] == 0);
}

TEST_CASE("default aperture mask widens with depth") {
  const Geometry g = make_default_geometry();
  const auto m = make_prior_masks(g);
  const auto shape = g.measurement_shape();
  std::size_t valid = 0;
  for (auto a : m.aperture) valid += a;
  CHECK(valid > 0);
  CHECK(valid < m.aperture.size());
  CHECK(m.low_corr == m.aperture);
  for (double d : m.directivity) CHECK((d >= 0.0 && d <= 1.0));
  for (int p = 0; p < shape.pairs; ++p) {
    int previous = 0;
    for (int v = 0; v < shape.nv; ++v) {
      int count = 0;
      for (int u = 0; u < shape.nu; ++u) count += m.aperture[shape.index(p, u, v)];
      CHECK(count >= previous);
      previous = count;
    }
  }
}

TEST_CASE("clean measurements are zero outside the aperture") {
  const auto& f = fx();
  check_measurements(f.clean);
  CHECK(f.clean.provenance == Provenance::clean);
  CHECK(f.clean.valid == f.masks.aperture);
  for (std::size_t i = 0; i < f.clean.values.size(); ++i) {
    if (!f.clean.valid[i]) CHECK(f.clean.values[i] == 0.0);
  }
}

TEST_CASE("no noise and no dropout is the identity on the aperture") {
  const auto& f = fx();
  CorruptionConfig cfg;
  cfg.noise_rel_sigma = 0.0;
  cfg.dropout_threshold = CorruptionConfig::threshold_for_fraction(0.0);
  const auto r = corrupt(f.clean, f.masks, cfg);
  CHECK(r.measurements.provenance == Provenance::corrupted);
  CHECK(r.measurements.values == f.clean.values);
  CHECK(r.measurements.valid == f.masks.aperture);
  CHECK(r.realized_dropout == 0.0);
}

TEST_CASE("noise level matches the configured fraction of the RMS") {
  // Full-size lattice for enough samples; the values only need to be clean.
  const Geometry g = make_default_geometry();
  const PriorMasks masks = make_prior_masks(g);
  MeasurementSet clean{g.measurement_shape(), std::vector<double>(masks.aperture.size(), 0.0),
                       masks.aperture, Provenance::clean};
  for (std::size_t i = 0; i < clean.values.size(); ++i) {
    if (clean.valid[i]) clean.values[i] = 1e-7 * std::sin(0.01 * static_cast<double>(i));
  }
  REQUIRE(clean.valid_count() >= 10000);
  CorruptionConfig cfg;
  cfg.noise_rel_sigma = 0.1;
  cfg.dropout_threshold = CorruptionConfig::threshold_for_fraction(0.0);
  cfg.seed = 3;
  const auto r = corrupt(clean, masks, cfg);
  double s = 0.0;
  double n = 0.0;
  for (std::size_t i = 0; i < clean.values.size(); ++i) {
    if (!r.measurements.valid[i]) continue;
    const double d = r.measurements.values[i] - clean.values[i];
    s += d * d;
    n += 1.0;
  }
  CHECK(std::sqrt(s / n) == doctest::Approx(0.1 * rms_valid(clean)).epsilon(0.05));
}

TEST_CASE("dropout invariants and determinism") {
  const auto& f = fx();
  CorruptionConfig cfg;
  cfg.seed = 11;
  const auto a = corrupt(f.clean, f.masks, cfg);
  const auto b = corrupt(f.clean, f.masks, cfg);
  CHECK(a.measurements.values == b.measurements.values);
  CHECK(a.measurements.valid == b.measurements.valid);
  CHECK(a.realized_dropout > 0.02);
  CHECK(a.realized_dropout < 0.3);
  for (std::size_t i = 0; i < a.measurements.values.size(); ++i) {
    CHECK((!a.masks.low_corr[i] || a.masks.aperture[i]));
    CHECK(a.measurements.valid[i] == (a.masks.aperture[i] && a.masks.low_corr[i]));
    if (!a.measurements.valid[i]) CHECK(a.measurements.values[i] == 0.0);
  }
  CHECK(a.masks.aperture == f.masks.aperture);
  cfg.seed = 12;
  CHECK(corrupt(f.clean, f.masks, cfg).measurements.valid != a.measurements.valid);
}

TEST_CASE("dropout threshold for a fraction") {
  CHECK(CorruptionConfig::threshold_for_fraction(0.1) == doctest::Approx(1.2815515655446004));
  CHECK(CorruptionConfig::threshold_for_fraction(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::isinf(CorruptionConfig::threshold_for_fraction(0.0)));
  CHECK_THROWS_AS(CorruptionConfig::threshold_for_fraction(1.0), ConfigError);
}

TEST_CASE("invalid configurations") {
  const auto& f = fx();
  CorruptionConfig cfg;
  cfg.noise_rel_sigma = -0.1;
  CHECK_THROWS_AS(corrupt(f.clean, f.masks, cfg), ConfigError);
  cfg = {};
  cfg.dropout_threshold = -5.0;
  CHECK_THROWS_AS(corrupt(f.clean, f.masks, cfg), ConfigError);
}

TEST_CASE("malformed measurement sets are rejected") {
  MeasurementSet b = fx().clean;
  b.values.pop_back();
  CHECK_THROWS_AS(check_measurements(b), ShapeError);
  b = fx().clean;
  std::size_t off = 0;
  while (b.valid[off]) ++off;
  b.values[off] = 1e-6;
  CHECK_THROWS_AS(check_measurements(b), NumericalError);
  b = fx().clean;
  std::size_t on = 0;
  while (!b.valid[on]) ++on;
  b.values[on] = std::nan("");
  CHECK_THROWS_AS(check_measurements(b), NumericalError);
}

TEST_CASE("provenance names") {
  for (auto p : {Provenance::clean, Provenance::corrupted, Provenance::refined}) {
    CHECK(provenance_from_string(to_string(p)) == p);
  }
  CHECK_THROWS_AS(provenance_from_string("dirty"), ConfigError);
}
