#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "denois/corruption.hpp"
#include "denois/error.hpp"
#include "denois/phantom.hpp"
#include "denois/refinement.hpp"

using namespace denois;

namespace {

struct Fixture {
  Geometry geometry = scaled_geometry(Scale{1, 4});
  SparseImagingOperator a_prime = normalize(assemble_operator(geometry));
  SparseImagingOperator a_high = assemble_highres_operator(geometry);
  PriorMasks masks = make_prior_masks(geometry);
  Phantom phantom;
  SlownessImage x;
  MeasurementSet clean;

  Fixture() {
    PhantomSpec s;
    s.kind = PhantomKind::circle;
    s.background_mps = kDefaultC0;
    s.inclusion_mps = 1590.0;
    s.center_m = {geometry.grid.center_x(7), geometry.grid.center_z(8)};
    s.radius_m = 2.5e-3;
    phantom = generate_phantom(s, geometry.grid);
    x = sos_to_slowness(phantom.image, kDefaultC0);
    clean = simulate_measurements(a_high, phantom.image, kDefaultC0, masks);
  }
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double a : v) s += a * a;
  return std::sqrt(s);
}

SlownessImage blob(const ImagingGrid& g) {
  SlownessImage x{g, std::vector<double>(g.size()), kDefaultC0};
  const double s = g.width_m() / 6.0;
  for (int z = 0; z < g.ny; ++z) {
    for (int c = 0; c < g.nx; ++c) {
      const double dx = g.center_x(c);
      const double dz = g.center_z(z) - (g.z_min() + 0.5 * g.depth_m());
      x.values[g.index(c, z)] = 2e-5 * std::exp(-(dx * dx + dz * dz) / (2 * s * s));
    }
  }
  return x;
}

RefinerInput input_from(const MeasurementSet& b, const std::vector<double>& projected) {
  return {b, projected, fx().masks};
}

class Failing final : public RefinerPlugin {
 public:
  std::string name() const override { return "broken"; }
  std::vector<double> refine(const RefinerInput&) override {
    throw std::runtime_error("model file missing");
  }
};

class Short final : public RefinerPlugin {
 public:
  std::string name() const override { return "short"; }
  std::vector<double> refine(const RefinerInput&) override { return {1.0}; }
};

}  // namespace

TEST_CASE("zero image has zero mismatch") {
  const auto& f = fx();
  SlownessImage zero{f.geometry.grid, std::vector<double>(f.geometry.grid.size(), 0.0), kDefaultC0};
  const auto m = estimate_model_mismatch(zero, f.a_prime, f.a_high);
  CHECK(m.method == MismatchMethod::highres_diff);
  for (double v : m.delta_b) CHECK(v == 0.0);
  const auto z = estimate_model_mismatch(f.x, f.a_prime, f.a_high, MismatchMethod::zero);
  for (double v : z.delta_b) CHECK(v == 0.0);
}

TEST_CASE("smooth images have a small mismatch") {
  const auto& f = fx();
  const auto x = blob(f.geometry.grid);
  const auto m = estimate_model_mismatch(x, f.a_prime, f.a_high);
  CHECK(norm(m.delta_b) / norm(project(f.a_prime, x)) <= 0.1);
}

TEST_CASE("sharp-edge mismatch lives on rows crossing the inclusion") {
  const auto& f = fx();
  const auto m = estimate_model_mismatch(f.x, f.a_prime, f.a_high);
  const auto fine_x = upsample2(f.geometry.grid, f.x.values);
  auto touches = [](const SparseImagingOperator& op, const std::vector<double>& x, std::size_t r) {
    for (std::size_t k = op.row_ptr()[r]; k < op.row_ptr()[r + 1]; ++k) {
      if (op.values()[k] != 0.0 && x[op.col_idx()[k]] != 0.0) return true;
    }
    return false;
  };
  std::size_t nonzero = 0;
  for (std::size_t r = 0; r < m.delta_b.size(); ++r) {
    if (m.delta_b[r] == 0.0) continue;
    ++nonzero;
    CHECK((touches(f.a_prime, f.x.values, r) || touches(f.a_high, fine_x, r)));
  }
  CHECK(nonzero > 0);
}

TEST_CASE("mismatch shape errors") {
  const auto& f = fx();
  CHECK_THROWS_AS(estimate_model_mismatch(f.x, f.a_prime, f.a_prime), ShapeError);
  SlownessImage wrong{f.geometry.grid.refined(),
                      std::vector<double>(f.geometry.grid.refined().size(), 0.0), kDefaultC0};
  CHECK_THROWS_AS(estimate_model_mismatch(wrong, f.a_prime, f.a_high), ShapeError);
}

TEST_CASE("identity refiner with zero mismatch keeps b' on the aperture") {
  const auto& f = fx();
  MeasurementSet b = f.clean;
  b.provenance = Provenance::corrupted;
  IdentityRefiner id;
  const auto m = estimate_model_mismatch(f.x, f.a_prime, f.a_high, MismatchMethod::zero);
  const auto out = refine(input_from(b, project(f.a_prime, f.x)), m, id);
  CHECK(out.provenance == Provenance::refined);
  CHECK(out.valid == f.masks.aperture);
  CHECK(out.values == b.values);
}

TEST_CASE("oracle refiner gives b minus the mismatch, which is A'x at the true image") {
  const auto& f = fx();
  CorruptionConfig cfg;
  cfg.seed = 4;
  const auto corrupted = corrupt(f.clean, f.masks, cfg);
  OracleRefiner oracle(f.clean);
  const auto m = estimate_model_mismatch(f.x, f.a_prime, f.a_high);
  const auto ax = project(f.a_prime, f.x);
  RefinerInput in{corrupted.measurements, ax, corrupted.masks};
  const auto out = refine(in, m, oracle);
  double scale = 0.0;
  for (double v : ax) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < ax.size(); ++i) {
    if (!f.masks.aperture[i]) continue;
    CHECK(out.values[i] == f.clean.values[i] - m.delta_b[i]);
    CHECK(std::abs(out.values[i] - ax[i]) <= 1e-9 * scale);
  }
  CHECK(out.valid == f.masks.aperture);
}

TEST_CASE("classical refiner inpaints masked entries with the projection") {
  const auto& f = fx();
  const auto ax = project(f.a_prime, f.x);
  MeasurementSet b = f.clean;
  b.provenance = Provenance::corrupted;
  std::size_t masked = 0;
  for (std::size_t i = 0; i < b.values.size(); i += 7) {
    if (!b.valid[i]) continue;
    b.valid[i] = 0;
    b.values[i] = 0.0;
    ++masked;
  }
  REQUIRE(masked > 10);
  const auto out = ClassicalRefiner{}.refine(input_from(b, ax));
  for (std::size_t i = 0; i < b.values.size(); ++i) {
    if (f.masks.aperture[i] && !b.valid[i]) CHECK(out[i] == ax[i]);
    if (b.valid[i]) CHECK(out[i] == b.values[i]);
  }
}

TEST_CASE("classical refiner returns the projection when b' equals it") {
  const auto& f = fx();
  const auto ax = project(f.a_prime, f.x);
  MeasurementSet b = f.clean;
  for (std::size_t i = 0; i < ax.size(); ++i) b.values[i] = b.valid[i] ? ax[i] : 0.0;
  ClassicalRefinerOptions o;
  o.k = 3.0;
  const auto out = ClassicalRefiner{o}.refine(input_from(b, ax));
  for (std::size_t i = 0; i < ax.size(); ++i) {
    if (f.masks.aperture[i]) CHECK(out[i] == ax[i]);
  }
}

TEST_CASE("zero MAD keeps complete noiseless data exactly") {
  const auto& f = fx();
  const auto ax = project(f.a_prime, f.x);
  MeasurementSet b = f.clean;
  for (std::size_t i = 0; i < ax.size(); ++i) b.values[i] = b.valid[i] ? ax[i] + 1e-7 : 0.0;
  ClassicalRefinerOptions o;
  o.k = 3.0;
  const auto out = ClassicalRefiner{o}.refine(input_from(b, ax));
  for (std::size_t i = 0; i < ax.size(); ++i) {
    if (b.valid[i]) CHECK(out[i] == b.values[i]);
  }
}

TEST_CASE("a single huge outlier is pulled to the projection") {
  const auto& f = fx();
  const auto ax = project(f.a_prime, f.x);
  MeasurementSet b = f.clean;
  std::vector<std::size_t> observed;
  for (std::size_t i = 0; i < b.valid.size(); ++i) {
    if (b.valid[i]) observed.push_back(i);
  }
  const std::size_t at = observed[observed.size() / 2];
  b.values[at] += 1e-3;
  ClassicalRefinerOptions o;
  o.k = 3.0;
  const auto out = ClassicalRefiner{o}.refine(input_from(b, ax));
  CHECK(out[at] == ax[at]);
  CHECK(std::abs(out[at] - b.values[at]) >= 1e-3 - 1e-6);
  // Without the gate every observed entry is kept.
  CHECK(ClassicalRefiner{}.refine(input_from(b, ax))[at] == b.values[at]);
}

TEST_CASE("without priors the zero fill is trusted") {
  const auto& f = fx();
  const auto ax = project(f.a_prime, f.x);
  MeasurementSet b = f.clean;
  std::size_t at = 0;
  while (!b.valid[at]) ++at;
  b.valid[at] = 0;
  b.values[at] = 0.0;
  ClassicalRefinerOptions o;
  o.use_priors = false;
  CHECK(ClassicalRefiner{o}.refine(input_from(b, ax))[at] == 0.0);
  o.use_priors = true;
  CHECK(ClassicalRefiner{o}.refine(input_from(b, ax))[at] == ax[at]);
}

TEST_CASE("self reference is a local average of the observed entries") {
  const auto& f = fx();
  MeasurementSet b = f.clean;
  std::size_t at = 0;
  for (std::size_t i = 0; i < b.values.size(); ++i) {
    if (b.valid[i] && std::abs(b.values[i]) > std::abs(b.values[at])) at = i;
  }
  REQUIRE(b.values[at] != 0.0);
  b.valid[at] = 0;
  b.values[at] = 0.0;
  ClassicalRefinerOptions o;
  o.use_projected = false;
  const auto out = ClassicalRefiner{o}.refine(input_from(b, {}));
  const std::size_t plane = b.shape.plane_size();
  const std::size_t begin = at / plane * plane;
  double lo = 0.0;
  double hi = 0.0;
  bool first = true;
  for (std::size_t i = begin; i < begin + plane; ++i) {
    if (!b.valid[i]) continue;
    lo = first ? b.values[i] : std::min(lo, b.values[i]);
    hi = first ? b.values[i] : std::max(hi, b.values[i]);
    first = false;
  }
  CHECK(out[at] != 0.0);
  CHECK(out[at] >= lo);
  CHECK(out[at] <= hi);
}

TEST_CASE("plugin failures carry the plugin name") {
  const auto& f = fx();
  const auto ax = project(f.a_prime, f.x);
  const auto m = estimate_model_mismatch(f.x, f.a_prime, f.a_high, MismatchMethod::zero);
  Failing bad;
  try {
    refine(input_from(f.clean, ax), m, bad);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("broken") != std::string::npos);
    CHECK(std::string(e.what()).find("model file missing") != std::string::npos);
  }
  Short s;
  CHECK_THROWS_AS(refine(input_from(f.clean, ax), m, s), ShapeError);
}

TEST_CASE("mismatch method names") {
  for (auto m : {MismatchMethod::highres_diff, MismatchMethod::zero}) {
    CHECK(mismatch_method_from_string(to_string(m)) == m);
  }
  CHECK(mismatch_method_from_string("highres") == MismatchMethod::highres_diff);
  CHECK_THROWS_AS(mismatch_method_from_string("lowres"), ConfigError);
}
