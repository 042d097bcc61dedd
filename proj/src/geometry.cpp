#include "denois/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>

#include "denois/error.hpp"

namespace denois {

ImagingGrid ImagingGrid::refined() const {
  ImagingGrid fine;
  fine.nx = 2 * nx;
  fine.ny = 2 * ny;
  fine.pixel_size_m = 0.5 * pixel_size_m;
  fine.origin_m = {origin_m.x - 0.25 * pixel_size_m,
                   origin_m.z - 0.25 * pixel_size_m};
  return fine;
}

std::string MeasurementShape::str() const {
  return "(" + std::to_string(pairs) + ", " + std::to_string(nu) + ", " +
         std::to_string(nv) + ")";
}

Scale Scale::parse(const std::string& text) {
  auto parse_long = [&](std::string_view part) {
    long value = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    if (ec != std::errc{} || ptr != part.data() + part.size()) {
      throw ConfigError("invalid scale '" + text + "'");
    }
    return value;
  };
  Scale scale;
  if (auto slash = text.find('/'); slash != std::string::npos) {
    scale.num = parse_long(std::string_view(text).substr(0, slash));
    scale.den = parse_long(std::string_view(text).substr(slash + 1));
  } else if (auto dot = text.find('.'); dot != std::string::npos) {
    const std::string digits = text.substr(0, dot) + text.substr(dot + 1);
    scale.num = parse_long(digits);
    scale.den = 1;
    for (std::size_t i = dot + 1; i < text.size(); ++i) scale.den *= 10;
  } else {
    scale.num = parse_long(text);
  }
  if (scale.num <= 0 || scale.den <= 0) {
    throw ConfigError("scale must be positive, got '" + text + "'");
  }
  const long g = std::gcd(scale.num, scale.den);
  scale.num /= g;
  scale.den /= g;
  return scale;
}

std::string Scale::str() const {
  return std::to_string(num) + "/" + std::to_string(den);
}

int scale_count(int count, Scale scale) {
  // floor(count * num / den + 1/2) == floor((2 * count * num + den) / (2 * den))
  const long long numerator = 2LL * count * scale.num + scale.den;
  return static_cast<int>(numerator / (2LL * scale.den));
}

namespace {

std::vector<double> centered_positions(int n, double spacing) {
  std::vector<double> positions(n);
  const double mid = 0.5 * (n - 1);
  for (int k = 0; k < n; ++k) positions[k] = (k - mid) * spacing;
  return positions;
}

void require(bool condition, const std::string& message) {
  if (!condition) throw GeometryError(message);
}

}  // namespace

Geometry make_geometry(const GeometryParams& p) {
  require(p.nx >= 2 && p.ny >= 2, "grid needs at least 2x2 pixels, got " +
                                      std::to_string(p.nx) + "x" + std::to_string(p.ny));
  require(p.pixel_size_m > 0.0 && std::isfinite(p.pixel_size_m), "pixel size must be positive");
  require(p.n_elements >= 2, "transducer needs at least 2 elements");
  require(p.pitch_m > 0.0 && std::isfinite(p.pitch_m), "pitch must be positive");
  require(p.n_transmits >= 2, "need at least 2 transmits to form a pair");
  require(p.max_leg_angle_deg > 0.0 && p.max_leg_angle_deg < 90.0,
          "max leg angle must lie in (0, 90) degrees");

  Geometry g;
  g.grid.nx = p.nx;
  g.grid.ny = p.ny;
  g.grid.pixel_size_m = p.pixel_size_m;
  g.grid.origin_m = {-0.5 * (p.nx - 1) * p.pixel_size_m, 0.5 * p.pixel_size_m};

  g.transducer.n_elements = p.n_elements;
  g.transducer.pitch_m = p.pitch_m;
  g.transducer.center_freq_hz = p.center_freq_hz;
  g.transducer.element_positions_m = centered_positions(p.n_elements, p.pitch_m);

  const double aperture = g.transducer.aperture_width_m();
  const double first = g.transducer.element_positions_m.front();
  const double last = g.transducer.element_positions_m.back();
  const int nt = p.n_transmits;
  g.transmits.aperture_centers_m.resize(nt);
  for (int i = 0; i < nt; ++i) {
    const double c = ((2.0 * i - (nt - 1)) * aperture) / (2.0 * (nt - 1));
    g.transmits.aperture_centers_m[i] = std::clamp(c, first, last);
  }
  for (int i = 0; i + 1 < nt; ++i) g.transmits.pairs.emplace_back(i, i + 1);

  const int nu = p.nu > 0 ? p.nu : p.n_elements;
  const int nv = p.nv > 0 ? p.nv : p.ny;
  require(nu >= 2 && nv >= 2, "measurement lattice needs at least 2x2 samples");
  g.lattice.nu = nu;
  g.lattice.nv = nv;
  g.lattice.lateral_m = nu == p.n_elements
                            ? g.transducer.element_positions_m
                            : centered_positions(nu, aperture / (nu - 1));
  g.lattice.axial_m.resize(nv);
  const double depth = g.grid.depth_m();
  for (int v = 0; v < nv; ++v) {
    g.lattice.axial_m[v] = g.grid.z_min() + (v + 0.5) * depth / nv;
  }
  g.max_leg_angle_rad = p.max_leg_angle_deg * std::numbers::pi / 180.0;

  validate(g);
  return g;
}

Geometry make_default_geometry() { return make_geometry(GeometryParams{}); }

Geometry scaled_geometry(Scale scale) {
  if (scale.num <= 0 || scale.den <= 0 || scale.num > scale.den) {
    throw GeometryError("scale must lie in (0, 1], got " + scale.str());
  }
  const GeometryParams base;
  GeometryParams p = base;
  p.nx = scale_count(base.nx, scale);
  p.ny = scale_count(base.ny, scale);
  p.n_elements = scale_count(base.n_elements, scale);
  const int pairs = scale_count(base.n_transmits - 1, scale);
  if (p.nx < 2 || p.ny < 2 || p.n_elements < 2 || pairs < 1) {
    throw GeometryError("scale " + scale.str() + " yields a degenerate geometry (grid " +
                        std::to_string(p.nx) + "x" + std::to_string(p.ny) + ", " +
                        std::to_string(p.n_elements) + " elements, " +
                        std::to_string(pairs) + " pairs)");
  }
  p.n_transmits = pairs + 1;
  p.pixel_size_m = base.pixel_size_m * base.nx / p.nx;
  p.pitch_m = base.pitch_m * (base.n_elements - 1) / (p.n_elements - 1);
  return make_geometry(p);
}

void validate(const Geometry& g) {
  const auto& grid = g.grid;
  require(grid.nx >= 2 && grid.ny >= 2, "grid needs at least 2x2 pixels");
  require(grid.pixel_size_m > 0.0, "pixel size must be positive");
  const auto& tr = g.transducer;
  require(tr.n_elements >= 2 && tr.pitch_m > 0.0, "invalid transducer");
  require(static_cast<int>(tr.element_positions_m.size()) == tr.n_elements,
          "element position count mismatch");
  for (int k = 0; k < tr.n_elements; ++k) {
    if (k > 0) {
      require(tr.element_positions_m[k] > tr.element_positions_m[k - 1],
              "element positions must be strictly increasing");
    }
  }
  const double aperture = tr.aperture_width_m();
  require(grid.width_m() <= aperture + 2.0 * grid.pixel_size_m + 1e-12,
          "grid is wider than the transducer aperture plus two pixels");

  const auto& tx = g.transmits;
  require(tx.n_transmits() >= 2, "need at least two transmits");
  require(tx.pairs.size() + 1 == tx.aperture_centers_m.size(),
          "transmit pairs must number n_transmits - 1");
  for (double c : tx.aperture_centers_m) {
    require(c >= tr.element_positions_m.front() && c <= tr.element_positions_m.back(),
            "transmit center outside the aperture");
  }
  for (std::size_t i = 0; i < tx.pairs.size(); ++i) {
    require(tx.pairs[i] == std::pair<int, int>(static_cast<int>(i), static_cast<int>(i) + 1),
            "transmit pairs must be consecutive");
  }

  const auto& lat = g.lattice;
  require(static_cast<int>(lat.lateral_m.size()) == lat.nu &&
              static_cast<int>(lat.axial_m.size()) == lat.nv,
          "lattice position count mismatch");
  for (double x : lat.lateral_m) {
    require(x >= grid.x_min() && x <= grid.x_max(), "lattice sample outside the grid");
  }
  for (double z : lat.axial_m) {
    require(z >= grid.z_min() && z <= grid.z_max(), "lattice sample outside the grid");
  }
  require(g.max_leg_angle_rad > 0.0 && g.max_leg_angle_rad < 0.5 * std::numbers::pi,
          "max leg angle must lie in (0, pi/2)");
}

nlohmann::json to_json(const Geometry& g) {
  nlohmann::json j;
  j["grid"] = {{"nx", g.grid.nx},
               {"ny", g.grid.ny},
               {"pixel_size_m", g.grid.pixel_size_m},
               {"origin_m", {g.grid.origin_m.x, g.grid.origin_m.z}}};
  j["transducer"] = {{"n_elements", g.transducer.n_elements},
                     {"pitch_m", g.transducer.pitch_m},
                     {"center_freq_hz", g.transducer.center_freq_hz},
                     {"element_positions_m", g.transducer.element_positions_m}};
  j["transmits"] = {{"aperture_centers_m", g.transmits.aperture_centers_m},
                    {"pairs", g.transmits.pairs}};
  j["lattice"] = {{"nu", g.lattice.nu},
                  {"nv", g.lattice.nv},
                  {"lateral_m", g.lattice.lateral_m},
                  {"axial_m", g.lattice.axial_m}};
  j["max_leg_angle_rad"] = g.max_leg_angle_rad;
  return j;
}

Geometry geometry_from_json(const nlohmann::json& j) {
  try {
    Geometry g;
    const auto& grid = j.at("grid");
    g.grid.nx = grid.at("nx").get<int>();
    g.grid.ny = grid.at("ny").get<int>();
    g.grid.pixel_size_m = grid.at("pixel_size_m").get<double>();
    g.grid.origin_m = {grid.at("origin_m").at(0).get<double>(),
                       grid.at("origin_m").at(1).get<double>()};
    const auto& tr = j.at("transducer");
    g.transducer.n_elements = tr.at("n_elements").get<int>();
    g.transducer.pitch_m = tr.at("pitch_m").get<double>();
    g.transducer.center_freq_hz = tr.at("center_freq_hz").get<double>();
    g.transducer.element_positions_m = tr.at("element_positions_m").get<std::vector<double>>();
    const auto& tx = j.at("transmits");
    g.transmits.aperture_centers_m = tx.at("aperture_centers_m").get<std::vector<double>>();
    g.transmits.pairs = tx.at("pairs").get<std::vector<std::pair<int, int>>>();
    const auto& lat = j.at("lattice");
    g.lattice.nu = lat.at("nu").get<int>();
    g.lattice.nv = lat.at("nv").get<int>();
    g.lattice.lateral_m = lat.at("lateral_m").get<std::vector<double>>();
    g.lattice.axial_m = lat.at("axial_m").get<std::vector<double>>();
    g.max_leg_angle_rad = j.at("max_leg_angle_rad").get<double>();
    validate(g);
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw GeometryError(std::string("malformed geometry JSON: ") + e.what());
  }
}

}  // namespace denois
