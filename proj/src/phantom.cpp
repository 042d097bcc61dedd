#include "denois/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "denois/error.hpp"

namespace denois {

namespace {

constexpr double kFieldSigmaPx = 4.0;

void check_level(double mps, const char* what) {
  if (!(mps >= kSosMin && mps <= kSosMax)) {
    throw ConfigError(std::string(what) + " " + std::to_string(mps) +
                      " m/s outside [1400, 1650]");
  }
}

// Connected components (4-neighborhood) of mask, largest first; ties keep
// raster order of their first pixel.
std::vector<std::vector<std::size_t>> components(const std::vector<std::uint8_t>& mask,
                                                 int nx, int ny) {
  std::vector<int> label(mask.size(), -1);
  std::vector<std::vector<std::size_t>> comps;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || label[start] >= 0) continue;
    const int id = static_cast<int>(comps.size());
    comps.emplace_back();
    stack.assign(1, start);
    label[start] = id;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      comps[id].push_back(p);
      const int x = static_cast<int>(p % nx);
      const int z = static_cast<int>(p / nx);
      const int nbr[4][2] = {{x - 1, z}, {x + 1, z}, {x, z - 1}, {x, z + 1}};
      for (const auto& q : nbr) {
        if (q[0] < 0 || q[0] >= nx || q[1] < 0 || q[1] >= ny) continue;
        const std::size_t qi = static_cast<std::size_t>(q[1]) * nx + q[0];
        if (mask[qi] && label[qi] < 0) {
          label[qi] = id;
          stack.push_back(qi);
        }
      }
    }
  }
  std::stable_sort(comps.begin(), comps.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  return comps;
}

void quasi_random(const PhantomSpec& spec, const ImagingGrid& grid, Phantom& out) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> quantile_dist(0.6, 0.85);
  std::uniform_real_distribution<double> level_dist(kSosMin, kSosMax);

  std::vector<double> field(grid.size());
  for (double& f : field) f = normal(rng);
  field = gaussian_blur(field, grid.nx, grid.ny, kFieldSigmaPx);
  const double q = quantile_dist(rng);
  std::vector<double> sorted(field);
  std::sort(sorted.begin(), sorted.end());
  const double threshold = sorted[static_cast<std::size_t>(q * (sorted.size() - 1))];

  std::vector<std::uint8_t> mask(grid.size());
  for (std::size_t i = 0; i < field.size(); ++i) mask[i] = field[i] > threshold ? 1 : 0;
  const auto blobs = components(mask, grid.nx, grid.ny);
  for (std::size_t b = 0; b < std::min<std::size_t>(3, blobs.size()); ++b) {
    const double level = b == 0 ? spec.inclusion_mps : level_dist(rng);
    for (std::size_t p : blobs[b]) {
      out.image.values[p] = level;
      out.lesion_mask[p] = 1;
    }
  }
}

}  // namespace

std::string to_string(PhantomKind kind) {
  switch (kind) {
    case PhantomKind::quasi_random: return "quasi_random";
    case PhantomKind::circle: return "circle";
    case PhantomKind::rectangle: return "rectangle";
    case PhantomKind::homogeneous: return "homogeneous";
  }
  return "unknown";
}

PhantomKind phantom_kind_from_string(const std::string& name) {
  for (auto kind : {PhantomKind::quasi_random, PhantomKind::circle, PhantomKind::rectangle,
                    PhantomKind::homogeneous}) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown phantom kind '" + name + "'");
}

nlohmann::json to_json(const PhantomSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"background_mps", s.background_mps},
          {"inclusion_mps", s.inclusion_mps},
          {"center_m", {s.center_m.x, s.center_m.z}},
          {"radius_m", s.radius_m},
          {"half_width_m", s.half_width_m},
          {"half_height_m", s.half_height_m},
          {"blur_sigma_px", s.blur_sigma_px},
          {"seed", s.seed}};
}

PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
  try {
    PhantomSpec s;
    s.kind = phantom_kind_from_string(j.at("kind").get<std::string>());
    s.background_mps = j.at("background_mps").get<double>();
    s.inclusion_mps = j.at("inclusion_mps").get<double>();
    s.center_m = {j.at("center_m").at(0).get<double>(), j.at("center_m").at(1).get<double>()};
    s.radius_m = j.at("radius_m").get<double>();
    s.half_width_m = j.at("half_width_m").get<double>();
    s.half_height_m = j.at("half_height_m").get<double>();
    s.blur_sigma_px = j.at("blur_sigma_px").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed phantom spec: ") + e.what());
  }
}

Phantom generate_phantom(const PhantomSpec& spec, const ImagingGrid& grid) {
  check_level(spec.background_mps, "background SoS");
  if (spec.kind != PhantomKind::homogeneous) check_level(spec.inclusion_mps, "inclusion SoS");
  if (spec.blur_sigma_px < 0.0) throw ConfigError("blur sigma must be >= 0");

  Phantom out{constant_sos(grid, spec.background_mps),
              std::vector<std::uint8_t>(grid.size(), 0), spec};
  auto inside_grid = [&](double x0, double x1, double z0, double z1) {
    return x0 >= grid.x_min() && x1 <= grid.x_max() && z0 >= grid.z_min() &&
           z1 <= grid.z_max();
  };
  const auto& c = spec.center_m;
  switch (spec.kind) {
    case PhantomKind::homogeneous:
      break;
    case PhantomKind::circle: {
      if (!(spec.radius_m > 0.0) ||
          !inside_grid(c.x - spec.radius_m, c.x + spec.radius_m, c.z - spec.radius_m,
                       c.z + spec.radius_m)) {
        throw ConfigError("circle inclusion does not fit inside the grid");
      }
      for (int iz = 0; iz < grid.ny; ++iz) {
        for (int ix = 0; ix < grid.nx; ++ix) {
          const double dx = grid.center_x(ix) - c.x;
          const double dz = grid.center_z(iz) - c.z;
          if (dx * dx + dz * dz <= spec.radius_m * spec.radius_m) {
            out.image.values[grid.index(ix, iz)] = spec.inclusion_mps;
            out.lesion_mask[grid.index(ix, iz)] = 1;
          }
        }
      }
      break;
    }
    case PhantomKind::rectangle: {
      if (!(spec.half_width_m > 0.0 && spec.half_height_m > 0.0) ||
          !inside_grid(c.x - spec.half_width_m, c.x + spec.half_width_m,
                       c.z - spec.half_height_m, c.z + spec.half_height_m)) {
        throw ConfigError("rectangle inclusion does not fit inside the grid");
      }
      for (int iz = 0; iz < grid.ny; ++iz) {
        for (int ix = 0; ix < grid.nx; ++ix) {
          if (std::abs(grid.center_x(ix) - c.x) <= spec.half_width_m &&
              std::abs(grid.center_z(iz) - c.z) <= spec.half_height_m) {
            out.image.values[grid.index(ix, iz)] = spec.inclusion_mps;
            out.lesion_mask[grid.index(ix, iz)] = 1;
          }
        }
      }
      break;
    }
    case PhantomKind::quasi_random:
      quasi_random(spec, grid, out);
      break;
  }
  if (spec.blur_sigma_px > 0.0) {
    out.image.values = gaussian_blur(out.image.values, grid.nx, grid.ny, spec.blur_sigma_px);
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over a combination of both inputs
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<PhantomSpec> plan_dataset(std::size_t n, std::uint64_t seed,
                                      const ImagingGrid& grid) {
  if (n == 0) throw ConfigError("dataset size must be >= 1");
  auto tenths = [n](std::size_t k) { return (n * k + 5) / 10; };
  const std::size_t n_homogeneous = tenths(1);
  const std::size_t n_structured = std::min(tenths(1), n - n_homogeneous);
  const std::size_t n_blurred = std::min(tenths(4), n - n_homogeneous - n_structured);

  enum class Stratum { homogeneous, structured, blurred, sharp };
  std::vector<Stratum> strata(n, Stratum::sharp);
  std::fill_n(strata.begin(), n_homogeneous, Stratum::homogeneous);
  std::fill_n(strata.begin() + n_homogeneous, n_structured, Stratum::structured);
  std::fill_n(strata.begin() + n_homogeneous + n_structured, n_blurred, Stratum::blurred);
  std::mt19937_64 order_rng(derive_seed(seed, ~0ULL));
  std::shuffle(strata.begin(), strata.end(), order_rng);

  const double width = grid.width_m();
  const double depth = grid.depth_m();
  const double extent = std::min(width, depth);
  std::vector<PhantomSpec> specs(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    PhantomSpec& s = specs[i];
    s.seed = rng();
    s.background_mps = uniform(kSosMin, kSosMax);
    s.inclusion_mps = uniform(kSosMin, kSosMax);
    switch (strata[i]) {
      case Stratum::homogeneous:
        s.kind = PhantomKind::homogeneous;
        s.inclusion_mps = s.background_mps;
        break;
      case Stratum::structured: {
        const bool circle = unit(rng) < 0.5;
        const double margin = grid.pixel_size_m;
        if (circle) {
          s.kind = PhantomKind::circle;
          s.radius_m = uniform(0.12, 0.25) * extent;
          s.center_m = {uniform(grid.x_min() + s.radius_m + margin, grid.x_max() - s.radius_m - margin),
                        uniform(grid.z_min() + s.radius_m + margin, grid.z_max() - s.radius_m - margin)};
        } else {
          s.kind = PhantomKind::rectangle;
          s.half_width_m = uniform(0.1, 0.25) * extent;
          s.half_height_m = uniform(0.1, 0.25) * extent;
          s.center_m = {uniform(grid.x_min() + s.half_width_m + margin, grid.x_max() - s.half_width_m - margin),
                        uniform(grid.z_min() + s.half_height_m + margin, grid.z_max() - s.half_height_m - margin)};
        }
        break;
      }
      case Stratum::blurred:
        s.kind = PhantomKind::quasi_random;
        s.blur_sigma_px = uniform(1.0, 4.0);
        break;
      case Stratum::sharp:
        s.kind = PhantomKind::quasi_random;
        break;
    }
  }
  return specs;
}

void generate_dataset(std::size_t n, std::uint64_t seed, const ImagingGrid& grid,
                      const std::function<void(std::size_t, const Phantom&)>& sink) {
  const auto specs = plan_dataset(n, seed, grid);
  for (std::size_t i = 0; i < n; ++i) sink(i, generate_phantom(specs[i], grid));
}

}  // namespace denois
