#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "denois/image.hpp"

namespace denois {

enum class PhantomKind { quasi_random, circle, rectangle, homogeneous };

std::string to_string(PhantomKind kind);
PhantomKind phantom_kind_from_string(const std::string& name);

struct PhantomSpec {
  PhantomKind kind = PhantomKind::homogeneous;
  double background_mps = kDefaultC0;
  /// SoS of the circle/rectangle, or of the first quasi-random blob.
  double inclusion_mps = kDefaultC0;
  Point2 center_m;
  double radius_m = 0.0;       // circle
  double half_width_m = 0.0;   // rectangle, lateral
  double half_height_m = 0.0;  // rectangle, axial
  double blur_sigma_px = 0.0;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

struct Phantom {
  SosImage image;
  /// 1 where the pixel belongs to an inclusion (before any blur).
  std::vector<std::uint8_t> lesion_mask;
  PhantomSpec spec;
};

/// Deterministic in (spec, grid). Quasi-random phantoms threshold a white
/// noise field smoothed at 4 px at a seeded quantile in [0.6, 0.85] and keep
/// the up to three largest connected blobs; the first blob takes
/// inclusion_mps, further blobs get seeded levels in [1400, 1650] m/s.
/// Throws ConfigError if an inclusion leaves the grid or a level is outside
/// [1400, 1650] m/s.
Phantom generate_phantom(const PhantomSpec& spec, const ImagingGrid& grid);

/// Per-sample seed derived from (seed, index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Stratified dataset: round(0.1 n) homogeneous, round(0.1 n) structured
/// (circle or rectangle), round(0.4 n) blurred quasi-random (sigma uniform in
/// [1, 4] px) and the rest sharp quasi-random, in a seeded order. Each sample
/// depends only on (seed, index, grid).
std::vector<PhantomSpec> plan_dataset(std::size_t n, std::uint64_t seed,
                                      const ImagingGrid& grid);

/// Generates plan_dataset(n, seed, grid) and hands every sample to sink in
/// index order.
void generate_dataset(std::size_t n, std::uint64_t seed, const ImagingGrid& grid,
                      const std::function<void(std::size_t, const Phantom&)>& sink);

}  // namespace denois
