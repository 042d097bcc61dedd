#include "denois/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "denois/error.hpp"

namespace denois {

namespace {

void check_same_grid(const SosImage& a, const SosImage& b) {
  if (!(a.grid == b.grid) || a.values.size() != b.values.size()) {
    throw ShapeError("images are on different grids");
  }
}

std::vector<double> gather(const SosImage& image, std::span<const std::uint8_t> mask) {
  if (mask.size() != image.values.size()) throw ShapeError("region mask does not match image");
  std::vector<double> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(image.values[i]);
  }
  if (out.empty()) throw ConfigError("empty region");
  return out;
}

}  // namespace

double rmse(const SosImage& recon, const SosImage& gt) {
  check_same_grid(recon, gt);
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.values.size(); ++i) {
    const double d = recon.values[i] - gt.values[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(gt.values.size()));
}

int margin_radius_px(const ImagingGrid& grid, double margin_m) {
  // Guard against 5.0000000001-style rounding of an exact ratio.
  return static_cast<int>(std::ceil(margin_m / grid.pixel_size_m - 1e-9));
}

RegionPair lesion_regions(std::span<const std::uint8_t> lesion_mask, const ImagingGrid& grid,
                          double margin_m) {
  if (lesion_mask.size() != grid.size()) throw ShapeError("lesion mask does not match grid");
  if (std::none_of(lesion_mask.begin(), lesion_mask.end(), [](auto v) { return v != 0; })) {
    throw ConfigError("empty lesion mask");
  }
  const int r = margin_radius_px(grid, margin_m);
  RegionPair regions{std::vector<std::uint8_t>(grid.size(), 0),
                     std::vector<std::uint8_t>(grid.size(), 0)};
  for (std::size_t i = 0; i < grid.size(); ++i) regions.lesion[i] = lesion_mask[i] ? 1 : 0;
  for (int iz = 0; iz < grid.ny; ++iz) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      if (!regions.lesion[grid.index(ix, iz)]) continue;
      for (int dz = -r; dz <= r; ++dz) {
        for (int dx = -r; dx <= r; ++dx) {
          if (dx * dx + dz * dz > r * r) continue;
          const int x = ix + dx;
          const int z = iz + dz;
          if (x < 0 || x >= grid.nx || z < 0 || z >= grid.ny) continue;
          const std::size_t j = grid.index(x, z);
          if (!regions.lesion[j]) regions.background[j] = 1;
        }
      }
    }
  }
  if (std::none_of(regions.background.begin(), regions.background.end(),
                   [](auto v) { return v != 0; })) {
    throw ConfigError("lesion covers the whole grid; background is empty");
  }
  return regions;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

double contrast(const SosImage& image, const RegionPair& regions) {
  return median(gather(image, regions.lesion)) - median(gather(image, regions.background));
}

double ace(const SosImage& recon, const SosImage& gt, const RegionPair& regions) {
  check_same_grid(recon, gt);
  return std::abs(contrast(recon, regions) - contrast(gt, regions));
}

double gcnr_samples(std::span<const double> a, std::span<const double> b, int n_bins) {
  if (a.empty() || b.empty()) throw ConfigError("gCNR needs two nonempty regions");
  if (n_bins < 2) throw ConfigError("gCNR needs at least 2 bins");
  const auto [a_lo, a_hi] = std::minmax_element(a.begin(), a.end());
  const auto [b_lo, b_hi] = std::minmax_element(b.begin(), b.end());
  const double lo = std::min(*a_lo, *b_lo);
  const double hi = std::max(*a_hi, *b_hi);
  if (!(hi > lo)) return 0.0;  // everything falls into one bin
  auto histogram = [&](std::span<const double> s) {
    std::vector<double> h(n_bins, 0.0);
    for (double v : s) {
      const auto k = static_cast<int>((v - lo) / (hi - lo) * n_bins);
      h[std::clamp(k, 0, n_bins - 1)] += 1.0;
    }
    for (double& c : h) c /= static_cast<double>(s.size());
    return h;
  };
  const auto ha = histogram(a);
  const auto hb = histogram(b);
  double overlap = 0.0;
  for (int k = 0; k < n_bins; ++k) overlap += std::min(ha[k], hb[k]);
  return std::clamp(1.0 - overlap, 0.0, 1.0);
}

double gcnr(const SosImage& image, const RegionPair& regions, int n_bins) {
  return gcnr_samples(gather(image, regions.lesion), gather(image, regions.background), n_bins);
}

}  // namespace denois
