#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "denois/image.hpp"

namespace denois {

/// Lesion pixels and the surrounding half-centimeter background ring.
struct RegionPair {
  std::vector<std::uint8_t> lesion;
  std::vector<std::uint8_t> background;
};

inline constexpr double kLesionMarginM = 5e-3;
inline constexpr int kDefaultGcnrBins = 100;

/// Root mean squared error over all pixels, m/s.
double rmse(const SosImage& recon, const SosImage& gt);

/// Dilation radius in pixels: ceil(margin / pixel size).
int margin_radius_px(const ImagingGrid& grid, double margin_m = kLesionMarginM);

/// background = pixels within margin_radius_px (Euclidean, pixel centers) of
/// the lesion, minus the lesion itself, clipped to the grid. Throws
/// ConfigError for an empty lesion or an empty resulting background.
RegionPair lesion_regions(std::span<const std::uint8_t> lesion_mask, const ImagingGrid& grid,
                          double margin_m = kLesionMarginM);

/// Median; even counts average the two middle values.
double median(std::vector<double> values);

/// Median SoS of the lesion minus median SoS of the background.
double contrast(const SosImage& image, const RegionPair& regions);

/// |contrast(recon) - contrast(gt)|.
double ace(const SosImage& recon, const SosImage& gt, const RegionPair& regions);

/// 1 - sum_k min(h_lesion(k), h_background(k)) over n_bins shared bins spanning
/// the joint min/max; histograms normalized to unit mass.
double gcnr(const SosImage& image, const RegionPair& regions, int n_bins = kDefaultGcnrBins);

/// Same on raw samples.
double gcnr_samples(std::span<const double> a, std::span<const double> b,
                    int n_bins = kDefaultGcnrBins);

}  // namespace denois
