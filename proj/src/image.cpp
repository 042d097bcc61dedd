#include "denois/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "denois/error.hpp"

namespace denois {

SosImage constant_sos(const ImagingGrid& grid, double value) {
  return {grid, std::vector<double>(grid.size(), value)};
}

void check_sos_range(const SosImage& image) {
  for (double c : image.values) {
    if (!std::isfinite(c) || c < kSosGuardMin || c > kSosGuardMax) {
      throw NumericalError("SoS value " + std::to_string(c) + " m/s outside [" +
                           std::to_string(kSosGuardMin) + ", " +
                           std::to_string(kSosGuardMax) + "]");
    }
  }
}

SlownessImage sos_to_slowness(const SosImage& image, double c0) {
  if (!(c0 > 0.0)) throw NumericalError("reference SoS must be positive");
  SlownessImage out{image.grid, std::vector<double>(image.values.size()), c0};
  const double s0 = 1.0 / c0;
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    const double c = image.values[i];
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw NumericalError("nonpositive SoS " + std::to_string(c) + " at pixel " +
                           std::to_string(i));
    }
    out.values[i] = 1.0 / c - s0;
  }
  return out;
}

SosImage slowness_to_sos(const SlownessImage& image) {
  SosImage out{image.grid, std::vector<double>(image.values.size())};
  const double s0 = 1.0 / image.c0_ref_mps;
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    out.values[i] = 1.0 / (image.values[i] + s0);
  }
  return out;
}

std::vector<double> to_solver_units(const SlownessImage& image) {
  std::vector<double> out(image.values);
  for (double& v : out) v /= kSlownessHalfSpan;
  return out;
}

SlownessImage from_solver_units(const ImagingGrid& grid, std::span<const double> values,
                                double c0) {
  SlownessImage out{grid, std::vector<double>(values.begin(), values.end()), c0};
  for (double& v : out.values) v *= kSlownessHalfSpan;
  return out;
}

std::vector<double> upsample2(const ImagingGrid& grid, std::span<const double> values) {
  if (values.size() != grid.size()) throw ShapeError("upsample2: image/grid size mismatch");
  const ImagingGrid fine = grid.refined();
  std::vector<double> out(fine.size());
  auto coord = [](double pos, double origin, double h, int n, int& i0, double& w) {
    const double f = std::clamp((pos - origin) / h, 0.0, static_cast<double>(n - 1));
    i0 = std::min(static_cast<int>(std::floor(f)), n - 2);
    w = f - i0;
  };
  for (int fz = 0; fz < fine.ny; ++fz) {
    int iz = 0;
    double wz = 0.0;
    coord(fine.center_z(fz), grid.origin_m.z, grid.pixel_size_m, grid.ny, iz, wz);
    for (int fx = 0; fx < fine.nx; ++fx) {
      int ix = 0;
      double wx = 0.0;
      coord(fine.center_x(fx), grid.origin_m.x, grid.pixel_size_m, grid.nx, ix, wx);
      const double v00 = values[grid.index(ix, iz)];
      const double v10 = values[grid.index(ix + 1, iz)];
      const double v01 = values[grid.index(ix, iz + 1)];
      const double v11 = values[grid.index(ix + 1, iz + 1)];
      out[fine.index(fx, fz)] = (1 - wz) * ((1 - wx) * v00 + wx * v10) +
                                wz * ((1 - wx) * v01 + wx * v11);
    }
  }
  return out;
}

namespace {

int reflect(int i, int n) {
  // Half-sample symmetric extension: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

}  // namespace

std::vector<double> gaussian_blur(std::span<const double> values, int nx, int ny,
                                  double sigma_px) {
  if (values.size() != static_cast<std::size_t>(nx) * ny) {
    throw ShapeError("gaussian_blur: size mismatch");
  }
  std::vector<double> out(values.begin(), values.end());
  if (!(sigma_px > 0.0)) return out;
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma_px)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma_px * sigma_px));
    sum += kernel[k + radius];
  }
  for (double& w : kernel) w /= sum;

  std::vector<double> tmp(out.size());
  for (int iz = 0; iz < ny; ++iz) {
    for (int ix = 0; ix < nx; ++ix) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * out[static_cast<std::size_t>(iz) * nx + reflect(ix + k, nx)];
      }
      tmp[static_cast<std::size_t>(iz) * nx + ix] = acc;
    }
  }
  for (int iz = 0; iz < ny; ++iz) {
    for (int ix = 0; ix < nx; ++ix) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * tmp[static_cast<std::size_t>(reflect(iz + k, ny)) * nx + ix];
      }
      out[static_cast<std::size_t>(iz) * nx + ix] = acc;
    }
  }
  return out;
}

void write_pgm(const std::string& path, std::span<const double> values, int nx, int ny,
               double lo, double hi) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "P5\n" << nx << " " << ny << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (double v : values) {
    const double t = std::clamp((v - lo) / span, 0.0, 1.0);
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
  }
  if (!os) throw IoError("failed writing '" + path + "'");
}

}  // namespace denois
