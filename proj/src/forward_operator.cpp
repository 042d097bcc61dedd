#include "denois/forward_operator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "denois/error.hpp"
#include "denois/parallel.hpp"
#include "denois/ray_trace.hpp"

namespace denois {

namespace {

constexpr std::size_t kRowBlock = 512;
// Nonzeros per block below which thread start-up outweighs the work.
constexpr std::size_t kBlockNnz = 1 << 16;

std::size_t block_size(std::size_t n, std::size_t nnz) {
  if (nnz == 0) return std::max<std::size_t>(n, 1);
  return std::max(kRowBlock, n * kBlockNnz / nnz);
}

void check_size(std::size_t actual, std::size_t expected, const char* what) {
  if (actual != expected) {
    throw ShapeError(std::string(what) + ": expected length " + std::to_string(expected) +
                     ", got " + std::to_string(actual));
  }
}

}  // namespace

SparseImagingOperator::SparseImagingOperator(ImagingGrid grid, MeasurementShape shape,
                                             std::vector<std::size_t> row_ptr,
                                             std::vector<int> col_idx,
                                             std::vector<double> values, double norm_scale,
                                             double physical_scale)
    : grid_(grid),
      shape_(shape),
      row_ptr_(std::move(row_ptr)),
      col_idx_(std::move(col_idx)),
      values_(std::move(values)),
      norm_scale_(norm_scale),
      physical_scale_(physical_scale) {
  check_size(row_ptr_.size(), shape_.size() + 1, "operator row_ptr");
  check_size(col_idx_.size(), values_.size(), "operator col_idx");
  if (row_ptr_.front() != 0 || row_ptr_.back() != values_.size()) {
    throw ShapeError("operator row_ptr does not span the entry arrays");
  }
  const auto n_cols = static_cast<int>(grid_.size());
  for (std::size_t r = 0; r < rows(); ++r) {
    if (row_ptr_[r] > row_ptr_[r + 1]) throw ShapeError("operator row_ptr not monotone");
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      if (col_idx_[k] < 0 || col_idx_[k] >= n_cols) {
        throw ShapeError("operator column index out of range in row " + std::to_string(r));
      }
      if (k > row_ptr_[r] && col_idx_[k] <= col_idx_[k - 1]) {
        throw ShapeError("operator row " + std::to_string(r) +
                         " columns must be strictly increasing");
      }
      if (!std::isfinite(values_[k])) {
        throw NumericalError("operator entry is not finite in row " + std::to_string(r));
      }
    }
  }
  build_transpose();
}

void SparseImagingOperator::build_transpose() {
  const std::size_t n = cols();
  t_ptr_.assign(n + 1, 0);
  for (int c : col_idx_) ++t_ptr_[c + 1];
  std::partial_sum(t_ptr_.begin(), t_ptr_.end(), t_ptr_.begin());
  t_idx_.resize(values_.size());
  t_values_.resize(values_.size());
  std::vector<std::size_t> fill(t_ptr_.begin(), t_ptr_.end() - 1);
  // Row-major sweep keeps each column's entries in increasing row order.
  for (std::size_t r = 0; r < rows(); ++r) {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      const std::size_t slot = fill[col_idx_[k]]++;
      t_idx_[slot] = static_cast<std::uint32_t>(r);
      t_values_[slot] = values_[k];
    }
  }
}

void SparseImagingOperator::apply(std::span<const double> x, std::span<double> y) const {
  check_size(x.size(), cols(), "apply input");
  check_size(y.size(), rows(), "apply output");
  parallel_for(rows(), block_size(rows(), nnz()), [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      double acc = 0.0;
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
        acc += values_[k] * x[col_idx_[k]];
      }
      y[r] = acc;
    }
  });
}

std::vector<double> SparseImagingOperator::apply(std::span<const double> x) const {
  std::vector<double> y(rows());
  apply(x, y);
  return y;
}

void SparseImagingOperator::apply_adjoint(std::span<const double> y,
                                          std::span<double> x) const {
  check_size(y.size(), rows(), "apply_adjoint input");
  check_size(x.size(), cols(), "apply_adjoint output");
  parallel_for(cols(), block_size(cols(), nnz()), [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      double acc = 0.0;
      for (std::size_t k = t_ptr_[c]; k < t_ptr_[c + 1]; ++k) {
        acc += t_values_[k] * y[t_idx_[k]];
      }
      x[c] = acc;
    }
  });
}

std::vector<double> SparseImagingOperator::apply_adjoint(std::span<const double> y) const {
  std::vector<double> x(cols());
  apply_adjoint(y, x);
  return x;
}

std::vector<double> SparseImagingOperator::column(std::size_t j) const {
  if (j >= cols()) throw ShapeError("column index out of range");
  std::vector<double> out(rows(), 0.0);
  for (std::size_t k = t_ptr_[j]; k < t_ptr_[j + 1]; ++k) out[t_idx_[k]] = t_values_[k];
  return out;
}

SparseImagingOperator SparseImagingOperator::scaled(double factor, double norm_scale) const {
  std::vector<double> v(values_);
  for (double& e : v) e *= factor;
  return SparseImagingOperator(grid_, shape_, row_ptr_, col_idx_, std::move(v), norm_scale,
                               physical_scale_ / factor);
}

SparseImagingOperator assemble_operator_on_grid(const Geometry& geometry,
                                                const ImagingGrid& grid) {
  validate(geometry);
  const MeasurementShape shape = geometry.measurement_shape();
  const auto& centers = geometry.transmits.aperture_centers_m;
  const double half_aperture = 0.5 * geometry.transducer.aperture_width_m();

  // Rows are traced independently into per-row buffers, then concatenated.
  std::vector<std::vector<std::pair<int, double>>> row_entries(shape.size());
  parallel_for(shape.size(), 256, [&](std::size_t begin, std::size_t end) {
    std::vector<double> dense;
    std::vector<int> touched;
    dense.assign(grid.size(), 0.0);
    for (std::size_t r = begin; r < end; ++r) {
      const int v = static_cast<int>(r % shape.nv);
      const int u = static_cast<int>((r / shape.nv) % shape.nu);
      const int pair = static_cast<int>(r / shape.plane_size());
      const auto [i0, i1] = geometry.transmits.pairs[pair];
      const Point2 p = geometry.lattice.position(u, v);
      const Point2 c0{centers[i0], 0.0};
      const Point2 c1{centers[i1], 0.0};
      if (std::abs(p.x - c0.x) > half_aperture && std::abs(p.x - c1.x) > half_aperture) continue;
      if (c0 == c1) continue;
      touched.clear();
      for (const auto& seg : trace_ray(grid, c1, p)) {
        dense[seg.pixel] += seg.length_m;
        touched.push_back(seg.pixel);
      }
      for (const auto& seg : trace_ray(grid, c0, p)) {
        dense[seg.pixel] -= seg.length_m;
        touched.push_back(seg.pixel);
      }
      std::sort(touched.begin(), touched.end());
      touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
      auto& out = row_entries[r];
      for (int c : touched) {
        if (dense[c] != 0.0) out.emplace_back(c, dense[c]);
        dense[c] = 0.0;
      }
    }
  });

  std::vector<std::size_t> row_ptr(shape.size() + 1, 0);
  for (std::size_t r = 0; r < shape.size(); ++r) {
    row_ptr[r + 1] = row_ptr[r] + row_entries[r].size();
  }
  std::vector<int> col_idx(row_ptr.back());
  std::vector<double> values(row_ptr.back());
  for (std::size_t r = 0; r < shape.size(); ++r) {
    std::size_t k = row_ptr[r];
    for (const auto& [c, val] : row_entries[r]) {
      col_idx[k] = c;
      values[k] = val;
      ++k;
    }
  }
  return SparseImagingOperator(grid, shape, std::move(row_ptr), std::move(col_idx),
                               std::move(values));
}

SparseImagingOperator assemble_operator(const Geometry& geometry) {
  return assemble_operator_on_grid(geometry, geometry.grid);
}

SparseImagingOperator assemble_highres_operator(const Geometry& geometry) {
  return assemble_operator_on_grid(geometry, geometry.grid.refined());
}

double estimate_largest_singular_value(const SparseImagingOperator& op,
                                       const PowerIterationOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(op.cols());
  for (double& e : x) e = normal(rng);
  auto norm = [](std::span<const double> v) {
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  };
  double nx = norm(x);
  if (nx == 0.0) throw NumericalError("power iteration: degenerate start vector");
  for (double& e : x) e /= nx;

  std::vector<double> y(op.rows());
  std::vector<double> z(op.cols());
  double sigma = 0.0;
  for (int it = 0; it < options.max_iters; ++it) {
    op.apply(x, y);
    op.apply_adjoint(y, z);
    // Rayleigh quotient of A^T A at unit x is |A x|^2.
    const double estimate = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
    const double nz = norm(z);
    if (nz == 0.0 || estimate == 0.0) {
      throw NumericalError("power iteration: operator annihilates the iterate (all-zero operator?)");
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = z[i] / nz;
    const bool converged = it > 0 && std::abs(estimate - sigma) <= options.tol * estimate;
    sigma = estimate;
    if (converged) break;
  }
  return sigma;
}

SparseImagingOperator normalize(const SparseImagingOperator& op,
                                const PowerIterationOptions& options) {
  if (std::all_of(op.values().begin(), op.values().end(), [](double v) { return v == 0.0; })) {
    throw NumericalError("normalize: operator has no nonzero entry");
  }
  const double s = estimate_largest_singular_value(op, options);
  return op.scaled(1.0 / s, s);
}

}  // namespace denois
