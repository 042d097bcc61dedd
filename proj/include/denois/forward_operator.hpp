#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "denois/geometry.hpp"

namespace denois {

/// Sparse ray-traced operator mapping per-pixel slowness deviation (s/m) to
/// differential transmit delays (s). Rows follow the (pair, u, v) measurement
/// layout, columns the grid layout. Stored in compressed rows together with a
/// transposed copy so both products are row-parallel and bit-reproducible
/// for any thread count.
class SparseImagingOperator {
 public:
  SparseImagingOperator() = default;
  SparseImagingOperator(ImagingGrid grid, MeasurementShape shape,
                        std::vector<std::size_t> row_ptr, std::vector<int> col_idx,
                        std::vector<double> values, double norm_scale = 0.0,
                        double physical_scale = 1.0);

  std::size_t rows() const { return shape_.size(); }
  std::size_t cols() const { return grid_.size(); }
  std::size_t nnz() const { return values_.size(); }
  const ImagingGrid& grid() const { return grid_; }
  const MeasurementShape& measurement_shape() const { return shape_; }

  /// Largest singular value removed by the last normalize(); 0 if never
  /// normalized.
  double norm_scale() const { return norm_scale_; }
  bool is_normalized() const { return norm_scale_ > 0.0; }
  /// Stored entries times physical_scale() are path lengths in meters.
  double physical_scale() const { return physical_scale_; }

  std::span<const std::size_t> row_ptr() const { return row_ptr_; }
  std::span<const int> col_idx() const { return col_idx_; }
  std::span<const double> values() const { return values_; }

  /// y = A x
  void apply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> apply(std::span<const double> x) const;
  /// x = A^T y
  void apply_adjoint(std::span<const double> y, std::span<double> x) const;
  std::vector<double> apply_adjoint(std::span<const double> y) const;

  /// Column j gathered from the transposed store as dense measurement vector.
  std::vector<double> column(std::size_t j) const;

  /// Copy with every entry multiplied by factor.
  SparseImagingOperator scaled(double factor, double norm_scale) const;

 private:
  void build_transpose();

  ImagingGrid grid_;
  MeasurementShape shape_;
  std::vector<std::size_t> row_ptr_;
  std::vector<int> col_idx_;
  std::vector<double> values_;
  std::vector<std::size_t> t_ptr_;
  std::vector<std::uint32_t> t_idx_;
  std::vector<double> t_values_;
  double norm_scale_ = 0.0;
  double physical_scale_ = 1.0;
};

/// Differential transmit-leg operator: the row of measurement (pair i, u, v)
/// is trace(center[i+1] -> p) - trace(center[i] -> p) with p the lattice
/// sample. Rows whose sample lies more than half the aperture width
/// laterally from both transmit centers are empty.
SparseImagingOperator assemble_operator(const Geometry& geometry);

/// Same construction on the twice finer grid (pixel size halved), with the
/// same measurement rows.
SparseImagingOperator assemble_highres_operator(const Geometry& geometry);

/// Operator on an explicit grid, sharing the geometry's transducer, transmits
/// and lattice.
SparseImagingOperator assemble_operator_on_grid(const Geometry& geometry,
                                                const ImagingGrid& grid);

struct PowerIterationOptions {
  double tol = 1e-10;  // relative change of the singular value estimate
  int max_iters = 500;
  std::uint64_t seed = 42;
};

/// Largest singular value by power iteration on A^T A.
double estimate_largest_singular_value(const SparseImagingOperator& op,
                                       const PowerIterationOptions& options = {});

/// Divides all entries by the estimated largest singular value s and records
/// s as norm_scale. Throws NumericalError for an all-zero operator.
SparseImagingOperator normalize(const SparseImagingOperator& op,
                                const PowerIterationOptions& options = {});

}  // namespace denois
