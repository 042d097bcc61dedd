#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace denois {

enum class DType { f32, f64, u8 };

std::string to_string(DType d);
DType dtype_from_string(const std::string& name);
std::size_t dtype_size(DType d);

/// In-memory tensor file: "DNS1", u32 LE header length, JSON header
/// {dtype, shape, name, meta}, then the little-endian row-major payload.
struct Tensor {
  DType dtype = DType::f64;
  std::vector<std::size_t> shape;
  std::string name;
  nlohmann::json meta = nlohmann::json::object();
  /// Raw little-endian payload bytes.
  std::vector<std::uint8_t> payload;

  std::size_t element_count() const;
  std::string shape_str() const;

  static Tensor from_f64(std::string name, std::vector<std::size_t> shape,
                         std::span<const double> values);
  static Tensor from_f32(std::string name, std::vector<std::size_t> shape,
                         std::span<const double> values);
  static Tensor from_u8(std::string name, std::vector<std::size_t> shape,
                        std::span<const std::uint8_t> values);

  /// Values widened to double (any dtype).
  std::vector<double> to_f64() const;
  /// Throws IoError unless dtype is u8.
  std::vector<std::uint8_t> to_u8() const;

  /// Throws ShapeError naming `context` if the shape differs.
  void expect_shape(const std::vector<std::size_t>& expected, const std::string& context) const;
};

std::string encode_tensor(const Tensor& t);

/// Decodes one tensor starting at bytes[0]. If consumed is null the tensor
/// must span all of bytes; otherwise the byte count used is stored there.
/// Errors are IoError messages prefixed with context.
Tensor decode_tensor(std::string_view bytes, std::size_t* consumed = nullptr,
                     const std::string& context = "tensor");

void write_tensor_file(const std::string& path, const Tensor& t);
Tensor read_tensor_file(const std::string& path);

}  // namespace denois
