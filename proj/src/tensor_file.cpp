#include "denois/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "denois/error.hpp"

namespace denois {

static_assert(std::endian::native == std::endian::little,
              "tensor payloads are copied as host-order bytes");

namespace {

constexpr char kMagic[4] = {'D', 'N', 'S', '1'};

template <class T>
void append_values(std::vector<std::uint8_t>& out, std::span<const double> values) {
  out.resize(values.size() * sizeof(T));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const T v = static_cast<T>(values[i]);
    std::memcpy(out.data() + i * sizeof(T), &v, sizeof(T));
  }
}

std::uint32_t read_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

}  // namespace

std::string to_string(DType d) {
  switch (d) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::u8: return "u8";
  }
  return "?";
}

DType dtype_from_string(const std::string& name) {
  if (name == "f32") return DType::f32;
  if (name == "f64") return DType::f64;
  if (name == "u8") return DType::u8;
  throw IoError("unknown dtype '" + name + "'");
}

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u8: return 1;
  }
  return 0;
}

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor Tensor::from_f64(std::string name, std::vector<std::size_t> shape,
                        std::span<const double> values) {
  Tensor t{DType::f64, std::move(shape), std::move(name), nlohmann::json::object(), {}};
  if (t.element_count() != values.size()) throw ShapeError("tensor '" + t.name + "': size");
  append_values<double>(t.payload, values);
  return t;
}

Tensor Tensor::from_f32(std::string name, std::vector<std::size_t> shape,
                        std::span<const double> values) {
  Tensor t{DType::f32, std::move(shape), std::move(name), nlohmann::json::object(), {}};
  if (t.element_count() != values.size()) throw ShapeError("tensor '" + t.name + "': size");
  append_values<float>(t.payload, values);
  return t;
}

Tensor Tensor::from_u8(std::string name, std::vector<std::size_t> shape,
                       std::span<const std::uint8_t> values) {
  Tensor t{DType::u8, std::move(shape), std::move(name), nlohmann::json::object(), {}};
  if (t.element_count() != values.size()) throw ShapeError("tensor '" + t.name + "': size");
  t.payload.assign(values.begin(), values.end());
  return t;
}

std::vector<double> Tensor::to_f64() const {
  const std::size_t n = element_count();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (dtype) {
      case DType::f64: std::memcpy(&out[i], payload.data() + 8 * i, 8); break;
      case DType::f32: {
        float f;
        std::memcpy(&f, payload.data() + 4 * i, 4);
        out[i] = f;
        break;
      }
      case DType::u8: out[i] = payload[i]; break;
    }
  }
  return out;
}

std::vector<std::uint8_t> Tensor::to_u8() const {
  if (dtype != DType::u8) throw IoError("tensor '" + name + "' is " + to_string(dtype) + ", not u8");
  return payload;
}

void Tensor::expect_shape(const std::vector<std::size_t>& expected,
                          const std::string& context) const {
  if (shape == expected) return;
  Tensor e;
  e.shape = expected;
  throw ShapeError(context + ": tensor '" + name + "' has shape " + shape_str() + ", expected " +
                   e.shape_str());
}

std::string encode_tensor(const Tensor& t) {
  if (t.payload.size() != t.element_count() * dtype_size(t.dtype)) {
    throw IoError("tensor '" + t.name + "': payload length does not match shape");
  }
  nlohmann::json header = {{"dtype", to_string(t.dtype)},
                           {"shape", t.shape},
                           {"name", t.name},
                           {"meta", t.meta.is_null() ? nlohmann::json::object() : t.meta}};
  const std::string h = header.dump();
  std::string out(kMagic, 4);
  const auto len = static_cast<std::uint32_t>(h.size());
  out.append(reinterpret_cast<const char*>(&len), 4);
  out += h;
  out.append(reinterpret_cast<const char*>(t.payload.data()), t.payload.size());
  return out;
}

Tensor decode_tensor(std::string_view bytes, std::size_t* consumed, const std::string& context) {
  if (bytes.size() < 8) throw IoError(context + ": truncated tensor (no header)");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError(context + ": bad magic, not a DNS1 tensor");
  const std::uint32_t hlen = read_u32(bytes.data() + 4);
  if (bytes.size() - 8 < hlen) throw IoError(context + ": truncated tensor header");
  Tensor t;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(8, hlen));
    t.dtype = dtype_from_string(header.at("dtype").get<std::string>());
    t.shape = header.at("shape").get<std::vector<std::size_t>>();
    t.name = header.at("name").get<std::string>();
    t.meta = header.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(context + ": malformed tensor header: " + e.what());
  } catch (const IoError& e) {
    throw IoError(context + ": " + e.what());
  }
  const std::size_t plen = t.element_count() * dtype_size(t.dtype);
  const std::size_t total = 8 + static_cast<std::size_t>(hlen) + plen;
  if (bytes.size() < total) {
    throw IoError(context + ": payload holds " + std::to_string(bytes.size() - 8 - hlen) +
                  " bytes, shape " + t.shape_str() + " needs " + std::to_string(plen));
  }
  if (consumed == nullptr && bytes.size() != total) {
    throw IoError(context + ": " + std::to_string(bytes.size() - total) +
                  " trailing bytes after payload");
  }
  const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data()) + 8 + hlen;
  t.payload.assign(p, p + plen);
  if (consumed != nullptr) *consumed = total;
  return t;
}

void write_tensor_file(const std::string& path, const Tensor& t) {
  const std::string bytes = encode_tensor(t);
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

Tensor read_tensor_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_tensor(ss.str(), nullptr, path);
}

}  // namespace denois
