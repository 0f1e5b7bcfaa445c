#pragma once

// Reader and writer for the NPY array layout (format versions 1.0-3.0):
// magic "\x93NUMPY", version, little-endian header length, a Python-literal
// header dict padded to 64 bytes, then the raw C-order payload.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace codegraph::npy {

enum class Dtype { kFloat32, kFloat64, kUInt8, kBool, kInt32, kInt64 };

std::size_t dtype_size(Dtype dtype);
/// Array-protocol descriptor, e.g. "<f4" or "|u1".
std::string dtype_descr(Dtype dtype);

struct Array {
  Dtype dtype = Dtype::kFloat32;
  std::vector<std::size_t> shape;
  std::vector<std::byte> payload;

  std::size_t element_count() const;

  /// Converts any numeric payload to doubles.
  std::vector<double> as_doubles() const;
  std::vector<float> as_floats() const;
  std::vector<std::uint8_t> as_bytes() const;
};

Array make_float32(std::vector<std::size_t> shape, std::span<const float> values);
Array make_float64(std::vector<std::size_t> shape, std::span<const double> values);
Array make_uint8(std::vector<std::size_t> shape, std::span<const std::uint8_t> values);
Array make_int64(std::vector<std::size_t> shape, std::span<const std::int64_t> values);

/// Header dict exactly as numpy writes it, including the trailing padding and newline.
std::string format_header(Dtype dtype, std::span<const std::size_t> shape);

Array read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Array& array);

}  // namespace codegraph::npy
