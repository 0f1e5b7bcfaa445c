#include "codegraph/npy.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <numeric>
#include <regex>
#include <sstream>

#include "codegraph/error.hpp"

namespace codegraph::npy {
namespace {

constexpr std::array<char, 6> kMagic = {'\x93', 'N', 'U', 'M', 'P', 'Y'};
constexpr std::size_t kAlign = 64;

Dtype parse_descr(const std::string& descr, const std::filesystem::path& path) {
  if (descr.size() < 3) throw SchemaError("bad dtype '" + descr + "' in " + path.string());
  const char order = descr[0];
  const std::string kind = descr.substr(1);
  if (order == '>') throw DataError("big-endian array not supported: " + path.string());
  if (order != '<' && order != '|' && order != '=') throw SchemaError("bad byte order in " + path.string());
  if (kind == "f4") return Dtype::kFloat32;
  if (kind == "f8") return Dtype::kFloat64;
  if (kind == "u1") return Dtype::kUInt8;
  if (kind == "b1") return Dtype::kBool;
  if (kind == "i4") return Dtype::kInt32;
  if (kind == "i8") return Dtype::kInt64;
  throw SchemaError("unsupported dtype '" + descr + "' in " + path.string());
}

template <typename T>
T load_le(const std::byte* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return value;
}

template <typename Out>
std::vector<Out> convert(const Array& a) {
  const std::size_t n = a.element_count();
  std::vector<Out> out(n);
  const std::byte* p = a.payload.data();
  for (std::size_t i = 0; i < n; ++i) {
    switch (a.dtype) {
      case Dtype::kFloat32: out[i] = static_cast<Out>(load_le<float>(p + 4 * i)); break;
      case Dtype::kFloat64: out[i] = static_cast<Out>(load_le<double>(p + 8 * i)); break;
      case Dtype::kUInt8:
      case Dtype::kBool: out[i] = static_cast<Out>(std::to_integer<std::uint8_t>(p[i])); break;
      case Dtype::kInt32: out[i] = static_cast<Out>(load_le<std::int32_t>(p + 4 * i)); break;
      case Dtype::kInt64: out[i] = static_cast<Out>(load_le<std::int64_t>(p + 8 * i)); break;
    }
  }
  return out;
}

template <typename T>
Array make(Dtype dtype, std::vector<std::size_t> shape, std::span<const T> values) {
  Array a;
  a.dtype = dtype;
  a.shape = std::move(shape);
  if (a.element_count() != values.size()) throw DomainError("shape does not match value count");
  a.payload.resize(values.size() * sizeof(T));
  if (!values.empty()) std::memcpy(a.payload.data(), values.data(), a.payload.size());
  return a;
}

}  // namespace

std::size_t dtype_size(Dtype dtype) {
  switch (dtype) {
    case Dtype::kFloat32: return 4;
    case Dtype::kFloat64: return 8;
    case Dtype::kUInt8: return 1;
    case Dtype::kBool: return 1;
    case Dtype::kInt32: return 4;
    case Dtype::kInt64: return 8;
  }
  return 0;
}

std::string dtype_descr(Dtype dtype) {
  switch (dtype) {
    case Dtype::kFloat32: return "<f4";
    case Dtype::kFloat64: return "<f8";
    case Dtype::kUInt8: return "|u1";
    case Dtype::kBool: return "|b1";
    case Dtype::kInt32: return "<i4";
    case Dtype::kInt64: return "<i8";
  }
  return "";
}

std::size_t Array::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::vector<double> Array::as_doubles() const { return convert<double>(*this); }
std::vector<float> Array::as_floats() const { return convert<float>(*this); }
std::vector<std::uint8_t> Array::as_bytes() const { return convert<std::uint8_t>(*this); }

Array make_float32(std::vector<std::size_t> shape, std::span<const float> values) {
  return make(Dtype::kFloat32, std::move(shape), values);
}
Array make_float64(std::vector<std::size_t> shape, std::span<const double> values) {
  return make(Dtype::kFloat64, std::move(shape), values);
}
Array make_uint8(std::vector<std::size_t> shape, std::span<const std::uint8_t> values) {
  return make(Dtype::kUInt8, std::move(shape), values);
}
Array make_int64(std::vector<std::size_t> shape, std::span<const std::int64_t> values) {
  return make(Dtype::kInt64, std::move(shape), values);
}

std::string format_header(Dtype dtype, std::span<const std::size_t> shape) {
  std::ostringstream dict;
  dict << "{'descr': '" << dtype_descr(dtype) << "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) dict << ", ";
    dict << shape[i];
  }
  if (shape.size() == 1) dict << ",";
  dict << "), }";
  std::string header = dict.str();
  // magic(6) + version(2) + length(2) + header + '\n' must be a multiple of 64
  const std::size_t unpadded = kMagic.size() + 4 + header.size() + 1;
  const std::size_t padding = (kAlign - unpadded % kAlign) % kAlign;
  header.append(padding, ' ');
  header.push_back('\n');
  return header;
}

Array read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open array file: " + path.string());
  std::array<char, 8> lead{};
  in.read(lead.data(), lead.size());
  if (!in || !std::equal(kMagic.begin(), kMagic.end(), lead.begin())) {
    throw SchemaError("not an NPY file: " + path.string());
  }
  const auto major = static_cast<unsigned char>(lead[6]);
  std::size_t header_len = 0;
  if (major == 1) {
    std::array<unsigned char, 2> len{};
    in.read(reinterpret_cast<char*>(len.data()), 2);
    header_len = len[0] | (static_cast<std::size_t>(len[1]) << 8);
  } else if (major == 2 || major == 3) {
    std::array<unsigned char, 4> len{};
    in.read(reinterpret_cast<char*>(len.data()), 4);
    header_len = len[0] | (static_cast<std::size_t>(len[1]) << 8) | (static_cast<std::size_t>(len[2]) << 16) |
                 (static_cast<std::size_t>(len[3]) << 24);
  } else {
    throw SchemaError("unsupported NPY version in " + path.string());
  }
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw SchemaError("truncated NPY header: " + path.string());

  static const std::regex descr_re(R"('descr'\s*:\s*'([^']+)')");
  static const std::regex fortran_re(R"('fortran_order'\s*:\s*(True|False))");
  static const std::regex shape_re(R"('shape'\s*:\s*\(([^)]*)\))");
  std::smatch m;
  Array a;
  if (!std::regex_search(header, m, descr_re)) throw SchemaError("NPY header lacks descr: " + path.string());
  a.dtype = parse_descr(m[1].str(), path);
  if (!std::regex_search(header, m, fortran_re)) throw SchemaError("NPY header lacks fortran_order: " + path.string());
  if (m[1].str() == "True") throw DataError("Fortran-ordered array not supported: " + path.string());
  if (!std::regex_search(header, m, shape_re)) throw SchemaError("NPY header lacks shape: " + path.string());
  std::stringstream dims(m[1].str());
  std::string item;
  while (std::getline(dims, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    a.shape.push_back(static_cast<std::size_t>(std::stoull(item.substr(first))));
  }

  const std::size_t bytes = a.element_count() * dtype_size(a.dtype);
  a.payload.resize(bytes);
  in.read(reinterpret_cast<char*>(a.payload.data()), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) {
    throw DataError("payload size does not match header shape: " + path.string());
  }
  in.peek();
  if (!in.eof()) throw DataError("trailing bytes after payload: " + path.string());
  return a;
}

void write(const std::filesystem::path& path, const Array& array) {
  if (array.payload.size() != array.element_count() * dtype_size(array.dtype)) {
    throw DataError("payload size does not match shape for " + path.string());
  }
  const std::string header = format_header(array.dtype, array.shape);
  if (header.size() > 0xFFFF) throw SchemaError("NPY header too long");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write array file: " + path.string());
  out.write(kMagic.data(), kMagic.size());
  const char version[2] = {1, 0};
  out.write(version, 2);
  const char len[2] = {static_cast<char>(header.size() & 0xFF), static_cast<char>((header.size() >> 8) & 0xFF)};
  out.write(len, 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(array.payload.data()), static_cast<std::streamsize>(array.payload.size()));
  if (!out) throw Error("failed writing array file: " + path.string());
}

}  // namespace codegraph::npy
