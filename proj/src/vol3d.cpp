#include "codegraph/vol3d.hpp"

#include <cmath>

#include "codegraph/error.hpp"
#include "codegraph/npy.hpp"
#include "codegraph/rng.hpp"

namespace codegraph {

Axis parse_axis(const std::string& name) {
  if (name == "axial") return Axis::kAxial;
  if (name == "coronal") return Axis::kCoronal;
  if (name == "sagittal") return Axis::kSagittal;
  throw DomainError("unknown axis: " + name);
}

VolumeTensor read_stack(const std::filesystem::path& path) {
  const auto arr = npy::read(path);
  if (arr.shape.size() != 4) throw SchemaError("slice stack must have shape (H, N, N, D): " + path.string());
  VolumeTensor t({arr.shape[0], arr.shape[1], arr.shape[2]}, arr.shape[3]);
  t.data = arr.as_floats();
  for (float v : t.data)
    if (!std::isfinite(v)) throw DataError("non-finite value in " + path.string());
  return t;
}

VolumeTensor pool_axis(const VolumeTensor& stack, std::size_t p) {
  if (p == 0 || stack.shape[0] % p != 0) throw DomainError("slice count is not divisible by the pool size");
  VolumeTensor out({stack.shape[0] / p, stack.shape[1], stack.shape[2]}, stack.dim);
  std::vector<double> acc(stack.dim);
  for (std::size_t g = 0; g < out.shape[0]; ++g)
    for (std::size_t y = 0; y < out.shape[1]; ++y)
      for (std::size_t z = 0; z < out.shape[2]; ++z) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t h = g * p; h < (g + 1) * p; ++h) {
          const auto f = stack.at(h, y, z);
          for (std::size_t k = 0; k < stack.dim; ++k) acc[k] += f[k];
        }
        double norm = 0.0;
        for (auto& v : acc) {
          v /= static_cast<double>(p);
          norm += v * v;
        }
        norm = std::sqrt(norm);
        auto dst = out.at(g, y, z);
        for (std::size_t k = 0; k < stack.dim; ++k) dst[k] = norm > 0.0 ? static_cast<float>(acc[k] / norm) : 0.0f;
      }
  return out;
}

VolumeTensor permute_to_canonical(const VolumeTensor& pooled, Axis axis) {
  if (axis == Axis::kAxial) return pooled;
  const auto& s = pooled.shape;
  const std::array<std::size_t, 3> shape =
      axis == Axis::kCoronal ? std::array{s[1], s[0], s[2]} : std::array{s[2], s[1], s[0]};
  VolumeTensor out(shape, pooled.dim);
  for (std::size_t i = 0; i < s[0]; ++i)
    for (std::size_t j = 0; j < s[1]; ++j)
      for (std::size_t k = 0; k < s[2]; ++k) {
        const auto src = pooled.at(i, j, k);
        auto dst = axis == Axis::kCoronal ? out.at(j, i, k) : out.at(k, j, i);
        std::copy(src.begin(), src.end(), dst.begin());
      }
  return out;
}

RandomProjection RandomProjection::make(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed) {
  if (out_dim == 0 || in_dim == 0) throw DomainError("projection dimensions must be positive");
  RandomProjection r;
  r.in_dim = in_dim;
  r.out_dim = out_dim;
  r.seed = seed;
  r.matrix.resize(in_dim * out_dim);
  CounterRng rng(seed, 0x3D0ULL);
  const double sd = 1.0 / std::sqrt(static_cast<double>(out_dim));
  for (auto& v : r.matrix) v = sd * rng.normal();
  return r;
}

std::vector<float> RandomProjection::apply(std::span<const float> z) const {
  if (z.size() != in_dim) throw DomainError("token dimension does not match the projection");
  std::vector<double> acc(out_dim, 0.0);
  for (std::size_t i = 0; i < in_dim; ++i) {
    const double zi = z[i];
    if (zi == 0.0) continue;
    const double* row = matrix.data() + i * out_dim;
    for (std::size_t k = 0; k < out_dim; ++k) acc[k] += zi * row[k];
  }
  return {acc.begin(), acc.end()};
}

VolumeTensor random_project(const VolumeTensor& tokens, const RandomProjection& projection) {
  VolumeTensor out(tokens.shape, projection.out_dim);
  for (std::size_t c = 0; c < tokens.cells(); ++c) {
    const auto p = projection.apply({tokens.data.data() + c * tokens.dim, tokens.dim});
    std::copy(p.begin(), p.end(), out.data.begin() + static_cast<std::ptrdiff_t>(c * projection.out_dim));
  }
  return out;
}

FeatureTensor fuse_axes(const VolumeTensor& axial, const VolumeTensor& coronal, const VolumeTensor& sagittal,
                        bool normalize, int collection_id, int layer_id) {
  if (axial.shape != coronal.shape || axial.shape != sagittal.shape || axial.dim != coronal.dim ||
      axial.dim != sagittal.dim)
    throw DomainError("axis tensors differ in shape");
  FeatureTensor out;
  out.collection_id = collection_id;
  out.layer_id = layer_id;
  out.grid_shape = {axial.shape[0], axial.shape[1], axial.shape[2]};
  const std::size_t k = axial.dim;
  out.tokens = Matrix(axial.cells(), 3 * k);
  out.zero_rows.assign(axial.cells(), 0);
  const VolumeTensor* parts[3] = {&axial, &coronal, &sagittal};
  for (std::size_t c = 0; c < axial.cells(); ++c) {
    auto row = out.tokens.row(c);
    for (std::size_t a = 0; a < 3; ++a)
      std::copy_n(parts[a]->data.begin() + static_cast<std::ptrdiff_t>(c * k), k,
                  row.begin() + static_cast<std::ptrdiff_t>(a * k));
  }
  if (normalize) normalize_rows(out);
  return out;
}

std::vector<double> void_fraction(std::span<const std::uint8_t> mask, std::array<std::size_t, 3> shape, std::size_t p) {
  if (mask.size() != shape[0] * shape[1] * shape[2]) throw DomainError("mask does not match shape");
  if (p == 0 || shape[0] % p || shape[1] % p || shape[2] % p) throw DomainError("volume is not divisible by the patch size");
  const std::array<std::size_t, 3> g{shape[0] / p, shape[1] / p, shape[2] / p};
  std::vector<double> zeros(g[0] * g[1] * g[2], 0.0);
  for (std::size_t x = 0; x < shape[0]; ++x)
    for (std::size_t y = 0; y < shape[1]; ++y)
      for (std::size_t z = 0; z < shape[2]; ++z)
        if (!mask[(x * shape[1] + y) * shape[2] + z]) zeros[((x / p) * g[1] + y / p) * g[2] + z / p] += 1.0;
  const double cube = static_cast<double>(p * p * p);
  for (auto& v : zeros) v /= cube;
  return zeros;
}

}  // namespace codegraph
