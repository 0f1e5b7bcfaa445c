#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "codegraph/dataset.hpp"

namespace codegraph {

enum class Axis { kAxial, kCoronal, kSagittal };

Axis parse_axis(const std::string& name);

/// Three-index grid of D-dimensional tokens, C-order.
struct VolumeTensor {
  std::array<std::size_t, 3> shape{0, 0, 0};
  std::size_t dim = 0;
  std::vector<float> data;

  VolumeTensor() = default;
  VolumeTensor(std::array<std::size_t, 3> s, std::size_t d) : shape(s), dim(d), data(s[0] * s[1] * s[2] * d, 0.0f) {}
  std::size_t cells() const { return shape[0] * shape[1] * shape[2]; }
  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return (i * shape[1] + j) * shape[2] + k; }
  std::span<float> at(std::size_t i, std::size_t j, std::size_t k) { return {data.data() + index(i, j, k) * dim, dim}; }
  std::span<const float> at(std::size_t i, std::size_t j, std::size_t k) const {
    return {data.data() + index(i, j, k) * dim, dim};
  }
};

/// Reads an (H, N, N, D) float slice stack.
VolumeTensor read_stack(const std::filesystem::path& path);

/// Averages non-overlapping groups of p consecutive slices, then L2-normalises
/// each token (zero tokens stay zero). Requires H divisible by p.
VolumeTensor pool_axis(const VolumeTensor& stack, std::size_t p);

/// Reorders a pooled stack to (x, y, z). Axial stacks are already canonical;
/// coronal stacks are indexed (y, x, z) and sagittal stacks (z, y, x). Each
/// permutation is its own inverse.
VolumeTensor permute_to_canonical(const VolumeTensor& pooled, Axis axis);

/// D x k matrix with i.i.d. N(0, 1/k) entries drawn from the seeded counter generator.
struct RandomProjection {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::uint64_t seed = 0;
  std::vector<double> matrix;  // row-major D x k

  static RandomProjection make(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed);
  std::vector<float> apply(std::span<const float> z) const;
};

VolumeTensor random_project(const VolumeTensor& tokens, const RandomProjection& projection);

/// Per-position concatenation of the three canonical tensors, optionally
/// L2-normalised after fusion.
FeatureTensor fuse_axes(const VolumeTensor& axial, const VolumeTensor& coronal, const VolumeTensor& sagittal,
                        bool normalize = true, int collection_id = 0, int layer_id = 0);

/// Fraction of zero voxels in each p-sided cube of a voxel mask of the given shape.
std::vector<double> void_fraction(std::span<const std::uint8_t> mask, std::array<std::size_t, 3> shape, std::size_t p);

}  // namespace codegraph
