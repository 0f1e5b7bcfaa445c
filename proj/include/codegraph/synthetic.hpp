#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "codegraph/dataset.hpp"
#include "codegraph/scoring.hpp"

namespace codegraph {

/// Collections of tokens on a smooth low-dimensional manifold: the token at
/// grid position p of collection c is a random Fourier map of (p, s * u_c)
/// plus noise confined to a noise_rank-dimensional subspace, with u_c a
/// per-collection point on the unit circle and s = latent_scale. Low-rank
/// noise keeps the mutual similarity vectors heavy-tailed near zero. Planted
/// clones replace a rectangular block of positions, at the same place in
/// every clone, by one shared anomalous token per position plus small noise.
/// The anomalous token is the manifold token at that position pushed off the
/// manifold by a random direction of norm anomaly_strength.
struct SyntheticConfig {
  std::size_t collections = 40;
  std::size_t grid = 8;  // grid x grid tokens
  std::size_t dim = 32;
  std::vector<int> layers{6, 12, 18, 24};
  std::size_t clones = 8;  // 0 gives clean data
  std::size_t block_rows = 3;
  std::size_t block_cols = 4;
  double bandwidth = 2.0;      // frequency scale of the Fourier map
  double latent_scale = 0.0;   // weight of u_c relative to position
  double noise = 0.5;          // per-token noise norm (relative to unit signal)
  std::size_t noise_rank = 4;  // 0 means isotropic
  double clone_noise = 0.02;
  double anomaly_strength = 0.8;
  std::size_t patch = 4;       // pixels per token side for masks
  std::uint64_t seed = 0;
};

struct SyntheticDataset {
  SyntheticConfig config;
  LayerBases layers;
  /// Token-level ground truth per collection.
  std::vector<std::vector<std::uint8_t>> labels;
  std::vector<int> planted;                 // clone collections, ascending
  std::vector<int> anomalous_positions;     // block positions, ascending
  std::vector<std::vector<float>> cls;      // unit CLS tokens
};

SyntheticDataset make_synthetic(const SyntheticConfig& config);

/// Writes features, token-level masks upsampled to pixel resolution, CLS
/// tokens and a manifest into dir; returns the manifest path.
std::filesystem::path write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir);

}  // namespace codegraph
