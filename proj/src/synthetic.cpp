#include "codegraph/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include "codegraph/error.hpp"
#include "codegraph/npy.hpp"
#include "codegraph/rng.hpp"

namespace codegraph {

namespace {

void normalize(std::span<float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  s = std::sqrt(s);
  if (s > 0.0)
    for (float& x : v) x = static_cast<float>(x / s);
}

}  // namespace

SyntheticDataset make_synthetic(const SyntheticConfig& config) {
  if (config.collections < 3) throw DomainError("synthetic data needs at least 3 collections");
  if (config.clones >= config.collections) throw DomainError("clones must be fewer than collections");
  if (config.block_rows == 0 || config.block_cols == 0 || config.block_rows > config.grid ||
      config.block_cols > config.grid)
    throw DomainError("anomaly block does not fit the grid");
  if (config.dim < 2 || config.layers.empty()) throw DomainError("invalid synthetic dimensions");

  SyntheticDataset data;
  data.config = config;
  const std::size_t b = config.collections;
  const std::size_t g = config.grid;
  const std::size_t n = g * g;
  const std::size_t d = config.dim;
  CounterRng rng(config.seed, 0x5EEDULL);

  std::vector<std::array<double, 2>> latent(b);
  for (auto& u : latent) {
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    u = {std::cos(theta), std::sin(theta)};
  }

  std::vector<int> order(b);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order.begin(), order.end(), rng);
  data.planted.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(config.clones));
  std::sort(data.planted.begin(), data.planted.end());
  std::vector<std::uint8_t> is_clone(b, 0);
  for (int c : data.planted) is_clone[c] = 1;

  const std::size_t start = rng.below(g - config.block_rows + 1);
  const std::size_t start_x = rng.below(g - config.block_cols + 1);
  std::vector<std::uint8_t> in_block(n, 0);
  for (std::size_t y = start; y < start + config.block_rows; ++y)
    for (std::size_t x = start_x; x < start_x + config.block_cols; ++x) {
      in_block[y * g + x] = 1;
      data.anomalous_positions.push_back(static_cast<int>(y * g + x));
    }
  std::sort(data.anomalous_positions.begin(), data.anomalous_positions.end());
  if (config.clones == 0) data.anomalous_positions.clear();

  data.labels.assign(b, std::vector<std::uint8_t>(n, 0));
  for (int c : data.planted)
    for (int p : data.anomalous_positions) data.labels[c][p] = 1;

  const double noise = config.noise / std::sqrt(static_cast<double>(config.noise_rank == 0 ? config.dim : config.noise_rank));
  const double clone_noise = config.clone_noise / std::sqrt(static_cast<double>(d));
  const double amp = std::sqrt(2.0 / static_cast<double>(d));
  data.layers.layer_ids = config.layers;
  for (std::size_t l = 0; l < config.layers.size(); ++l) {
    CounterRng lrng(config.seed, 0x1A7E0ULL + l);
    std::vector<std::array<double, 4>> w(d);
    std::vector<double> phase(d);
    for (std::size_t k = 0; k < d; ++k) {
      for (auto& x : w[k]) x = config.bandwidth * lrng.normal();
      phase[k] = lrng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    auto manifold = [&](std::size_t p, const std::array<double, 2>& u, std::span<float> row) {
      const std::array<double, 4> v{static_cast<double>(p / g) / g, static_cast<double>(p % g) / g,
                                    config.latent_scale * u[0], config.latent_scale * u[1]};
      for (std::size_t k = 0; k < d; ++k) {
        const double arg = w[k][0] * v[0] + w[k][1] * v[1] + w[k][2] * v[2] + w[k][3] * v[3] + phase[k];
        row[k] = static_cast<float>(amp * std::cos(arg));
      }
    };
    // Normal variation lives in a noise_rank-dimensional subspace per layer.
    const std::size_t rank = config.noise_rank == 0 ? d : config.noise_rank;
    std::vector<std::vector<double>> basis(rank, std::vector<double>(d));
    for (auto& bvec : basis) {
      double norm = 0.0;
      for (auto& x : bvec) {
        x = lrng.normal();
        norm += x * x;
      }
      for (auto& x : bvec) x /= std::sqrt(norm);
    }
    const double push = config.anomaly_strength / std::sqrt(static_cast<double>(d));
    std::vector<std::vector<float>> anomaly(n);
    for (int p : data.anomalous_positions) {
      anomaly[p].resize(d);
      manifold(static_cast<std::size_t>(p), {0.0, 0.0}, anomaly[p]);
      for (auto& x : anomaly[p]) x = static_cast<float>(x + push * lrng.normal());
      normalize(anomaly[p]);
    }

    std::vector<FeatureTensor> base(b);
    for (std::size_t c = 0; c < b; ++c) {
      FeatureTensor& t = base[c];
      t.collection_id = static_cast<int>(c);
      t.layer_id = config.layers[l];
      t.grid_shape = {g, g};
      t.tokens = Matrix(n, d);
      t.zero_rows.assign(n, 0);
      CounterRng trng(config.seed, (0x70CE0000ULL + l) * 4096 + c);
      for (std::size_t p = 0; p < n; ++p) {
        auto row = t.tokens.row(p);
        if (is_clone[c] && in_block[p]) {
          for (std::size_t k = 0; k < d; ++k) row[k] = static_cast<float>(anomaly[p][k] + clone_noise * trng.normal());
        } else {
          manifold(p, latent[c], row);
          for (const auto& bvec : basis) {
            const double xi = noise * trng.normal();
            for (std::size_t k = 0; k < d; ++k) row[k] = static_cast<float>(row[k] + xi * bvec[k]);
          }
        }
        normalize(row);
      }
    }
    data.layers.bases.push_back(std::move(base));
  }

  CounterRng crng(config.seed, 0xC15ULL);
  std::vector<std::array<double, 2>> cls_dir(d);
  for (auto& x : cls_dir) x = {crng.normal(), crng.normal()};
  data.cls.assign(b, std::vector<float>(d));
  for (std::size_t c = 0; c < b; ++c) {
    for (std::size_t k = 0; k < d; ++k)
      data.cls[c][k] = static_cast<float>(std::cos(cls_dir[k][0] * latent[c][0] + cls_dir[k][1] * latent[c][1]) +
                                          0.05 * crng.normal());
    normalize(data.cls[c]);
  }
  return data;
}

std::filesystem::path write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "features");
  fs::create_directories(dir / "masks");
  const auto& cfg = data.config;
  const std::size_t g = cfg.grid;
  const std::size_t px = g * cfg.patch;

  DatasetManifest m;
  m.modality = Modality::k2D;
  m.layers = cfg.layers;
  m.root = dir;
  for (std::size_t c = 0; c < data.layers.collections(); ++c) {
    CollectionEntry e;
    e.id = static_cast<int>(c);
    e.name = "synthetic_" + std::to_string(c);
    e.shape = {px, px};
    for (std::size_t l = 0; l < cfg.layers.size(); ++l) {
      const fs::path rel = fs::path("features") / (e.name + "_layer" + std::to_string(cfg.layers[l]) + ".npy");
      write_features(dir / rel, data.layers.bases[l][c]);
      e.features[cfg.layers[l]] = rel;
    }
    std::vector<std::uint8_t> mask(px * px, 0);
    for (std::size_t y = 0; y < px; ++y)
      for (std::size_t x = 0; x < px; ++x) mask[y * px + x] = data.labels[c][(y / cfg.patch) * g + x / cfg.patch];
    const fs::path mask_rel = fs::path("masks") / (e.name + ".npy");
    npy::write(dir / mask_rel, npy::make_uint8({px, px}, mask));
    e.mask = mask_rel;
    const fs::path cls_rel = fs::path("features") / (e.name + "_cls.npy");
    npy::write(dir / cls_rel, npy::make_float32({cfg.dim}, data.cls[c]));
    e.cls = cls_rel;
    m.collections.push_back(std::move(e));
  }
  const fs::path manifest = dir / "manifest.json";
  write_manifest(manifest, m);
  return manifest;
}

}  // namespace codegraph
