#include "codegraph/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "codegraph/error.hpp"
#include "codegraph/npy.hpp"
#include "codegraph/parallel.hpp"

namespace codegraph {

namespace {

std::vector<std::size_t> strides_of(std::span<const std::size_t> shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t a = shape.size(); a-- > 1;) strides[a - 1] = strides[a] * shape[a];
  return strides;
}

}  // namespace

FeatureTensor lnamd_pool(const FeatureTensor& tensor, int r) {
  if (r < 1 || r % 2 == 0) throw DomainError("receptive field must be odd and >= 1");
  if (r == 1) return tensor;
  const auto& shape = tensor.grid_shape;
  if (grid_size(shape) != tensor.size()) throw DomainError("grid shape does not match token count");
  const std::size_t n = tensor.size();
  const std::size_t d = tensor.dim();
  const auto strides = strides_of(shape);
  const int half = r / 2;

  std::vector<double> cur(tensor.tokens.data.begin(), tensor.tokens.data.end());
  std::vector<double> next(cur.size());
  for (std::size_t axis = 0; axis < shape.size(); ++axis) {
    const auto extent = static_cast<long>(shape[axis]);
    const std::size_t stride = strides[axis];
    for (std::size_t pos = 0; pos < n; ++pos) {
      const long coord = static_cast<long>((pos / stride) % shape[axis]);
      double* out = next.data() + pos * d;
      std::fill(out, out + d, 0.0);
      for (long o = -half; o <= half; ++o) {
        const long c = std::clamp(coord + o, 0L, extent - 1);
        const std::size_t src = pos + static_cast<std::size_t>(c - coord) * stride;
        const double* in = cur.data() + src * d;
        for (std::size_t k = 0; k < d; ++k) out[k] += in[k];
      }
      for (std::size_t k = 0; k < d; ++k) out[k] /= r;
    }
    std::swap(cur, next);
  }
  FeatureTensor out = tensor;
  for (std::size_t i = 0; i < cur.size(); ++i) out.tokens.data[i] = static_cast<float>(cur[i]);
  return out;
}

double final_score(const ElementRef& element, const LayerBases& layers, const ScaleOptions& options,
                   const ExclusionSet& exclusions, const ScreenSets* screen) {
  if (layers.bases.empty() || options.receptive_fields.empty()) throw DomainError("no scales to score");
  double sum = 0.0;
  for (int r : options.receptive_fields) {
    for (std::size_t l = 0; l < layers.bases.size(); ++l) {
      std::vector<FeatureTensor> pooled;
      pooled.reserve(layers.bases[l].size());
      for (const auto& t : layers.bases[l]) pooled.push_back(lnamd_pool(t, r));
      ElementRef e = element;
      e.layer = layers.layer_ids[l];
      e.receptive_field = r;
      const auto* allowed = screen ? &(*screen)[element.collection] : nullptr;
      sum += topk_score(mutual_similarity_vector(e, pooled, exclusions, allowed), options.k_fraction);
    }
  }
  return sum / static_cast<double>(layers.bases.size() * options.receptive_fields.size());
}

ScoreStack ScoreStack::build(std::shared_ptr<const LayerBases> layers, std::vector<int> receptive_fields,
                             const ScreenSets* screen, unsigned threads) {
  if (!layers || layers->bases.empty()) throw DomainError("no layers to score");
  if (receptive_fields.empty()) throw DomainError("no receptive fields");
  if (layers->layer_ids.size() != layers->bases.size()) throw DomainError("layer ids do not match bases");
  ScoreStack stack;
  stack.layers_ = std::move(layers);
  stack.receptive_fields_ = std::move(receptive_fields);
  for (int r : stack.receptive_fields_) {
    for (const auto& base : stack.layers_->bases) {
      if (r == 1) {
        stack.tables_.push_back(NeighborTable::build(base, {}, screen, threads));
        continue;
      }
      std::vector<FeatureTensor> pooled;
      pooled.reserve(base.size());
      for (const auto& t : base) pooled.push_back(lnamd_pool(t, r));
      stack.tables_.push_back(NeighborTable::build(pooled, {}, screen, threads));
    }
  }
  return stack;
}

ScoreStack ScoreStack::masked(const ExclusionSet& exclusions, unsigned threads) const {
  ScoreStack out;
  out.layers_ = layers_;
  out.receptive_fields_ = receptive_fields_;
  out.tables_.reserve(tables_.size());
  for (std::size_t s = 0; s < tables_.size(); ++s) {
    const auto& base = layers_->bases[s % layers_->bases.size()];
    const int r = receptive_field_of(s);
    if (r == 1) {
      out.tables_.push_back(tables_[s].masked(base, exclusions, threads));
      continue;
    }
    std::vector<FeatureTensor> pooled;
    pooled.reserve(base.size());
    for (const auto& t : base) pooled.push_back(lnamd_pool(t, r));
    out.tables_.push_back(tables_[s].masked(pooled, exclusions, threads));
  }
  return out;
}

int ScoreStack::layer_of(std::size_t scale) const { return layers_->layer_ids[scale % layers_->bases.size()]; }

int ScoreStack::receptive_field_of(std::size_t scale) const {
  return receptive_fields_[scale / layers_->bases.size()];
}

std::span<const NeighborTable> ScoreStack::tables_at(int r) const {
  const auto it = std::find(receptive_fields_.begin(), receptive_fields_.end(), r);
  if (it == receptive_fields_.end()) throw DomainError("receptive field not in the stack");
  const std::size_t l = layers_->bases.size();
  return std::span<const NeighborTable>(tables_).subspan(static_cast<std::size_t>(it - receptive_fields_.begin()) * l, l);
}

std::vector<double> ScoreStack::scale_scores(std::size_t scale, double k_fraction, unsigned threads) const {
  return tables_.at(scale).scores(k_fraction, threads);
}

std::vector<double> ScoreStack::final_scores(double k_fraction, unsigned threads) const {
  std::vector<double> sum(total_elements(), 0.0);
  for (std::size_t s = 0; s < tables_.size(); ++s) {
    const auto sc = scale_scores(s, k_fraction, threads);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += sc[i];
  }
  for (auto& v : sum) v /= static_cast<double>(tables_.size());
  return sum;
}

bool ScoreStack::invalidated(int collection, int position) const {
  return std::any_of(tables_.begin(), tables_.end(),
                     [&](const NeighborTable& t) { return t.invalidated(collection, position); });
}

std::vector<std::size_t> subset_bounds(std::size_t collections, std::size_t subsets) {
  if (subsets == 0) throw DomainError("subset count must be positive");
  if (collections < 2 * subsets) throw DomainError("each subset needs at least 2 collections");
  std::vector<std::size_t> bounds(subsets + 1, 0);
  for (std::size_t i = 0; i <= subsets; ++i) bounds[i] = i * collections / subsets;
  return bounds;
}

std::vector<double> subset_final_scores(const LayerBases& layers, std::size_t subsets, const ScaleOptions& options,
                                        const ExclusionSet& exclusions, unsigned threads) {
  const auto bounds = subset_bounds(layers.collections(), subsets);
  std::vector<double> out;
  for (std::size_t s = 0; s < subsets; ++s) {
    auto chunk = std::make_shared<LayerBases>();
    chunk->layer_ids = layers.layer_ids;
    for (const auto& base : layers.bases) {
      std::vector<FeatureTensor> part(base.begin() + static_cast<std::ptrdiff_t>(bounds[s]),
                                      base.begin() + static_cast<std::ptrdiff_t>(bounds[s + 1]));
      for (auto& t : part) t.collection_id -= static_cast<int>(bounds[s]);
      chunk->bases.push_back(std::move(part));
    }
    ExclusionSet local;
    for (const auto& [c, h] : exclusions.entries())
      if (static_cast<std::size_t>(c) >= bounds[s] && static_cast<std::size_t>(c) < bounds[s + 1])
        local.insert(c - static_cast<int>(bounds[s]), h);
    auto stack = ScoreStack::build(chunk, options.receptive_fields, nullptr, threads);
    if (!local.empty()) stack = stack.masked(local, threads);
    const auto scores = stack.final_scores(options.k_fraction, threads);
    out.insert(out.end(), scores.begin(), scores.end());
  }
  return out;
}

std::vector<double> upsample_map(std::span<const double> grid, std::span<const std::size_t> grid_shape,
                                 std::span<const std::size_t> target_shape) {
  if (grid_shape.size() != target_shape.size()) throw DomainError("map rank mismatch");
  if (grid.size() != grid_size(grid_shape)) throw DomainError("grid values do not match grid shape");
  for (std::size_t a = 0; a < grid_shape.size(); ++a)
    if (grid_shape[a] == 0 || target_shape[a] == 0) throw DomainError("empty map axis");

  std::vector<double> cur(grid.begin(), grid.end());
  std::vector<std::size_t> shape(grid_shape.begin(), grid_shape.end());
  for (std::size_t axis = 0; axis < shape.size(); ++axis) {
    const std::size_t in = shape[axis];
    const std::size_t out_n = target_shape[axis];
    std::size_t outer = 1, inner = 1;
    for (std::size_t a = 0; a < axis; ++a) outer *= shape[a];
    for (std::size_t a = axis + 1; a < shape.size(); ++a) inner *= shape[a];
    std::vector<double> next(outer * out_n * inner);
    const double scale = static_cast<double>(in) / static_cast<double>(out_n);
    for (std::size_t o = 0; o < out_n; ++o) {
      const double src = std::max(0.0, (static_cast<double>(o) + 0.5) * scale - 0.5);
      const auto i0 = std::min(static_cast<std::size_t>(src), in - 1);
      const std::size_t i1 = std::min(i0 + 1, in - 1);
      const double t = src - static_cast<double>(i0);
      for (std::size_t a = 0; a < outer; ++a)
        for (std::size_t b = 0; b < inner; ++b) {
          const double v0 = cur[(a * in + i0) * inner + b];
          const double v1 = cur[(a * in + i1) * inner + b];
          next[(a * out_n + o) * inner + b] = v0 + t * (v1 - v0);
        }
    }
    cur = std::move(next);
    shape[axis] = out_n;
  }
  return cur;
}

double collection_score(std::span<const double> token_scores) {
  if (token_scores.empty()) throw DomainError("empty anomaly map");
  return *std::max_element(token_scores.begin(), token_scores.end());
}

AnomalyMap make_anomaly_map(int collection_id, std::vector<std::size_t> grid_shape, std::vector<double> token_scores,
                            std::vector<std::size_t> target_shape) {
  AnomalyMap m;
  m.collection_id = collection_id;
  m.upsampled = upsample_map(token_scores, grid_shape, target_shape);
  m.score = collection_score(token_scores);
  m.grid_shape = std::move(grid_shape);
  m.token_scores = std::move(token_scores);
  m.shape = std::move(target_shape);
  return m;
}

void write_anomaly_map(const std::filesystem::path& path, const AnomalyMap& map) {
  std::vector<float> values(map.upsampled.begin(), map.upsampled.end());
  npy::write(path, npy::make_float32(map.shape, values));
}

}  // namespace codegraph
