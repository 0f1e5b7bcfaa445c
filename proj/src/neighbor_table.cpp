#include "codegraph/neighbor_table.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "codegraph/error.hpp"
#include "codegraph/parallel.hpp"

namespace codegraph {

NeighborTable NeighborTable::build(std::span<const FeatureTensor> base, const ExclusionSet& exclusions,
                                   const ScreenSets* screen, unsigned threads) {
  const std::size_t b = base.size();
  if (b < 2) throw DomainError("mutual scoring needs at least 2 collections");
  if (screen && screen->size() != b) throw DomainError("screen sets do not match base size");
  NeighborTable table;
  table.offsets_.assign(b + 1, 0);
  std::vector<std::size_t> sizes(b);
  for (std::size_t c = 0; c < b; ++c) {
    if (base[c].collection_id != static_cast<int>(c)) throw DomainError("base must be indexed by collection id");
    if (base[c].dim() != base[0].dim()) throw DataError("feature dimension differs across collections");
    sizes[c] = base[c].size();
    table.offsets_[c + 1] = table.offsets_[c] + sizes[c];
  }
  const auto masks = exclusions.to_masks(sizes);
  const std::size_t total = table.offsets_.back();
  table.distance_.assign(total * b, 0.0f);
  table.nearest_.assign(total * b, kNotCompared);
  table.invalidated_.assign(total, 0);

  parallel_for(
      b * b,
      [&](std::size_t pair) {
        const std::size_t c = pair / b;
        const std::size_t j = pair % b;
        if (c == j) return;
        if (screen) {
          const auto& allowed = (*screen)[c];
          if (!std::binary_search(allowed.begin(), allowed.end(), static_cast<int>(j))) return;
        }
        for (std::size_t h = 0; h < sizes[c]; ++h) {
          const std::size_t s = table.slot(table.offsets_[c] + h, j);
          const auto nearest = nearest_token(base[c].tokens.row(h), base[j], masks[j]);
          if (nearest) {
            table.distance_[s] = nearest->distance;
            table.nearest_[s] = nearest->index;
          } else {
            table.nearest_[s] = kExhausted;
          }
        }
      },
      threads);
  return table;
}

NeighborTable NeighborTable::masked(std::span<const FeatureTensor> base, const ExclusionSet& exclusions,
                                    unsigned threads) const {
  const std::size_t b = collections();
  if (base.size() != b) throw DomainError("base does not match the table");
  std::vector<std::size_t> sizes(b);
  for (std::size_t c = 0; c < b; ++c) sizes[c] = elements(static_cast<int>(c));
  const auto masks = exclusions.to_masks(sizes);

  NeighborTable out = *this;
  std::fill(out.invalidated_.begin(), out.invalidated_.end(), 0);
  parallel_for(
      total_elements(),
      [&](std::size_t flat) {
        const auto c = static_cast<std::size_t>(
            std::upper_bound(offsets_.begin(), offsets_.end(), flat) - offsets_.begin() - 1);
        const std::size_t h = flat - offsets_[c];
        for (std::size_t j = 0; j < b; ++j) {
          const std::size_t s = slot(flat, j);
          const std::int32_t idx = nearest_[s];
          if (idx < 0 || !masks[j][idx]) continue;
          out.invalidated_[flat] = 1;
          const auto nearest = nearest_token(base[c].tokens.row(h), base[j], masks[j]);
          if (nearest) {
            out.distance_[s] = nearest->distance;
            out.nearest_[s] = nearest->index;
          } else {
            out.distance_[s] = 0.0f;
            out.nearest_[s] = kExhausted;
          }
        }
      },
      threads);
  return out;
}

MutualSimilarityRecord NeighborTable::record(int collection, int position) const {
  MutualSimilarityRecord r;
  r.element.collection = collection;
  r.element.position = position;
  const std::size_t flat = flat_index(collection, position);
  for (std::size_t j = 0; j < collections(); ++j) {
    const std::size_t s = slot(flat, j);
    if (nearest_[s] < 0) continue;
    r.distances.push_back(static_cast<double>(distance_[s]));
    r.sources.push_back(static_cast<int>(j));
  }
  if (r.empty()) throw DomainError("no comparable collection for element");
  sort_record(r);
  return r;
}

std::vector<double> NeighborTable::scores(double k_fraction, unsigned threads) const {
  std::vector<double> out(total_elements());
  parallel_for(
      collections(),
      [&](std::size_t c) {
        for (std::size_t h = 0; h < elements(static_cast<int>(c)); ++h) {
          out[offsets_[c] + h] = topk_score(record(static_cast<int>(c), static_cast<int>(h)), k_fraction);
        }
      },
      threads);
  return out;
}

bool NeighborTable::invalidated(int collection, int position) const {
  return invalidated_[flat_index(collection, position)] != 0;
}

std::size_t NeighborTable::invalidated_count() const {
  return static_cast<std::size_t>(std::count(invalidated_.begin(), invalidated_.end(), std::uint8_t{1}));
}

MutualSimilarityRecord aggregated_record(std::span<const NeighborTable> layers, int collection, int position) {
  std::vector<MutualSimilarityRecord> per_layer;
  per_layer.reserve(layers.size());
  for (const auto& t : layers) per_layer.push_back(t.record(collection, position));
  return aggregate_layer_distances(per_layer);
}

}  // namespace codegraph
