#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "codegraph/dataset.hpp"
#include "codegraph/mutual.hpp"

namespace codegraph {

/// Nearest-token distance and index for every (element, other collection)
/// pair of a base set at one layer and receptive field: the stored index
/// tensor that lets exclusions be applied by masking instead of a full
/// recomputation.
class NeighborTable {
 public:
  NeighborTable() = default;

  /// base must be indexed by collection id. screen, when given, restricts
  /// each query collection to its screened neighbours.
  static NeighborTable build(std::span<const FeatureTensor> base, const ExclusionSet& exclusions = {},
                             const ScreenSets* screen = nullptr, unsigned threads = 0);

  /// Applies exclusions by invalidating stored comparisons whose nearest
  /// token is excluded and re-searching only those; every other entry is
  /// reused. Equal to build(base, exclusions, screen) entry for entry;
  /// exclusions must contain those the table was built with.
  NeighborTable masked(std::span<const FeatureTensor> base, const ExclusionSet& exclusions,
                       unsigned threads = 0) const;

  std::size_t collections() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t elements(int collection) const { return offsets_[collection + 1] - offsets_[collection]; }
  std::size_t total_elements() const { return offsets_.empty() ? 0 : offsets_.back(); }
  std::size_t flat_index(int collection, int position) const { return offsets_[collection] + position; }

  MutualSimilarityRecord record(int collection, int position) const;
  /// Top-K score of every element, flattened in (collection, position) order.
  std::vector<double> scores(double k_fraction, unsigned threads = 0) const;

  /// True when masking had to re-search at least one comparison of the element.
  bool invalidated(int collection, int position) const;
  std::size_t invalidated_count() const;

  /// Same distances and nearest indices for every comparison.
  bool same_entries(const NeighborTable& other) const {
    return offsets_ == other.offsets_ && distance_ == other.distance_ && nearest_ == other.nearest_;
  }

  static constexpr std::int32_t kNotCompared = -2;
  static constexpr std::int32_t kExhausted = -1;

 private:
  std::size_t slot(std::size_t flat, std::size_t target) const { return flat * collections() + target; }

  std::vector<std::size_t> offsets_;
  std::vector<float> distance_;
  std::vector<std::int32_t> nearest_;
  std::vector<std::uint8_t> invalidated_;
};

/// d_agg record of one element: per-source mean of floored distances over the
/// given layer tables (receptive field 1).
MutualSimilarityRecord aggregated_record(std::span<const NeighborTable> layers, int collection, int position);

}  // namespace codegraph
