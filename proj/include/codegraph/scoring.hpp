#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "codegraph/dataset.hpp"
#include "codegraph/mutual.hpp"
#include "codegraph/neighbor_table.hpp"

namespace codegraph {

/// Mean over the r-wide (per grid axis) neighbourhood of every position, with
/// replicate borders. r = 1 returns the input. Rows are not renormalised.
FeatureTensor lnamd_pool(const FeatureTensor& tensor, int r);

/// Bases (indexed by collection id) at each layer, all at receptive field 1.
struct LayerBases {
  std::vector<int> layer_ids;
  std::vector<std::vector<FeatureTensor>> bases;
  std::size_t collections() const { return bases.empty() ? 0 : bases.front().size(); }
};

struct ScaleOptions {
  std::vector<int> receptive_fields{1, 3, 5};
  double k_fraction = 0.1;
};

/// Reference path: mean over (layer, r) of the top-K score of one element,
/// recomputed from features against the base minus exclusions.
double final_score(const ElementRef& element, const LayerBases& layers, const ScaleOptions& options,
                   const ExclusionSet& exclusions = {}, const ScreenSets* screen = nullptr);

/// Neighbour tables for every (layer, r) of a base. Tables are stored r-major,
/// so the receptive-field-1 tables of all layers are contiguous.
class ScoreStack {
 public:
  static ScoreStack build(std::shared_ptr<const LayerBases> layers, std::vector<int> receptive_fields,
                          const ScreenSets* screen = nullptr, unsigned threads = 0);

  /// Applies exclusions by index masking.
  ScoreStack masked(const ExclusionSet& exclusions, unsigned threads = 0) const;

  std::size_t scales() const { return tables_.size(); }
  int layer_of(std::size_t scale) const;
  int receptive_field_of(std::size_t scale) const;
  const NeighborTable& table(std::size_t scale) const { return tables_[scale]; }
  /// Tables of all layers at receptive field r.
  std::span<const NeighborTable> tables_at(int r) const;
  std::size_t total_elements() const { return tables_.front().total_elements(); }

  std::vector<double> scale_scores(std::size_t scale, double k_fraction, unsigned threads = 0) const;
  /// Mean over all (layer, r) scales, flattened in (collection, position) order.
  std::vector<double> final_scores(double k_fraction, unsigned threads = 0) const;
  /// True when any table re-searched a comparison of the element.
  bool invalidated(int collection, int position) const;

 private:
  std::shared_ptr<const LayerBases> layers_;
  std::vector<int> receptive_fields_;
  std::vector<NeighborTable> tables_;
};

/// Runs the stack independently on s contiguous, near-equal chunks of the
/// collections and concatenates the final scores. Exclusions use global ids.
std::vector<double> subset_final_scores(const LayerBases& layers, std::size_t subsets, const ScaleOptions& options,
                                        const ExclusionSet& exclusions = {}, unsigned threads = 0);

/// Chunk boundaries used by subset division: chunk i holds [bounds[i], bounds[i+1]).
std::vector<std::size_t> subset_bounds(std::size_t collections, std::size_t subsets);

/// Separable linear interpolation with half-pixel centres (align_corners = false).
std::vector<double> upsample_map(std::span<const double> grid, std::span<const std::size_t> grid_shape,
                                 std::span<const std::size_t> target_shape);

double collection_score(std::span<const double> token_scores);

struct AnomalyMap {
  int collection_id = 0;
  std::vector<std::size_t> grid_shape;
  std::vector<double> token_scores;
  std::vector<std::size_t> shape;
  std::vector<double> upsampled;
  double score = 0.0;
};

AnomalyMap make_anomaly_map(int collection_id, std::vector<std::size_t> grid_shape, std::vector<double> token_scores,
                            std::vector<std::size_t> target_shape);

/// Writes the upsampled map as float32 with the target shape.
void write_anomaly_map(const std::filesystem::path& path, const AnomalyMap& map);

}  // namespace codegraph
