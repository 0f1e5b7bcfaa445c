#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "codegraph/mutual.hpp"
#include "codegraph/neighbor_table.hpp"

namespace codegraph {

/// Element-to-collection link with its weighted endurance ratio.
struct SuspiciousLink {
  int collection = 0;  // collection of the element
  int position = 0;
  int rank = 0;        // 1-based rank of target in the element's record
  int target = 0;
  double zeta = 0.0;
};

/// Collection-level graph; w(i, j) counts suspicious links between i and j in
/// either direction.
class AnomalySimilarityGraph {
 public:
  AnomalySimilarityGraph() = default;
  explicit AnomalySimilarityGraph(std::size_t nodes) : nodes_(nodes), weights_(nodes * nodes, 0) {}

  std::size_t nodes() const { return nodes_; }
  std::int64_t weight(std::size_t i, std::size_t j) const { return weights_[i * nodes_ + j]; }
  void add(std::size_t i, std::size_t j, std::int64_t w = 1);
  /// Number of distinct neighbours.
  std::size_t degree(std::size_t i) const;
  /// Sum over unordered pairs.
  std::int64_t total_weight() const;
  /// Positive weights over unordered pairs i < j.
  std::vector<double> edge_weights() const;

  /// "i j w" per line for i < j and w > 0.
  void write_edge_list(const std::filesystem::path& path) const;
  void write_adjacency(const std::filesystem::path& path) const;
  static AnomalySimilarityGraph read_edge_list(const std::filesystem::path& path, std::size_t nodes);

  bool operator==(const AnomalySimilarityGraph&) const = default;

 private:
  std::size_t nodes_ = 0;
  std::vector<std::int64_t> weights_;
};

struct CandidateOptions {
  double omega_fraction = 0.3;
  double alpha = 0.2;
  /// Elements whose void fraction exceeds this are dropped (when fractions are supplied).
  double void_threshold = 0.5;
};

/// Per collection, per position fraction of background voxels.
using VoidFractions = std::vector<std::vector<double>>;

/// Appends one candidate per rank i < omega of the record.
void append_candidates(const MutualSimilarityRecord& record, const CandidateOptions& options,
                       std::vector<SuspiciousLink>& out);

/// Sorts by (zeta, collection, position, rank).
void sort_candidates(std::vector<SuspiciousLink>& links);

/// Candidates of every element, built from records (one per element).
std::vector<SuspiciousLink> candidate_links(std::span<const MutualSimilarityRecord> records,
                                            const CandidateOptions& options, const VoidFractions* voids = nullptr);

/// Candidates from the layer-averaged (d_agg) records of the given r = 1 layer tables.
std::vector<SuspiciousLink> candidate_links(std::span<const NeighborTable> layer_tables,
                                            const CandidateOptions& options, const VoidFractions* voids = nullptr,
                                            unsigned threads = 0);

AnomalySimilarityGraph build_graph(std::span<const SuspiciousLink> links, std::size_t nodes);

/// Each link contributes one connection per layer, to that layer's source at
/// the link's rank.
AnomalySimilarityGraph build_layer_resolved_graph(std::span<const SuspiciousLink> links,
                                                  std::span<const NeighborTable> layer_tables);

struct CoverageSelection {
  std::vector<SuspiciousLink> links;
  AnomalySimilarityGraph graph;
  double coverage = 0.0;
  std::size_t batches = 0;
  std::size_t batch_size = 0;
  std::size_t counted_nodes = 0;
  bool target_reached = false;
};

/// Takes whole batches of B(B-1)/2 candidates from the sorted list until the
/// fraction of counted nodes with degree >= 1 reaches target_coverage or the
/// candidates run out. active, when given, marks the nodes that count toward
/// coverage.
CoverageSelection select_by_coverage(std::span<const SuspiciousLink> sorted_candidates, double target_coverage,
                                     std::size_t nodes, std::span<const std::uint8_t> active = {});

}  // namespace codegraph
