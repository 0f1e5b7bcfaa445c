#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "codegraph/dataset.hpp"
#include "codegraph/graph.hpp"
#include "codegraph/neighbor_table.hpp"

namespace codegraph {

/// Community ids are dense and numbered in order of each community's smallest node.
struct Partition {
  std::vector<int> community_of;
  std::vector<std::vector<int>> communities;

  static Partition from_labels(std::span<const int> labels);
  static Partition singletons(std::size_t nodes);
  static Partition single(std::size_t nodes);
  std::size_t size() const { return communities.size(); }
};

/// Sum over ordered pairs i != j in the same community of (w_ij - gamma).
double cpm_quality(const AnomalySimilarityGraph& graph, const Partition& partition, double gamma);

struct LeidenOptions {
  std::uint64_t seed = 0;
  int max_iterations = 50;
};

/// Leiden optimisation of the CPM objective: local moving, greedy refinement
/// and aggregation, finished by a node-level local moving pass so the result
/// admits no improving single-node move.
Partition leiden_cpm(const AnomalySimilarityGraph& graph, double gamma, const LeidenOptions& options = {});

/// Percentile of the positive edge weights; throws on an edgeless graph.
double gamma_from_percentile(const AnomalySimilarityGraph& graph, double pct = 25.0);

/// Mean weight over ordered pairs of distinct members; requires |M| >= 2.
double community_density(const AnomalySimilarityGraph& graph, std::span<const int> members);

struct OutlierReport {
  std::vector<int> community_ids;  // communities with |M| >= 2
  std::vector<double> densities;   // parallel to community_ids
  double q1 = 0.0;
  double q3 = 0.0;
  double threshold = 0.0;
  std::vector<int> flagged;        // community ids
  std::vector<std::string> warnings;
};

/// Flags index i iff densities[i] > Q3 + k_iqr * IQR. community_ids is 0..n-1.
OutlierReport flag_outliers(std::span<const double> densities, double k_iqr = 4.5);

/// Density report over the communities of size >= 2; warns when a flagged
/// community holds more than half of the nodes.
OutlierReport outlier_communities(const AnomalySimilarityGraph& graph, const Partition& partition,
                                  double k_iqr = 4.5);

/// a_{B \ M} / a_B from an element's full record; in_community has one flag per
/// collection of the base. The denominator is floored.
double dependency_ratio(const MutualSimilarityRecord& record, std::span<const std::uint8_t> in_community,
                        double k_fraction);

/// Single-layer dependency ratio computed from features.
double dependency_ratio(const ElementRef& element, std::span<const FeatureTensor> base,
                        std::span<const int> community, double k_fraction);

struct FilterOptions {
  double k_fraction = 0.1;
  double theta_percentile = 99.0;
  double void_threshold = 0.5;
};

struct CommunityFilter {
  int community_id = 0;
  std::vector<int> members;
  double theta = 0.0;
  std::size_t excluded = 0;
};

struct FilterResult {
  ExclusionSet exclusions;
  std::vector<CommunityFilter> communities;
};

/// For each flagged community M: theta_M is the percentile of r_M over the
/// elements outside M, and elements of M with r_M > theta_M are excluded.
/// Ratios use the d_agg records of the r = 1 layer tables; void elements are
/// skipped.
FilterResult targeted_filtering(std::span<const NeighborTable> layer_tables,
                                const std::vector<std::vector<int>>& outliers, const FilterOptions& options = {},
                                const VoidFractions* voids = nullptr, unsigned threads = 0);

}  // namespace codegraph
