#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "codegraph/dataset.hpp"

namespace codegraph {

/// Floor applied to distances before any log or ratio.
inline constexpr double kDistanceFloor = 1e-9;

struct ElementRef {
  int collection = 0;
  int position = 0;
  int layer = 0;
  int receptive_field = 1;
};

/// Distances from one element to its nearest token in every compared
/// collection, ascending, with ties ordered by source id.
struct MutualSimilarityRecord {
  ElementRef element;
  std::vector<double> distances;
  std::vector<int> sources;

  std::size_t size() const { return distances.size(); }
  bool empty() const { return distances.empty(); }
};

struct GrowthRateSeries {
  std::vector<double> taus;  // nats
};

/// Per-query list of collections retained by CLS screening.
using ScreenSets = std::vector<std::vector<int>>;

/// Squared Euclidean distance with a fixed eight-lane summation order, so a
/// given pair always produces the same bits regardless of the caller.
float squared_distance(std::span<const float> a, std::span<const float> b);

struct NearestToken {
  float distance = 0.0f;
  int index = -1;
};

/// Nearest non-excluded token of c (lowest index on ties); nullopt when every
/// token is excluded.
std::optional<NearestToken> nearest_token(std::span<const float> z, const FeatureTensor& c,
                                          std::span<const std::uint8_t> excluded = {});

/// Smallest squared distance from z to the non-excluded tokens of c; nullopt
/// signals an exhausted collection, which callers skip.
std::optional<double> distance_to_collection(std::span<const float> z, const FeatureTensor& c,
                                             const ExclusionSet& exclusions = {});

/// Orders a record by (distance, source id).
void sort_record(MutualSimilarityRecord& record);

/// Mutual similarity vector of one element against every other collection of
/// the base (or only those in screen when given). base is indexed by
/// collection id.
MutualSimilarityRecord mutual_similarity_vector(const ElementRef& element, std::span<const FeatureTensor> base,
                                                const ExclusionSet& exclusions = {},
                                                const std::vector<int>* screen = nullptr);

/// K = max(1, round(k_fraction * len)).
std::size_t topk_count(std::size_t len, double k_fraction);
/// Mean of the K smallest distances.
double topk_score(std::span<const double> sorted_distances, double k_fraction);
double topk_score(const MutualSimilarityRecord& record, double k_fraction);

GrowthRateSeries growth_rates(const MutualSimilarityRecord& record);
GrowthRateSeries growth_rates(std::span<const double> sorted_distances);

/// Reference rank omega (1-based): round-half-up of fraction * len, clamped to [2, len].
std::size_t reference_index(std::size_t len, double omega_fraction);

/// d_(i) / d_(omega) for 1 <= i < omega, both floored.
double endurance_ratio(const MutualSimilarityRecord& record, std::size_t i, double omega_fraction);
/// d_(i)^(1-alpha) / d_(omega), both floored.
double weighted_endurance_ratio(const MutualSimilarityRecord& record, std::size_t i, double omega_fraction,
                                double alpha);

/// Per-source mean of the floored per-layer distances, re-sorted. All records
/// must describe the same element against the same source set.
MutualSimilarityRecord aggregate_layer_distances(std::span<const MutualSimilarityRecord> per_layer);

/// The ceil(eta * B) collections (at most B-1) whose CLS token is most
/// cosine-similar to that of collection; self is never included. Returned
/// sorted by id.
std::vector<int> cls_screen(std::span<const std::vector<float>> cls_tokens, int collection, double eta);
ScreenSets cls_screen_all(std::span<const std::vector<float>> cls_tokens, double eta);

/// |{j != i : d(z, C_j) < epsilon}|.
std::size_t epsilon_neighbor_count(const ElementRef& element, std::span<const FeatureTensor> base, double epsilon,
                                   const ExclusionSet& exclusions = {});

}  // namespace codegraph
