#include "codegraph/mutual.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "codegraph/error.hpp"

namespace codegraph {

float squared_distance(std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t k = 0; k < 8; ++k) {
      const float d = a[i + k] - b[i + k];
      acc[k] += d * d;
    }
  }
  float tail = 0.0f;
  for (; i < n; ++i) {
    const float d = a[i] - b[i];
    tail += d * d;
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

std::optional<NearestToken> nearest_token(std::span<const float> z, const FeatureTensor& c,
                                          std::span<const std::uint8_t> excluded) {
  NearestToken best;
  for (std::size_t t = 0; t < c.size(); ++t) {
    if (!excluded.empty() && excluded[t]) continue;
    const float d = squared_distance(z, c.tokens.row(t));
    if (best.index < 0 || d < best.distance) {
      best.distance = d;
      best.index = static_cast<int>(t);
    }
  }
  if (best.index < 0) return std::nullopt;
  return best;
}

namespace {

std::vector<std::uint8_t> exclusion_mask(const FeatureTensor& c, const ExclusionSet& exclusions) {
  std::vector<std::uint8_t> mask;
  if (exclusions.empty()) return mask;
  mask.assign(c.size(), 0);
  auto it = exclusions.entries().lower_bound({c.collection_id, 0});
  for (; it != exclusions.entries().end() && it->first == c.collection_id; ++it) {
    if (static_cast<std::size_t>(it->second) >= c.size()) throw DomainError("exclusion position out of range");
    mask[it->second] = 1;
  }
  return mask;
}

}  // namespace

std::optional<double> distance_to_collection(std::span<const float> z, const FeatureTensor& c,
                                             const ExclusionSet& exclusions) {
  const auto mask = exclusion_mask(c, exclusions);
  const auto nearest = nearest_token(z, c, mask);
  if (!nearest) return std::nullopt;
  return static_cast<double>(nearest->distance);
}

void sort_record(MutualSimilarityRecord& record) {
  std::vector<std::size_t> order(record.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (record.distances[a] != record.distances[b]) return record.distances[a] < record.distances[b];
    return record.sources[a] < record.sources[b];
  });
  MutualSimilarityRecord sorted;
  sorted.element = record.element;
  sorted.distances.reserve(order.size());
  sorted.sources.reserve(order.size());
  for (auto i : order) {
    sorted.distances.push_back(record.distances[i]);
    sorted.sources.push_back(record.sources[i]);
  }
  record = std::move(sorted);
}

MutualSimilarityRecord mutual_similarity_vector(const ElementRef& element, std::span<const FeatureTensor> base,
                                                const ExclusionSet& exclusions, const std::vector<int>* screen) {
  if (base.size() < 2) throw DomainError("mutual scoring needs at least 2 collections");
  const auto& own = base[element.collection];
  if (static_cast<std::size_t>(element.position) >= own.size()) throw DomainError("element position out of range");
  const auto z = own.tokens.row(element.position);

  std::vector<int> targets;
  if (screen) {
    targets = *screen;
  } else {
    targets.resize(base.size());
    std::iota(targets.begin(), targets.end(), 0);
  }
  MutualSimilarityRecord record;
  record.element = element;
  for (int j : targets) {
    if (j == element.collection) continue;
    const auto d = distance_to_collection(z, base[j], exclusions);
    if (!d) continue;
    record.distances.push_back(*d);
    record.sources.push_back(j);
  }
  if (record.empty()) throw DomainError("no comparable collection for element");
  sort_record(record);
  return record;
}

std::size_t topk_count(std::size_t len, double k_fraction) {
  if (!(k_fraction > 0.0 && k_fraction <= 1.0)) throw DomainError("k fraction must lie in (0, 1]");
  const auto k = static_cast<std::size_t>(std::llround(k_fraction * static_cast<double>(len)));
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(len, 1));
}

double topk_score(std::span<const double> sorted_distances, double k_fraction) {
  if (sorted_distances.empty()) throw DomainError("top-K score of an empty record");
  const std::size_t k = topk_count(sorted_distances.size(), k_fraction);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += sorted_distances[i];
  return sum / static_cast<double>(k);
}

double topk_score(const MutualSimilarityRecord& record, double k_fraction) {
  return topk_score(record.distances, k_fraction);
}

GrowthRateSeries growth_rates(std::span<const double> d) {
  GrowthRateSeries out;
  if (d.size() < 2) return out;
  out.taus.reserve(d.size() - 1);
  for (std::size_t i = 0; i + 1 < d.size(); ++i) {
    const double lo = std::max(d[i], kDistanceFloor);
    const double hi = std::max(d[i + 1], kDistanceFloor);
    if (!(lo > 0.0 && hi > 0.0) || !std::isfinite(lo) || !std::isfinite(hi)) {
      throw NumericError("growth rate needs positive finite distances");
    }
    out.taus.push_back(std::log(hi / lo));
  }
  return out;
}

GrowthRateSeries growth_rates(const MutualSimilarityRecord& record) { return growth_rates(record.distances); }

std::size_t reference_index(std::size_t len, double omega_fraction) {
  if (len < 2) throw DomainError("endurance ratio needs a record of length >= 2");
  if (!(omega_fraction > 0.0 && omega_fraction <= 1.0)) throw DomainError("omega fraction must lie in (0, 1]");
  const auto omega = static_cast<std::size_t>(std::floor(omega_fraction * static_cast<double>(len) + 0.5));
  return std::clamp<std::size_t>(omega, 2, len);
}

namespace {

std::pair<double, double> ratio_terms(const MutualSimilarityRecord& record, std::size_t i, double omega_fraction) {
  const std::size_t omega = reference_index(record.size(), omega_fraction);
  if (i < 1 || i >= omega) {
    throw DomainError("rank " + std::to_string(i) + " outside [1, omega) with omega = " + std::to_string(omega));
  }
  return {std::max(record.distances[i - 1], kDistanceFloor), std::max(record.distances[omega - 1], kDistanceFloor)};
}

}  // namespace

double endurance_ratio(const MutualSimilarityRecord& record, std::size_t i, double omega_fraction) {
  const auto [di, dw] = ratio_terms(record, i, omega_fraction);
  return di / dw;
}

double weighted_endurance_ratio(const MutualSimilarityRecord& record, std::size_t i, double omega_fraction,
                                double alpha) {
  if (alpha < 0.0) throw DomainError("alpha must be non-negative");
  const auto [di, dw] = ratio_terms(record, i, omega_fraction);
  return std::pow(di, 1.0 - alpha) / dw;
}

MutualSimilarityRecord aggregate_layer_distances(std::span<const MutualSimilarityRecord> per_layer) {
  if (per_layer.empty()) throw DomainError("no layer records to aggregate");
  const auto& first = per_layer.front();
  const std::size_t n = first.size();
  // per-source accumulation, keyed through a source-sorted view of each record
  auto by_source = [](const MutualSimilarityRecord& r) {
    std::vector<std::size_t> order(r.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return r.sources[a] < r.sources[b]; });
    return order;
  };
  const auto first_order = by_source(first);
  MutualSimilarityRecord out;
  out.element = first.element;
  out.element.layer = -1;
  out.distances.assign(n, 0.0);
  out.sources.resize(n);
  for (std::size_t k = 0; k < n; ++k) out.sources[k] = first.sources[first_order[k]];

  for (const auto& r : per_layer) {
    if (r.size() != n || r.element.collection != first.element.collection ||
        r.element.position != first.element.position) {
      throw DomainError("layer records describe different elements or source sets");
    }
    const auto order = by_source(r);
    for (std::size_t k = 0; k < n; ++k) {
      if (r.sources[order[k]] != out.sources[k]) throw DomainError("layer records have different source sets");
      out.distances[k] += std::max(r.distances[order[k]], kDistanceFloor);
    }
  }
  const double inv = 1.0 / static_cast<double>(per_layer.size());
  for (auto& d : out.distances) d *= inv;
  sort_record(out);
  return out;
}

std::vector<int> cls_screen(std::span<const std::vector<float>> cls_tokens, int collection, double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) throw DomainError("eta must lie in (0, 1]");
  const std::size_t b = cls_tokens.size();
  if (collection < 0 || static_cast<std::size_t>(collection) >= b) throw DomainError("collection id out of range");
  if (b < 2) throw DomainError("screening needs at least 2 collections");
  const auto& query = cls_tokens[collection];
  if (query.empty()) throw SchemaError("missing CLS token for collection " + std::to_string(collection));

  // guard against 0.6 * 10 = 6.000000000000001 style overshoot
  auto keep = static_cast<std::size_t>(std::ceil(eta * static_cast<double>(b) - 1e-9));
  keep = std::clamp<std::size_t>(keep, 1, b - 1);

  std::vector<std::pair<double, int>> sims;
  for (std::size_t j = 0; j < b; ++j) {
    if (static_cast<int>(j) == collection) continue;
    const auto& other = cls_tokens[j];
    if (other.size() != query.size()) throw SchemaError("CLS token dimensions differ");
    double dot = 0.0, qq = 0.0, oo = 0.0;
    for (std::size_t k = 0; k < query.size(); ++k) {
      dot += static_cast<double>(query[k]) * other[k];
      qq += static_cast<double>(query[k]) * query[k];
      oo += static_cast<double>(other[k]) * other[k];
    }
    const double denom = std::sqrt(qq * oo);
    sims.emplace_back(denom > 0.0 ? dot / denom : 0.0, static_cast<int>(j));
  }
  std::stable_sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<int> out;
  for (std::size_t k = 0; k < keep; ++k) out.push_back(sims[k].second);
  std::sort(out.begin(), out.end());
  return out;
}

ScreenSets cls_screen_all(std::span<const std::vector<float>> cls_tokens, double eta) {
  ScreenSets sets;
  sets.reserve(cls_tokens.size());
  for (std::size_t c = 0; c < cls_tokens.size(); ++c) sets.push_back(cls_screen(cls_tokens, static_cast<int>(c), eta));
  return sets;
}

std::size_t epsilon_neighbor_count(const ElementRef& element, std::span<const FeatureTensor> base, double epsilon,
                                   const ExclusionSet& exclusions) {
  if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
  const auto z = base[element.collection].tokens.row(element.position);
  std::size_t count = 0;
  for (std::size_t j = 0; j < base.size(); ++j) {
    if (static_cast<int>(j) == element.collection) continue;
    const auto d = distance_to_collection(z, base[j], exclusions);
    if (d && *d < epsilon) ++count;
  }
  return count;
}

}  // namespace codegraph
