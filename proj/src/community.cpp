#include "codegraph/community.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>

#include "codegraph/error.hpp"
#include "codegraph/parallel.hpp"
#include "codegraph/percentile.hpp"
#include "codegraph/rng.hpp"

namespace codegraph {

Partition Partition::from_labels(std::span<const int> labels) {
  Partition p;
  p.community_of.assign(labels.size(), -1);
  std::map<int, int> remap;
  for (std::size_t v = 0; v < labels.size(); ++v) {
    auto [it, inserted] = remap.try_emplace(labels[v], static_cast<int>(remap.size()));
    if (inserted) p.communities.emplace_back();
    p.community_of[v] = it->second;
    p.communities[it->second].push_back(static_cast<int>(v));
  }
  return p;
}

Partition Partition::singletons(std::size_t nodes) {
  std::vector<int> labels(nodes);
  std::iota(labels.begin(), labels.end(), 0);
  return from_labels(labels);
}

Partition Partition::single(std::size_t nodes) { return from_labels(std::vector<int>(nodes, 0)); }

double cpm_quality(const AnomalySimilarityGraph& graph, const Partition& partition, double gamma) {
  if (partition.community_of.size() != graph.nodes()) throw DomainError("partition does not cover the graph");
  double q = 0.0;
  for (const auto& members : partition.communities) {
    for (std::size_t a = 0; a < members.size(); ++a)
      for (std::size_t b = a + 1; b < members.size(); ++b) q += 2.0 * static_cast<double>(graph.weight(members[a], members[b]));
    const double n = static_cast<double>(members.size());
    q -= gamma * n * (n - 1.0);
  }
  return q;
}

namespace {

constexpr double kGainTolerance = 1e-10;

struct Level {
  std::size_t n = 0;
  std::vector<double> node_size;
  std::vector<std::vector<std::pair<int, double>>> adj;  // symmetric, no self loops
};

Level level_from_graph(const AnomalySimilarityGraph& g) {
  Level lv;
  lv.n = g.nodes();
  lv.node_size.assign(lv.n, 1.0);
  lv.adj.resize(lv.n);
  for (std::size_t i = 0; i < lv.n; ++i)
    for (std::size_t j = 0; j < lv.n; ++j)
      if (i != j && g.weight(i, j) > 0) lv.adj[i].emplace_back(static_cast<int>(j), static_cast<double>(g.weight(i, j)));
  return lv;
}

std::vector<double> community_sizes(const Level& lv, const std::vector<int>& comm) {
  std::vector<double> size(lv.n, 0.0);
  for (std::size_t v = 0; v < lv.n; ++v) size[comm[v]] += lv.node_size[v];
  return size;
}

// Moves nodes to the neighbouring (or an empty) community with the largest
// positive gain until no node improves. Community ids stay below lv.n.
bool move_nodes(const Level& lv, std::vector<int>& comm, double gamma, CounterRng& rng) {
  std::vector<double> csize = community_sizes(lv, comm);
  std::vector<int> empty;
  for (int c = static_cast<int>(lv.n) - 1; c >= 0; --c)
    if (csize[c] == 0.0) empty.push_back(c);

  std::vector<int> order(lv.n);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order.begin(), order.end(), rng);
  std::deque<int> queue(order.begin(), order.end());
  std::vector<std::uint8_t> queued(lv.n, 1);
  std::vector<double> weight_to(lv.n, 0.0);
  std::vector<int> touched;
  bool changed = false;

  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    queued[v] = 0;
    const int from = comm[v];
    const double s = lv.node_size[v];

    touched.clear();
    for (const auto& [u, w] : lv.adj[v]) {
      if (weight_to[comm[u]] == 0.0) touched.push_back(comm[u]);
      weight_to[comm[u]] += w;
    }
    const double w_from = weight_to[from];
    const double n_from = csize[from] - s;

    int best = from;
    double best_gain = 0.0;
    for (int c : touched) {
      if (c == from) continue;
      const double gain = 2.0 * (weight_to[c] - w_from - gamma * s * (csize[c] - n_from));
      if (gain > best_gain + kGainTolerance || (gain > kGainTolerance && gain == best_gain && c < best)) {
        best = c;
        best_gain = gain;
      }
    }
    if (n_from > 0.0) {
      const double gain = 2.0 * (-w_from + gamma * s * n_from);
      if (gain > best_gain + kGainTolerance) {
        best = empty.back();
        best_gain = gain;
      }
    }
    for (int c : touched) weight_to[c] = 0.0;

    if (best == from) continue;
    if (!empty.empty() && best == empty.back()) empty.pop_back();
    csize[from] -= s;
    csize[best] += s;
    if (csize[from] == 0.0) empty.push_back(from);
    comm[v] = best;
    changed = true;
    for (const auto& [u, w] : lv.adj[v]) {
      if (comm[u] != best && !queued[u]) {
        queued[u] = 1;
        queue.push_back(u);
      }
    }
  }
  return changed;
}

// Greedy refinement: inside each community, singleton nodes that are well
// connected join the well-connected refined sub-community with the largest
// non-negative gain.
std::vector<int> refine(const Level& lv, const std::vector<int>& comm, double gamma, CounterRng& rng) {
  std::vector<int> refined(lv.n);
  std::iota(refined.begin(), refined.end(), 0);
  std::vector<double> rsize = lv.node_size;
  std::vector<std::uint8_t> singleton(lv.n, 1);
  const std::vector<double> csize = community_sizes(lv, comm);

  std::vector<double> inside(lv.n, 0.0);  // w(v, C - v)
  for (std::size_t v = 0; v < lv.n; ++v)
    for (const auto& [u, w] : lv.adj[v])
      if (comm[u] == comm[v]) inside[v] += w;
  std::vector<double> external = inside;  // w(T, C - T) per refined community

  std::vector<int> order(lv.n);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order.begin(), order.end(), rng);

  std::vector<double> weight_to(lv.n, 0.0);
  std::vector<int> touched;
  for (int v : order) {
    if (!singleton[v]) continue;
    const double s = lv.node_size[v];
    const double n_c = csize[comm[v]];
    if (inside[v] < gamma * s * (n_c - s)) continue;

    touched.clear();
    for (const auto& [u, w] : lv.adj[v]) {
      if (comm[u] != comm[v]) continue;
      if (weight_to[refined[u]] == 0.0) touched.push_back(refined[u]);
      weight_to[refined[u]] += w;
    }
    int best = refined[v];
    double best_gain = 0.0;
    for (int t : touched) {
      if (t == refined[v]) continue;
      if (external[t] < gamma * rsize[t] * (n_c - rsize[t])) continue;
      const double gain = 2.0 * (weight_to[t] - gamma * s * rsize[t]);
      if (gain < -kGainTolerance) continue;
      if (best == refined[v] || gain > best_gain + kGainTolerance || (gain >= best_gain - kGainTolerance && t < best)) {
        best = t;
        best_gain = gain;
      }
    }
    const double w_best = best == refined[v] ? 0.0 : weight_to[best];
    for (int t : touched) weight_to[t] = 0.0;
    if (best == refined[v]) continue;

    const int old = refined[v];
    rsize[old] = 0.0;
    rsize[best] += s;
    external[best] += inside[v] - 2.0 * w_best;
    refined[v] = best;
    singleton[v] = 0;
    for (std::size_t u = 0; u < lv.n; ++u)
      if (refined[u] == best) singleton[u] = 0;
  }
  return refined;
}

Level aggregate(const Level& lv, const std::vector<int>& groups, std::vector<int>& node_of_group) {
  node_of_group.assign(lv.n, -1);
  Level out;
  for (std::size_t v = 0; v < lv.n; ++v) {
    if (node_of_group[groups[v]] < 0) {
      node_of_group[groups[v]] = static_cast<int>(out.n++);
      out.node_size.push_back(0.0);
    }
    out.node_size[node_of_group[groups[v]]] += lv.node_size[v];
  }
  std::vector<std::map<int, double>> acc(out.n);
  for (std::size_t v = 0; v < lv.n; ++v) {
    const int a = node_of_group[groups[v]];
    for (const auto& [u, w] : lv.adj[v]) {
      const int b = node_of_group[groups[u]];
      if (a != b) acc[a][b] += w;
    }
  }
  out.adj.resize(out.n);
  for (std::size_t a = 0; a < out.n; ++a)
    for (const auto& [b, w] : acc[a]) out.adj[a].emplace_back(b, w);
  return out;
}

std::size_t distinct(const std::vector<int>& labels) {
  std::vector<int> sorted = labels;
  std::sort(sorted.begin(), sorted.end());
  return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

}  // namespace

Partition leiden_cpm(const AnomalySimilarityGraph& graph, double gamma, const LeidenOptions& options) {
  const std::size_t n = graph.nodes();
  if (n == 0) return {};
  CounterRng rng(options.seed, 0x1E1DE7ULL);
  const Level base = level_from_graph(graph);

  Level lv = base;
  std::vector<int> comm(n);
  std::iota(comm.begin(), comm.end(), 0);
  std::vector<int> level_of(n);  // original node -> node of the current level
  std::iota(level_of.begin(), level_of.end(), 0);

  for (int it = 0; it < options.max_iterations; ++it) {
    move_nodes(lv, comm, gamma, rng);
    if (distinct(comm) == lv.n) break;
    std::vector<int> groups = refine(lv, comm, gamma, rng);
    if (distinct(groups) == lv.n) groups = comm;
    std::vector<int> node_of_group;
    Level next = aggregate(lv, groups, node_of_group);
    std::vector<int> next_comm(next.n);
    for (std::size_t v = 0; v < lv.n; ++v) next_comm[node_of_group[groups[v]]] = comm[v];
    next_comm = Partition::from_labels(next_comm).community_of;  // ids must stay below next.n
    for (auto& l : level_of) l = node_of_group[groups[l]];
    lv = std::move(next);
    comm = std::move(next_comm);
  }

  std::vector<int> labels(n);
  for (std::size_t v = 0; v < n; ++v) labels[v] = comm[level_of[v]];
  labels = Partition::from_labels(labels).community_of;
  move_nodes(base, labels, gamma, rng);
  return Partition::from_labels(labels);
}

double gamma_from_percentile(const AnomalySimilarityGraph& graph, double pct) {
  const auto weights = graph.edge_weights();
  if (weights.empty()) throw DomainError("graph has no edges");
  return percentile(weights, pct);
}

double community_density(const AnomalySimilarityGraph& graph, std::span<const int> members) {
  if (members.size() < 2) throw DomainError("density needs at least 2 members");
  double total = 0.0;
  for (int i : members)
    for (int j : members)
      if (i != j) total += static_cast<double>(graph.weight(i, j));
  const double m = static_cast<double>(members.size());
  return total / (m * (m - 1.0));
}

OutlierReport flag_outliers(std::span<const double> densities, double k_iqr) {
  if (densities.empty()) throw DomainError("no community densities");
  OutlierReport report;
  report.densities.assign(densities.begin(), densities.end());
  report.community_ids.resize(densities.size());
  std::iota(report.community_ids.begin(), report.community_ids.end(), 0);
  std::vector<double> sorted(densities.begin(), densities.end());
  std::sort(sorted.begin(), sorted.end());
  report.q1 = percentile_sorted(sorted, 25.0);
  report.q3 = percentile_sorted(sorted, 75.0);
  report.threshold = report.q3 + k_iqr * (report.q3 - report.q1);
  for (std::size_t i = 0; i < densities.size(); ++i)
    if (densities[i] > report.threshold) report.flagged.push_back(static_cast<int>(i));
  return report;
}

OutlierReport outlier_communities(const AnomalySimilarityGraph& graph, const Partition& partition, double k_iqr) {
  std::vector<int> ids;
  std::vector<double> densities;
  for (std::size_t c = 0; c < partition.communities.size(); ++c) {
    if (partition.communities[c].size() < 2) continue;
    ids.push_back(static_cast<int>(c));
    densities.push_back(community_density(graph, partition.communities[c]));
  }
  if (densities.empty()) {
    OutlierReport empty;
    empty.warnings.push_back("no community with at least 2 members");
    return empty;
  }
  OutlierReport report = flag_outliers(densities, k_iqr);
  report.community_ids = ids;
  for (int& f : report.flagged) {
    f = ids[f];
    if (2 * partition.communities[f].size() > graph.nodes()) {
      report.warnings.push_back("flagged community " + std::to_string(f) + " holds " +
                                std::to_string(partition.communities[f].size()) + " of " +
                                std::to_string(graph.nodes()) + " collections; the minority assumption may not hold");
    }
  }
  return report;
}

double dependency_ratio(const MutualSimilarityRecord& record, std::span<const std::uint8_t> in_community,
                        double k_fraction) {
  const auto outside = std::count(in_community.begin(), in_community.end(), std::uint8_t{0});
  if (outside < 2) throw DomainError("base without the community has fewer than 2 collections");
  std::vector<double> kept;
  kept.reserve(record.size());
  for (std::size_t i = 0; i < record.size(); ++i) {
    const int src = record.sources[i];
    if (src < 0 || static_cast<std::size_t>(src) >= in_community.size()) throw DomainError("source out of range");
    if (!in_community[src]) kept.push_back(record.distances[i]);
  }
  if (kept.empty()) throw DomainError("no comparison left after removing the community");
  const double full = std::max(topk_score(record.distances, k_fraction), kDistanceFloor);
  return topk_score(kept, k_fraction) / full;
}

double dependency_ratio(const ElementRef& element, std::span<const FeatureTensor> base, std::span<const int> community,
                        double k_fraction) {
  std::vector<std::uint8_t> in(base.size(), 0);
  for (int m : community) {
    if (m < 0 || static_cast<std::size_t>(m) >= base.size()) throw DomainError("community member out of range");
    in[m] = 1;
  }
  return dependency_ratio(mutual_similarity_vector(element, base), in, k_fraction);
}

FilterResult targeted_filtering(std::span<const NeighborTable> layer_tables,
                                const std::vector<std::vector<int>>& outliers, const FilterOptions& options,
                                const VoidFractions* voids, unsigned threads) {
  FilterResult result;
  if (outliers.empty()) return result;
  if (layer_tables.empty()) throw DomainError("no layer tables");
  const NeighborTable& first = layer_tables.front();
  const std::size_t b = first.collections();
  const std::size_t total = first.total_elements();

  std::vector<std::vector<std::uint8_t>> masks(outliers.size(), std::vector<std::uint8_t>(b, 0));
  for (std::size_t m = 0; m < outliers.size(); ++m)
    for (int c : outliers[m]) {
      if (c < 0 || static_cast<std::size_t>(c) >= b) throw DomainError("community member out of range");
      masks[m][c] = 1;
    }

  // ratio[m][flat]; NaN marks skipped (void) elements.
  std::vector<std::vector<double>> ratio(outliers.size(), std::vector<double>(total, std::nan("")));
  parallel_for(
      b,
      [&](std::size_t c) {
        for (std::size_t h = 0; h < first.elements(static_cast<int>(c)); ++h) {
          if (voids && (*voids)[c][h] > options.void_threshold) continue;
          const auto rec = aggregated_record(layer_tables, static_cast<int>(c), static_cast<int>(h));
          const std::size_t flat = first.flat_index(static_cast<int>(c), static_cast<int>(h));
          for (std::size_t m = 0; m < outliers.size(); ++m)
            ratio[m][flat] = dependency_ratio(rec, masks[m], options.k_fraction);
        }
      },
      threads);

  for (std::size_t m = 0; m < outliers.size(); ++m) {
    CommunityFilter info;
    info.community_id = static_cast<int>(m);
    info.members = outliers[m];
    std::vector<double> reference;
    for (std::size_t c = 0; c < b; ++c) {
      if (masks[m][c]) continue;
      for (std::size_t h = 0; h < first.elements(static_cast<int>(c)); ++h) {
        const double r = ratio[m][first.flat_index(static_cast<int>(c), static_cast<int>(h))];
        if (!std::isnan(r)) reference.push_back(r);
      }
    }
    if (reference.empty()) throw DomainError("no element outside the community to set its threshold");
    info.theta = percentile(std::move(reference), options.theta_percentile);
    for (int c : outliers[m]) {
      for (std::size_t h = 0; h < first.elements(c); ++h) {
        const double r = ratio[m][first.flat_index(c, static_cast<int>(h))];
        if (!std::isnan(r) && r > info.theta && result.exclusions.insert(c, static_cast<int>(h))) ++info.excluded;
      }
    }
    result.communities.push_back(std::move(info));
  }
  return result;
}

}  // namespace codegraph
