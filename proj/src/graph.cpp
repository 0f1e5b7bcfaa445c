#include "codegraph/graph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "codegraph/error.hpp"
#include "codegraph/npy.hpp"
#include "codegraph/parallel.hpp"

namespace codegraph {

void AnomalySimilarityGraph::add(std::size_t i, std::size_t j, std::int64_t w) {
  if (i >= nodes_ || j >= nodes_) throw DomainError("graph node out of range");
  if (i == j) throw DomainError("self loops are not allowed");
  weights_[i * nodes_ + j] += w;
  weights_[j * nodes_ + i] += w;
}

std::size_t AnomalySimilarityGraph::degree(std::size_t i) const {
  std::size_t d = 0;
  for (std::size_t j = 0; j < nodes_; ++j) d += weight(i, j) > 0 ? 1 : 0;
  return d;
}

std::int64_t AnomalySimilarityGraph::total_weight() const {
  std::int64_t total = 0;
  for (std::size_t i = 0; i < nodes_; ++i)
    for (std::size_t j = i + 1; j < nodes_; ++j) total += weight(i, j);
  return total;
}

std::vector<double> AnomalySimilarityGraph::edge_weights() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < nodes_; ++i)
    for (std::size_t j = i + 1; j < nodes_; ++j)
      if (weight(i, j) > 0) out.push_back(static_cast<double>(weight(i, j)));
  return out;
}

void AnomalySimilarityGraph::write_edge_list(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "# i j w\n";
  for (std::size_t i = 0; i < nodes_; ++i)
    for (std::size_t j = i + 1; j < nodes_; ++j)
      if (weight(i, j) > 0) out << i << ' ' << j << ' ' << weight(i, j) << '\n';
}

void AnomalySimilarityGraph::write_adjacency(const std::filesystem::path& path) const {
  npy::write(path, npy::make_int64({nodes_, nodes_}, weights_));
}

AnomalySimilarityGraph AnomalySimilarityGraph::read_edge_list(const std::filesystem::path& path, std::size_t nodes) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open edge list: " + path.string());
  AnomalySimilarityGraph g(nodes);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::size_t i = 0, j = 0;
    std::int64_t w = 0;
    if (!(row >> i >> j >> w)) throw SchemaError("bad edge line: " + line);
    g.add(i, j, w);
  }
  return g;
}

void append_candidates(const MutualSimilarityRecord& record, const CandidateOptions& options,
                       std::vector<SuspiciousLink>& out) {
  if (record.size() < 2) return;
  const std::size_t omega = reference_index(record.size(), options.omega_fraction);
  for (std::size_t i = 1; i < omega; ++i) {
    SuspiciousLink link;
    link.collection = record.element.collection;
    link.position = record.element.position;
    link.rank = static_cast<int>(i);
    link.target = record.sources[i - 1];
    link.zeta = weighted_endurance_ratio(record, i, options.omega_fraction, options.alpha);
    out.push_back(link);
  }
}

void sort_candidates(std::vector<SuspiciousLink>& links) {
  std::sort(links.begin(), links.end(), [](const SuspiciousLink& a, const SuspiciousLink& b) {
    if (a.zeta != b.zeta) return a.zeta < b.zeta;
    if (a.collection != b.collection) return a.collection < b.collection;
    if (a.position != b.position) return a.position < b.position;
    return a.rank < b.rank;
  });
}

namespace {

bool is_void(const VoidFractions* voids, const CandidateOptions& options, int c, int h) {
  return voids && (*voids)[c][h] > options.void_threshold;
}

}  // namespace

std::vector<SuspiciousLink> candidate_links(std::span<const MutualSimilarityRecord> records,
                                            const CandidateOptions& options, const VoidFractions* voids) {
  std::vector<SuspiciousLink> out;
  for (const auto& r : records) {
    if (is_void(voids, options, r.element.collection, r.element.position)) continue;
    append_candidates(r, options, out);
  }
  sort_candidates(out);
  return out;
}

std::vector<SuspiciousLink> candidate_links(std::span<const NeighborTable> layer_tables,
                                            const CandidateOptions& options, const VoidFractions* voids,
                                            unsigned threads) {
  if (layer_tables.empty()) throw DomainError("no layer tables");
  const auto& first = layer_tables.front();
  if (first.collections() < 3) throw DomainError("candidate links need at least 3 collections");
  const std::size_t b = first.collections();
  std::vector<std::vector<SuspiciousLink>> per_collection(b);
  parallel_for(
      b,
      [&](std::size_t c) {
        for (std::size_t h = 0; h < first.elements(static_cast<int>(c)); ++h) {
          if (is_void(voids, options, static_cast<int>(c), static_cast<int>(h))) continue;
          const auto r = aggregated_record(layer_tables, static_cast<int>(c), static_cast<int>(h));
          append_candidates(r, options, per_collection[c]);
        }
      },
      threads);
  std::vector<SuspiciousLink> out;
  for (auto& v : per_collection) out.insert(out.end(), v.begin(), v.end());
  sort_candidates(out);
  return out;
}

AnomalySimilarityGraph build_graph(std::span<const SuspiciousLink> links, std::size_t nodes) {
  AnomalySimilarityGraph g(nodes);
  for (const auto& l : links) {
    if (l.target == l.collection) throw DomainError("link targets its own collection");
    g.add(static_cast<std::size_t>(l.collection), static_cast<std::size_t>(l.target));
  }
  return g;
}

AnomalySimilarityGraph build_layer_resolved_graph(std::span<const SuspiciousLink> links,
                                                  std::span<const NeighborTable> layer_tables) {
  if (layer_tables.empty()) throw DomainError("no layer tables");
  AnomalySimilarityGraph g(layer_tables.front().collections());
  for (const auto& l : links) {
    for (const auto& t : layer_tables) {
      const auto r = t.record(l.collection, l.position);
      g.add(static_cast<std::size_t>(l.collection), static_cast<std::size_t>(r.sources.at(l.rank - 1)));
    }
  }
  return g;
}

CoverageSelection select_by_coverage(std::span<const SuspiciousLink> sorted_candidates, double target_coverage,
                                     std::size_t nodes, std::span<const std::uint8_t> active) {
  if (nodes < 2) throw DomainError("coverage selection needs at least 2 nodes");
  if (!active.empty() && active.size() != nodes) throw DomainError("active mask does not match node count");
  CoverageSelection sel;
  sel.batch_size = nodes * (nodes - 1) / 2;
  sel.counted_nodes = active.empty() ? nodes : static_cast<std::size_t>(std::count(active.begin(), active.end(), 1));

  std::vector<std::uint8_t> touched(nodes, 0);
  std::size_t covered = 0;
  auto coverage = [&] {
    return sel.counted_nodes == 0 ? 1.0 : static_cast<double>(covered) / static_cast<double>(sel.counted_nodes);
  };
  auto touch = [&](int n) {
    if (touched[n]) return;
    touched[n] = 1;
    if (active.empty() || active[n]) ++covered;
  };

  std::size_t used = 0;
  while (coverage() < target_coverage && used < sorted_candidates.size()) {
    const std::size_t end = std::min(sorted_candidates.size(), used + sel.batch_size);
    for (; used < end; ++used) {
      touch(sorted_candidates[used].collection);
      touch(sorted_candidates[used].target);
    }
    ++sel.batches;
  }
  sel.links.assign(sorted_candidates.begin(), sorted_candidates.begin() + static_cast<std::ptrdiff_t>(used));
  sel.graph = build_graph(sel.links, nodes);
  sel.coverage = coverage();
  sel.target_reached = sel.coverage >= target_coverage;
  return sel;
}

}  // namespace codegraph
