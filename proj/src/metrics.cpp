#include "codegraph/metrics.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <numeric>

#include "codegraph/error.hpp"
#include "codegraph/percentile.hpp"

namespace codegraph {

namespace {

void check_inputs(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DomainError("scores and labels differ in length");
  for (auto l : labels)
    if (l > 1) throw DomainError("labels must be 0 or 1");
}

std::size_t positives(std::span<const std::uint8_t> labels) {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

// Indices ordered by descending score.
std::vector<std::size_t> descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_inputs(scores, labels);
  const std::size_t pos = positives(labels);
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw DomainError("AUROC needs both classes");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the Mann-Whitney U, with average ranks for ties; integral, so the
  // final division is the only rounding.
  std::uint64_t twice_rank_sum = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t twice_avg = (i + 1) + j;  // 2 * mean of ranks i+1..j
    std::uint64_t pos_in_group = 0;
    for (std::size_t k = i; k < j; ++k) pos_in_group += labels[order[k]];
    twice_rank_sum += twice_avg * pos_in_group;
    i = j;
  }
  const std::uint64_t twice_u = twice_rank_sum - static_cast<std::uint64_t>(pos) * (pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_inputs(scores, labels);
  const std::size_t pos = positives(labels);
  if (pos == 0) throw DomainError("average precision needs a positive");
  const auto order = descending(scores);
  double ap = 0.0;
  std::size_t tp = 0, prev_tp = 0, seen = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += labels[order[j]];
      ++j;
    }
    seen = j;
    if (tp != prev_tp) {
      const double precision = static_cast<double>(tp) / static_cast<double>(seen);
      ap += (static_cast<double>(tp) / pos - static_cast<double>(prev_tp) / pos) * precision;
      prev_tp = tp;
    }
    i = j;
  }
  return ap;
}

F1Result f1_max(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_inputs(scores, labels);
  const std::size_t pos = positives(labels);
  if (pos == 0) throw DomainError("F1 needs a positive");
  const auto order = descending(scores);
  F1Result best;
  best.f1 = -1.0;
  std::size_t tp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += labels[order[j]];
      ++j;
    }
    // j predictions at threshold scores[order[i]]; F1 = 2tp / (predicted + positives).
    const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(j + pos);
    if (f1 >= best.f1) {
      best.f1 = f1;
      best.threshold = scores[order[i]];
    }
    i = j;
  }
  return best;
}

std::vector<int> connected_components(std::span<const std::uint8_t> mask, std::span<const std::size_t> shape,
                                      int* count) {
  if (shape.size() != 2 && shape.size() != 3) throw DomainError("components need a 2D or 3D mask");
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  if (mask.size() != n) throw DomainError("mask does not match shape");
  const std::array<long, 3> dims = shape.size() == 2 ? std::array<long, 3>{1, long(shape[0]), long(shape[1])}
                                                     : std::array<long, 3>{long(shape[0]), long(shape[1]), long(shape[2])};
  std::vector<int> label(n, -1);
  int next = 0;
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (!mask[seed] || label[seed] >= 0) continue;
    label[seed] = next;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      const long z = static_cast<long>(cur) / (dims[1] * dims[2]);
      const long y = (static_cast<long>(cur) / dims[2]) % dims[1];
      const long x = static_cast<long>(cur) % dims[2];
      for (long dz = -1; dz <= 1; ++dz)
        for (long dy = -1; dy <= 1; ++dy)
          for (long dx = -1; dx <= 1; ++dx) {
            const long nz = z + dz, ny = y + dy, nx = x + dx;
            if (nz < 0 || ny < 0 || nx < 0 || nz >= dims[0] || ny >= dims[1] || nx >= dims[2]) continue;
            const auto nb = static_cast<std::size_t>((nz * dims[1] + ny) * dims[2] + nx);
            if (mask[nb] && label[nb] < 0) {
              label[nb] = next;
              stack.push_back(nb);
            }
          }
    }
    ++next;
  }
  if (count) *count = next;
  return label;
}

double aupro(std::span<const MapSample> samples, double fpr_cap) {
  if (!(fpr_cap > 0.0 && fpr_cap <= 1.0)) throw DomainError("FPR cap must be in (0, 1]");
  // Each cell contributes to either the background count or one region.
  struct Cell {
    double score;
    int region;  // -1 background
  };
  std::vector<Cell> cells;
  std::vector<double> region_size;
  std::size_t background = 0;
  for (const auto& s : samples) {
    if (s.scores.size() != s.mask.size()) throw DomainError("map and mask differ in size");
    int count = 0;
    const auto labels = connected_components(s.mask, s.shape, &count);
    const int offset = static_cast<int>(region_size.size());
    region_size.resize(region_size.size() + count, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0) {
        ++background;
        cells.push_back({s.scores[i], -1});
      } else {
        region_size[offset + labels[i]] += 1.0;
        cells.push_back({s.scores[i], offset + labels[i]});
      }
    }
  }
  if (region_size.empty()) throw DomainError("AUPRO needs at least one anomalous region");
  if (background == 0) throw DomainError("AUPRO needs background cells");

  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) { return a.score > b.score; });
  const double regions = static_cast<double>(region_size.size());
  double fp = 0.0, pro_sum = 0.0;  // pro_sum = sum over regions of overlap
  double prev_fpr = 0.0, prev_pro = 0.0, area = 0.0;
  std::size_t i = 0;
  while (i < cells.size()) {
    std::size_t j = i;
    while (j < cells.size() && cells[j].score == cells[i].score) {
      if (cells[j].region < 0) fp += 1.0;
      else pro_sum += 1.0 / region_size[cells[j].region];
      ++j;
    }
    const double fpr = fp / static_cast<double>(background);
    const double pro = pro_sum / regions;
    if (fpr >= fpr_cap) {
      const double t = fpr > prev_fpr ? (fpr_cap - prev_fpr) / (fpr - prev_fpr) : 0.0;
      const double pro_at_cap = prev_pro + t * (pro - prev_pro);
      area += (fpr_cap - prev_fpr) * (prev_pro + pro_at_cap) / 2.0;
      return area / fpr_cap;
    }
    area += (fpr - prev_fpr) * (prev_pro + pro) / 2.0;
    prev_fpr = fpr;
    prev_pro = pro;
    i = j;
  }
  return area / fpr_cap;
}

double dice(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) throw DomainError("mask shapes differ");
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] != 0, b = gt[i] != 0;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

std::vector<std::uint8_t> downsample_mask_maxpool(std::span<const std::uint8_t> mask,
                                                  std::span<const std::size_t> shape, std::size_t p,
                                                  std::vector<std::size_t>* grid_shape) {
  if (p == 0) throw DomainError("pool size must be positive");
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  if (mask.size() != n) throw DomainError("mask does not match shape");
  std::vector<std::size_t> grid(shape.size());
  for (std::size_t a = 0; a < shape.size(); ++a) grid[a] = (shape[a] + p - 1) / p;
  std::vector<std::size_t> grid_strides(shape.size(), 1);
  for (std::size_t a = shape.size(); a-- > 1;) grid_strides[a - 1] = grid_strides[a] * grid[a];
  std::vector<std::uint8_t> out(std::accumulate(grid.begin(), grid.end(), std::size_t{1}, std::multiplies<>()), 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    std::size_t rem = i, g = 0;
    for (std::size_t a = shape.size(); a-- > 0;) {
      const std::size_t coord = rem % shape[a];
      rem /= shape[a];
      g += (coord / p) * grid_strides[a];
    }
    out[g] = 1;
  }
  if (grid_shape) *grid_shape = grid;
  return out;
}

std::vector<PatchType> label_patch_types(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                         double pct) {
  check_inputs(scores, labels);
  std::vector<double> normal;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!labels[i]) normal.push_back(scores[i]);
  if (normal.empty()) throw DomainError("no normal patches");
  const double cut = percentile(std::move(normal), pct);
  std::vector<PatchType> out(scores.size(), PatchType::kNormal);
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (labels[i]) out[i] = scores[i] < cut ? PatchType::kConsistent : PatchType::kInconsistent;
  return out;
}

}  // namespace codegraph
