#pragma once

// Direct, quadratic-time reference implementations used to check the metric code.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

namespace oracle {

inline double auroc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (y[i])
      for (std::size_t j = 0; j < s.size(); ++j)
        if (!y[j]) {
          pairs += 1.0;
          wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
  return wins / pairs;
}

inline std::vector<double> thresholds_descending(const std::vector<double>& s) {
  std::set<double> t(s.begin(), s.end());
  return {t.rbegin(), t.rend()};
}

struct Counts {
  double tp = 0, fp = 0, positives = 0;
};

inline Counts counts_at(const std::vector<double>& s, const std::vector<std::uint8_t>& y, double t) {
  Counts c;
  for (std::size_t i = 0; i < s.size(); ++i) {
    c.positives += y[i];
    if (s[i] >= t) (y[i] ? c.tp : c.fp) += 1.0;
  }
  return c;
}

/// Step-wise area under the precision-recall curve over all distinct thresholds.
inline double average_precision(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds_descending(s)) {
    const auto c = counts_at(s, y, t);
    const double recall = c.tp / c.positives;
    const double precision = c.tp / (c.tp + c.fp);
    if (c.tp > 0) ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

inline double f1_max(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double best = 0.0;
  for (double t : thresholds_descending(s)) {
    const auto c = counts_at(s, y, t);
    const double fn = c.positives - c.tp;
    best = std::max(best, 2.0 * c.tp / (2.0 * c.tp + c.fp + fn));
  }
  return best;
}

/// Union-find labelling with full (8 or 26) neighbourhoods.
inline std::vector<int> components(const std::vector<std::uint8_t>& mask, const std::vector<std::size_t>& shape,
                                   int& count) {
  const std::size_t d = shape.size();
  const std::size_t n = mask.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  auto coords = [&](std::size_t i) {
    std::vector<long> c(d);
    for (std::size_t a = d; a-- > 0;) {
      c[a] = static_cast<long>(i % shape[a]);
      i /= shape[a];
    }
    return c;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!mask[i] || !mask[j]) continue;
      const auto a = coords(i), b = coords(j);
      bool adjacent = true;
      for (std::size_t k = 0; k < d; ++k) adjacent = adjacent && std::abs(a[k] - b[k]) <= 1;
      if (adjacent) parent[find(i)] = find(j);
    }
  std::vector<int> label(n, -1), root_label(n, -1);
  count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const std::size_t r = find(i);
    if (root_label[r] < 0) root_label[r] = count++;
    label[i] = root_label[r];
  }
  return label;
}

struct Map {
  std::vector<std::size_t> shape;
  std::vector<double> scores;
  std::vector<std::uint8_t> mask;
};

/// PRO curve evaluated at every distinct threshold, integrated by trapezoids up
/// to the cap (linear interpolation of the crossing segment), normalised by the cap.
inline double aupro(const std::vector<Map>& maps, double cap) {
  std::vector<double> all;
  for (const auto& m : maps) all.insert(all.end(), m.scores.begin(), m.scores.end());
  std::vector<std::vector<int>> labels;
  std::vector<int> counts;
  double background = 0.0;
  for (const auto& m : maps) {
    int c = 0;
    labels.push_back(components(m.mask, m.shape, c));
    counts.push_back(c);
    for (auto v : m.mask) background += v ? 0.0 : 1.0;
  }
  std::vector<std::pair<double, double>> curve{{0.0, 0.0}};
  for (double t : thresholds_descending(all)) {
    double fp = 0.0, pro = 0.0, regions = 0.0;
    for (std::size_t k = 0; k < maps.size(); ++k) {
      std::vector<double> hit(counts[k], 0.0), size(counts[k], 0.0);
      for (std::size_t i = 0; i < maps[k].scores.size(); ++i) {
        const bool on = maps[k].scores[i] >= t;
        if (labels[k][i] < 0) fp += on;
        else {
          size[labels[k][i]] += 1.0;
          hit[labels[k][i]] += on;
        }
      }
      for (int r = 0; r < counts[k]; ++r) pro += hit[r] / size[r];
      regions += counts[k];
    }
    curve.emplace_back(fp / background, pro / regions);
  }
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    auto [x0, y0] = curve[i - 1];
    auto [x1, y1] = curve[i];
    if (x0 >= cap) break;
    if (x1 > cap) {
      y1 = y0 + (y1 - y0) * (cap - x0) / (x1 - x0);
      x1 = cap;
    }
    area += (x1 - x0) * (y0 + y1) / 2.0;
  }
  return area / cap;
}

inline std::vector<std::uint8_t> maxpool(const std::vector<std::uint8_t>& mask, const std::vector<std::size_t>& shape,
                                         std::size_t p) {
  std::vector<std::size_t> grid;
  for (auto s : shape) grid.push_back((s + p - 1) / p);
  std::size_t cells = 1;
  for (auto g : grid) cells *= g;
  std::vector<std::uint8_t> out(cells, 0);
  for (std::size_t t = 0; t < cells; ++t) {
    std::vector<std::size_t> tc(grid.size());
    std::size_t rem = t;
    for (std::size_t a = grid.size(); a-- > 0;) {
      tc[a] = rem % grid[a];
      rem /= grid[a];
    }
    for (std::size_t i = 0; i < mask.size() && !out[t]; ++i) {
      std::size_t r = i;
      bool inside = true;
      for (std::size_t a = shape.size(); a-- > 0;) {
        inside = inside && (r % shape[a]) / p == tc[a];
        r /= shape[a];
      }
      if (inside && mask[i]) out[t] = 1;
    }
  }
  return out;
}

}  // namespace oracle
