#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "codegraph/error.hpp"

namespace codegraph {

/// Percentile with linear interpolation between closest ranks (the default
/// numpy rule): position p/100 * (n-1) in the sorted sample. Used everywhere a
/// percentile or quartile is needed.
inline double percentile_sorted(std::span<const double> sorted, double pct) {
  if (sorted.empty()) throw DomainError("percentile of empty sample");
  if (!(pct >= 0.0 && pct <= 100.0)) throw DomainError("percentile outside [0, 100]");
  const double pos = pct / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double percentile(std::vector<double> values, double pct) {
  std::sort(values.begin(), values.end());
  return percentile_sorted(values, pct);
}

}  // namespace codegraph
