#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "codegraph/mutual.hpp"

namespace codegraph {

/// alpha_k = 1 / ((1/k) sum_{i<=k} ln S_(i) - ln S_(k+1)) over the samples in
/// descending order. Requires n > k >= 1 and positive samples.
double hill_estimator(std::span<const double> samples, std::size_t k);

struct HillCurve {
  std::vector<std::size_t> ks;
  std::vector<double> estimates;
};

/// Estimates for k in [k_min, k_max]; k_max = 0 means n - 1.
HillCurve hill_curve(std::span<const double> samples, std::size_t k_min = 1, std::size_t k_max = 0);

/// Median estimate over k in [ceil(0.05 n), floor(0.2 n)].
double hill_plateau(const HillCurve& curve, std::size_t n);

struct PowerLawFit {
  double alpha = 0.0;      // negated log-log slope
  double intercept = 0.0;  // log-log intercept
  double r_squared = 0.0;
  std::size_t points = 0;
};

/// OLS of ln y on ln x; points with y <= 0 are dropped and at least 3 must remain.
PowerLawFit fit_power_law(std::span<const double> x, std::span<const double> y);

/// Mean growth rate per rank i = 1..len-1 over records of equal length.
std::vector<double> mean_growth_rates(std::span<const MutualSimilarityRecord> records);

/// Log-spacings ln Y_(i+1) - ln Y_(i) of omega ascending Beta(alpha0, 1) order
/// statistics, one row per replicate.
struct SpacingSamples {
  double alpha0 = 0.0;
  std::size_t omega = 0;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
  std::vector<double> spacings;  // replicates x (omega - 1)

  double at(std::size_t replicate, std::size_t i) const { return spacings[replicate * (omega - 1) + (i - 1)]; }
  double mean(std::size_t i) const;
  double variance(std::size_t i) const;
  double correlation(std::size_t i, std::size_t j) const;
};

SpacingSamples sample_beta_order_stats(double alpha0, std::size_t omega, std::size_t replicates, std::uint64_t seed,
                                       unsigned threads = 0);

struct PoissonReference {
  std::vector<double> point;
  std::vector<double> inverse_distances;
  HillCurve curve;
  double plateau = 0.0;
};

struct PoissonToyResult {
  std::size_t points = 0;
  std::uint64_t seed = 0;
  std::vector<PoissonReference> references;
};

/// Homogeneous Poisson process of the given intensity on [0, domain]^d; Hill
/// curves of the inverse distances from each reference point.
PoissonToyResult poisson_toy_model(double intensity, double domain, std::size_t d,
                                   const std::vector<std::vector<double>>& references, std::uint64_t seed);

struct QQPoint {
  double empirical = 0.0;
  double theoretical = 0.0;
};

struct QQResult {
  std::vector<QQPoint> points;
  double ks = 0.0;  // Kolmogorov-Smirnov distance to Beta(alpha0, beta)
};

/// Empirical quantiles against Beta(alpha0, beta) quantiles at (i - 0.5) / n.
QQResult qq_beta(std::span<const double> ratios, double alpha0, double beta = 1.0);

/// Maximum likelihood alpha of Beta(alpha, 1): -n / sum ln z. Ratios >= 1 are
/// floored to 1 - 1e-12.
double fit_beta_alpha(std::span<const double> ratios);

}  // namespace codegraph
