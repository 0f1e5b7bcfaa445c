#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace codegraph {

/// Standard normal CDF.
double normal_cdf(double x);

/// Inverse standard normal CDF: rational approximation refined by one Halley
/// step; |Phi(Phi^-1(q)) - q| < 1e-14 on [1e-10, 1 - 1e-10].
double normal_quantile(double q);

/// Scores at or below the q_fit percentile (linear interpolation).
std::vector<double> truncate_scores(std::span<const double> scores, double q_fit = 0.95);

enum class EmMode {
  kTruncated,  // likelihood of the sample conditioned on s <= truncation point
  kPlain,
};

struct GmmOptions {
  EmMode mode = EmMode::kTruncated;
  double tolerance = 1e-6;  // on the per-sample log-likelihood change
  int max_iterations = 500;
};

struct GmmComponents {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;
  double log_likelihood = 0.0;
  double bic = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct GmmFit {
  int k = 1;
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;
  std::array<double, 2> bic{0.0, 0.0};  // K = 1, K = 2
  bool converged = true;
  /// Affine map to the space the fit was computed in: z = (s - center) / scale.
  double center = 0.0;
  double scale = 1.0;
  std::optional<double> truncation;
};

/// Fits K = 1 and K = 2 mixtures by EM and keeps the lower BIC. With a
/// truncation point and kTruncated, the likelihood is that of the mixture
/// conditioned on s <= truncation. Requires at least 20 samples.
GmmFit fit_gmm(std::span<const double> fitting_set, std::optional<double> truncation = std::nullopt,
               const GmmOptions& options = {});

struct ThresholdDecision {
  double q_fit = 0.95;
  double q_comp = 0.99;
  std::vector<double> thresholds;  // t_j per component
  double cutoff = 0.0;             // max_j t_j
  double center = 0.0;
  double scale = 1.0;
  double standardized_cutoff = 0.0;  // (cutoff - center) / scale, as compared by binarize
};

ThresholdDecision adaptive_cutoff(const GmmFit& fit, double q_comp = 0.99, double q_fit = 0.95);

/// 1 where map >= cutoff.
std::vector<std::uint8_t> binarize(std::span<const double> map, double cutoff);

/// Same rule evaluated in the fit's standardised coordinates, which makes the
/// mask exactly invariant under affine maps that are exact in floating point.
std::vector<std::uint8_t> binarize(std::span<const double> map, const ThresholdDecision& decision);

struct PseudoMaskResult {
  GmmFit fit;
  ThresholdDecision decision;
  std::vector<std::uint8_t> mask;
};

/// truncate_scores, fit_gmm, adaptive_cutoff and binarize in sequence.
PseudoMaskResult pseudo_mask(std::span<const double> scores, double q_fit = 0.95, double q_comp = 0.99,
                             const GmmOptions& options = {});

}  // namespace codegraph
