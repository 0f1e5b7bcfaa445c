#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace codegraph {

/// Mann-Whitney AUROC with ties counted as one half.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Sum over distinct thresholds (descending) of (recall step) * precision.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct F1Result {
  double f1 = 0.0;
  double threshold = 0.0;  // predictions are score >= threshold
};

/// Best F1 over thresholds at distinct score values; the smallest threshold
/// reaching the maximum is returned.
F1Result f1_max(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// A score map with its binary ground truth, both C-order over shape (2D or 3D).
struct MapSample {
  std::vector<std::size_t> shape;
  std::vector<double> scores;
  std::vector<std::uint8_t> mask;
};

/// Connected components of a binary mask (8-connectivity in 2D, 26 in 3D).
/// Returns a label per cell: -1 for background, otherwise 0..count-1.
std::vector<int> connected_components(std::span<const std::uint8_t> mask, std::span<const std::size_t> shape,
                                      int* count = nullptr);

/// Area under the per-region-overlap vs false-positive-rate curve, from
/// FPR 0 up to fpr_cap, divided by fpr_cap.
double aupro(std::span<const MapSample> samples, double fpr_cap = 0.3);

/// 2|P & G| / (|P| + |G|); 1 when both masks are empty.
double dice(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

/// Token-grid mask: a token is set iff any voxel of its p-sided block is set.
/// Trailing partial blocks are padded with zeros.
std::vector<std::uint8_t> downsample_mask_maxpool(std::span<const std::uint8_t> mask,
                                                  std::span<const std::size_t> shape, std::size_t p,
                                                  std::vector<std::size_t>* grid_shape = nullptr);

enum class PatchType : std::uint8_t { kNormal = 0, kConsistent = 1, kInconsistent = 2 };

/// Anomalous patches scoring below the 80th percentile of normal-patch scores
/// are consistent, the rest inconsistent.
std::vector<PatchType> label_patch_types(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                         double pct = 80.0);

}  // namespace codegraph
