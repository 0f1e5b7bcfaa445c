#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "codegraph/community.hpp"
#include "codegraph/dataset.hpp"
#include "codegraph/error.hpp"
#include "codegraph/graph.hpp"
#include "codegraph/scoring.hpp"

namespace codegraph {

inline constexpr const char* kVersion = "0.1.0";

/// Error raised inside a pipeline stage; what() is prefixed with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct PipelineConfig {
  std::filesystem::path manifest;
  std::filesystem::path output = "run";
  std::vector<int> layers{6, 12, 18, 24};
  std::vector<int> receptive_fields{1, 3, 5};
  double k_fraction = 0.10;
  double omega_fraction = 0.3;
  double alpha = 0.2;
  double coverage = 0.95;
  double k_iqr = 4.5;
  double theta_percentile = 99.0;
  double gamma_percentile = 25.0;
  double eta = 1.0;        // CLS screening for graph construction
  double final_eta = 1.0;  // CLS screening for final scoring
  std::size_t subsets = 1;
  bool skip_refine = false;
  bool layer_resolved_edges = false;
  double void_threshold = 0.5;
  double aupro_cap = 0.3;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::vector<std::string> warnings;
};

/// Applies defaults for absent keys and checks ranges; every violation is
/// reported in one SchemaError.
PipelineConfig validate_config(const nlohmann::json& doc);
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const PipelineConfig& config);

struct EngineOptions {
  std::vector<int> receptive_fields{1, 3, 5};
  double k_fraction = 0.10;
  double omega_fraction = 0.3;
  double alpha = 0.2;
  double coverage = 0.95;
  double k_iqr = 4.5;
  double theta_percentile = 99.0;
  double gamma_percentile = 25.0;
  bool skip_refine = false;
  bool layer_resolved_edges = false;
  double void_threshold = 0.5;
  std::uint64_t seed = 0;
  unsigned threads = 0;

  static EngineOptions from(const PipelineConfig& config);
};

/// Everything produced by one base set.
struct EngineResult {
  std::size_t collections = 0;
  std::vector<double> plain_scores;  // multi-layer multi-scale score on the full base
  std::vector<double> final_scores;  // after refinement (equal to plain when skipped)
  std::vector<std::uint8_t> invalidated;  // per element: some comparison changed under masking
  std::size_t candidates = 0;
  CoverageSelection selection;
  double gamma = 0.0;
  Partition partition;
  OutlierReport outliers;
  FilterResult filter;
  std::vector<std::string> warnings;
};

/// Runs graph construction, refinement and final scoring on one base set.
/// stage_screen and final_screen restrict comparisons (nullptr: all pairs).
EngineResult run_engine(std::shared_ptr<const LayerBases> layers, const EngineOptions& options,
                        const ScreenSets* stage_screen = nullptr, const ScreenSets* final_screen = nullptr,
                        const VoidFractions* voids = nullptr);

/// Loads the layers of a manifest (normalised tokens).
std::shared_ptr<LayerBases> load_layer_bases(const DatasetManifest& manifest, const std::vector<int>& layers);

/// Per-collection token ground truth: each mask max-pooled onto the token grid.
std::vector<std::vector<std::uint8_t>> token_labels(const DatasetManifest& manifest,
                                                    const std::vector<std::size_t>& grid_shape);

/// Per-collection void fractions from foreground masks (3D), or nullopt when
/// the manifest has none.
std::optional<VoidFractions> load_void_fractions(const DatasetManifest& manifest,
                                                 const std::vector<std::size_t>& grid_shape);

struct Metrics {
  std::optional<double> image_auroc;
  std::optional<double> image_ap;
  std::optional<double> image_f1;
  std::optional<double> pixel_auroc;
  std::optional<double> pixel_ap;
  std::optional<double> pixel_f1;
  std::optional<double> aupro;
  nlohmann::json to_json() const;
};

/// Image- and pixel-level metrics of upsampled maps against the manifest masks.
/// Metrics whose preconditions fail (e.g. a single class) are left empty.
Metrics evaluate_maps(const DatasetManifest& manifest, const std::vector<AnomalyMap>& maps, double aupro_cap = 0.3);

/// Full run: loads the manifest, runs the engine on each subset and writes
/// config, report, graph, communities, exclusions, maps, scores and metrics
/// into config.output. Returns the report.
nlohmann::json run_pipeline(const PipelineConfig& config);

/// Builds anomaly maps (token grid and original resolution) from flat scores.
std::vector<AnomalyMap> build_maps(const DatasetManifest& manifest, const LayerBases& layers,
                                   const std::vector<double>& flat_scores);

void write_scores_csv(const std::filesystem::path& path, const DatasetManifest& manifest,
                      const std::vector<AnomalyMap>& maps);

}  // namespace codegraph
