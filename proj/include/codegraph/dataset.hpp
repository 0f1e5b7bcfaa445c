#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace codegraph {

enum class Modality { k2D, k3D };

/// Dense row-major float matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  std::span<float> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

/// Tokens of one collection (image or volume) at one layer. Positions are the
/// C-order linearisation of grid_shape.
struct FeatureTensor {
  int collection_id = 0;
  int layer_id = 0;
  std::vector<std::size_t> grid_shape;
  Matrix tokens;
  /// 1 for rows whose norm was zero at normalisation time.
  std::vector<std::uint8_t> zero_rows;

  std::size_t size() const { return tokens.rows; }
  std::size_t dim() const { return tokens.cols; }
};

/// L2-normalises every row in place; all-zero rows are left untouched and
/// flagged in zero_rows.
void normalize_rows(FeatureTensor& tensor);

struct CollectionEntry {
  int id = 0;
  std::string name;
  std::map<int, std::filesystem::path> features;  // layer -> token file
  std::vector<std::size_t> shape;                 // original image / volume shape
  std::optional<std::filesystem::path> mask;
  std::optional<std::filesystem::path> foreground;
  std::optional<std::filesystem::path> cls;
};

struct DatasetManifest {
  Modality modality = Modality::k2D;
  std::vector<CollectionEntry> collections;  // index == id
  std::vector<int> layers;
  std::optional<std::vector<std::size_t>> grid;  // needed only for rank-2 token files
  std::filesystem::path root;

  std::size_t size() const { return collections.size(); }
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Loads one (collection, layer) token file. Rows are L2-normalised unless
/// normalize is false.
FeatureTensor load_features(const DatasetManifest& manifest, int collection_id, int layer_id, bool normalize = true);
/// Loads a layer for every collection and checks that D agrees.
std::vector<FeatureTensor> load_layer(const DatasetManifest& manifest, int layer_id, bool normalize = true);
/// Writes tokens as float32 with shape grid_shape + (D).
void write_features(const std::filesystem::path& path, const FeatureTensor& tensor);

struct GroundTruthMask {
  int collection_id = 0;
  std::vector<std::size_t> shape;
  std::vector<std::uint8_t> values;  // 0 or 1, C-order
};

/// Reads an 8-bit mask and checks values and shape against the manifest entry.
GroundTruthMask load_mask(const DatasetManifest& manifest, int collection_id);
std::optional<GroundTruthMask> load_foreground(const DatasetManifest& manifest, int collection_id);
/// Final-layer CLS token of each collection, L2-normalised.
std::vector<std::vector<float>> load_cls_tokens(const DatasetManifest& manifest);

/// Set of (collection, position) pairs removed from the base set.
class ExclusionSet {
 public:
  using Entry = std::pair<int, int>;

  bool insert(int collection, int position);
  bool contains(int collection, int position) const { return entries_.count({collection, position}) > 0; }
  void merge(const ExclusionSet& other);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::set<Entry>& entries() const { return entries_; }

  /// Per-collection byte masks; throws DomainError if a position is out of range.
  std::vector<std::vector<std::uint8_t>> to_masks(std::span<const std::size_t> collection_sizes) const;

  /// Plain text, one "collection position" pair per line in sorted order.
  void write(const std::filesystem::path& path) const;
  static ExclusionSet read(const std::filesystem::path& path);

 private:
  std::set<Entry> entries_;
};

std::size_t grid_size(std::span<const std::size_t> grid);

}  // namespace codegraph
