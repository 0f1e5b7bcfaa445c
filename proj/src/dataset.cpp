#include "codegraph/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "codegraph/error.hpp"
#include "codegraph/npy.hpp"

static_assert(std::endian::native == std::endian::little, "array I/O assumes a little-endian host");

namespace codegraph {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& root, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : root / path;
}

void require_exists(const fs::path& p) {
  if (!fs::exists(p)) throw SchemaError("missing file referenced by manifest: " + p.string());
}

std::string relative_or_absolute(const fs::path& p, const fs::path& root) {
  if (root.empty() || p.is_relative()) return p.generic_string();
  const auto rel = fs::relative(p, root);
  return rel.empty() ? p.string() : rel.generic_string();
}

}  // namespace

std::size_t grid_size(std::span<const std::size_t> grid) {
  return std::accumulate(grid.begin(), grid.end(), std::size_t{1}, std::multiplies<>());
}

void normalize_rows(FeatureTensor& tensor) {
  tensor.zero_rows.assign(tensor.size(), 0);
  for (std::size_t i = 0; i < tensor.size(); ++i) {
    auto row = tensor.tokens.row(i);
    double sq = 0.0;
    for (float v : row) sq += static_cast<double>(v) * v;
    if (sq == 0.0) {
      tensor.zero_rows[i] = 1;
      continue;
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (float& v : row) v = static_cast<float>(v * inv);
  }
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open manifest: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw SchemaError("manifest is not valid JSON: " + std::string(e.what()));
  }
  DatasetManifest m;
  m.root = path.parent_path();

  const std::string modality = doc.value("modality", std::string("2d"));
  if (modality == "2d" || modality == "2D") {
    m.modality = Modality::k2D;
  } else if (modality == "3d" || modality == "3D") {
    m.modality = Modality::k3D;
  } else {
    throw SchemaError("unknown modality '" + modality + "'");
  }
  const std::size_t spatial_rank = m.modality == Modality::k2D ? 2 : 3;
  if (doc.contains("grid")) m.grid = doc["grid"].get<std::vector<std::size_t>>();

  if (!doc.contains("collections") || !doc["collections"].is_array()) {
    throw SchemaError("manifest lacks a collections list");
  }
  const auto& items = doc["collections"];
  if (items.empty()) throw SchemaError("empty base set");

  std::vector<CollectionEntry> entries;
  std::set<int> seen;
  for (const auto& item : items) {
    CollectionEntry e;
    e.id = item.at("id").get<int>();
    if (!seen.insert(e.id).second) throw SchemaError("duplicate collection id " + std::to_string(e.id));
    e.name = item.value("name", std::string("collection_") + std::to_string(e.id));
    if (item.contains("modality") && item["modality"].get<std::string>() != modality) {
      throw SchemaError("mixed modality: collection " + std::to_string(e.id));
    }
    for (const auto& [layer, file] : item.at("features").items()) {
      e.features[std::stoi(layer)] = resolve(m.root, file.get<std::string>());
    }
    if (e.features.empty()) throw SchemaError("collection " + std::to_string(e.id) + " lists no feature files");
    e.shape = item.value("shape", std::vector<std::size_t>{});
    if (!e.shape.empty() && e.shape.size() != spatial_rank) {
      throw SchemaError("mixed modality: collection " + std::to_string(e.id) + " shape rank " +
                        std::to_string(e.shape.size()));
    }
    if (item.contains("mask")) e.mask = resolve(m.root, item["mask"].get<std::string>());
    if (item.contains("foreground")) e.foreground = resolve(m.root, item["foreground"].get<std::string>());
    if (item.contains("cls")) e.cls = resolve(m.root, item["cls"].get<std::string>());
    entries.push_back(std::move(e));
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].id != static_cast<int>(i)) throw SchemaError("collection ids must be dense 0..B-1");
  }

  std::vector<int> layers;
  for (const auto& [layer, _] : entries.front().features) layers.push_back(layer);
  for (const auto& e : entries) {
    std::vector<int> mine;
    for (const auto& [layer, _] : e.features) mine.push_back(layer);
    if (mine != layers) throw SchemaError("collection " + std::to_string(e.id) + " has a different layer set");
    for (const auto& [_, p] : e.features) require_exists(p);
    if (e.mask) require_exists(*e.mask);
    if (e.foreground) require_exists(*e.foreground);
    if (e.cls) require_exists(*e.cls);
  }
  if (doc.contains("layers")) {
    auto declared = doc["layers"].get<std::vector<int>>();
    std::sort(declared.begin(), declared.end());
    if (declared != layers) throw SchemaError("declared layers do not match feature files");
  }
  m.layers = std::move(layers);
  m.collections = std::move(entries);
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  const fs::path root = path.parent_path();
  json doc;
  doc["modality"] = m.modality == Modality::k2D ? "2d" : "3d";
  doc["layers"] = m.layers;
  if (m.grid) doc["grid"] = *m.grid;
  doc["collections"] = json::array();
  for (const auto& e : m.collections) {
    json item;
    item["id"] = e.id;
    item["name"] = e.name;
    json feats = json::object();
    for (const auto& [layer, p] : e.features) feats[std::to_string(layer)] = relative_or_absolute(p, root);
    item["features"] = feats;
    if (!e.shape.empty()) item["shape"] = e.shape;
    if (e.mask) item["mask"] = relative_or_absolute(*e.mask, root);
    if (e.foreground) item["foreground"] = relative_or_absolute(*e.foreground, root);
    if (e.cls) item["cls"] = relative_or_absolute(*e.cls, root);
    doc["collections"].push_back(item);
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << doc.dump(2) << '\n';
}

FeatureTensor load_features(const DatasetManifest& manifest, int collection_id, int layer_id, bool normalize) {
  if (collection_id < 0 || static_cast<std::size_t>(collection_id) >= manifest.size()) {
    throw DomainError("collection id out of range: " + std::to_string(collection_id));
  }
  const auto& entry = manifest.collections[collection_id];
  const auto it = entry.features.find(layer_id);
  if (it == entry.features.end()) {
    throw DomainError("layer " + std::to_string(layer_id) + " absent for collection " + std::to_string(collection_id));
  }
  const npy::Array a = npy::read(it->second);
  if (a.dtype != npy::Dtype::kFloat32 && a.dtype != npy::Dtype::kFloat64) {
    throw DataError("token file must hold float32 or float64: " + it->second.string());
  }
  if (a.shape.size() < 2) throw DataError("token file needs at least 2 dimensions: " + it->second.string());

  FeatureTensor t;
  t.collection_id = collection_id;
  t.layer_id = layer_id;
  const std::size_t dim = a.shape.back();
  if (a.shape.size() == 2) {
    if (!manifest.grid) throw DataError("rank-2 token file without a manifest grid: " + it->second.string());
    t.grid_shape = *manifest.grid;
  } else {
    t.grid_shape.assign(a.shape.begin(), a.shape.end() - 1);
  }
  const std::size_t expected_rank = manifest.modality == Modality::k2D ? 2 : 3;
  if (t.grid_shape.size() != expected_rank) {
    throw DataError("grid rank does not match modality: " + it->second.string());
  }
  const std::size_t n = a.element_count() / std::max<std::size_t>(dim, 1);
  if (grid_size(t.grid_shape) != n) throw DataError("grid shape does not match token count: " + it->second.string());

  t.tokens = Matrix(n, dim);
  t.tokens.data = a.as_floats();
  for (float v : t.tokens.data) {
    if (!std::isfinite(v)) throw DataError("non-finite value in " + it->second.string());
  }
  if (normalize) {
    normalize_rows(t);
  } else {
    t.zero_rows.assign(n, 0);
  }
  return t;
}

std::vector<FeatureTensor> load_layer(const DatasetManifest& manifest, int layer_id, bool normalize) {
  std::vector<FeatureTensor> out;
  out.reserve(manifest.size());
  for (std::size_t c = 0; c < manifest.size(); ++c) {
    out.push_back(load_features(manifest, static_cast<int>(c), layer_id, normalize));
    if (out.back().dim() != out.front().dim()) {
      throw DataError("feature dimension differs across collections at layer " + std::to_string(layer_id));
    }
  }
  return out;
}

void write_features(const fs::path& path, const FeatureTensor& tensor) {
  std::vector<std::size_t> shape = tensor.grid_shape;
  shape.push_back(tensor.dim());
  npy::write(path, npy::make_float32(shape, tensor.tokens.data));
}

namespace {

GroundTruthMask read_mask_file(const fs::path& path, int collection_id, const std::vector<std::size_t>& expected) {
  const npy::Array a = npy::read(path);
  if (a.dtype != npy::Dtype::kUInt8 && a.dtype != npy::Dtype::kBool) {
    throw DataError("mask must be an 8-bit array: " + path.string());
  }
  GroundTruthMask m;
  m.collection_id = collection_id;
  m.shape = a.shape;
  m.values = a.as_bytes();
  for (auto& v : m.values) {
    if (v > 1) {
      // 0/255 masks are common; anything else is rejected
      if (v != 255) throw DataError("mask values must be binary: " + path.string());
      v = 1;
    }
  }
  if (!expected.empty() && m.shape != expected) throw DataError("mask shape differs from collection shape: " + path.string());
  return m;
}

}  // namespace

GroundTruthMask load_mask(const DatasetManifest& manifest, int collection_id) {
  const auto& e = manifest.collections.at(collection_id);
  if (!e.mask) {
    if (e.shape.empty()) throw DataError("collection " + std::to_string(collection_id) + " has neither mask nor shape");
    GroundTruthMask empty;
    empty.collection_id = collection_id;
    empty.shape = e.shape;
    empty.values.assign(grid_size(e.shape), 0);
    return empty;
  }
  return read_mask_file(*e.mask, collection_id, e.shape);
}

std::optional<GroundTruthMask> load_foreground(const DatasetManifest& manifest, int collection_id) {
  const auto& e = manifest.collections.at(collection_id);
  if (!e.foreground) return std::nullopt;
  return read_mask_file(*e.foreground, collection_id, e.shape);
}

std::vector<std::vector<float>> load_cls_tokens(const DatasetManifest& manifest) {
  std::vector<std::vector<float>> out;
  for (const auto& e : manifest.collections) {
    if (!e.cls) throw SchemaError("missing CLS token for collection " + std::to_string(e.id));
    auto v = npy::read(*e.cls).as_floats();
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * x;
    if (sq > 0.0) {
      const double inv = 1.0 / std::sqrt(sq);
      for (float& x : v) x = static_cast<float>(x * inv);
    }
    out.push_back(std::move(v));
  }
  return out;
}

bool ExclusionSet::insert(int collection, int position) {
  if (collection < 0 || position < 0) throw DomainError("negative exclusion entry");
  return entries_.insert({collection, position}).second;
}

void ExclusionSet::merge(const ExclusionSet& other) { entries_.insert(other.entries_.begin(), other.entries_.end()); }

std::vector<std::vector<std::uint8_t>> ExclusionSet::to_masks(std::span<const std::size_t> sizes) const {
  std::vector<std::vector<std::uint8_t>> masks(sizes.size());
  for (std::size_t c = 0; c < sizes.size(); ++c) masks[c].assign(sizes[c], 0);
  for (const auto& [c, h] : entries_) {
    if (static_cast<std::size_t>(c) >= sizes.size() || static_cast<std::size_t>(h) >= sizes[c]) {
      throw DomainError("exclusion (" + std::to_string(c) + ", " + std::to_string(h) + ") out of range");
    }
    masks[c][h] = 1;
  }
  return masks;
}

void ExclusionSet::write(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "# collection position\n";
  for (const auto& [c, h] : entries_) out << c << ' ' << h << '\n';
}

ExclusionSet ExclusionSet::read(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open exclusion file: " + path.string());
  ExclusionSet set;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    int c = 0, h = 0;
    if (!(row >> c >> h)) throw SchemaError("bad exclusion line: " + line);
    set.insert(c, h);
  }
  return set;
}

}  // namespace codegraph
