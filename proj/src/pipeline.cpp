#include "codegraph/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "codegraph/metrics.hpp"
#include "codegraph/npy.hpp"
#include "codegraph/vol3d.hpp"

namespace codegraph {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename F>
auto in_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

void write_json(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << doc.dump(2) << '\n';
}

}  // namespace

PipelineConfig validate_config(const json& doc) {
  if (!doc.is_object() && !doc.is_null()) throw SchemaError("config must be an object");
  PipelineConfig c;
  std::vector<std::string> errors;
  static const std::set<std::string> known{
      "manifest", "output", "layers", "receptive_fields", "k_fraction", "omega_fraction", "alpha", "coverage",
      "k_iqr", "theta_percentile", "gamma_percentile", "eta", "final_eta", "subsets", "skip_refine",
      "layer_resolved_edges", "void_threshold", "aupro_cap", "seed", "threads"};
  if (doc.is_object())
    for (const auto& [key, value] : doc.items())
      if (!known.count(key)) errors.push_back("unknown key '" + key + "'");

  auto get = [&](const char* key, auto& field) {
    if (!doc.is_object() || !doc.contains(key)) return;
    try {
      doc.at(key).get_to(field);
    } catch (const json::exception&) {
      errors.push_back(std::string(key) + " has the wrong type");
    }
  };
  std::string manifest, output;
  get("manifest", manifest);
  get("output", output);
  if (!manifest.empty()) c.manifest = manifest;
  if (!output.empty()) c.output = output;
  get("layers", c.layers);
  get("receptive_fields", c.receptive_fields);
  get("k_fraction", c.k_fraction);
  get("omega_fraction", c.omega_fraction);
  get("alpha", c.alpha);
  get("coverage", c.coverage);
  get("k_iqr", c.k_iqr);
  get("theta_percentile", c.theta_percentile);
  get("gamma_percentile", c.gamma_percentile);
  get("eta", c.eta);
  get("final_eta", c.final_eta);
  get("subsets", c.subsets);
  get("skip_refine", c.skip_refine);
  get("layer_resolved_edges", c.layer_resolved_edges);
  get("void_threshold", c.void_threshold);
  get("aupro_cap", c.aupro_cap);
  get("seed", c.seed);
  get("threads", c.threads);

  auto range = [&](const char* name, double v, double lo, double hi, bool lo_open, bool hi_open) {
    const bool ok = (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
    if (!ok) {
      errors.push_back(std::string(name) + "=" + std::to_string(v) + " outside " + (lo_open ? "(" : "[") +
                       std::to_string(lo) + ", " + std::to_string(hi) + (hi_open ? ")" : "]"));
    }
  };
  range("k_fraction", c.k_fraction, 0.0, 1.0, true, false);
  range("omega_fraction", c.omega_fraction, 0.0, 1.0, true, false);
  range("alpha", c.alpha, 0.0, 1.0, false, true);
  range("coverage", c.coverage, 0.0, 1.0, false, false);
  range("k_iqr", c.k_iqr, 0.0, 1e300, false, false);
  range("theta_percentile", c.theta_percentile, 0.0, 100.0, false, false);
  range("gamma_percentile", c.gamma_percentile, 0.0, 100.0, false, false);
  range("eta", c.eta, 0.0, 1.0, true, false);
  range("final_eta", c.final_eta, 0.0, 1.0, true, false);
  range("void_threshold", c.void_threshold, 0.0, 1.0, false, false);
  range("aupro_cap", c.aupro_cap, 0.0, 1.0, true, false);
  if (c.subsets < 1) errors.push_back("subsets must be at least 1");
  if (c.layers.empty()) errors.push_back("layers must not be empty");
  if (c.receptive_fields.empty()) errors.push_back("receptive_fields must not be empty");
  for (int r : c.receptive_fields)
    if (r < 1 || r % 2 == 0) errors.push_back("receptive field " + std::to_string(r) + " is not odd and >= 1");
  if (std::set<int>(c.layers.begin(), c.layers.end()).size() != c.layers.size())
    errors.push_back("layers contain duplicates");

  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw SchemaError(msg);
  }
  if (c.coverage == 0.0) c.warnings.push_back("coverage=0 selects no links: the anomaly graph is empty");
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open config: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("config does not parse: " + std::string(e.what()));
  }
  auto c = validate_config(doc);
  if (!c.manifest.empty() && c.manifest.is_relative()) c.manifest = path.parent_path() / c.manifest;
  return c;
}

json config_to_json(const PipelineConfig& c) {
  return json{{"manifest", c.manifest.string()},
              {"output", c.output.string()},
              {"layers", c.layers},
              {"receptive_fields", c.receptive_fields},
              {"k_fraction", c.k_fraction},
              {"omega_fraction", c.omega_fraction},
              {"alpha", c.alpha},
              {"coverage", c.coverage},
              {"k_iqr", c.k_iqr},
              {"theta_percentile", c.theta_percentile},
              {"gamma_percentile", c.gamma_percentile},
              {"eta", c.eta},
              {"final_eta", c.final_eta},
              {"subsets", c.subsets},
              {"skip_refine", c.skip_refine},
              {"layer_resolved_edges", c.layer_resolved_edges},
              {"void_threshold", c.void_threshold},
              {"aupro_cap", c.aupro_cap},
              {"seed", c.seed},
              {"threads", c.threads}};
}

EngineOptions EngineOptions::from(const PipelineConfig& c) {
  EngineOptions o;
  o.receptive_fields = c.receptive_fields;
  o.k_fraction = c.k_fraction;
  o.omega_fraction = c.omega_fraction;
  o.alpha = c.alpha;
  o.coverage = c.coverage;
  o.k_iqr = c.k_iqr;
  o.theta_percentile = c.theta_percentile;
  o.gamma_percentile = c.gamma_percentile;
  o.skip_refine = c.skip_refine;
  o.layer_resolved_edges = c.layer_resolved_edges;
  o.void_threshold = c.void_threshold;
  o.seed = c.seed;
  o.threads = c.threads;
  return o;
}

EngineResult run_engine(std::shared_ptr<const LayerBases> layers, const EngineOptions& o,
                        const ScreenSets* stage_screen, const ScreenSets* final_screen, const VoidFractions* voids) {
  EngineResult res;
  res.collections = layers->collections();

  const ScoreStack stack =
      in_stage("score", [&] { return ScoreStack::build(layers, o.receptive_fields, final_screen, o.threads); });
  res.plain_scores = in_stage("score", [&] { return stack.final_scores(o.k_fraction, o.threads); });
  res.invalidated.assign(res.plain_scores.size(), 0);
  if (o.skip_refine) {
    res.final_scores = res.plain_scores;
    return res;
  }

  // Graph construction uses receptive-field-1 tables under the stage-1 screen.
  std::vector<NeighborTable> own_tables;
  std::span<const NeighborTable> r1;
  const bool reuse = stage_screen == final_screen &&
                     std::find(o.receptive_fields.begin(), o.receptive_fields.end(), 1) != o.receptive_fields.end();
  if (reuse) {
    r1 = stack.tables_at(1);
  } else {
    in_stage("score", [&] {
      for (const auto& base : layers->bases) own_tables.push_back(NeighborTable::build(base, {}, stage_screen, o.threads));
      return 0;
    });
    r1 = own_tables;
  }

  CandidateOptions co;
  co.omega_fraction = o.omega_fraction;
  co.alpha = o.alpha;
  co.void_threshold = o.void_threshold;
  in_stage("graph", [&] {
    const auto candidates = candidate_links(r1, co, voids, o.threads);
    res.candidates = candidates.size();
    std::vector<std::uint8_t> active;
    if (voids) {
      active.assign(res.collections, 0);
      for (std::size_t c = 0; c < res.collections; ++c)
        for (double v : (*voids)[c])
          if (v <= o.void_threshold) active[c] = 1;
      const auto counted = std::count(active.begin(), active.end(), 1);
      if (static_cast<std::size_t>(counted) < res.collections)
        res.warnings.push_back(std::to_string(res.collections - counted) +
                               " all-void collections excluded from the coverage denominator");
    }
    res.selection = select_by_coverage(candidates, o.coverage, res.collections, active);
    if (o.layer_resolved_edges) res.selection.graph = build_layer_resolved_graph(res.selection.links, r1);
    if (!res.selection.target_reached)
      res.warnings.push_back("coverage target not reached: " + std::to_string(res.selection.coverage));
    return 0;
  });

  in_stage("refine", [&] {
    const auto& graph = res.selection.graph;
    if (graph.total_weight() == 0) {
      res.warnings.push_back("anomaly graph is empty; refinement skipped");
      res.partition = Partition::singletons(res.collections);
      return 0;
    }
    res.gamma = gamma_from_percentile(graph, o.gamma_percentile);
    LeidenOptions lo;
    lo.seed = o.seed;
    res.partition = leiden_cpm(graph, res.gamma, lo);
    res.outliers = outlier_communities(graph, res.partition, o.k_iqr);
    for (const auto& w : res.outliers.warnings) res.warnings.push_back(w);
    std::vector<std::vector<int>> flagged;
    for (int id : res.outliers.flagged) flagged.push_back(res.partition.communities[id]);
    FilterOptions fo;
    fo.k_fraction = o.k_fraction;
    fo.theta_percentile = o.theta_percentile;
    fo.void_threshold = o.void_threshold;
    res.filter = targeted_filtering(r1, flagged, fo, voids, o.threads);
    return 0;
  });

  in_stage("final", [&] {
    if (res.filter.exclusions.empty()) {
      res.final_scores = res.plain_scores;
      return 0;
    }
    const ScoreStack refined = stack.masked(res.filter.exclusions, o.threads);
    res.final_scores = refined.final_scores(o.k_fraction, o.threads);
    const NeighborTable& t0 = refined.table(0);
    for (std::size_t c = 0; c < res.collections; ++c)
      for (std::size_t h = 0; h < t0.elements(static_cast<int>(c)); ++h)
        res.invalidated[t0.flat_index(static_cast<int>(c), static_cast<int>(h))] =
            refined.invalidated(static_cast<int>(c), static_cast<int>(h)) ? 1 : 0;
    return 0;
  });
  return res;
}

std::shared_ptr<LayerBases> load_layer_bases(const DatasetManifest& manifest, const std::vector<int>& layers) {
  auto out = std::make_shared<LayerBases>();
  for (int l : layers) {
    if (std::find(manifest.layers.begin(), manifest.layers.end(), l) == manifest.layers.end())
      throw SchemaError("layer " + std::to_string(l) + " is not in the manifest");
    out->layer_ids.push_back(l);
    out->bases.push_back(load_layer(manifest, l));
  }
  for (std::size_t c = 0; c < manifest.size(); ++c)
    for (const auto& base : out->bases)
      if (base[c].grid_shape != out->bases.front()[c].grid_shape)
        throw DataError("grid shape differs across layers for collection " + std::to_string(c));
  return out;
}

namespace {

std::size_t pool_factor(const std::vector<std::size_t>& shape, const std::vector<std::size_t>& grid) {
  if (shape.size() != grid.size()) throw DataError("mask rank does not match the token grid");
  return (shape[0] + grid[0] - 1) / grid[0];
}

}  // namespace

std::vector<std::vector<std::uint8_t>> token_labels(const DatasetManifest& manifest,
                                                    const std::vector<std::size_t>& grid_shape) {
  std::vector<std::vector<std::uint8_t>> out;
  for (std::size_t c = 0; c < manifest.size(); ++c) {
    const auto mask = load_mask(manifest, static_cast<int>(c));
    if (mask.shape.empty()) {
      out.emplace_back(grid_size(grid_shape), 0);
      continue;
    }
    std::vector<std::size_t> g;
    auto pooled = downsample_mask_maxpool(mask.values, mask.shape, pool_factor(mask.shape, grid_shape), &g);
    if (g != grid_shape) throw DataError("mask of collection " + std::to_string(c) + " does not map onto the token grid");
    out.push_back(std::move(pooled));
  }
  return out;
}

std::optional<VoidFractions> load_void_fractions(const DatasetManifest& manifest,
                                                 const std::vector<std::size_t>& grid_shape) {
  bool any = false;
  VoidFractions out;
  for (std::size_t c = 0; c < manifest.size(); ++c) {
    const auto fg = load_foreground(manifest, static_cast<int>(c));
    if (!fg) {
      out.emplace_back(grid_size(grid_shape), 0.0);
      continue;
    }
    any = true;
    if (fg->shape.size() != 3) throw DataError("foreground masks must be 3D");
    out.push_back(void_fraction(fg->values, {fg->shape[0], fg->shape[1], fg->shape[2]},
                                pool_factor(fg->shape, grid_shape)));
    if (out.back().size() != grid_size(grid_shape)) throw DataError("foreground mask does not map onto the token grid");
  }
  if (!any) return std::nullopt;
  return out;
}

json Metrics::to_json() const {
  json j = json::object();
  auto put = [&](const char* k, const std::optional<double>& v) { j[k] = v ? json(*v) : json(nullptr); };
  put("image_auroc", image_auroc);
  put("image_ap", image_ap);
  put("image_f1_max", image_f1);
  put("pixel_auroc", pixel_auroc);
  put("pixel_ap", pixel_ap);
  put("pixel_f1_max", pixel_f1);
  put("aupro", aupro);
  return j;
}

Metrics evaluate_maps(const DatasetManifest& manifest, const std::vector<AnomalyMap>& maps, double aupro_cap) {
  Metrics m;
  std::vector<double> image_scores;
  std::vector<std::uint8_t> image_labels;
  std::vector<double> pixel_scores;
  std::vector<std::uint8_t> pixel_labels;
  std::vector<MapSample> samples;
  bool have_masks = false;
  for (const auto& map : maps) {
    const auto mask = load_mask(manifest, map.collection_id);
    have_masks = have_masks || manifest.collections[map.collection_id].mask.has_value();
    const std::uint8_t label = std::any_of(mask.values.begin(), mask.values.end(), [](auto v) { return v != 0; });
    image_scores.push_back(map.score);
    image_labels.push_back(label);
    if (mask.values.size() != map.upsampled.size()) throw DataError("mask and map sizes differ");
    pixel_scores.insert(pixel_scores.end(), map.upsampled.begin(), map.upsampled.end());
    pixel_labels.insert(pixel_labels.end(), mask.values.begin(), mask.values.end());
    samples.push_back({map.shape, map.upsampled, mask.values});
  }
  if (!have_masks) return m;
  const auto pos = std::count(image_labels.begin(), image_labels.end(), 1);
  if (pos > 0 && static_cast<std::size_t>(pos) < image_labels.size()) {
    m.image_auroc = auroc(image_scores, image_labels);
    m.image_ap = average_precision(image_scores, image_labels);
    m.image_f1 = f1_max(image_scores, image_labels).f1;
  }
  const auto ppos = std::count(pixel_labels.begin(), pixel_labels.end(), 1);
  if (ppos > 0 && static_cast<std::size_t>(ppos) < pixel_labels.size()) {
    m.pixel_auroc = auroc(pixel_scores, pixel_labels);
    m.pixel_ap = average_precision(pixel_scores, pixel_labels);
    m.pixel_f1 = f1_max(pixel_scores, pixel_labels).f1;
    m.aupro = aupro(samples, aupro_cap);
  }
  return m;
}

std::vector<AnomalyMap> build_maps(const DatasetManifest& manifest, const LayerBases& layers,
                                   const std::vector<double>& flat_scores) {
  std::vector<AnomalyMap> maps;
  std::size_t offset = 0;
  for (std::size_t c = 0; c < layers.collections(); ++c) {
    const auto& t = layers.bases.front()[c];
    std::vector<double> token(flat_scores.begin() + static_cast<std::ptrdiff_t>(offset),
                              flat_scores.begin() + static_cast<std::ptrdiff_t>(offset + t.size()));
    offset += t.size();
    auto target = manifest.collections[c].shape.empty() ? t.grid_shape : manifest.collections[c].shape;
    maps.push_back(make_anomaly_map(static_cast<int>(c), t.grid_shape, std::move(token), std::move(target)));
  }
  return maps;
}

void write_scores_csv(const fs::path& path, const DatasetManifest& manifest, const std::vector<AnomalyMap>& maps) {
  std::ofstream out(path);
  out << "collection,name,score\n";
  out.precision(17);
  for (const auto& m : maps) out << m.collection_id << ',' << manifest.collections[m.collection_id].name << ',' << m.score << '\n';
}

json run_pipeline(const PipelineConfig& config) {
  if (config.manifest.empty()) throw SchemaError("config has no manifest");
  const DatasetManifest manifest = in_stage("load", [&] { return load_manifest(config.manifest); });
  const auto layers = in_stage("load", [&] { return load_layer_bases(manifest, config.layers); });
  const std::size_t b = manifest.size();
  const auto grid = layers->bases.front().front().grid_shape;

  std::optional<std::vector<std::vector<float>>> cls;
  if (config.eta < 1.0 || config.final_eta < 1.0) cls = in_stage("load", [&] { return load_cls_tokens(manifest); });
  const auto voids = in_stage("load", [&] { return load_void_fractions(manifest, grid); });
  std::vector<std::vector<std::uint8_t>> labels;
  const bool have_masks = std::any_of(manifest.collections.begin(), manifest.collections.end(),
                                      [](const CollectionEntry& e) { return e.mask.has_value(); });
  if (have_masks) labels = in_stage("load", [&] { return token_labels(manifest, grid); });

  const fs::path out = config.output;
  fs::create_directories(out);
  const auto bounds = in_stage("score", [&] { return subset_bounds(b, config.subsets); });
  const EngineOptions opts = EngineOptions::from(config);

  std::vector<double> plain, final_scores;
  ExclusionSet exclusions;
  json subsets = json::array();
  std::vector<std::string> warnings = config.warnings;
  std::size_t total_elements = 0;
  for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
    const std::size_t lo = bounds[s], hi = bounds[s + 1];
    auto chunk = std::make_shared<LayerBases>();
    chunk->layer_ids = layers->layer_ids;
    for (const auto& base : layers->bases) {
      std::vector<FeatureTensor> part(base.begin() + static_cast<std::ptrdiff_t>(lo),
                                      base.begin() + static_cast<std::ptrdiff_t>(hi));
      for (auto& t : part) t.collection_id -= static_cast<int>(lo);
      chunk->bases.push_back(std::move(part));
    }
    std::optional<ScreenSets> stage_screen, final_screen;
    if (cls) {
      std::vector<std::vector<float>> part(cls->begin() + static_cast<std::ptrdiff_t>(lo),
                                           cls->begin() + static_cast<std::ptrdiff_t>(hi));
      if (config.eta < 1.0) stage_screen = cls_screen_all(part, config.eta);
      if (config.final_eta < 1.0) final_screen = cls_screen_all(part, config.final_eta);
    }
    std::optional<VoidFractions> part_voids;
    if (voids) part_voids = VoidFractions(voids->begin() + static_cast<std::ptrdiff_t>(lo),
                                          voids->begin() + static_cast<std::ptrdiff_t>(hi));
    const ScreenSets* ss = stage_screen ? &*stage_screen : nullptr;
    const ScreenSets* fs_ = final_screen ? &*final_screen : nullptr;
    if (config.eta == config.final_eta) ss = fs_;
    const EngineResult r = run_engine(chunk, opts, ss, fs_, part_voids ? &*part_voids : nullptr);

    plain.insert(plain.end(), r.plain_scores.begin(), r.plain_scores.end());
    final_scores.insert(final_scores.end(), r.final_scores.begin(), r.final_scores.end());
    for (const auto& [c, h] : r.filter.exclusions.entries()) exclusions.insert(c + static_cast<int>(lo), h);
    total_elements += r.plain_scores.size();
    for (const auto& w : r.warnings) warnings.push_back("subset " + std::to_string(s) + ": " + w);

    const std::string tag = config.subsets > 1 ? "_subset" + std::to_string(s) : "";
    if (!config.skip_refine) {
      r.selection.graph.write_edge_list(out / ("graph" + tag + ".txt"));
      r.selection.graph.write_adjacency(out / ("graph" + tag + ".npy"));
    }
    auto global = [&](const std::vector<int>& members) {
      std::vector<int> g;
      for (int m : members) g.push_back(m + static_cast<int>(lo));
      return g;
    };
    json communities = json::array();
    for (const auto& members : r.partition.communities) communities.push_back(global(members));
    json flagged = json::array();
    for (std::size_t i = 0; i < r.filter.communities.size(); ++i) {
      const auto& f = r.filter.communities[i];
      const int id = r.outliers.flagged[i];
      const auto pos = std::find(r.outliers.community_ids.begin(), r.outliers.community_ids.end(), id) -
                       r.outliers.community_ids.begin();
      flagged.push_back({{"community", id},
                         {"members", global(f.members)},
                         {"density", r.outliers.densities[pos]},
                         {"theta", f.theta},
                         {"excluded", f.excluded}});
    }
    json densities = json::array();
    for (std::size_t i = 0; i < r.outliers.community_ids.size(); ++i)
      densities.push_back({{"community", r.outliers.community_ids[i]}, {"density", r.outliers.densities[i]}});
    subsets.push_back({{"collections", {lo, hi}},
                       {"candidates", r.candidates},
                       {"links", r.selection.links.size()},
                       {"batches", r.selection.batches},
                       {"coverage", r.selection.coverage},
                       {"coverage_nodes", r.selection.counted_nodes},
                       {"target_reached", r.selection.target_reached},
                       {"gamma", r.gamma},
                       {"communities", communities},
                       {"densities", densities},
                       {"q1", r.outliers.q1},
                       {"q3", r.outliers.q3},
                       {"density_threshold", r.outliers.threshold},
                       {"flagged", flagged}});
  }

  exclusions.write(out / "exclusions.txt");
  npy::write(out / "scores_plain.npy", npy::make_float64({plain.size()}, plain));
  npy::write(out / "scores_final.npy", npy::make_float64({final_scores.size()}, final_scores));

  const auto maps = in_stage("final", [&] { return build_maps(manifest, *layers, final_scores); });
  fs::create_directories(out / "maps");
  for (const auto& m : maps) write_anomaly_map(out / "maps" / (manifest.collections[m.collection_id].name + ".npy"), m);
  write_scores_csv(out / "scores.csv", manifest, maps);

  json report;
  report["version"] = kVersion;
  report["seed"] = config.seed;
  report["collections"] = b;
  report["elements"] = total_elements;
  report["subsets"] = subsets;
  report["excluded"] = exclusions.size();
  report["exclusion_rate"] = total_elements ? static_cast<double>(exclusions.size()) / total_elements : 0.0;
  if (have_masks) {
    std::size_t anomalous = 0, captured = 0;
    for (std::size_t c = 0; c < b; ++c)
      for (std::size_t h = 0; h < labels[c].size(); ++h)
        if (labels[c][h]) {
          ++anomalous;
          captured += exclusions.contains(static_cast<int>(c), static_cast<int>(h));
        }
    report["capture_rate"] = anomalous ? json(static_cast<double>(captured) / anomalous) : json(nullptr);
    const Metrics metrics = in_stage("eval", [&] { return evaluate_maps(manifest, maps, config.aupro_cap); });
    report["metrics"] = metrics.to_json();
    std::ofstream csv(out / "metrics.csv");
    csv << "metric,value\n";
    for (const auto& [k, v] : report["metrics"].items()) csv << k << ',' << (v.is_null() ? "" : v.dump()) << '\n';
  }
  report["warnings"] = warnings;
  write_json(out / "config.json", config_to_json(config));
  write_json(out / "report.json", report);
  return report;
}

}  // namespace codegraph
