// Command-line entry point. Exit codes: 0 success, 1 unexpected failure,
// 2 usage error, 3 schema or config error, 4 data error, 5 domain or numeric error.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "codegraph/community.hpp"
#include "codegraph/graph.hpp"
#include "codegraph/metrics.hpp"
#include "codegraph/npy.hpp"
#include "codegraph/pipeline.hpp"
#include "codegraph/pseudomask.hpp"
#include "codegraph/statlab.hpp"
#include "codegraph/synthetic.hpp"
#include "codegraph/vol3d.hpp"

namespace fs = std::filesystem;
using namespace codegraph;
using nlohmann::json;

namespace {

std::vector<double> read_values(const fs::path& path) {
  if (path.extension() == ".npy") return npy::read(path).as_doubles();
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());
  std::vector<double> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double v;
    while (row >> v) out.push_back(v);
  }
  return out;
}

// Two-column text (x y per line) or a single column of y with x = 1..n.
std::pair<std::vector<double>, std::vector<double>> read_xy(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());
  std::vector<double> x, y;
  std::string line;
  bool two = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0]))) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    std::vector<double> v;
    double t;
    while (row >> t) v.push_back(t);
    if (v.size() >= 2) {
      two = true;
      x.push_back(v[0]);
      y.push_back(v[1]);
    } else if (v.size() == 1) {
      x.push_back(static_cast<double>(x.size() + 1));
      y.push_back(v[0]);
    }
  }
  (void)two;
  return {x, y};
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write " + path.string());
  out.precision(17);
  return out;
}

void write_json(const fs::path& path, const json& doc) { open_out(path) << doc.dump(2) << '\n'; }

struct Common {
  std::string manifest;
  std::string out = "out";
  std::vector<int> layers{6, 12, 18, 24};
  std::vector<int> rs{1, 3, 5};
  double k_fraction = 0.1;
  double eta = 1.0;
  unsigned threads = 0;
};

void add_common(CLI::App* app, Common& c, bool scales) {
  app->add_option("--manifest", c.manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "output directory");
  app->add_option("--layers", c.layers, "layer ids")->delimiter(',');
  app->add_option("--threads", c.threads, "worker threads (0: all cores)");
  app->add_option("--eta", c.eta, "CLS screening fraction in (0, 1]");
  if (scales) {
    app->add_option("--receptive-fields", c.rs, "LNAMD receptive fields")->delimiter(',');
    app->add_option("--k-fraction", c.k_fraction, "top-K fraction");
  }
}

struct Loaded {
  DatasetManifest manifest;
  std::shared_ptr<LayerBases> layers;
  std::optional<ScreenSets> screen;
};

Loaded load(const Common& c) {
  Loaded l;
  l.manifest = load_manifest(c.manifest);
  l.layers = load_layer_bases(l.manifest, c.layers);
  if (!(c.eta > 0.0 && c.eta <= 1.0)) throw DomainError("eta must be in (0, 1]");
  if (c.eta < 1.0) l.screen = cls_screen_all(load_cls_tokens(l.manifest), c.eta);
  return l;
}

std::vector<NeighborTable> r1_tables(const Loaded& l, unsigned threads) {
  std::vector<NeighborTable> t;
  for (const auto& base : l.layers->bases) t.push_back(NeighborTable::build(base, {}, l.screen ? &*l.screen : nullptr, threads));
  return t;
}

std::optional<VoidFractions> voids_of(const Loaded& l) {
  return load_void_fractions(l.manifest, l.layers->bases.front().front().grid_shape);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"CoDeGraph zero-shot anomaly detection engine"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // synth
  SyntheticConfig synth;
  std::string synth_out = "synthetic";
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic planted-clone dataset");
  synth_cmd->add_option("--out", synth_out, "output directory");
  synth_cmd->add_option("--collections", synth.collections);
  synth_cmd->add_option("--grid", synth.grid);
  synth_cmd->add_option("--dim", synth.dim);
  synth_cmd->add_option("--clones", synth.clones, "planted clone collections (0: clean)");
  synth_cmd->add_option("--block-rows", synth.block_rows);
  synth_cmd->add_option("--block-cols", synth.block_cols);
  synth_cmd->add_option("--noise", synth.noise);
  synth_cmd->add_option("--noise-rank", synth.noise_rank, "noise subspace dimension (0: isotropic)");
  synth_cmd->add_option("--anomaly-strength", synth.anomaly_strength);
  synth_cmd->add_option("--latent-scale", synth.latent_scale);
  synth_cmd->add_option("--seed", synth.seed);

  // score
  Common score_c;
  double score_omega = 0.3, score_alpha = 0.2;
  std::size_t score_subsets = 1;
  auto* score_cmd = app.add_subcommand("score", "multi-layer multi-scale mutual scores and d_agg records");
  add_common(score_cmd, score_c, true);
  score_cmd->add_option("--subsets", score_subsets, "subset division count");
  score_cmd->add_option("--omega", score_omega, "reference rank fraction (recorded)");
  score_cmd->add_option("--alpha", score_alpha, "endurance weight (recorded)");

  // graph
  Common graph_c;
  CandidateOptions graph_o;
  double graph_coverage = 0.95;
  bool graph_layer_resolved = false;
  auto* graph_cmd = app.add_subcommand("graph", "mine suspicious links and build the anomaly similarity graph");
  add_common(graph_cmd, graph_c, false);
  graph_cmd->add_option("--omega", graph_o.omega_fraction);
  graph_cmd->add_option("--alpha", graph_o.alpha);
  graph_cmd->add_option("--coverage", graph_coverage);
  graph_cmd->add_option("--void-threshold", graph_o.void_threshold);
  graph_cmd->add_flag("--layer-resolved", graph_layer_resolved, "one connection per layer for each link");

  // refine
  Common refine_c;
  std::string refine_graph;
  double refine_k_iqr = 4.5, refine_gamma_pct = 25.0, refine_theta_pct = 99.0, refine_void = 0.5;
  std::uint64_t refine_seed = 0;
  auto* refine_cmd = app.add_subcommand("refine", "communities, outlier flags and targeted filtering");
  add_common(refine_cmd, refine_c, false);
  refine_cmd->add_option("--graph", refine_graph, "edge list from the graph subcommand")->required()->check(CLI::ExistingFile);
  refine_cmd->add_option("--k-iqr", refine_k_iqr);
  refine_cmd->add_option("--gamma-percentile", refine_gamma_pct);
  refine_cmd->add_option("--theta-percentile", refine_theta_pct);
  refine_cmd->add_option("--k-fraction", refine_c.k_fraction);
  refine_cmd->add_option("--void-threshold", refine_void);
  refine_cmd->add_option("--seed", refine_seed);

  // final
  Common final_c;
  std::string final_exclusions;
  auto* final_cmd = app.add_subcommand("final", "final scores and anomaly maps on the refined base");
  add_common(final_cmd, final_c, true);
  final_cmd->add_option("--exclusions", final_exclusions, "exclusion list from refine")->check(CLI::ExistingFile);

  // eval
  std::string eval_manifest, eval_maps, eval_out;
  double eval_cap = 0.3;
  auto* eval_cmd = app.add_subcommand("eval", "metrics of anomaly maps against ground truth");
  eval_cmd->add_option("--manifest", eval_manifest)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--maps", eval_maps, "directory of <name>.npy maps")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--out", eval_out, "metrics CSV path");
  eval_cmd->add_option("--aupro-cap", eval_cap);

  // statlab
  auto* stat_cmd = app.add_subcommand("statlab", "statistics of similarity scaling");
  stat_cmd->require_subcommand(1);
  std::string hill_in, hill_out;
  std::size_t hill_kmin = 1, hill_kmax = 0;
  auto* hill_cmd = stat_cmd->add_subcommand("hill", "Hill estimator curve");
  hill_cmd->add_option("--input", hill_in, "samples (.npy or text)")->required()->check(CLI::ExistingFile);
  hill_cmd->add_option("--k-min", hill_kmin);
  hill_cmd->add_option("--k-max", hill_kmax);
  hill_cmd->add_option("--out", hill_out, "curve CSV");

  std::string pl_in;
  auto* pl_cmd = stat_cmd->add_subcommand("powerlaw", "log-log OLS fit of mean growth rates");
  pl_cmd->add_option("--input", pl_in, "text: 'i tau' per line or one tau per line")->required()->check(CLI::ExistingFile);

  std::string qq_in, qq_out;
  double qq_alpha = 0.0, qq_beta = 1.0;
  auto* qq_cmd = stat_cmd->add_subcommand("beta-qq", "QQ points and KS distance against Beta(alpha0, beta)");
  qq_cmd->add_option("--input", qq_in, "ratios in (0, 1]")->required()->check(CLI::ExistingFile);
  qq_cmd->add_option("--alpha0", qq_alpha, "Beta alpha (0: maximum likelihood fit)");
  qq_cmd->add_option("--beta", qq_beta);
  qq_cmd->add_option("--out", qq_out, "QQ CSV");

  double po_lambda = 10.0, po_domain = 10.0;
  std::size_t po_dim = 2, po_seeds = 20;
  std::uint64_t po_seed = 0;
  std::string po_out;
  auto* po_cmd = stat_cmd->add_subcommand("poisson", "Poisson point-process toy model");
  po_cmd->add_option("--intensity", po_lambda);
  po_cmd->add_option("--domain", po_domain);
  po_cmd->add_option("--dim", po_dim);
  po_cmd->add_option("--seeds", po_seeds);
  po_cmd->add_option("--seed", po_seed, "first seed");
  po_cmd->add_option("--out", po_out, "Hill curve CSV of the first seed");

  double sp_alpha = 2.0;
  std::size_t sp_omega = 50, sp_reps = 100000;
  std::uint64_t sp_seed = 0;
  std::string sp_out;
  auto* sp_cmd = stat_cmd->add_subcommand("spacing", "Beta order-statistic log-spacings");
  sp_cmd->add_option("--alpha0", sp_alpha);
  sp_cmd->add_option("--omega", sp_omega);
  sp_cmd->add_option("--replicates", sp_reps);
  sp_cmd->add_option("--seed", sp_seed);
  sp_cmd->add_option("--out", sp_out, "per-rank CSV");

  // vol3d-fuse
  std::string v_axial, v_coronal, v_sagittal, v_fg, v_out = "fused.npy", v_void_out;
  std::size_t v_p = 14, v_k = 128;
  std::uint64_t v_seed = 0;
  double v_void = 0.5;
  bool v_no_norm = false;
  auto* vol_cmd = app.add_subcommand("vol3d-fuse", "pool, project and fuse per-axis slice features");
  vol_cmd->add_option("--axial", v_axial)->required()->check(CLI::ExistingFile);
  vol_cmd->add_option("--coronal", v_coronal)->required()->check(CLI::ExistingFile);
  vol_cmd->add_option("--sagittal", v_sagittal)->required()->check(CLI::ExistingFile);
  vol_cmd->add_option("--p", v_p, "slices per pooled group");
  vol_cmd->add_option("--k", v_k, "projected dimension per axis");
  vol_cmd->add_option("--seed", v_seed, "projection seed (shared across volumes)");
  vol_cmd->add_option("--foreground", v_fg, "voxel mask (nonzero = tissue)")->check(CLI::ExistingFile);
  vol_cmd->add_option("--void-threshold", v_void);
  vol_cmd->add_option("--void-out", v_void_out, "per-token void fraction output");
  vol_cmd->add_flag("--no-normalize", v_no_norm, "skip post-fusion L2 normalisation");
  vol_cmd->add_option("--out", v_out);

  // pseudomask
  std::vector<std::string> pm_inputs;
  std::string pm_out = "pseudomasks", pm_scope = "category", pm_em = "truncated";
  double pm_qfit = 0.95, pm_qcomp = 0.99;
  auto* pm_cmd = app.add_subcommand("pseudomask", "GMM-thresholded binary masks from anomaly maps");
  pm_cmd->add_option("--input", pm_inputs, "map files (.npy)")->required()->check(CLI::ExistingFile);
  pm_cmd->add_option("--out", pm_out);
  pm_cmd->add_option("--q-fit", pm_qfit);
  pm_cmd->add_option("--q-comp", pm_qcomp);
  pm_cmd->add_option("--scope", pm_scope)->check(CLI::IsMember({"image", "category"}));
  pm_cmd->add_option("--em", pm_em)->check(CLI::IsMember({"truncated", "plain"}));

  // run
  std::string run_config, run_manifest, run_output;
  std::optional<std::uint64_t> run_seed;
  std::optional<std::size_t> run_subsets;
  bool run_skip = false;
  auto* run_cmd = app.add_subcommand("run", "end-to-end pipeline from a config file");
  run_cmd->add_option("--config", run_config, "JSON config (absent keys take defaults)")->check(CLI::ExistingFile);
  run_cmd->add_option("--manifest", run_manifest, "overrides config manifest");
  run_cmd->add_option("--output", run_output, "overrides config output");
  run_cmd->add_option("--seed", run_seed);
  run_cmd->add_option("--subsets", run_subsets);
  run_cmd->add_flag("--skip-refine", run_skip, "bypass graph and refinement");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*synth_cmd) {
    const auto data = make_synthetic(synth);
    const auto manifest = write_synthetic(data, synth_out);
    json info{{"manifest", manifest.string()}, {"planted", data.planted}, {"anomalous_positions", data.anomalous_positions}};
    write_json(fs::path(synth_out) / "planted.json", info);
    std::cout << manifest.string() << '\n';
    return 0;
  }

  if (*score_cmd) {
    const auto l = load(score_c);
    const fs::path out = score_c.out;
    fs::create_directories(out);
    ScaleOptions so{score_c.rs, score_c.k_fraction};
    std::vector<double> scores;
    if (score_subsets > 1) {
      if (l.screen) throw DomainError("subset division and CLS screening cannot be combined in score");
      scores = subset_final_scores(*l.layers, score_subsets, so, {}, score_c.threads);
    } else {
      const auto stack = ScoreStack::build(l.layers, score_c.rs, l.screen ? &*l.screen : nullptr, score_c.threads);
      scores = stack.final_scores(score_c.k_fraction, score_c.threads);
    }
    npy::write(out / "scores_plain.npy", npy::make_float64({scores.size()}, scores));
    const auto tables = r1_tables(l, score_c.threads);
    const std::size_t total = tables.front().total_elements();
    std::vector<MutualSimilarityRecord> records;
    for (std::size_t c = 0; c < l.manifest.size(); ++c)
      for (std::size_t h = 0; h < tables.front().elements(static_cast<int>(c)); ++h)
        records.push_back(aggregated_record(tables, static_cast<int>(c), static_cast<int>(h)));
    const std::size_t len = records.front().size();
    bool uniform = std::all_of(records.begin(), records.end(), [&](const auto& r) { return r.size() == len; });
    if (uniform) {
      std::vector<double> dist;
      std::vector<std::int64_t> src;
      for (const auto& r : records) {
        dist.insert(dist.end(), r.distances.begin(), r.distances.end());
        src.insert(src.end(), r.sources.begin(), r.sources.end());
      }
      npy::write(out / "records_distances.npy", npy::make_float64({total, len}, dist));
      npy::write(out / "records_sources.npy", npy::make_int64({total, len}, src));
      if (len >= 2) {
        const auto tau = mean_growth_rates(records);
        auto csv = open_out(out / "growth_rates.csv");
        csv << "i,mean_tau\n";
        for (std::size_t i = 0; i < tau.size(); ++i) csv << i + 1 << ',' << tau[i] << '\n';
      }
    }
    write_json(out / "score.json", {{"elements", total}, {"k_fraction", score_c.k_fraction}, {"eta", score_c.eta},
                                    {"subsets", score_subsets}, {"omega", score_omega}, {"alpha", score_alpha}});
    std::cout << "scored " << total << " elements\n";
    return 0;
  }

  if (*graph_cmd) {
    const auto l = load(graph_c);
    const auto tables = r1_tables(l, graph_c.threads);
    const auto voids = voids_of(l);
    const auto candidates = candidate_links(tables, graph_o, voids ? &*voids : nullptr, graph_c.threads);
    std::vector<std::uint8_t> active;
    if (voids) {
      active.assign(l.manifest.size(), 0);
      for (std::size_t c = 0; c < active.size(); ++c)
        for (double v : (*voids)[c]) active[c] |= v <= graph_o.void_threshold ? 1 : 0;
    }
    auto sel = select_by_coverage(candidates, graph_coverage, l.manifest.size(), active);
    if (graph_layer_resolved) sel.graph = build_layer_resolved_graph(sel.links, tables);
    const fs::path out = graph_c.out;
    sel.graph.write_edge_list(out / "graph.txt");
    sel.graph.write_adjacency(out / "graph.npy");
    auto csv = open_out(out / "links.csv");
    csv << "collection,position,rank,target,zeta\n";
    for (const auto& k : sel.links) csv << k.collection << ',' << k.position << ',' << k.rank << ',' << k.target << ',' << k.zeta << '\n';
    write_json(out / "graph.json", {{"candidates", candidates.size()}, {"links", sel.links.size()},
                                    {"batches", sel.batches}, {"batch_size", sel.batch_size},
                                    {"coverage", sel.coverage}, {"coverage_nodes", sel.counted_nodes},
                                    {"target_reached", sel.target_reached}});
    std::cout << "coverage " << sel.coverage << " with " << sel.links.size() << " links\n";
    return 0;
  }

  if (*refine_cmd) {
    const auto l = load(refine_c);
    const auto graph = AnomalySimilarityGraph::read_edge_list(refine_graph, l.manifest.size());
    const fs::path out = refine_c.out;
    fs::create_directories(out);
    if (graph.total_weight() == 0) {
      ExclusionSet{}.write(out / "exclusions.txt");
      write_json(out / "outliers.json", {{"warnings", {"anomaly graph is empty"}}});
      std::cout << "empty graph: nothing to refine\n";
      return 0;
    }
    const double gamma = gamma_from_percentile(graph, refine_gamma_pct);
    LeidenOptions lo;
    lo.seed = refine_seed;
    const auto partition = leiden_cpm(graph, gamma, lo);
    const auto report = outlier_communities(graph, partition, refine_k_iqr);
    std::vector<std::vector<int>> flagged;
    for (int id : report.flagged) flagged.push_back(partition.communities[id]);
    const auto tables = r1_tables(l, refine_c.threads);
    const auto voids = voids_of(l);
    FilterOptions fo;
    fo.k_fraction = refine_c.k_fraction;
    fo.theta_percentile = refine_theta_pct;
    fo.void_threshold = refine_void;
    const auto filter = targeted_filtering(tables, flagged, fo, voids ? &*voids : nullptr, refine_c.threads);
    filter.exclusions.write(out / "exclusions.txt");
    json communities = json::array();
    for (const auto& m : partition.communities) communities.push_back(m);
    json fl = json::array();
    for (std::size_t i = 0; i < filter.communities.size(); ++i)
      fl.push_back({{"community", report.flagged[i]}, {"members", filter.communities[i].members},
                    {"theta", filter.communities[i].theta}, {"excluded", filter.communities[i].excluded}});
    write_json(out / "communities.json", {{"gamma", gamma}, {"seed", refine_seed}, {"communities", communities}});
    write_json(out / "outliers.json", {{"community_ids", report.community_ids}, {"densities", report.densities},
                                       {"q1", report.q1}, {"q3", report.q3}, {"threshold", report.threshold},
                                       {"flagged", fl}, {"warnings", report.warnings}});
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << report.flagged.size() << " outlier communities, " << filter.exclusions.size() << " exclusions\n";
    return 0;
  }

  if (*final_cmd) {
    const auto l = load(final_c);
    const ExclusionSet ex = final_exclusions.empty() ? ExclusionSet{} : ExclusionSet::read(final_exclusions);
    auto stack = ScoreStack::build(l.layers, final_c.rs, l.screen ? &*l.screen : nullptr, final_c.threads);
    if (!ex.empty()) stack = stack.masked(ex, final_c.threads);
    const auto scores = stack.final_scores(final_c.k_fraction, final_c.threads);
    const fs::path out = final_c.out;
    fs::create_directories(out / "maps");
    npy::write(out / "scores_final.npy", npy::make_float64({scores.size()}, scores));
    const auto maps = build_maps(l.manifest, *l.layers, scores);
    for (const auto& m : maps) write_anomaly_map(out / "maps" / (l.manifest.collections[m.collection_id].name + ".npy"), m);
    write_scores_csv(out / "scores.csv", l.manifest, maps);
    std::cout << "wrote " << maps.size() << " maps\n";
    return 0;
  }

  if (*eval_cmd) {
    const auto manifest = load_manifest(eval_manifest);
    std::vector<AnomalyMap> maps;
    for (const auto& e : manifest.collections) {
      const auto arr = npy::read(fs::path(eval_maps) / (e.name + ".npy"));
      AnomalyMap m;
      m.collection_id = e.id;
      m.shape = arr.shape;
      m.upsampled = arr.as_doubles();
      m.score = collection_score(m.upsampled);
      maps.push_back(std::move(m));
    }
    const auto metrics = evaluate_maps(manifest, maps, eval_cap).to_json();
    std::ostringstream table;
    table << "metric,value\n";
    for (const auto& [k, v] : metrics.items()) table << k << ',' << (v.is_null() ? "" : v.dump()) << '\n';
    if (!eval_out.empty()) open_out(eval_out) << table.str();
    for (const auto& [k, v] : metrics.items()) std::cout << k << ": " << (v.is_null() ? "n/a" : v.dump()) << '\n';
    return 0;
  }

  if (*stat_cmd) {
    if (*hill_cmd) {
      const auto s = read_values(hill_in);
      const auto curve = hill_curve(s, hill_kmin, hill_kmax);
      if (!hill_out.empty()) {
        auto csv = open_out(hill_out);
        csv << "k,alpha\n";
        for (std::size_t i = 0; i < curve.ks.size(); ++i) csv << curve.ks[i] << ',' << curve.estimates[i] << '\n';
      }
      std::cout << "plateau " << hill_plateau(curve, s.size()) << '\n';
      return 0;
    }
    if (*pl_cmd) {
      const auto [x, y] = read_xy(pl_in);
      const auto fit = fit_power_law(x, y);
      std::cout << "alpha " << fit.alpha << "\nintercept " << fit.intercept << "\nr2 " << fit.r_squared << '\n';
      return 0;
    }
    if (*qq_cmd) {
      const auto z = read_values(qq_in);
      const double a = qq_alpha > 0.0 ? qq_alpha : fit_beta_alpha(z);
      const auto qq = codegraph::qq_beta(z, a, qq_beta);
      if (!qq_out.empty()) {
        auto csv = open_out(qq_out);
        csv << "empirical,theoretical\n";
        for (const auto& p : qq.points) csv << p.empirical << ',' << p.theoretical << '\n';
      }
      std::cout << "alpha0 " << a << "\nks " << qq.ks << '\n';
      return 0;
    }
    if (*po_cmd) {
      std::vector<double> ref(po_dim, po_domain / 2.0);
      double sum = 0.0;
      for (std::size_t s = 0; s < po_seeds; ++s) {
        const auto r = poisson_toy_model(po_lambda, po_domain, po_dim, {ref}, po_seed + s);
        sum += r.references.front().plateau;
        if (s == 0 && !po_out.empty()) {
          auto csv = open_out(po_out);
          csv << "k,alpha\n";
          const auto& c = r.references.front().curve;
          for (std::size_t i = 0; i < c.ks.size(); ++i) csv << c.ks[i] << ',' << c.estimates[i] << '\n';
        }
      }
      std::cout << "mean plateau " << sum / static_cast<double>(po_seeds) << " over " << po_seeds << " seeds\n";
      return 0;
    }
    if (*sp_cmd) {
      const auto s = sample_beta_order_stats(sp_alpha, sp_omega, sp_reps, sp_seed);
      auto emit = [&](std::ostream& os) {
        os << "i,mean,variance,expected_mean,expected_variance\n";
        for (std::size_t i = 1; i < sp_omega; ++i) {
          const double e = 1.0 / (sp_alpha * static_cast<double>(i));
          os << i << ',' << s.mean(i) << ',' << s.variance(i) << ',' << e << ',' << e * e << '\n';
        }
      };
      if (!sp_out.empty()) {
        auto csv = open_out(sp_out);
        emit(csv);
      } else {
        emit(std::cout);
      }
      return 0;
    }
  }

  if (*vol_cmd) {
    const auto proj_src = read_stack(v_axial);
    const RandomProjection proj = RandomProjection::make(proj_src.dim, v_k, v_seed);
    auto prepare = [&](const VolumeTensor& stack, Axis axis) {
      return random_project(permute_to_canonical(pool_axis(stack, v_p), axis), proj);
    };
    const auto fused = fuse_axes(prepare(proj_src, Axis::kAxial), prepare(read_stack(v_coronal), Axis::kCoronal),
                                 prepare(read_stack(v_sagittal), Axis::kSagittal), !v_no_norm);
    write_features(v_out, fused);
    if (!v_fg.empty()) {
      const auto fg = npy::read(v_fg);
      if (fg.shape.size() != 3) throw DataError("foreground mask must be 3D");
      auto bytes = fg.as_bytes();
      for (auto& b : bytes) b = b != 0;
      const auto frac = void_fraction(bytes, {fg.shape[0], fg.shape[1], fg.shape[2]}, fg.shape[0] / fused.grid_shape[0]);
      const std::size_t kept = static_cast<std::size_t>(
          std::count_if(frac.begin(), frac.end(), [&](double f) { return f <= v_void; }));
      if (!v_void_out.empty()) npy::write(v_void_out, npy::make_float64(fused.grid_shape, frac));
      std::cout << kept << " of " << frac.size() << " tokens below the void threshold\n";
    }
    std::cout << "fused " << fused.size() << " tokens of dimension " << fused.dim() << '\n';
    return 0;
  }

  if (*pm_cmd) {
    GmmOptions go;
    go.mode = pm_em == "plain" ? EmMode::kPlain : EmMode::kTruncated;
    std::vector<npy::Array> maps;
    for (const auto& p : pm_inputs) maps.push_back(npy::read(p));
    const fs::path out = pm_out;
    fs::create_directories(out);
    json reports = json::array();
    auto report_of = [&](const PseudoMaskResult& r, const std::string& name) {
      return json{{"name", name}, {"k", r.fit.k}, {"weights", r.fit.weights}, {"means", r.fit.means},
                  {"variances", r.fit.variances}, {"bic", r.fit.bic}, {"converged", r.fit.converged},
                  {"q_fit", r.decision.q_fit}, {"q_comp", r.decision.q_comp},
                  {"thresholds", r.decision.thresholds}, {"cutoff", r.decision.cutoff}};
    };
    auto write_mask = [&](const std::string& input, const npy::Array& arr, std::span<const std::uint8_t> mask) {
      npy::write(out / fs::path(input).filename(), npy::make_uint8(arr.shape, mask));
    };
    if (pm_scope == "category") {
      std::vector<double> pooled;
      for (const auto& a : maps) {
        const auto v = a.as_doubles();
        pooled.insert(pooled.end(), v.begin(), v.end());
      }
      const auto r = pseudo_mask(pooled, pm_qfit, pm_qcomp, go);
      reports.push_back(report_of(r, "category"));
      for (std::size_t i = 0; i < maps.size(); ++i) write_mask(pm_inputs[i], maps[i], binarize(maps[i].as_doubles(), r.decision));
    } else {
      for (std::size_t i = 0; i < maps.size(); ++i) {
        const auto r = pseudo_mask(maps[i].as_doubles(), pm_qfit, pm_qcomp, go);
        reports.push_back(report_of(r, fs::path(pm_inputs[i]).stem().string()));
        write_mask(pm_inputs[i], maps[i], r.mask);
      }
    }
    write_json(out / "thresholds.json", reports);
    std::cout << "wrote " << maps.size() << " masks\n";
    return 0;
  }

  if (*run_cmd) {
    PipelineConfig cfg = run_config.empty() ? validate_config(json::object()) : load_config(run_config);
    if (!run_manifest.empty()) cfg.manifest = run_manifest;
    if (!run_output.empty()) cfg.output = run_output;
    if (run_seed) cfg.seed = *run_seed;
    if (run_subsets) cfg.subsets = *run_subsets;
    if (run_skip) cfg.skip_refine = true;
    cfg = [&] {
      auto doc = config_to_json(cfg);
      auto v = validate_config(doc);
      v.warnings = cfg.warnings;
      return v;
    }();
    for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << '\n';
    const auto report = run_pipeline(cfg);
    for (const auto& w : report["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
    std::cout << "exclusion rate " << report["exclusion_rate"].get<double>() << "; report at "
              << (cfg.output / "report.json").string() << '\n';
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 5;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
