#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "codegraph/community.hpp"
#include "codegraph/metrics.hpp"
#include "codegraph/pipeline.hpp"
#include "codegraph/pseudomask.hpp"
#include "codegraph/statlab.hpp"
#include "codegraph/synthetic.hpp"
#include "codegraph/vol3d.hpp"

namespace py = pybind11;
using namespace codegraph;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const DoubleArray& a) { return {a.data(), a.data() + a.size()}; }
std::vector<std::uint8_t> to_bytes(const ByteArray& a) { return {a.data(), a.data() + a.size()}; }

// Tokens of shape (*grid, D) become a normalised FeatureTensor.
FeatureTensor tensor_from(const FloatArray& a, int collection, int layer, bool normalize) {
  if (a.ndim() < 2) throw DomainError("token array needs at least 2 dimensions");
  FeatureTensor t;
  t.collection_id = collection;
  t.layer_id = layer;
  for (py::ssize_t i = 0; i + 1 < a.ndim(); ++i) t.grid_shape.push_back(static_cast<std::size_t>(a.shape(i)));
  const auto d = static_cast<std::size_t>(a.shape(a.ndim() - 1));
  t.tokens = Matrix(grid_size(t.grid_shape), d);
  std::copy(a.data(), a.data() + a.size(), t.tokens.data.begin());
  if (normalize) normalize_rows(t);
  else t.zero_rows.assign(t.size(), 0);
  return t;
}

std::shared_ptr<LayerBases> bases_from(const std::vector<std::vector<FloatArray>>& layers, bool normalize) {
  auto out = std::make_shared<LayerBases>();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    out->layer_ids.push_back(static_cast<int>(l));
    std::vector<FeatureTensor> base;
    for (std::size_t c = 0; c < layers[l].size(); ++c)
      base.push_back(tensor_from(layers[l][c], static_cast<int>(c), static_cast<int>(l), normalize));
    out->bases.push_back(std::move(base));
  }
  return out;
}

py::array_t<double> as_array(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
  py::array_t<double> a(shape);
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

AnomalySimilarityGraph graph_from(const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& adj) {
  if (adj.ndim() != 2 || adj.shape(0) != adj.shape(1)) throw DomainError("adjacency must be square");
  const auto n = static_cast<std::size_t>(adj.shape(0));
  AnomalySimilarityGraph g(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto w = adj.at(i, j);
      if (w != adj.at(j, i)) throw DomainError("adjacency must be symmetric");
      if (w < 0) throw DomainError("weights must be non-negative");
      if (w > 0) g.add(i, j, w);
    }
  return g;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "CoDeGraph engine bindings";
  m.attr("__version__") = kVersion;

  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<StageError>(m, "StageError", PyExc_RuntimeError);

  m.def("topk_score", [](const DoubleArray& d, double k) {
    auto v = to_vector(d);
    std::sort(v.begin(), v.end());
    return topk_score(v, k);
  }, py::arg("distances"), py::arg("k_fraction") = 0.1);

  m.def("growth_rates", [](const DoubleArray& d) { return growth_rates(to_vector(d)).taus; }, py::arg("sorted_distances"));

  m.def("reference_index", &reference_index, py::arg("length"), py::arg("omega_fraction") = 0.3);

  m.def("lnamd_pool", [](const FloatArray& tokens, int r) {
    const auto t = lnamd_pool(tensor_from(tokens, 0, 0, false), r);
    py::array_t<float> out(std::vector<py::ssize_t>(tokens.shape(), tokens.shape() + tokens.ndim()));
    std::copy(t.tokens.data.begin(), t.tokens.data.end(), out.mutable_data());
    return out;
  }, py::arg("tokens"), py::arg("r"));

  m.def("musc_scores", [](const std::vector<std::vector<FloatArray>>& layers, std::vector<int> rs, double k,
                          std::size_t subsets) {
    const auto bases = bases_from(layers, true);
    std::vector<double> s;
    if (subsets > 1) {
      s = subset_final_scores(*bases, subsets, ScaleOptions{rs, k});
    } else {
      s = ScoreStack::build(bases, rs).final_scores(k);
    }
    return as_array(s, {static_cast<py::ssize_t>(bases->collections()),
                        static_cast<py::ssize_t>(s.size() / bases->collections())});
  }, py::arg("layers"), py::arg("receptive_fields") = std::vector<int>{1, 3, 5}, py::arg("k_fraction") = 0.1,
     py::arg("subsets") = 1, "Mean top-K score over layers and receptive fields; layers[l][c] has shape (*grid, D).");

  m.def("run_engine", [](const std::vector<std::vector<FloatArray>>& layers, const py::dict& options) {
    auto cfg_doc = nlohmann::json::object();
    for (auto item : options) {
      const auto key = py::str(item.first).cast<std::string>();
      const py::handle v = item.second;
      if (py::isinstance<py::bool_>(v)) cfg_doc[key] = v.cast<bool>();
      else if (py::isinstance<py::int_>(v)) cfg_doc[key] = v.cast<long long>();
      else if (py::isinstance<py::float_>(v)) cfg_doc[key] = v.cast<double>();
      else cfg_doc[key] = v.cast<std::vector<int>>();
    }
    const auto cfg = validate_config(cfg_doc);
    const auto bases = bases_from(layers, true);
    const auto r = run_engine(bases, EngineOptions::from(cfg));
    py::dict out;
    const auto b = static_cast<py::ssize_t>(r.collections);
    const auto n = static_cast<py::ssize_t>(r.plain_scores.size()) / b;
    out["plain_scores"] = as_array(r.plain_scores, {b, n});
    out["final_scores"] = as_array(r.final_scores, {b, n});
    out["coverage"] = r.selection.coverage;
    out["links"] = r.selection.links.size();
    out["gamma"] = r.gamma;
    py::array_t<std::int64_t> adj({b, b});
    for (py::ssize_t i = 0; i < b; ++i)
      for (py::ssize_t j = 0; j < b; ++j) adj.mutable_at(i, j) = r.selection.graph.weight(i, j);
    out["adjacency"] = adj;
    out["communities"] = r.partition.communities;
    std::vector<std::vector<int>> flagged;
    for (int id : r.outliers.flagged) flagged.push_back(r.partition.communities[id]);
    out["flagged"] = flagged;
    std::vector<std::pair<int, int>> ex(r.filter.exclusions.entries().begin(), r.filter.exclusions.entries().end());
    out["exclusions"] = ex;
    out["warnings"] = r.warnings;
    return out;
  }, py::arg("layers"), py::arg("options") = py::dict(),
     "Full engine on in-memory tokens; options use the run config keys.");

  m.def("leiden_cpm", [](const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& adj, double gamma,
                         std::uint64_t seed) {
    LeidenOptions o;
    o.seed = seed;
    return leiden_cpm(graph_from(adj), gamma, o).community_of;
  }, py::arg("adjacency"), py::arg("gamma"), py::arg("seed") = 0);

  m.def("cpm_quality", [](const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& adj,
                          const std::vector<int>& labels, double gamma) {
    return cpm_quality(graph_from(adj), Partition::from_labels(labels), gamma);
  }, py::arg("adjacency"), py::arg("labels"), py::arg("gamma"));

  m.def("auroc", [](const DoubleArray& s, const ByteArray& l) { return auroc(to_vector(s), to_bytes(l)); });
  m.def("average_precision", [](const DoubleArray& s, const ByteArray& l) { return average_precision(to_vector(s), to_bytes(l)); });
  m.def("f1_max", [](const DoubleArray& s, const ByteArray& l) {
    const auto r = f1_max(to_vector(s), to_bytes(l));
    return py::make_tuple(r.f1, r.threshold);
  });
  m.def("dice", [](const ByteArray& p, const ByteArray& g) { return dice(to_bytes(p), to_bytes(g)); });
  m.def("aupro", [](const std::vector<DoubleArray>& maps, const std::vector<ByteArray>& masks, double cap) {
    if (maps.size() != masks.size()) throw DomainError("maps and masks differ in count");
    std::vector<MapSample> samples;
    for (std::size_t i = 0; i < maps.size(); ++i)
      samples.push_back({std::vector<std::size_t>(maps[i].shape(), maps[i].shape() + maps[i].ndim()), to_vector(maps[i]),
                         to_bytes(masks[i])});
    return aupro(samples, cap);
  }, py::arg("maps"), py::arg("masks"), py::arg("fpr_cap") = 0.3);

  m.def("hill_estimator", [](const DoubleArray& s, std::size_t k) { return hill_estimator(to_vector(s), k); });
  m.def("fit_power_law", [](const DoubleArray& x, const DoubleArray& y) {
    const auto f = fit_power_law(to_vector(x), to_vector(y));
    return py::dict(py::arg("alpha") = f.alpha, py::arg("intercept") = f.intercept, py::arg("r_squared") = f.r_squared);
  });
  m.def("fit_beta_alpha", [](const DoubleArray& z) { return fit_beta_alpha(to_vector(z)); });
  m.def("poisson_plateau", [](double intensity, double domain, std::size_t d, std::uint64_t seed) {
    std::vector<double> ref(d, domain / 2.0);
    return poisson_toy_model(intensity, domain, d, {ref}, seed).references.front().plateau;
  }, py::arg("intensity") = 10.0, py::arg("domain") = 10.0, py::arg("d") = 2, py::arg("seed") = 0);

  m.def("normal_quantile", &normal_quantile);
  m.def("pseudo_mask", [](const DoubleArray& scores, double q_fit, double q_comp, bool truncated) {
    GmmOptions o;
    o.mode = truncated ? EmMode::kTruncated : EmMode::kPlain;
    const auto r = pseudo_mask(to_vector(scores), q_fit, q_comp, o);
    py::array_t<std::uint8_t> mask(std::vector<py::ssize_t>(scores.shape(), scores.shape() + scores.ndim()));
    std::copy(r.mask.begin(), r.mask.end(), mask.mutable_data());
    return py::dict(py::arg("k") = r.fit.k, py::arg("means") = r.fit.means, py::arg("variances") = r.fit.variances,
                    py::arg("weights") = r.fit.weights, py::arg("cutoff") = r.decision.cutoff, py::arg("mask") = mask);
  }, py::arg("scores"), py::arg("q_fit") = 0.95, py::arg("q_comp") = 0.99, py::arg("truncated") = true);

  m.def("random_project", [](const FloatArray& tokens, std::size_t k, std::uint64_t seed) {
    if (tokens.ndim() != 2) throw DomainError("tokens must be (n, D)");
    const auto n = static_cast<std::size_t>(tokens.shape(0));
    const auto d = static_cast<std::size_t>(tokens.shape(1));
    const auto proj = RandomProjection::make(d, k, seed);
    py::array_t<float> out({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(k)});
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = proj.apply({tokens.data() + i * d, d});
      std::copy(p.begin(), p.end(), out.mutable_data() + i * k);
    }
    return out;
  }, py::arg("tokens"), py::arg("k"), py::arg("seed") = 0);

  m.def("make_synthetic", [](std::size_t clones, std::uint64_t seed, const py::kwargs& kw) {
    SyntheticConfig c;
    c.clones = clones;
    c.seed = seed;
    for (auto item : kw) {
      const auto key = py::str(item.first).cast<std::string>();
      if (key == "collections") c.collections = item.second.cast<std::size_t>();
      else if (key == "grid") c.grid = item.second.cast<std::size_t>();
      else if (key == "dim") c.dim = item.second.cast<std::size_t>();
      else if (key == "block_rows") c.block_rows = item.second.cast<std::size_t>();
      else if (key == "block_cols") c.block_cols = item.second.cast<std::size_t>();
      else if (key == "bandwidth") c.bandwidth = item.second.cast<double>();
      else if (key == "latent_scale") c.latent_scale = item.second.cast<double>();
      else if (key == "noise") c.noise = item.second.cast<double>();
      else if (key == "clone_noise") c.clone_noise = item.second.cast<double>();
      else if (key == "noise_rank") c.noise_rank = item.second.cast<std::size_t>();
      else if (key == "anomaly_strength") c.anomaly_strength = item.second.cast<double>();
      else throw SchemaError("unknown synthetic option: " + key);
    }
    const auto data = make_synthetic(c);
    std::vector<std::vector<py::array_t<float>>> layers;
    for (const auto& base : data.layers.bases) {
      std::vector<py::array_t<float>> per;
      for (const auto& t : base) {
        py::array_t<float> a({static_cast<py::ssize_t>(c.grid), static_cast<py::ssize_t>(c.grid),
                              static_cast<py::ssize_t>(c.dim)});
        std::copy(t.tokens.data.begin(), t.tokens.data.end(), a.mutable_data());
        per.push_back(std::move(a));
      }
      layers.push_back(std::move(per));
    }
    return py::dict(py::arg("layers") = layers, py::arg("planted") = data.planted,
                    py::arg("anomalous_positions") = data.anomalous_positions, py::arg("labels") = data.labels);
  }, py::arg("clones") = 8, py::arg("seed") = 0);

  m.def("run_pipeline", [](const std::string& config_path) {
    return run_pipeline(load_config(config_path)).dump();
  }, py::arg("config"), "Runs the pipeline from a JSON config file and returns the report as a JSON string.");
}
