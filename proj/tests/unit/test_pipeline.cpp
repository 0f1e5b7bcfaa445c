#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "codegraph/error.hpp"
#include "codegraph/npy.hpp"
#include "codegraph/pipeline.hpp"
#include "codegraph/synthetic.hpp"
#include "test_support.hpp"

using namespace codegraph;
using nlohmann::json;

namespace {

std::vector<char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("config validation") {
  const auto defaults = validate_config(json::object());
  CHECK(defaults.k_fraction == 0.10);
  CHECK(defaults.omega_fraction == 0.3);
  CHECK(defaults.alpha == 0.2);
  CHECK(defaults.coverage == 0.95);
  CHECK(defaults.k_iqr == 4.5);
  CHECK(defaults.theta_percentile == 99.0);
  CHECK(defaults.gamma_percentile == 25.0);
  CHECK(defaults.receptive_fields == std::vector<int>{1, 3, 5});
  CHECK(defaults.layers == std::vector<int>{6, 12, 18, 24});
  CHECK(defaults.warnings.empty());

  CHECK_THROWS_AS(validate_config(json{{"omega_fraction", 1.5}}), SchemaError);
  try {
    validate_config(json{{"omega_fraction", 1.5}, {"k_fraction", 0.0}});
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    const std::string what = e.what();
    CHECK(what.find("omega_fraction") != std::string::npos);
    CHECK(what.find("k_fraction") != std::string::npos);
  }
  CHECK_THROWS_AS(validate_config(json{{"receptive_fields", {1, 2}}}), SchemaError);
  CHECK_THROWS_AS(validate_config(json{{"no_such_key", 1}}), SchemaError);

  const auto zero = validate_config(json{{"coverage", 0.0}});
  CHECK(zero.coverage == 0.0);
  CHECK_FALSE(zero.warnings.empty());

  const auto round = validate_config(config_to_json(validate_config(json{{"alpha", 0.3}, {"subsets", 2}})));
  CHECK(round.alpha == 0.3);
  CHECK(round.subsets == 2);
}

TEST_CASE("engine on a planted-clone base") {
  SyntheticConfig sc;
  sc.seed = 1;
  const auto data = make_synthetic(sc);
  auto layers = std::make_shared<LayerBases>(data.layers);
  const auto r = run_engine(layers, EngineOptions{});
  REQUIRE(r.filter.communities.size() == 1);
  CHECK(r.filter.communities[0].members == data.planted);

  std::size_t captured = 0;
  for (int c : data.planted)
    for (int h : data.anomalous_positions) captured += r.filter.exclusions.contains(c, h);
  CHECK(captured >= 0.9 * data.planted.size() * data.anomalous_positions.size());
  for (const auto& [c, h] : r.filter.exclusions.entries())
    CHECK(std::find(data.planted.begin(), data.planted.end(), c) != data.planted.end());

  // Refinement raises the scores of the excluded clones.
  const std::size_t n = data.layers.bases[0][0].tokens.rows;
  for (int c : data.planted)
    for (int h : data.anomalous_positions)
      if (r.filter.exclusions.contains(c, h)) CHECK(r.final_scores[c * n + h] > r.plain_scores[c * n + h]);

  EngineOptions skip;
  skip.skip_refine = true;
  const auto plain = run_engine(layers, skip);
  CHECK(plain.final_scores == plain.plain_scores);
  CHECK(plain.plain_scores == r.plain_scores);
  CHECK(plain.filter.exclusions.empty());
}

TEST_CASE("zero coverage selects nothing and refines nothing") {
  SyntheticConfig sc;
  sc.collections = 12;
  sc.clones = 0;
  const auto data = make_synthetic(sc);
  EngineOptions opts;
  opts.coverage = 0.0;
  const auto r = run_engine(std::make_shared<LayerBases>(data.layers), opts);
  CHECK(r.selection.links.empty());
  CHECK(r.filter.exclusions.empty());
  CHECK(r.final_scores == r.plain_scores);
}

TEST_CASE("full runs are reproducible byte for byte") {
  testing::TempDir dir("pipeline");
  SyntheticConfig sc;
  sc.collections = 32;
  sc.seed = 3;
  const auto manifest = write_synthetic(make_synthetic(sc), dir / "data");

  PipelineConfig cfg = validate_config(json::object());
  cfg.manifest = manifest;
  cfg.output = dir / "run_a";
  const auto a = run_pipeline(cfg);
  cfg.output = dir / "run_b";
  const auto b = run_pipeline(cfg);
  CHECK(a == b);
  for (const char* f : {"scores_final.npy", "scores_plain.npy", "exclusions.txt", "graph.txt", "report.json",
                        "metrics.csv", "scores.csv"}) {
    const std::string name = f;
    CAPTURE(name);
    REQUIRE(std::filesystem::exists(dir / "run_a" / f));
    CHECK(file_bytes(dir / "run_a" / f) == file_bytes(dir / "run_b" / f));
  }
  // The config snapshot differs only in the output directory.
  auto ca = json::parse(file_bytes(dir / "run_a" / "config.json")), cb = json::parse(file_bytes(dir / "run_b" / "config.json"));
  ca.erase("output");
  cb.erase("output");
  CHECK(ca == cb);
  CHECK(a["capture_rate"].get<double>() >= 0.9);
  CHECK(a["metrics"]["image_auroc"].get<double>() > 0.9);

  cfg.output = dir / "skip";
  cfg.skip_refine = true;
  const auto s = run_pipeline(cfg);
  CHECK(s["excluded"] == 0);
  CHECK(file_bytes(dir / "skip" / "scores_final.npy") == file_bytes(dir / "run_a" / "scores_plain.npy"));

  cfg.manifest = dir / "missing.json";
  cfg.output = dir / "bad";
  CHECK_THROWS_AS(run_pipeline(cfg), StageError);
}
