#include <doctest.h>

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "codegraph/error.hpp"
#include "codegraph/npy.hpp"
#include "codegraph/synthetic.hpp"
#include "test_support.hpp"

using namespace codegraph;
using nlohmann::json;

namespace {

void write_json(const std::filesystem::path& p, const json& j) {
  std::ofstream out(p);
  out << j.dump(2);
}

json three_collection_manifest(const testing::TempDir& dir) {
  CounterRng rng(1, 0);
  json items = json::array();
  for (int c = 0; c < 3; ++c) {
    json feats = json::object();
    for (int l : {6, 12, 18, 24}) {
      const auto name = "c" + std::to_string(c) + "_l" + std::to_string(l) + ".npy";
      write_features(dir / name, testing::random_tensor(rng, {2, 2}, 5, c, l));
      feats[std::to_string(l)] = name;
    }
    items.push_back({{"id", c}, {"features", feats}, {"shape", {8, 8}}});
  }
  return {{"modality", "2d"}, {"layers", {6, 12, 18, 24}}, {"collections", items}};
}

}  // namespace

TEST_CASE("manifest with 3 collections and 4 layers") {
  testing::TempDir dir("manifest");
  write_json(dir / "m.json", three_collection_manifest(dir));
  const auto m = load_manifest(dir / "m.json");
  CHECK(m.size() == 3);
  CHECK(m.layers == std::vector<int>{6, 12, 18, 24});
  for (const auto& e : m.collections) CHECK(e.features.size() == 4);
  const auto layer = load_layer(m, 12);
  REQUIRE(layer.size() == 3);
  CHECK(layer[1].grid_shape == std::vector<std::size_t>{2, 2});
  CHECK(layer[1].dim() == 5);
}

TEST_CASE("manifest errors") {
  testing::TempDir dir("manifest_err");
  auto doc = three_collection_manifest(dir);

  SUBCASE("empty base set") {
    doc["collections"] = json::array();
    write_json(dir / "m.json", doc);
    CHECK_THROWS_WITH_AS(load_manifest(dir / "m.json"), "empty base set", SchemaError);
  }
  SUBCASE("missing feature file names the path") {
    doc["collections"][1]["features"]["18"] = "nowhere.npy";
    write_json(dir / "m.json", doc);
    try {
      load_manifest(dir / "m.json");
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("nowhere.npy") != std::string::npos);
    }
  }
  SUBCASE("mixed modality") {
    doc["collections"][2]["shape"] = {8, 8, 8};
    write_json(dir / "m.json", doc);
    CHECK_THROWS_AS(load_manifest(dir / "m.json"), SchemaError);
  }
  SUBCASE("ids must be dense") {
    doc["collections"][2]["id"] = 7;
    write_json(dir / "m.json", doc);
    CHECK_THROWS_AS(load_manifest(dir / "m.json"), SchemaError);
  }
  SUBCASE("layer sets must agree") {
    doc["collections"][0]["features"].erase("24");
    write_json(dir / "m.json", doc);
    CHECK_THROWS_AS(load_manifest(dir / "m.json"), SchemaError);
  }
  SUBCASE("not json") {
    std::ofstream(dir / "m.json") << "{ nope";
    CHECK_THROWS_AS(load_manifest(dir / "m.json"), SchemaError);
  }
}

TEST_CASE("token counts follow the patch grid") {
  // 518 / 14 = 37 tokens per side; 224 / 14 = 16 per axis of a volume.
  CHECK(grid_size(std::vector<std::size_t>{518 / 14, 518 / 14}) == 1369);
  CHECK(grid_size(std::vector<std::size_t>{224 / 14, 224 / 14, 224 / 14}) == 4096);
}

TEST_CASE("normalisation gives unit rows, flags zero rows and is idempotent") {
  auto t = testing::tensor_from_rows({{3, 4}, {0, 0}, {1e-3f, 0}}, {3});
  normalize_rows(t);
  CHECK(t.zero_rows == std::vector<std::uint8_t>{0, 1, 0});
  CHECK(t.tokens.row(0)[0] == doctest::Approx(0.6));
  CHECK(t.tokens.row(0)[1] == doctest::Approx(0.8));
  CHECK(t.tokens.row(1)[0] == 0.0f);
  CHECK(t.tokens.row(2)[0] == doctest::Approx(1.0));

  CounterRng rng(5, 1);
  auto r = testing::random_tensor(rng, {4, 4}, 16);
  for (std::size_t i = 0; i < r.size(); ++i) {
    double n = 0;
    for (float v : r.tokens.row(i)) n += static_cast<double>(v) * v;
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-6));
  }
  auto twice = r;
  normalize_rows(twice);
  for (std::size_t k = 0; k < r.tokens.data.size(); ++k)
    CHECK(std::abs(twice.tokens.data[k] - r.tokens.data[k]) <= 1e-7);
}

TEST_CASE("feature files round trip bit-identically") {
  testing::TempDir dir("features");
  CounterRng rng(9, 2);
  auto t = testing::random_tensor(rng, {3, 5}, 7);
  write_features(dir / "a.npy", t);
  const auto a = npy::read(dir / "a.npy");
  CHECK(a.shape == std::vector<std::size_t>{3, 5, 7});
  CHECK(a.as_floats() == t.tokens.data);

  DatasetManifest m;
  m.root = dir.path();
  m.layers = {0};
  CollectionEntry e;
  e.features[0] = dir / "a.npy";
  m.collections.push_back(e);
  const auto raw = load_features(m, 0, 0, false);
  CHECK(raw.tokens.data == t.tokens.data);
  write_features(dir / "b.npy", raw);
  CHECK(npy::read(dir / "b.npy").as_floats() == t.tokens.data);
}

TEST_CASE("rank-2 token files need a manifest grid, non-finite values are rejected") {
  testing::TempDir dir("rank2");
  std::vector<float> v(6 * 2, 0.5f);
  npy::write(dir / "flat.npy", npy::make_float32({6, 2}, v));
  DatasetManifest m;
  m.root = dir.path();
  m.layers = {0};
  CollectionEntry e;
  e.features[0] = dir / "flat.npy";
  m.collections.push_back(e);
  CHECK_THROWS_AS(load_features(m, 0, 0), DataError);
  m.grid = std::vector<std::size_t>{2, 3};
  CHECK(load_features(m, 0, 0).grid_shape == std::vector<std::size_t>{2, 3});
  m.grid = std::vector<std::size_t>{4, 4};
  CHECK_THROWS_AS(load_features(m, 0, 0), DataError);

  v[3] = std::nanf("");
  npy::write(dir / "flat.npy", npy::make_float32({2, 3, 2}, v));
  CHECK_THROWS_AS(load_features(m, 0, 0), DataError);
}

TEST_CASE("masks accept 0/1 and 0/255, reject other values") {
  testing::TempDir dir("mask");
  DatasetManifest m;
  m.root = dir.path();
  CollectionEntry e;
  e.shape = {2, 2};
  e.mask = dir / "m.npy";
  m.collections.push_back(e);
  npy::write(dir / "m.npy", npy::make_uint8({2, 2}, std::vector<std::uint8_t>{0, 255, 255, 0}));
  CHECK(load_mask(m, 0).values == std::vector<std::uint8_t>{0, 1, 1, 0});
  npy::write(dir / "m.npy", npy::make_uint8({2, 2}, std::vector<std::uint8_t>{0, 7, 1, 0}));
  CHECK_THROWS_AS(load_mask(m, 0), DataError);
  npy::write(dir / "m.npy", npy::make_uint8({4}, std::vector<std::uint8_t>{0, 1, 1, 0}));
  CHECK_THROWS_AS(load_mask(m, 0), DataError);

  m.collections[0].mask.reset();
  const auto empty = load_mask(m, 0);
  CHECK(empty.values == std::vector<std::uint8_t>(4, 0));
}

TEST_CASE("exclusion sets") {
  ExclusionSet s;
  CHECK(s.insert(2, 5));
  CHECK_FALSE(s.insert(2, 5));
  CHECK(s.insert(0, 1));
  CHECK(s.contains(2, 5));
  CHECK_FALSE(s.contains(5, 2));
  CHECK_THROWS_AS(s.insert(-1, 0), DomainError);

  const auto masks = s.to_masks(std::vector<std::size_t>{2, 1, 6});
  CHECK(masks[0] == std::vector<std::uint8_t>{0, 1});
  CHECK(masks[2][5] == 1);
  CHECK_THROWS_AS(s.to_masks(std::vector<std::size_t>{2, 1, 5}), DomainError);

  testing::TempDir dir("excl");
  s.write(dir / "x.txt");
  const auto back = ExclusionSet::read(dir / "x.txt");
  CHECK(back.entries() == s.entries());

  ExclusionSet t;
  t.insert(9, 9);
  t.merge(s);
  CHECK(t.size() == 3);
}

TEST_CASE("synthetic datasets load back through the manifest") {
  testing::TempDir dir("synth");
  SyntheticConfig cfg;
  cfg.collections = 6;
  cfg.clones = 2;
  cfg.dim = 8;
  cfg.layers = {1, 2};
  const auto data = make_synthetic(cfg);
  const auto path = write_synthetic(data, dir.path());
  const auto m = load_manifest(path);
  CHECK(m.size() == 6);
  CHECK(m.layers == std::vector<int>{1, 2});
  const auto layer = load_layer(m, 2, false);
  CHECK(layer[3].tokens.data == data.layers.bases[1][3].tokens.data);
  const auto mask = load_mask(m, data.planted.front());
  CHECK(mask.shape == std::vector<std::size_t>{32, 32});
  std::size_t set = 0;
  for (auto v : mask.values) set += v;
  CHECK(set == data.anomalous_positions.size() * cfg.patch * cfg.patch);
  CHECK(load_cls_tokens(m).size() == 6);
}
