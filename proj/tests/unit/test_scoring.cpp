#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "codegraph/error.hpp"
#include "codegraph/scoring.hpp"
#include "test_support.hpp"

using namespace codegraph;

namespace {

/// 1D half-pixel linear interpolation, written out independently.
std::vector<double> resize_1d(const std::vector<double>& in, std::size_t out) {
  std::vector<double> r(out);
  const double scale = static_cast<double>(in.size()) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double x = (static_cast<double>(i) + 0.5) * scale - 0.5;
    x = std::clamp(x, 0.0, static_cast<double>(in.size() - 1));
    const auto lo = static_cast<std::size_t>(std::floor(x));
    const std::size_t hi = std::min(lo + 1, in.size() - 1);
    const double t = x - static_cast<double>(lo);
    r[i] = in[lo] * (1.0 - t) + in[hi] * t;
  }
  return r;
}

}  // namespace

TEST_CASE("LNAMD pooling") {
  const auto line = testing::tensor_from_rows({{0}, {3}, {6}}, {3, 1});
  const auto pooled = lnamd_pool(line, 3);
  CHECK(pooled.tokens.row(1)[0] == doctest::Approx(3.0));
  // Replicate border: (0 + 0 + 3) / 3 at the first row.
  CHECK(pooled.tokens.row(0)[0] == doctest::Approx(1.0));

  CounterRng rng(1, 0);
  const auto t = testing::random_tensor(rng, {4, 5}, 6);
  CHECK(lnamd_pool(t, 1).tokens.data == t.tokens.data);
  CHECK_THROWS_AS(lnamd_pool(t, 2), DomainError);

  const auto flat = testing::tensor_from_rows(std::vector<std::vector<float>>(9, {0.6f, 0.8f}), {3, 3});
  for (std::size_t h = 0; h < 9; ++h) {
    CHECK(lnamd_pool(flat, 3).tokens.row(h)[0] == doctest::Approx(0.6));
    CHECK(lnamd_pool(flat, 3).tokens.row(h)[1] == doctest::Approx(0.8));
  }
}

TEST_CASE("LNAMD pooling commutes with a fixed rotation of the features") {
  CounterRng rng(2, 0);
  const auto t = testing::random_tensor(rng, {5, 5}, 2);
  const double a = 0.7, c = std::cos(a), s = std::sin(a);
  auto rotated = t;
  for (std::size_t h = 0; h < 25; ++h) {
    const auto r = t.tokens.row(h);
    auto o = rotated.tokens.row(h);
    o[0] = static_cast<float>(c * r[0] - s * r[1]);
    o[1] = static_cast<float>(s * r[0] + c * r[1]);
  }
  const auto p = lnamd_pool(t, 5);
  const auto q = lnamd_pool(rotated, 5);
  for (std::size_t h = 0; h < 25; ++h) {
    const auto r = p.tokens.row(h);
    CHECK(q.tokens.row(h)[0] == doctest::Approx(c * r[0] - s * r[1]).epsilon(1e-5));
    CHECK(q.tokens.row(h)[1] == doctest::Approx(s * r[0] + c * r[1]).epsilon(1e-5));
  }
}

TEST_CASE("final score reduces to the top-K score") {
  auto layers = testing::random_layers(3, 5, {3, 3}, 8, 1);
  ScaleOptions one{{1}, 0.1};
  const auto rec = mutual_similarity_vector({2, 4}, layers->bases[0]);
  CHECK(final_score({2, 4}, *layers, one) == doctest::Approx(topk_score(rec, 0.1)));
}

TEST_CASE("stack scores equal the reference path, with and without exclusions") {
  auto layers = testing::random_layers(4, 6, {4, 4}, 8, 2);
  const ScaleOptions opts;
  const auto stack = ScoreStack::build(layers, opts.receptive_fields);
  CHECK(stack.scales() == 6);
  const auto scores = stack.final_scores(opts.k_fraction);
  for (int c = 0; c < 6; ++c)
    for (int h = 0; h < 16; h += 3)
      CHECK(scores[c * 16 + h] == doctest::Approx(final_score({c, h}, *layers, opts)).epsilon(1e-12));

  ExclusionSet ex;
  ex.insert(1, 5);
  ex.insert(3, 0);
  ex.insert(3, 9);
  const auto masked = stack.masked(ex).final_scores(opts.k_fraction);
  const auto rebuilt = ScoreStack::build(layers, opts.receptive_fields).masked(ex).final_scores(opts.k_fraction);
  CHECK(masked == rebuilt);
  for (int c = 0; c < 6; ++c)
    for (int h = 0; h < 16; h += 5)
      CHECK(masked[c * 16 + h] == doctest::Approx(final_score({c, h}, *layers, opts, ex)).epsilon(1e-12));
}

TEST_CASE("subset division") {
  CHECK(subset_bounds(10, 3) == std::vector<std::size_t>{0, 3, 6, 10});
  CHECK_THROWS_AS(subset_bounds(5, 3), DomainError);
  CHECK(subset_bounds(6, 1) == std::vector<std::size_t>{0, 6});

  auto layers = testing::random_layers(5, 8, {3, 3}, 6, 2);
  const ScaleOptions opts;
  CHECK(subset_final_scores(*layers, 1, opts) == ScoreStack::build(layers, opts.receptive_fields).final_scores(0.1));

  const auto split = subset_final_scores(*layers, 2, opts);
  for (int half = 0; half < 2; ++half) {
    auto part = std::make_shared<LayerBases>();
    part->layer_ids = layers->layer_ids;
    for (const auto& b : layers->bases) {
      std::vector<FeatureTensor> chunk(b.begin() + 4 * half, b.begin() + 4 * half + 4);
      for (std::size_t c = 0; c < chunk.size(); ++c) chunk[c].collection_id = static_cast<int>(c);
      part->bases.push_back(chunk);
    }
    const auto own = ScoreStack::build(part, opts.receptive_fields).final_scores(0.1);
    for (std::size_t k = 0; k < own.size(); ++k) CHECK(split[half * 36 + k] == own[k]);
  }
}

TEST_CASE("upsampling") {
  const std::vector<std::size_t> g2{2, 2}, t4{4, 4};
  const std::vector<double> constant(4, 0.37);
  for (double v : upsample_map(constant, g2, t4)) CHECK(v == doctest::Approx(0.37));

  const std::vector<double> ramp{0, 1, 0, 1};
  const auto up = upsample_map(ramp, g2, t4);
  const auto row = resize_1d({0, 1}, 4);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      CHECK(up[y * 4 + x] == doctest::Approx(row[x]));
      if (x) CHECK(up[y * 4 + x] >= up[y * 4 + x - 1]);
    }
  CHECK(up[0] == 0.0);
  CHECK(up[3] == 1.0);

  // Separable oracle on a random 3 x 5 grid.
  CounterRng rng(6, 0);
  std::vector<double> grid(15);
  for (auto& v : grid) v = rng.uniform();
  const std::vector<std::size_t> g35{3, 5}, t{7, 11};
  const auto got = upsample_map(grid, g35, t);
  std::vector<std::vector<double>> cols(5);
  for (std::size_t x = 0; x < 5; ++x) cols[x] = resize_1d({grid[x], grid[5 + x], grid[10 + x]}, 7);
  for (std::size_t y = 0; y < 7; ++y) {
    std::vector<double> line(5);
    for (std::size_t x = 0; x < 5; ++x) line[x] = cols[x][y];
    const auto out = resize_1d(line, 11);
    for (std::size_t x = 0; x < 11; ++x) CHECK(got[y * 11 + x] == doctest::Approx(out[x]).epsilon(1e-12));
  }

  const std::vector<std::size_t> g16{16, 16, 16}, t224{224, 224, 224};
  const auto map = make_anomaly_map(0, g16, std::vector<double>(4096, 0.5), t224);
  CHECK(map.shape == t224);
  CHECK(map.upsampled.size() == 224u * 224u * 224u);
  CHECK(map.score == 0.5);
}

TEST_CASE("collection score is the maximum token score") {
  CHECK(collection_score(std::vector<double>{0.1, 0.9}) == 0.9);
  CHECK(collection_score(std::vector<double>(5, 0.0)) == 0.0);
}
