#include <doctest.h>

#include "codegraph/error.hpp"
#include "codegraph/metrics.hpp"
#include "codegraph/rng.hpp"
#include "oracles.hpp"

using namespace codegraph;

namespace {

using Labels = std::vector<std::uint8_t>;

/// Scores on a coarse grid so that ties are common.
void random_fixture(CounterRng& rng, std::size_t n, std::vector<double>& s, Labels& y, int levels = 0) {
  s.resize(n);
  y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng.uniform() < 0.3;
    const double v = rng.uniform() + (y[i] ? 0.3 : 0.0);
    s[i] = levels ? std::floor(v * levels) / levels : v;
  }
  y[0] = 1;
  y[1] = 0;
}

}  // namespace

TEST_CASE("AUROC") {
  CHECK(auroc(std::vector<double>{0.9, 0.8, 0.1, 0.2}, Labels{1, 1, 0, 0}) == 1.0);
  CHECK(auroc(std::vector<double>(6, 0.4), Labels{1, 0, 1, 0, 0, 0}) == 0.5);
  CHECK_THROWS_AS(auroc(std::vector<double>{0.1, 0.2}, Labels{1, 1}), DomainError);

  CounterRng rng(1, 0);
  std::vector<double> s;
  Labels y;
  random_fixture(rng, 1000, s, y);
  CHECK(auroc(s, y) == doctest::Approx(oracle::auroc(s, y)).epsilon(1e-12));
  random_fixture(rng, 1000, s, y, 10);
  CHECK(auroc(s, y) == doctest::Approx(oracle::auroc(s, y)).epsilon(1e-12));
}

TEST_CASE("average precision") {
  CHECK(average_precision(std::vector<double>{0.9, 0.8, 0.1}, Labels{1, 1, 0}) == 1.0);
  std::vector<double> s{0.9, 0.8, 0.7, 0.6, 0.5};
  CHECK(average_precision(s, Labels{0, 0, 0, 0, 1}) == doctest::Approx(1.0 / 5.0));
  CHECK_THROWS_AS(average_precision(s, Labels(5, 0)), DomainError);

  CounterRng rng(2, 0);
  for (int levels : {0, 7}) {
    Labels y;
    random_fixture(rng, 300, s, y, levels);
    CHECK(average_precision(s, y) == doctest::Approx(oracle::average_precision(s, y)).epsilon(1e-12));
  }
}

TEST_CASE("F1 max") {
  CHECK(f1_max(std::vector<double>{0.9, 0.1}, Labels{1, 0}).f1 == 1.0);
  const auto tie = f1_max(std::vector<double>{0.4, 0.4}, Labels{1, 0});
  CHECK(tie.f1 == doctest::Approx(2.0 / 3.0));
  CHECK(tie.threshold == 0.4);

  CounterRng rng(3, 0);
  std::vector<double> s;
  Labels y;
  for (int levels : {0, 5, 20}) {
    random_fixture(rng, 200, s, y, levels);
    const auto r = f1_max(s, y);
    CHECK(r.f1 == doctest::Approx(oracle::f1_max(s, y)).epsilon(1e-12));
    const auto c = oracle::counts_at(s, y, r.threshold);
    CHECK(2.0 * c.tp / (c.tp + c.fp + c.positives) == doctest::Approx(r.f1));
  }
}

TEST_CASE("connected components match union-find") {
  CounterRng rng(4, 0);
  for (const std::vector<std::size_t>& shape : {std::vector<std::size_t>{9, 11}, std::vector<std::size_t>{5, 4, 6}}) {
    std::size_t n = 1;
    for (auto a : shape) n *= a;
    for (int t = 0; t < 5; ++t) {
      Labels mask(n);
      for (auto& v : mask) v = rng.uniform() < 0.3;
      int count = 0, expect = 0;
      const auto got = connected_components(mask, shape, &count);
      const auto ref = oracle::components(mask, shape, expect);
      CHECK(count == expect);
      CHECK(got == ref);
    }
  }
}

TEST_CASE("AUPRO") {
  MapSample exact{{4, 4}, std::vector<double>(16, 0.0), Labels(16, 0)};
  for (int i : {5, 6, 9, 10}) {
    exact.mask[i] = 1;
    exact.scores[i] = 1.0;
  }
  CHECK(aupro(std::vector<MapSample>{exact}) == doctest::Approx(1.0));

  // Two regions: one always detected before any false positive, one never above background.
  MapSample half{{1, 8}, {0.9, 0.9, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0}, {1, 1, 0, 0, 0, 0, 1, 1}};
  half.scores[6] = half.scores[7] = -1.0;
  CHECK(aupro(std::vector<MapSample>{half}, 0.3) == doctest::Approx(0.5));

  MapSample constant{{3, 3}, std::vector<double>(9, 0.2), {1, 0, 0, 0, 0, 0, 0, 0, 0}};
  const std::vector<oracle::Map> c_ref{{constant.shape, constant.scores, constant.mask}};
  CHECK(aupro(std::vector<MapSample>{constant}) == doctest::Approx(oracle::aupro(c_ref, 0.3)));

  CounterRng rng(5, 0);
  for (int t = 0; t < 10; ++t) {
    std::vector<MapSample> maps;
    std::vector<oracle::Map> refs;
    for (int k = 0; k < 3; ++k) {
      MapSample m{{6, 7}, std::vector<double>(42), Labels(42)};
      for (std::size_t i = 0; i < 42; ++i) {
        m.mask[i] = rng.uniform() < 0.15;
        m.scores[i] = std::floor((rng.uniform() + 0.5 * m.mask[i]) * 12) / 12;
      }
      maps.push_back(m);
      refs.push_back({m.shape, m.scores, m.mask});
    }
    CHECK(aupro(maps, 0.3) == doctest::Approx(oracle::aupro(refs, 0.3)).epsilon(1e-12));
  }
  MapSample clean{{2, 2}, std::vector<double>(4, 0.0), Labels(4, 0)};
  CHECK_THROWS_AS(aupro(std::vector<MapSample>{clean}), DomainError);
}

TEST_CASE("dice") {
  CHECK(dice(Labels{1, 0, 1}, Labels{1, 0, 1}) == 1.0);
  CHECK(dice(Labels{1, 0, 0}, Labels{0, 0, 1}) == 0.0);
  CHECK(dice(Labels{0, 0}, Labels{0, 0}) == 1.0);
  CHECK(dice(Labels{1, 1, 0, 0}, Labels{1, 0, 1, 0}) == doctest::Approx(0.5));
}

TEST_CASE("max-pool downsampling") {
  const std::vector<std::size_t> shape{8, 8, 8};
  CHECK(downsample_mask_maxpool(Labels(512, 0), shape, 4) == Labels(8, 0));
  Labels one(512, 0);
  one[5 * 64 + 2 * 8 + 7] = 1;
  const auto pooled = downsample_mask_maxpool(one, shape, 4);
  CHECK(std::count(pooled.begin(), pooled.end(), 1) == 1);
  CHECK(pooled[1 * 4 + 0 * 2 + 1] == 1);

  CounterRng rng(6, 0);
  const std::vector<std::size_t> odd{7, 10, 5};
  Labels mask(350);
  for (auto& v : mask) v = rng.uniform() < 0.02;
  std::vector<std::size_t> grid;
  CHECK(downsample_mask_maxpool(mask, odd, 3, &grid) == oracle::maxpool(mask, odd, 3));
  CHECK(grid == std::vector<std::size_t>{3, 4, 2});
}

TEST_CASE("patch types") {
  const std::vector<double> s{0.1, 0.2, 0.3, 0.4, 0.5, 0.05, 0.9};
  const Labels y{0, 0, 0, 0, 0, 1, 1};
  const auto types = label_patch_types(s, y);
  CHECK(types[0] == PatchType::kNormal);
  CHECK(types[5] == PatchType::kConsistent);
  CHECK(types[6] == PatchType::kInconsistent);
  CHECK_THROWS_AS(label_patch_types(std::vector<double>{0.1}, Labels{1}), DomainError);
}
