#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "codegraph/error.hpp"
#include "codegraph/mutual.hpp"
#include "test_support.hpp"

using namespace codegraph;

namespace {

MutualSimilarityRecord record_of(std::vector<double> d, std::vector<int> s = {}) {
  MutualSimilarityRecord r;
  if (s.empty()) {
    s.resize(d.size());
    std::iota(s.begin(), s.end(), 1);
  }
  r.distances = std::move(d);
  r.sources = std::move(s);
  return r;
}

}  // namespace

TEST_CASE("distance to a collection") {
  const auto c = testing::tensor_from_rows({{1, 0}, {0, 1}}, {2});
  const std::vector<float> z{1, 0};
  CHECK(*distance_to_collection(z, c) == 0.0);
  const auto only = testing::tensor_from_rows({{0, 1}}, {1});
  CHECK(*distance_to_collection(z, only) == 2.0);

  ExclusionSet ex;
  ex.insert(0, 0);
  CHECK_FALSE(distance_to_collection(z, only, ex).has_value());
  CHECK(*distance_to_collection(z, c, ex) == 2.0);
}

TEST_CASE("squared distance kernel agrees with a double-precision sum") {
  CounterRng rng(3, 0);
  for (std::size_t dim : {1u, 7u, 8u, 9u, 33u, 1024u}) {
    std::vector<float> a(dim), b(dim);
    for (auto& x : a) x = static_cast<float>(rng.normal());
    for (auto& x : b) x = static_cast<float>(rng.normal());
    const double ref = testing::naive_distance(a, b);
    CHECK(squared_distance(a, b) == doctest::Approx(ref).epsilon(1e-5));
    CHECK(squared_distance(a, b) == squared_distance(a, b));
  }
}

TEST_CASE("mutual similarity vectors are sorted by distance then source") {
  // z = [1, 0]; C1 at distance 0.2, C2 at distance 0.1 (squared).
  auto row_at = [](double d) {
    const double cosv = 1.0 - d / 2.0;
    return std::vector<float>{static_cast<float>(cosv), static_cast<float>(std::sqrt(1.0 - cosv * cosv))};
  };
  std::vector<FeatureTensor> base{testing::tensor_from_rows({{1, 0}}, {1}, 0),
                                  testing::tensor_from_rows({row_at(0.2)}, {1}, 1),
                                  testing::tensor_from_rows({row_at(0.1)}, {1}, 2)};
  auto r = mutual_similarity_vector({0, 0}, base);
  CHECK(r.sources == std::vector<int>{2, 1});
  CHECK(r.distances[0] == doctest::Approx(0.1).epsilon(1e-5));
  CHECK(r.distances[1] == doctest::Approx(0.2).epsilon(1e-5));

  base[1] = testing::tensor_from_rows({row_at(0.1)}, {1}, 1);
  r = mutual_similarity_vector({0, 0}, base);
  CHECK(r.distances[0] == r.distances[1]);
  CHECK(r.sources == std::vector<int>{1, 2});
}

TEST_CASE("top-K score") {
  CHECK(topk_score(std::vector<double>{0.1, 0.2, 0.4}, 0.67) == doctest::Approx(0.15));
  CHECK(topk_score(std::vector<double>{0.3}, 0.1) == 0.3);
  CHECK(topk_score(std::vector<double>(20, 0.7), 0.25) == doctest::Approx(0.7));
  CHECK(topk_count(39, 0.1) == 4);
  CHECK(topk_count(5, 0.1) == 1);
  CHECK_THROWS_AS(topk_count(5, 0.0), DomainError);
  CHECK_THROWS_AS(topk_score(std::vector<double>{}, 0.1), DomainError);
}

TEST_CASE("top-K score does not depend on comparison order") {
  CounterRng rng(11, 0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> d(1 + rng.below(40));
    for (auto& x : d) x = rng.uniform();
    auto r = record_of(d);
    sort_record(r);
    const double ref = topk_score(r, 0.1);
    shuffle(d.begin(), d.end(), rng);
    auto r2 = record_of(d);
    sort_record(r2);
    CHECK(topk_score(r2, 0.1) == ref);
  }
}

TEST_CASE("growth rates") {
  const auto g = growth_rates(std::vector<double>{1, 2, 4}).taus;
  REQUIRE(g.size() == 2);
  CHECK(g[0] == doctest::Approx(std::log(2.0)));
  CHECK(g[1] == doctest::Approx(std::log(2.0)));
  CHECK(growth_rates(std::vector<double>{0.3, 0.3, 0.3}).taus == std::vector<double>{0.0, 0.0});
  const auto f = growth_rates(std::vector<double>{1e-12, 1e-6}).taus;
  CHECK(f[0] == doctest::Approx(std::log(1e-6 / kDistanceFloor)));

  CounterRng rng(4, 0);
  std::vector<double> d(30);
  for (auto& x : d) x = rng.uniform() * rng.uniform();
  std::sort(d.begin(), d.end());
  for (double t : growth_rates(d).taus) CHECK(t >= 0.0);
}

TEST_CASE("reference rank") {
  CHECK(reference_index(99, 0.3) == 30);
  // Brute force over lengths: round half up of 0.3 * len, never below 2.
  for (std::size_t len = 2; len < 200; ++len) {
    const double x = 0.3 * static_cast<double>(len);
    std::size_t expect = static_cast<std::size_t>(x);
    if (x - static_cast<double>(expect) >= 0.5) ++expect;
    expect = std::clamp<std::size_t>(expect, 2, len);
    CHECK(reference_index(len, 0.3) == expect);
  }
  CHECK(reference_index(3, 1.0) == 3);
  CHECK_THROWS_AS(reference_index(1, 0.3), DomainError);
  CHECK_THROWS_AS(reference_index(10, 1.5), DomainError);
}

TEST_CASE("endurance ratios") {
  // len 10, omega = 3: d_(1) = 0.1, d_(3) = 0.5.
  auto r = record_of({0.1, 0.3, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2});
  CHECK(endurance_ratio(r, 1, 0.3) == doctest::Approx(0.2));
  CHECK(weighted_endurance_ratio(r, 1, 0.3, 0.2) == doctest::Approx(0.316979).epsilon(1e-5));
  CHECK(weighted_endurance_ratio(r, 2, 0.3, 0.0) == endurance_ratio(r, 2, 0.3));
  CHECK_THROWS_AS(endurance_ratio(r, 3, 0.3), DomainError);
  CHECK_THROWS_AS(endurance_ratio(r, 0, 0.3), DomainError);

  auto flat = record_of({0.5, 0.5, 0.5});
  CHECK(endurance_ratio(flat, 1, 0.5) == 1.0);
  auto unit = record_of({1.0, 1.0, 4.0});
  CHECK(weighted_endurance_ratio(unit, 1, 1.0, 0.7) == doctest::Approx(0.25));
}

TEST_CASE("layer aggregation") {
  auto a = record_of({0.2, 0.5}, {1, 2});
  auto b = record_of({0.3, 0.4}, {2, 1});
  const std::vector<MutualSimilarityRecord> two{a, b};
  const auto agg = aggregate_layer_distances(two);
  CHECK(agg.sources == std::vector<int>{1, 2});
  CHECK(agg.distances[0] == doctest::Approx(0.3));
  CHECK(agg.distances[1] == doctest::Approx(0.4));

  const std::vector<MutualSimilarityRecord> same{a, a};
  const auto idem = aggregate_layer_distances(same);
  CHECK(idem.sources == a.sources);
  CHECK(idem.distances == a.distances);

  // Four random layers against a mean-then-sort oracle.
  CounterRng rng(8, 0);
  std::vector<MutualSimilarityRecord> layers;
  std::vector<double> mean(12, 0.0);
  for (int l = 0; l < 4; ++l) {
    std::vector<double> d(12);
    for (std::size_t j = 0; j < d.size(); ++j) {
      d[j] = rng.uniform();
      mean[j] += d[j] / 4.0;
    }
    auto r = record_of(d);
    sort_record(r);
    layers.push_back(r);
  }
  const auto out = aggregate_layer_distances(layers);
  std::vector<std::pair<double, int>> oracle;
  for (std::size_t j = 0; j < mean.size(); ++j) oracle.emplace_back(mean[j], static_cast<int>(j) + 1);
  std::sort(oracle.begin(), oracle.end());
  for (std::size_t k = 0; k < oracle.size(); ++k) {
    CHECK(out.sources[k] == oracle[k].second);
    CHECK(out.distances[k] == doctest::Approx(oracle[k].first).epsilon(1e-12));
  }

  auto mismatched = record_of({0.1, 0.2}, {1, 3});
  const std::vector<MutualSimilarityRecord> bad{a, mismatched};
  CHECK_THROWS_AS(aggregate_layer_distances(bad), DomainError);
}

TEST_CASE("CLS screening") {
  CounterRng rng(21, 0);
  std::vector<std::vector<float>> cls(10, std::vector<float>(16));
  for (auto& t : cls)
    for (auto& x : t) x = static_cast<float>(rng.normal());
  // Collections 4 and 7 are near-duplicates of collection 0.
  for (int j : {4, 7})
    for (std::size_t k = 0; k < 16; ++k) cls[j][k] = cls[0][k] + 0.01f * static_cast<float>(rng.normal());

  const auto all = cls_screen(cls, 3, 1.0);
  CHECK(all.size() == 9);
  CHECK(std::find(all.begin(), all.end(), 3) == all.end());
  CHECK(cls_screen(cls, 0, 0.2) == std::vector<int>{4, 7});
  CHECK(cls_screen(cls, 0, 0.6).size() == 6);
  CHECK(cls_screen(cls, 0, 0.01).size() == 1);

  // With eta = 1 the screened record equals the unscreened one exactly.
  const auto base = testing::random_base(5, 10, {3, 3}, 8);
  const auto screens = cls_screen_all(cls, 1.0);
  for (int c = 0; c < 10; ++c) {
    const auto plain = mutual_similarity_vector({c, 4}, base);
    const auto screened = mutual_similarity_vector({c, 4}, base, {}, &screens[c]);
    CHECK(plain.distances == screened.distances);
    CHECK(plain.sources == screened.sources);
  }
  const auto narrow = cls_screen_all(cls, 0.6);
  CHECK(mutual_similarity_vector({0, 0}, base, {}, &narrow[0]).size() == 6);
}

TEST_CASE("epsilon neighbours") {
  auto base = testing::random_base(9, 8, {2, 2}, 16);
  // Five exact duplicates of element (0, 3).
  for (int j = 1; j <= 5; ++j) {
    auto row = base[j].tokens.row(1);
    std::copy(base[0].tokens.row(3).begin(), base[0].tokens.row(3).end(), row.begin());
  }
  CHECK(epsilon_neighbor_count({0, 3}, base, 1e-3) == 5);
  CHECK(epsilon_neighbor_count({0, 0}, base, 1e-3) == 0);
  CHECK_THROWS_AS(epsilon_neighbor_count({0, 3}, base, 0.0), DomainError);
  CHECK(epsilon_neighbor_count({0, 3}, base, 5.0) == 7);
}

TEST_CASE("adding exclusions never decreases a distance") {
  const auto base = testing::random_base(31, 4, {3, 3}, 6);
  CounterRng rng(31, 1);
  ExclusionSet ex;
  std::vector<double> previous;
  for (int step = 0; step < 8; ++step) {
    std::vector<double> now;
    for (int h = 0; h < 9; ++h) {
      const auto d = distance_to_collection(base[0].tokens.row(h), base[2], ex);
      now.push_back(d ? *d : INFINITY);
    }
    for (std::size_t i = 0; i < previous.size(); ++i) CHECK(now[i] >= previous[i]);
    previous = now;
    ex.insert(2, static_cast<int>(rng.below(9)));
  }
}
