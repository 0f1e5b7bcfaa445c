#include <doctest.h>

#include <cmath>

#include "codegraph/error.hpp"
#include "codegraph/mutual.hpp"
#include "codegraph/rng.hpp"
#include "codegraph/vol3d.hpp"

using namespace codegraph;

namespace {

constexpr std::size_t kGrid = 3;
constexpr std::size_t kPatch = 2;

std::size_t cube_id(std::size_t x, std::size_t y, std::size_t z) { return (x * kGrid + y) * kGrid + z; }

/// Slice stack of a volume whose every cube carries a one-hot marker. Slices
/// run along x (axial), y (coronal) or z (sagittal); the in-plane grid is
/// already at token resolution.
VolumeTensor marker_stack(Axis axis) {
  VolumeTensor s({kGrid * kPatch, kGrid, kGrid}, kGrid * kGrid * kGrid);
  for (std::size_t h = 0; h < kGrid * kPatch; ++h)
    for (std::size_t a = 0; a < kGrid; ++a)
      for (std::size_t b = 0; b < kGrid; ++b) {
        const std::size_t t = h / kPatch;
        const std::size_t id = axis == Axis::kAxial     ? cube_id(t, a, b)
                               : axis == Axis::kCoronal ? cube_id(a, t, b)
                                                        : cube_id(b, a, t);
        s.at(h, a, b)[id] = 1.0f;
      }
  return s;
}

}  // namespace

TEST_CASE("slice pooling") {
  VolumeTensor s({2, 1, 1}, 2);
  s.at(0, 0, 0)[0] = 1.0f;
  s.at(1, 0, 0)[1] = 1.0f;
  const auto p = pool_axis(s, 2);
  CHECK(p.shape == std::array<std::size_t, 3>{1, 1, 1});
  CHECK(p.at(0, 0, 0)[0] == doctest::Approx(std::sqrt(0.5)));
  CHECK(p.at(0, 0, 0)[1] == doctest::Approx(std::sqrt(0.5)));

  VolumeTensor same({3, 2, 2}, 2);
  for (auto& v : same.data) v = 0.0f;
  for (std::size_t h = 0; h < 3; ++h)
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b) same.at(h, a, b)[0] = 0.5f;
  const auto q = pool_axis(same, 3);
  CHECK(q.shape == std::array<std::size_t, 3>{1, 2, 2});
  CHECK(q.at(0, 1, 0)[0] == doctest::Approx(1.0));
  CHECK_THROWS_AS(pool_axis(same, 2), DomainError);

  // Positive scaling leaves normalised output unchanged.
  CounterRng rng(1, 0);
  VolumeTensor r({4, 2, 2}, 5);
  for (auto& v : r.data) v = static_cast<float>(rng.normal());
  auto r3 = r;
  for (auto& v : r3.data) v *= 3.0f;
  const auto a = pool_axis(r, 2), b = pool_axis(r3, 2);
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-5));

  VolumeTensor big({224, 1, 1}, 1);
  CHECK(pool_axis(big, 14).shape[0] == 16);
}

TEST_CASE("all axes agree on every cube after permutation") {
  const auto ax = permute_to_canonical(pool_axis(marker_stack(Axis::kAxial), kPatch), Axis::kAxial);
  const auto co = permute_to_canonical(pool_axis(marker_stack(Axis::kCoronal), kPatch), Axis::kCoronal);
  const auto sa = permute_to_canonical(pool_axis(marker_stack(Axis::kSagittal), kPatch), Axis::kSagittal);
  for (std::size_t x = 0; x < kGrid; ++x)
    for (std::size_t y = 0; y < kGrid; ++y)
      for (std::size_t z = 0; z < kGrid; ++z) {
        const auto id = cube_id(x, y, z);
        CHECK(ax.at(x, y, z)[id] == doctest::Approx(1.0));
        CHECK(co.at(x, y, z)[id] == doctest::Approx(1.0));
        CHECK(sa.at(x, y, z)[id] == doctest::Approx(1.0));
      }

  CounterRng rng(2, 0);
  VolumeTensor t({2, 3, 4}, 2);
  for (auto& v : t.data) v = static_cast<float>(rng.normal());
  for (Axis a : {Axis::kAxial, Axis::kCoronal, Axis::kSagittal})
    CHECK(permute_to_canonical(permute_to_canonical(t, a), a).data == t.data);
  CHECK(parse_axis("coronal") == Axis::kCoronal);
  CHECK_THROWS(parse_axis("oblique"));
}

TEST_CASE("random projection") {
  const auto p = RandomProjection::make(64, 8, 3);
  CHECK(p.matrix == RandomProjection::make(64, 8, 3).matrix);
  CHECK(p.matrix != RandomProjection::make(64, 8, 4).matrix);
  for (float v : p.apply(std::vector<float>(64, 0.0f))) CHECK(v == 0.0f);

  // Squared-distance ratios follow chi-square(128) / 128: mean 1, about 95.5% inside [0.75, 1.25].
  const auto jl = RandomProjection::make(1024, 128, 0);
  CounterRng rng(0, 5);
  int good = 0;
  double mean = 0.0;
  const int pairs = 2000;
  for (int pair = 0; pair < pairs; ++pair) {
    std::vector<float> a(1024), b(1024);
    for (auto& v : a) v = static_cast<float>(rng.normal());
    for (auto& v : b) v = static_cast<float>(rng.normal());
    const double ratio = squared_distance(jl.apply(a), jl.apply(b)) / squared_distance(a, b);
    good += std::abs(ratio - 1.0) <= 0.25;
    mean += ratio / pairs;
  }
  CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
  CHECK(good >= 0.94 * pairs);
}

TEST_CASE("axis fusion") {
  CounterRng rng(4, 0);
  auto make = [&] {
    VolumeTensor t({2, 2, 2}, 2);
    for (auto& v : t.data) v = static_cast<float>(rng.normal());
    return t;
  };
  auto a = make(), c = make(), s = make();
  const auto fused = fuse_axes(a, c, s, false);
  CHECK(fused.tokens.cols == 6);
  CHECK(fused.grid_shape == std::vector<std::size_t>{2, 2, 2});

  // Concatenation identity for squared distances.
  const auto a2 = make(), c2 = make(), s2 = make();
  const auto other = fuse_axes(a2, c2, s2, false);
  for (std::size_t cell = 0; cell < 8; ++cell) {
    const double sum = squared_distance(std::span<const float>(a.data).subspan(cell * 2, 2),
                                        std::span<const float>(a2.data).subspan(cell * 2, 2)) +
                       squared_distance(std::span<const float>(c.data).subspan(cell * 2, 2),
                                        std::span<const float>(c2.data).subspan(cell * 2, 2)) +
                       squared_distance(std::span<const float>(s.data).subspan(cell * 2, 2),
                                        std::span<const float>(s2.data).subspan(cell * 2, 2));
    CHECK(squared_distance(fused.tokens.row(cell), other.tokens.row(cell)) == doctest::Approx(sum).epsilon(1e-5));
  }

  std::fill(c.data.begin(), c.data.end(), 0.0f);
  const auto zeroed = fuse_axes(a, c, s, true);
  for (std::size_t cell = 0; cell < 8; ++cell) {
    CHECK(zeroed.tokens.row(cell)[2] == 0.0f);
    CHECK(zeroed.tokens.row(cell)[3] == 0.0f);
    double norm = 0.0;
    for (float v : zeroed.tokens.row(cell)) norm += double(v) * v;
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-5));
  }
  CHECK_THROWS_AS(fuse_axes(a, c, VolumeTensor({1, 2, 2}, 2)), DomainError);
}

TEST_CASE("void fractions") {
  const std::array<std::size_t, 3> shape{4, 4, 4};
  std::vector<std::uint8_t> mask(64, 1);
  // Zero the x < 2 half of the first cube row and the whole last cube.
  for (std::size_t x = 0; x < 4; ++x)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t z = 0; z < 4; ++z) {
        const bool in_last = x >= 2 && y >= 2 && z >= 2;
        const bool half_first = x == 0 && y < 2 && z < 2;
        if (in_last || half_first) mask[(x * 4 + y) * 4 + z] = 0;
      }
  const auto f = void_fraction(mask, shape, 2);
  CHECK(f[0] == 0.5);
  CHECK(f[1] == 0.0);
  CHECK(f[7] == 1.0);
  CHECK_THROWS_AS(void_fraction(mask, shape, 3), DomainError);
}
