// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>

#include "ddpc/voxel_cloud.hpp"
#include "test_support.hpp"

using namespace ddpc;

namespace {

/// Brute-force k nearest rows ordered by (squared distance, row).
std::vector<Neighbor> brute_knn(const Vec3& q, const std::vector<Coord>& ref, int k) {
  std::vector<Neighbor> all;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double dx = q[0] - ref[i].x, dy = q[1] - ref[i].y, dz = q[2] - ref[i].z;
    all.push_back({static_cast<int32_t>(i), dx * dx + dy * dy + dz * dz});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.index < b.index);
  });
  all.resize(std::min<size_t>(all.size(), static_cast<size_t>(k)));
  return all;
}

}  // namespace

TEST_CASE("floor division rounds toward negative infinity") {
  CHECK(floor_div2(0) == 0);
  CHECK(floor_div2(1) == 0);
  CHECK(floor_div2(3) == 1);
  CHECK(floor_div2(-1) == -1);
  CHECK(floor_div2(-2) == -1);
  CHECK(floor_div2(-3) == -2);
}

TEST_CASE("stride_down_coords is the sorted unique floor-div set") {
  const std::vector<Coord> in{{-1, -1, -1}, {0, 0, 0}, {1, 1, 1}, {2, 3, 4}, {3, 2, 5}};
  const std::vector<Coord> want{{-1, -1, -1}, {0, 0, 0}, {1, 1, 2}};
  CHECK(stride_down_coords(in) == want);
}

TEST_CASE("sort_unique and make_frame merge duplicates") {
  std::vector<Coord> c{{2, 0, 0}, {0, 0, 1}, {2, 0, 0}, {0, 0, 0}};
  sort_unique(c);
  CHECK(c == std::vector<Coord>{{0, 0, 0}, {0, 0, 1}, {2, 0, 0}});
  CHECK(is_strictly_sorted(c));
  const auto f = make_frame({{1, 1, 1}, {1, 1, 1}, {0, 5, 0}}, 4);
  CHECK(f.size() == 2);
  CHECK(f.points.channels == 1);
  CHECK(std::all_of(f.points.feats.begin(), f.points.feats.end(), [](float v) { return v == 1.0f; }));
}

TEST_CASE("tensor validation rejects unsorted coordinates and size mismatch") {
  SparseTensor bad(0, 1, {{1, 0, 0}, {0, 0, 0}});
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  SparseTensor short_feats(0, 2, {{0, 0, 0}}, {1.0f});
  CHECK_THROWS_AS(short_feats.validate(), ContractViolation);
}

TEST_CASE("coord_union and concatenate zero-fill the absent side") {
  SparseTensor a(1, 1, {{0, 0, 0}, {1, 0, 0}}, {1, 2});
  SparseTensor b(1, 2, {{1, 0, 0}, {2, 0, 0}}, {3, 4, 5, 6});
  CHECK(coord_union(a.coords, b.coords) == std::vector<Coord>{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}});
  const auto c = concatenate(a, b);
  CHECK(c.channels == 3);
  CHECK(c.feats == std::vector<float>{1, 0, 0, 2, 3, 4, 0, 5, 6});
}

TEST_CASE("add_on_union sums shared rows and passes exclusive rows") {
  SparseTensor a(0, 1, {{0, 0, 0}, {1, 0, 0}}, {1, 2});
  SparseTensor b(0, 1, {{1, 0, 0}, {2, 0, 0}}, {10, 20});
  const auto s = add_on_union(a, b);
  CHECK(s.coords.size() == 3);
  CHECK(s.feats == std::vector<float>{1, 12, 20});
}

TEST_CASE("restrict_to picks rows and zero-fills missing ones") {
  SparseTensor a(0, 1, {{0, 0, 0}, {1, 0, 0}}, {1, 2});
  const std::vector<Coord> sub{{1, 0, 0}, {5, 0, 0}};
  const auto r = restrict_to(a, sub);
  CHECK(r.feats == std::vector<float>{2, 0});
}

TEST_CASE("knn matches brute force on random clouds") {
  Rng rng(101);
  for (int t = 0; t < 50; ++t) {
    const auto ref = test::random_coords(rng, static_cast<size_t>(rng.range(1, 400)), -20, 20);
    const int k = static_cast<int>(rng.range(1, 5));
    std::vector<Vec3> qs;
    for (int i = 0; i < 40; ++i) qs.push_back({rng.uniform(-40, 40), rng.uniform(-40, 40), rng.uniform(-40, 40)});
    for (int i = 0; i < 10; ++i) qs.push_back(to_vec(ref[static_cast<size_t>(rng.below(ref.size()))]));
    const auto got = knn(qs, ref, k);
    for (size_t i = 0; i < qs.size(); ++i) REQUIRE(got[i] == brute_knn(qs[i], ref, k));
  }
}

TEST_CASE("knn ties resolve to the smaller coordinate") {
  const std::vector<Coord> ref{{-1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {1, 0, 0}};
  const auto nn = knn(std::vector<Vec3>{{0, 0, 0}}, ref, 2);
  CHECK(nn[0][0].index == 0);
  CHECK(nn[0][1].index == 1);
}

TEST_CASE("knn handles references far from the query") {
  const std::vector<Coord> ref{{0, 0, 1000000}, {0, 1000000, 0}, {1000000, 0, 0}, {2000000, 0, 0}};
  const auto nn = knn(std::vector<Vec3>{{0, 0, 0}}, ref, 3);
  REQUIRE(nn[0].size() == 3);
  CHECK(nn[0][0].index == 0);
  CHECK(nn[0][2].index == 2);
  CHECK(nn[0][2].sq_dist == 1e12);
}

TEST_CASE("knn clamps k to the reference size and rejects empty references") {
  const std::vector<Coord> ref{{0, 0, 0}};
  CHECK(knn(std::vector<Vec3>{{1, 1, 1}}, ref, 3)[0].size() == 1);
  CHECK_THROWS_AS(knn(std::vector<Vec3>{{1, 1, 1}}, std::span<const Coord>{}, 3), EmptyInputError);
}
