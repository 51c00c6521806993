// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ddpc/errors.hpp"

namespace ddpc {

/// Integer lattice coordinate. Ordering is lexicographic (x, y, z).
struct Coord {
  int32_t x = 0;
  int32_t y = 0;
  int32_t z = 0;

  friend auto operator<=>(const Coord&, const Coord&) = default;
  friend bool operator==(const Coord&, const Coord&) = default;
};

inline constexpr int kMaxPrecisionBits = 21;

struct CoordHash {
  size_t operator()(const Coord& c) const noexcept {
    uint64_t h = static_cast<uint32_t>(c.x);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<uint32_t>(c.y);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<uint32_t>(c.z);
    return static_cast<size_t>(h ^ (h >> 29));
  }
};

/// Coordinate to row lookup.
class CoordIndex {
 public:
  CoordIndex() = default;
  explicit CoordIndex(std::span<const Coord> coords);

  /// Row of `c`, or -1 when absent.
  int32_t find(const Coord& c) const {
    auto it = map_.find(c);
    return it == map_.end() ? -1 : it->second;
  }
  size_t size() const { return map_.size(); }

 private:
  std::unordered_map<Coord, int32_t, CoordHash> map_;
};

/// Sorted coordinate list plus a row-major N x C feature matrix.
///
/// `scale` k means the lattice is 1/2^k of the input precision. Coordinates
/// are strictly increasing; row i of `feats` belongs to `coords[i]`.
template <typename Real>
struct BasicSparseTensor {
  int scale = 0;
  int channels = 1;
  std::vector<Coord> coords;
  std::vector<Real> feats;

  BasicSparseTensor() = default;
  BasicSparseTensor(int scale_, int channels_, std::vector<Coord> coords_)
      : scale(scale_), channels(channels_), coords(std::move(coords_)),
        feats(coords.size() * static_cast<size_t>(channels_), Real(0)) {}
  BasicSparseTensor(int scale_, int channels_, std::vector<Coord> coords_, std::vector<Real> feats_)
      : scale(scale_), channels(channels_), coords(std::move(coords_)), feats(std::move(feats_)) {}

  size_t size() const { return coords.size(); }
  bool empty() const { return coords.empty(); }

  std::span<Real> row(size_t i) {
    return {feats.data() + i * static_cast<size_t>(channels), static_cast<size_t>(channels)};
  }
  std::span<const Real> row(size_t i) const {
    return {feats.data() + i * static_cast<size_t>(channels), static_cast<size_t>(channels)};
  }

  /// Throws ContractViolation when any structural invariant is broken.
  void validate() const;

  template <typename Other>
  BasicSparseTensor<Other> cast() const {
    return {scale, channels, coords, std::vector<Other>(feats.begin(), feats.end())};
  }
};

using SparseTensor = BasicSparseTensor<float>;
using SparseTensorD = BasicSparseTensor<double>;

/// A voxelized frame: scale-0 coordinates with all-one occupancy features.
struct PointCloudFrame {
  int precision_bits = 10;
  SparseTensor points;

  size_t size() const { return points.size(); }
  const std::vector<Coord>& coords() const { return points.coords; }
};

/// Builds a frame from arbitrary integer coordinates (sorts and merges duplicates).
PointCloudFrame make_frame(std::vector<Coord> coords, int precision_bits);

/// Sorts and removes duplicates in place.
void sort_unique(std::vector<Coord>& coords);

bool is_strictly_sorted(std::span<const Coord> coords);

/// Set union of two sorted coordinate lists.
std::vector<Coord> coord_union(std::span<const Coord> a, std::span<const Coord> b);

/// Unique floor-division of every coordinate by `factor` (only 2 is supported).
std::vector<Coord> stride_down_coords(std::span<const Coord> coords, int factor = 2);

/// Joins features on the coordinate union; absent sides are zero-filled.
template <typename Real>
BasicSparseTensor<Real> concatenate(const BasicSparseTensor<Real>& a, const BasicSparseTensor<Real>& b);

/// Sums features on the coordinate union; exclusive rows pass through.
template <typename Real>
BasicSparseTensor<Real> add_on_union(const BasicSparseTensor<Real>& a, const BasicSparseTensor<Real>& b);

/// Rows of `x` at `coords` (which must be a subset of x.coords). Missing rows are zero.
template <typename Real>
BasicSparseTensor<Real> restrict_to(const BasicSparseTensor<Real>& x, std::span<const Coord> coords);

struct Neighbor {
  int32_t index = -1;
  double sq_dist = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

using Vec3 = std::array<double, 3>;

/// Exact k-nearest-neighbour search over a uniform grid with cell size 2.
///
/// Ties on distance resolve to the lexicographically smaller coordinate,
/// which is the smaller row index because references are sorted.
class KnnGrid {
 public:
  explicit KnnGrid(std::span<const Coord> reference);

  std::vector<Neighbor> query(const Vec3& q, int k) const;
  size_t size() const { return points_.size(); }

 private:
  static constexpr int kCell = 2;
  struct Cell {
    int32_t begin = 0;
    int32_t end = 0;
  };

  std::vector<Coord> points_;
  // cell key -> [begin, end) into cell_rows_
  std::unordered_map<Coord, Cell, CoordHash> cells_;
  std::vector<int32_t> cell_rows_;
  Coord cell_lo_{};
  Coord cell_hi_{};
};

/// For each query, the min(k, N) nearest reference rows ordered by (distance, row).
std::vector<std::vector<Neighbor>> knn(std::span<const Vec3> queries, std::span<const Coord> reference, int k);

template <typename Real>
std::vector<std::vector<Neighbor>> knn(std::span<const Vec3> queries, const BasicSparseTensor<Real>& reference,
                                       int k) {
  return knn(queries, std::span<const Coord>(reference.coords), k);
}

inline Vec3 to_vec(const Coord& c) {
  return {static_cast<double>(c.x), static_cast<double>(c.y), static_cast<double>(c.z)};
}

inline int32_t floor_div2(int32_t v) { return v >= 0 ? v / 2 : -((-v + 1) / 2); }

}  // namespace ddpc
