// SPDX-License-Identifier: Apache-2.0
#include "ddpc/voxel_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ddpc {

CoordIndex::CoordIndex(std::span<const Coord> coords) {
  map_.reserve(coords.size() * 2);
  for (size_t i = 0; i < coords.size(); ++i) map_.emplace(coords[i], static_cast<int32_t>(i));
}

template <typename Real>
void BasicSparseTensor<Real>::validate() const {
  require(scale >= 0, "sparse tensor scale must be >= 0");
  require(channels >= 1, "sparse tensor needs at least one channel");
  require(feats.size() == coords.size() * static_cast<size_t>(channels), "feature rows do not match coordinates");
  require(is_strictly_sorted(coords), "coordinates must be strictly increasing");
}

template struct BasicSparseTensor<float>;
template struct BasicSparseTensor<double>;

void sort_unique(std::vector<Coord>& coords) {
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
}

bool is_strictly_sorted(std::span<const Coord> coords) {
  for (size_t i = 1; i < coords.size(); ++i)
    if (!(coords[i - 1] < coords[i])) return false;
  return true;
}

PointCloudFrame make_frame(std::vector<Coord> coords, int precision_bits) {
  require(precision_bits >= 1 && precision_bits <= kMaxPrecisionBits, "precision must be in [1, 21]");
  sort_unique(coords);
  PointCloudFrame f;
  f.precision_bits = precision_bits;
  const size_t n = coords.size();
  f.points = SparseTensor(0, 1, std::move(coords), std::vector<float>(n, 1.0f));
  return f;
}

std::vector<Coord> coord_union(std::span<const Coord> a, std::span<const Coord> b) {
  std::vector<Coord> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<Coord> stride_down_coords(std::span<const Coord> coords, int factor) {
  require(factor == 2, "only stride 2 is supported");
  std::vector<Coord> out;
  out.reserve(coords.size());
  for (const Coord& c : coords) out.push_back({c.x >> 1, c.y >> 1, c.z >> 1});
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

// Walks the sorted union of a and b, calling fn(out_row, a_row or -1, b_row or -1).
template <typename Fn>
std::vector<Coord> merge_walk(std::span<const Coord> a, std::span<const Coord> b, Fn&& fn) {
  std::vector<Coord> out;
  out.reserve(a.size() + b.size());
  size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    const size_t row = out.size();
    if (j == b.size() || (i < a.size() && a[i] < b[j])) {
      out.push_back(a[i]);
      fn(row, static_cast<int64_t>(i++), int64_t{-1});
    } else if (i == a.size() || b[j] < a[i]) {
      out.push_back(b[j]);
      fn(row, int64_t{-1}, static_cast<int64_t>(j++));
    } else {
      out.push_back(a[i]);
      fn(row, static_cast<int64_t>(i++), static_cast<int64_t>(j++));
    }
  }
  return out;
}

}  // namespace

template <typename Real>
BasicSparseTensor<Real> concatenate(const BasicSparseTensor<Real>& a, const BasicSparseTensor<Real>& b) {
  require(a.scale == b.scale, "concatenate: scale mismatch");
  const int ca = a.channels, cb = b.channels, c = ca + cb;
  std::vector<std::array<int64_t, 2>> rows;
  rows.reserve(a.size() + b.size());
  auto coords = merge_walk(a.coords, b.coords, [&](size_t, int64_t ia, int64_t ib) { rows.push_back({ia, ib}); });
  BasicSparseTensor<Real> out(a.scale, c, std::move(coords));
  for (size_t r = 0; r < rows.size(); ++r) {
    auto dst = out.row(r);
    if (rows[r][0] >= 0) std::ranges::copy(a.row(static_cast<size_t>(rows[r][0])), dst.begin());
    if (rows[r][1] >= 0) std::ranges::copy(b.row(static_cast<size_t>(rows[r][1])), dst.begin() + ca);
  }
  return out;
}

template <typename Real>
BasicSparseTensor<Real> add_on_union(const BasicSparseTensor<Real>& a, const BasicSparseTensor<Real>& b) {
  require(a.scale == b.scale, "add_on_union: scale mismatch");
  require(a.channels == b.channels, "add_on_union: channel mismatch");
  std::vector<std::array<int64_t, 2>> rows;
  rows.reserve(a.size() + b.size());
  auto coords = merge_walk(a.coords, b.coords, [&](size_t, int64_t ia, int64_t ib) { rows.push_back({ia, ib}); });
  BasicSparseTensor<Real> out(a.scale, a.channels, std::move(coords));
  for (size_t r = 0; r < rows.size(); ++r) {
    auto dst = out.row(r);
    if (rows[r][0] >= 0) {
      auto src = a.row(static_cast<size_t>(rows[r][0]));
      for (int k = 0; k < a.channels; ++k) dst[k] = src[k];
    }
    if (rows[r][1] >= 0) {
      auto src = b.row(static_cast<size_t>(rows[r][1]));
      for (int k = 0; k < a.channels; ++k) dst[k] += src[k];
    }
  }
  return out;
}

template <typename Real>
BasicSparseTensor<Real> restrict_to(const BasicSparseTensor<Real>& x, std::span<const Coord> coords) {
  BasicSparseTensor<Real> out(x.scale, x.channels, std::vector<Coord>(coords.begin(), coords.end()));
  size_t j = 0;
  for (size_t r = 0; r < coords.size(); ++r) {
    while (j < x.size() && x.coords[j] < coords[r]) ++j;
    if (j < x.size() && x.coords[j] == coords[r]) std::ranges::copy(x.row(j), out.row(r).begin());
  }
  return out;
}

template BasicSparseTensor<float> concatenate(const BasicSparseTensor<float>&, const BasicSparseTensor<float>&);
template BasicSparseTensor<double> concatenate(const BasicSparseTensor<double>&, const BasicSparseTensor<double>&);
template BasicSparseTensor<float> add_on_union(const BasicSparseTensor<float>&, const BasicSparseTensor<float>&);
template BasicSparseTensor<double> add_on_union(const BasicSparseTensor<double>&, const BasicSparseTensor<double>&);
template BasicSparseTensor<float> restrict_to(const BasicSparseTensor<float>&, std::span<const Coord>);
template BasicSparseTensor<double> restrict_to(const BasicSparseTensor<double>&, std::span<const Coord>);

// --- kNN ---------------------------------------------------------------------

namespace {

Coord cell_of(const Coord& c) { return {c.x >> 1, c.y >> 1, c.z >> 1}; }

int32_t clamp_cell(double v) {
  const double lim = static_cast<double>(std::numeric_limits<int32_t>::max() / 4);
  return static_cast<int32_t>(std::clamp(std::floor(v / 2.0), -lim, lim));
}

void insert_candidate(std::vector<Neighbor>& best, int k, Neighbor n) {
  auto less = [](const Neighbor& a, const Neighbor& b) {
    return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.index < b.index);
  };
  if (static_cast<int>(best.size()) == k && !less(n, best.back())) return;
  auto pos = std::upper_bound(best.begin(), best.end(), n, less);
  best.insert(pos, n);
  if (static_cast<int>(best.size()) > k) best.pop_back();
}

}  // namespace

KnnGrid::KnnGrid(std::span<const Coord> reference) : points_(reference.begin(), reference.end()) {
  if (points_.empty()) throw EmptyInputError("knn: reference set is empty");
  std::vector<std::pair<Coord, int32_t>> keyed;
  keyed.reserve(points_.size());
  cell_lo_ = cell_hi_ = cell_of(points_[0]);
  for (size_t i = 0; i < points_.size(); ++i) {
    const Coord c = cell_of(points_[i]);
    keyed.emplace_back(c, static_cast<int32_t>(i));
    cell_lo_ = {std::min(cell_lo_.x, c.x), std::min(cell_lo_.y, c.y), std::min(cell_lo_.z, c.z)};
    cell_hi_ = {std::max(cell_hi_.x, c.x), std::max(cell_hi_.y, c.y), std::max(cell_hi_.z, c.z)};
  }
  std::sort(keyed.begin(), keyed.end());
  cell_rows_.resize(keyed.size());
  cells_.reserve(keyed.size());
  for (size_t i = 0; i < keyed.size();) {
    size_t j = i;
    while (j < keyed.size() && keyed[j].first == keyed[i].first) {
      cell_rows_[j] = keyed[j].second;
      ++j;
    }
    cells_.emplace(keyed[i].first, Cell{static_cast<int32_t>(i), static_cast<int32_t>(j)});
    i = j;
  }
}

std::vector<Neighbor> KnnGrid::query(const Vec3& q, int k) const {
  require(k >= 1, "knn: k must be >= 1");
  const int kk = static_cast<int>(std::min<size_t>(static_cast<size_t>(k), points_.size()));
  std::vector<Neighbor> best;
  best.reserve(static_cast<size_t>(kk) + 1);

  const Coord cq{clamp_cell(q[0]), clamp_cell(q[1]), clamp_cell(q[2])};
  auto axis_gap = [](int32_t c, int32_t lo, int32_t hi) -> int64_t {
    if (c < lo) return int64_t{lo} - c;
    if (c > hi) return int64_t{c} - hi;
    return 0;
  };
  auto axis_far = [](int32_t c, int32_t lo, int32_t hi) -> int64_t {
    return std::max<int64_t>(std::abs(int64_t{c} - lo), std::abs(int64_t{c} - hi));
  };
  const int64_t r0 = std::max({axis_gap(cq.x, cell_lo_.x, cell_hi_.x), axis_gap(cq.y, cell_lo_.y, cell_hi_.y),
                               axis_gap(cq.z, cell_lo_.z, cell_hi_.z)});
  const int64_t r_max = std::max({axis_far(cq.x, cell_lo_.x, cell_hi_.x), axis_far(cq.y, cell_lo_.y, cell_hi_.y),
                                  axis_far(cq.z, cell_lo_.z, cell_hi_.z)});

  auto visit_cell = [&](int32_t x, int32_t y, int32_t z) {
    auto it = cells_.find(Coord{x, y, z});
    if (it == cells_.end()) return;
    for (int32_t p = it->second.begin; p < it->second.end; ++p) {
      const int32_t row = cell_rows_[static_cast<size_t>(p)];
      const Coord& c = points_[static_cast<size_t>(row)];
      const double dx = q[0] - c.x, dy = q[1] - c.y, dz = q[2] - c.z;
      insert_candidate(best, kk, {row, dx * dx + dy * dy + dz * dz});
    }
  };

  auto scan_all = [&]() {
    best.clear();
    for (size_t row = 0; row < points_.size(); ++row) {
      const Coord& c = points_[row];
      const double dx = q[0] - c.x, dy = q[1] - c.y, dz = q[2] - c.z;
      insert_candidate(best, kk, {static_cast<int32_t>(row), dx * dx + dy * dy + dz * dz});
    }
    return best;
  };
  // Sparse or distant references: walking empty cells would cost more than a full scan.
  const double scan_budget = 4.0 * static_cast<double>(points_.size()) + 64.0;

  for (int64_t r = r0; r <= r_max; ++r) {
    const int64_t xlo = std::max<int64_t>(cq.x - r, cell_lo_.x), xhi = std::min<int64_t>(cq.x + r, cell_hi_.x);
    const int64_t ylo = std::max<int64_t>(cq.y - r, cell_lo_.y), yhi = std::min<int64_t>(cq.y + r, cell_hi_.y);
    const int64_t zlo = std::max<int64_t>(cq.z - r, cell_lo_.z), zhi = std::min<int64_t>(cq.z + r, cell_hi_.z);
    const double block = static_cast<double>(xhi - xlo + 1) * static_cast<double>(yhi - ylo + 1) *
                         static_cast<double>(zhi - zlo + 1);
    if (block > scan_budget) return scan_all();
    for (int64_t x = xlo; x <= xhi; ++x) {
      for (int64_t y = ylo; y <= yhi; ++y) {
        const bool on_shell = std::abs(x - cq.x) == r || std::abs(y - cq.y) == r;
        if (on_shell) {
          for (int64_t z = zlo; z <= zhi; ++z)
            visit_cell(static_cast<int32_t>(x), static_cast<int32_t>(y), static_cast<int32_t>(z));
        } else {
          if (cq.z - r >= zlo) visit_cell(static_cast<int32_t>(x), static_cast<int32_t>(y), static_cast<int32_t>(cq.z - r));
          if (r > 0 && cq.z + r <= zhi)
            visit_cell(static_cast<int32_t>(x), static_cast<int32_t>(y), static_cast<int32_t>(cq.z + r));
        }
      }
    }
    if (static_cast<int>(best.size()) == kk) {
      // Any unvisited point lies in a cell outside the (2r+1)^3 block around cq.
      double bound = std::numeric_limits<double>::infinity();
      const std::array<int32_t, 3> cqa{cq.x, cq.y, cq.z};
      for (int a = 0; a < 3; ++a) {
        const double hi_edge = 2.0 * (static_cast<double>(cqa[a]) + static_cast<double>(r) + 1.0);
        const double lo_edge = 2.0 * (static_cast<double>(cqa[a]) - static_cast<double>(r)) - 1.0;
        bound = std::min({bound, hi_edge - q[a], q[a] - lo_edge});
      }
      if (bound > 0 && best.back().sq_dist < bound * bound) break;
    }
  }
  return best;
}

std::vector<std::vector<Neighbor>> knn(std::span<const Vec3> queries, std::span<const Coord> reference, int k) {
  if (reference.empty()) throw EmptyInputError("knn: reference set is empty");
  require(k >= 1, "knn: k must be >= 1");
  const KnnGrid grid(reference);
  std::vector<std::vector<Neighbor>> out(queries.size());
  const auto n = static_cast<int64_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = grid.query(queries[static_cast<size_t>(i)], k);
  return out;
}

}  // namespace ddpc
