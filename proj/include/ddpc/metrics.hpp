// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ddpc/voxel_cloud.hpp"

namespace ddpc {

inline constexpr double kDefaultPeak = 1023.0;
inline constexpr int kNormalNeighbors = 16;

struct PsnrResult {
  double mse = 0.0;
  double psnr_db = 0.0;  // +inf when mse == 0
  bool infinite = false;
};

/// 10 log10(3 peak^2 / mse); mse == 0 is flagged infinite.
PsnrResult psnr_from_mse(double mse, double peak);

/// Point-to-point: mse = max of the two directional mean squared nearest-neighbour distances.
PsnrResult d1_psnr(std::span<const Coord> a, std::span<const Coord> b, double peak = kDefaultPeak);

/// Point-to-plane: each error vector is projected onto the PCA normal (16
/// neighbours) of its nearest reference point. References with fewer than 3
/// points fall back to point-to-point.
PsnrResult d2_psnr(std::span<const Coord> a, std::span<const Coord> b, double peak = kDefaultPeak);

/// Unit normals of `cloud` from its k nearest neighbours (smallest-eigenvalue
/// eigenvector), oriented to the +x hemisphere, then +y, then +z on ties.
/// Rows with fewer than 3 neighbours get a zero vector.
std::vector<Vec3> estimate_normals(std::span<const Coord> cloud, int k = kNormalNeighbors);

/// One-directional mean squared error of `from` against `to`.
double directional_mse_d1(std::span<const Coord> from, std::span<const Coord> to);
double directional_mse_d2(std::span<const Coord> from, std::span<const Coord> to, std::span<const Vec3> to_normals);

double bpp(uint64_t bits, size_t points);

struct RdPoint {
  double bpp = 0.0;
  double psnr_db = 0.0;
};

/// Bjontegaard delta rate of `test` against `anchor` in percent: cubic fits
/// of log10(rate) over PSNR, averaged over the shared PSNR interval.
/// Negative means `test` needs fewer bits.
double bd_rate(std::span<const RdPoint> anchor, std::span<const RdPoint> test);

struct RdRow {
  std::string sequence;
  int frame = 0;
  int lambda = 0;
  double bpp = 0.0;
  double d1_db = 0.0;
  double d2_db = 0.0;

  friend bool operator==(const RdRow&, const RdRow&) = default;
};

inline constexpr const char* kRdCsvHeader = "sequence,frame,lambda,bpp,d1_db,d2_db";

/// Shortest round-trip decimal; infinities print as "inf".
std::string format_double(double v);
std::string rd_csv_line(const RdRow& row);
std::vector<RdRow> parse_rd_csv(const std::string& text);
std::vector<RdRow> read_rd_csv(const std::filesystem::path& path);

}  // namespace ddpc
