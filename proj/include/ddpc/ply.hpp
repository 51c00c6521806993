// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "ddpc/voxel_cloud.hpp"

namespace ddpc {

struct PlyLoadOptions {
  int precision_bits = 10;
  // Bit depth of the stored coordinates. When set, values are scaled by
  // 2^(precision_bits - source_bits) before flooring. When unset, clouds that
  // already fit in [0, 2^precision_bits) are floored as-is and larger
  // non-negative clouds are scaled from the smallest power-of-two cube holding them.
  std::optional<int> source_bits;
};

/// Raw x/y/z vertex positions from an ASCII or binary_little_endian PLY.
std::vector<Vec3> read_ply_vertices(const std::filesystem::path& path);

/// Voxelizes real positions: scale, floor, merge duplicates, sort.
PointCloudFrame voxelize(std::span<const Vec3> positions, const PlyLoadOptions& opts);

PointCloudFrame load_ply(const std::filesystem::path& path, const PlyLoadOptions& opts);

inline PointCloudFrame load_ply(const std::filesystem::path& path, int precision_bits) {
  return load_ply(path, PlyLoadOptions{precision_bits, std::nullopt});
}

/// Writes binary_little_endian PLY with int32 x/y/z vertex properties.
void write_ply(const std::filesystem::path& path, std::span<const Coord> coords);

/// Writes an ASCII PLY with float x/y/z; used for fixtures.
void write_ply_ascii(const std::filesystem::path& path, std::span<const Vec3> positions);

}  // namespace ddpc
