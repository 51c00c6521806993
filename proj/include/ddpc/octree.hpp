// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ddpc/voxel_cloud.hpp"

namespace ddpc {

/// Breadth-first occupancy coding of a voxel set inside a 2^depth cube.
///
/// One byte per internal node; child b = 4*xbit + 2*ybit + zbit sets mask
/// bit (0x80 >> b). Serialized as u8 depth | u8 flags | u32 point count |
/// payload, where flags bit 0 marks a payload range-coded with an adaptive
/// 256-symbol model (increment 32, halve once the total exceeds 2^16).
struct OctreeStream {
  static constexpr uint8_t kRangeCoded = 0x01;

  uint8_t depth = 0;
  uint8_t flags = 0;
  uint32_t point_count = 0;
  std::vector<uint8_t> payload;

  bool range_coded() const { return (flags & kRangeCoded) != 0; }

  std::vector<uint8_t> serialize() const;
  static OctreeStream parse(std::span<const uint8_t> bytes);

  friend bool operator==(const OctreeStream&, const OctreeStream&) = default;
};

/// Raw breadth-first occupancy bytes (no wrapper).
std::vector<uint8_t> octree_occupancy(std::span<const Coord> coords, int depth);

OctreeStream octree_encode(std::span<const Coord> coords, int depth, bool range_coded = true);
/// Sorted, duplicate-free coordinates; inconsistent streams throw DecodeError.
std::vector<Coord> octree_decode(const OctreeStream& stream);

/// Smallest depth whose cube holds every coordinate (at least 1).
int octree_depth_for(std::span<const Coord> coords);

}  // namespace ddpc
