// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddpc/voxel_cloud.hpp"

namespace ddpc {

/// A voxelized sphere shell translated rigidly from frame to frame.
struct RigidSpec {
  size_t points = 10000;
  int frames = 2;
  double translation = 1.0;  // voxels per frame along +x
  int precision_bits = 7;
  uint64_t seed = 1;
};

/// Parses "rigid:N,frames,translation".
RigidSpec parse_rigid_spec(const std::string& text);

/// Every frame has exactly spec.points voxels; frame f is frame 0 shifted by
/// round(f * translation) along x.
std::vector<PointCloudFrame> rigid_sequence(const RigidSpec& spec);

}  // namespace ddpc
