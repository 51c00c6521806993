// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddpc/sparse_nn.hpp"

namespace ddpc {

/// Breadth-first occupancy of the single point (0,0,0) in a depth-9 cube.
inline constexpr const char* kOctreeFixtureName = "octree_single_d9.bin";
std::vector<uint8_t> octree_single_point_fixture();

struct SelfTestCase {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Entropy and octree round trips, fixture comparison, dense-oracle convolution,
/// interpolation hand cases and a small gradient-check subset. When
/// `fixture_dir` is set the octree fixture is read from it instead of the built-in copy.
std::vector<SelfTestCase> run_selftest(const std::optional<std::filesystem::path>& fixture_dir);

namespace reference {

/// Dense zero-padded convolution over the bounding box of the input and output
/// lattices, sampled at `out_coords`.
std::vector<double> dense_conv(const SparseTensorD& x, const ConvSpec& spec, std::span<const double> weight,
                               std::span<const double> bias, std::span<const Coord> out_coords);

}  // namespace reference

}  // namespace ddpc
