// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ddpc/rng.hpp"
#include "ddpc/voxel_cloud.hpp"

namespace ddpc::test {

inline std::vector<Coord> random_coords(Rng& rng, size_t n, int32_t lo, int32_t hi) {
  std::vector<Coord> c(n);
  for (auto& p : c)
    p = {static_cast<int32_t>(rng.range(lo, hi)), static_cast<int32_t>(rng.range(lo, hi)),
         static_cast<int32_t>(rng.range(lo, hi))};
  sort_unique(c);
  return c;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("ddpc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace ddpc::test
