// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ddpc/sparse_nn.hpp"

namespace ddpc {

struct Tensor {
  std::vector<uint32_t> dims;
  std::vector<float> values;

  size_t numel() const;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Named parameter tensors. Serialized as a "DPCW" file:
///   "DPCW" | u32 version | u32 count | count x (u16 name_len, name, u8 rank, rank x u32 dim, f32 values)
/// All integers and floats little-endian; tensors written in name order.
class WeightStore {
 public:
  static constexpr uint32_t kVersion = 1;

  void put(const std::string& name, Tensor t);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  /// Looks up `name` and checks it has exactly `dims`.
  const Tensor& get(const std::string& name, const std::vector<uint32_t>& dims) const;

  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  size_t size() const { return tensors_.size(); }

  std::vector<uint8_t> serialize() const;
  static WeightStore deserialize(std::span<const uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static WeightStore load(const std::filesystem::path& path);

  friend bool operator==(const WeightStore&, const WeightStore&) = default;

 private:
  std::map<std::string, Tensor> tensors_;
};

/// Reads "<prefix>.weight" (volume, in, out) and "<prefix>.bias" (out).
template <typename Real>
ConvLayer<Real> load_conv(const WeightStore& store, const std::string& prefix, const ConvSpec& spec);

template <typename Real>
IrnWeights<Real> load_irn(const WeightStore& store, const std::string& prefix, int channels);

template <typename Real>
RnWeights<Real> load_rn(const WeightStore& store, const std::string& prefix, int channels);

/// Convolution shape for an IRN branch layer, by branch suffix (b0a, b0b, b1a, b1b, b2).
std::vector<std::pair<std::string, ConvSpec>> irn_layer_specs(int channels);
std::vector<std::pair<std::string, ConvSpec>> rn_layer_specs(int channels);

}  // namespace ddpc
