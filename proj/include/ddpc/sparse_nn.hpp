// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddpc/voxel_cloud.hpp"

namespace ddpc {

/// Shape of one sparse convolution layer.
///
/// Stride-1 kernels use centered offsets (kernel 3 -> {-1,0,1}^3). Stride-2
/// kernels use corner offsets starting at 0 for kernel 2 ({0,1}^3), so the
/// output lattice of a forward stride-2 layer is exactly the floor-div set.
struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel_size = 1;
  int stride = 1;
  bool transposed = false;

  void validate() const;
  int volume() const { return kernel_size * kernel_size * kernel_size; }
  std::vector<Coord> offsets() const;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Per kernel offset, the (input_row, output_row) pairs it connects.
struct KernelMap {
  std::vector<Coord> offsets;
  std::vector<std::vector<std::pair<int32_t, int32_t>>> pairs;

  size_t pair_count() const;
};

/// Output-major view of a kernel map: for every output row, its (offset, input_row)
/// contributions in ascending input-row order.
struct GatherMap {
  std::vector<int64_t> row_begin;  // size n_out + 1
  std::vector<int32_t> offset;
  std::vector<int32_t> input;
};

GatherMap build_gather_map(std::span<const Coord> in_coords, std::span<const Coord> out_coords, const ConvSpec& spec);
KernelMap build_kernel_map(std::span<const Coord> in_coords, std::span<const Coord> out_coords, const ConvSpec& spec);

/// A convolution layer with owned parameters. `weight` is (volume, in, out) row-major.
template <typename Real>
struct ConvLayer {
  ConvSpec spec;
  std::vector<Real> weight;
  std::vector<Real> bias;

  void validate() const;
  template <typename Other>
  ConvLayer<Other> cast() const {
    return {spec, std::vector<Other>(weight.begin(), weight.end()), std::vector<Other>(bias.begin(), bias.end())};
  }
};

/// Output lattice implied by a forward layer: identical for stride 1, floor-div set for stride 2.
std::vector<Coord> default_out_coords(std::span<const Coord> in_coords, const ConvSpec& spec);

/// out[j] = bias + sum over kernel-map pairs (i, j) of x[i] * W[offset].
/// Parallel over output rows; each row accumulates in ascending input-row order.
template <typename Real>
BasicSparseTensor<Real> sparse_conv(const BasicSparseTensor<Real>& x, const ConvSpec& spec,
                                    std::span<const Real> weight, std::span<const Real> bias,
                                    std::span<const Coord> out_coords);

template <typename Real>
BasicSparseTensor<Real> sparse_conv(const BasicSparseTensor<Real>& x, const ConvLayer<Real>& layer,
                                    std::span<const Coord> out_coords) {
  return sparse_conv<Real>(x, layer.spec, layer.weight, layer.bias, out_coords);
}

/// Forward layers only: output lattice from default_out_coords.
template <typename Real>
BasicSparseTensor<Real> sparse_conv(const BasicSparseTensor<Real>& x, const ConvLayer<Real>& layer) {
  const auto out = default_out_coords(x.coords, layer.spec);
  return sparse_conv<Real>(x, layer.spec, layer.weight, layer.bias, out);
}

template <typename Real>
struct ConvGrads {
  std::vector<Real> grad_input;  // same layout as x.feats
  std::vector<Real> grad_weight;
  std::vector<Real> grad_bias;
};

/// Gradients of <grad_out, sparse_conv(x)> with respect to x, W and bias.
template <typename Real>
ConvGrads<Real> sparse_conv_backward(const BasicSparseTensor<Real>& x, const ConvSpec& spec,
                                     std::span<const Real> weight, std::span<const Coord> out_coords,
                                     std::span<const Real> grad_out);

template <typename Real>
BasicSparseTensor<Real> relu(BasicSparseTensor<Real> x);

/// Inception-residual block; channel preserving.
template <typename Real>
struct IrnWeights {
  ConvLayer<Real> b0a;  // 1x1 O -> O/4
  ConvLayer<Real> b0b;  // 3x3 O/4 -> O/4
  ConvLayer<Real> b1a;  // 3x3 O -> O/4
  ConvLayer<Real> b1b;  // 3x3 O/4 -> O/4
  ConvLayer<Real> b2;   // 1x1 O -> O/2
};

template <typename Real>
BasicSparseTensor<Real> irn_block(const BasicSparseTensor<Real>& x, const IrnWeights<Real>& w);

template <typename Real>
struct RnWeights {
  ConvLayer<Real> conv0;  // 3x3 C -> C
  ConvLayer<Real> conv1;  // 3x3 C -> C
};

/// x + conv3(relu(conv3(x))).
template <typename Real>
BasicSparseTensor<Real> rn_block(const BasicSparseTensor<Real>& x, const RnWeights<Real>& w);

template <typename Real>
struct OccupancyScores {
  std::vector<Real> logits;
  std::vector<Real> probs;
};

/// 1x1 conv to one channel; probability is the logistic of the logit.
template <typename Real>
OccupancyScores<Real> classify_occupancy(const BasicSparseTensor<Real>& x, const ConvLayer<Real>& head);

/// Keeps the min(keep, N) highest-scoring rows; ties keep the smaller coordinate.
/// Scores may be probabilities or logits (ranking is identical for monotone maps).
template <typename Real>
BasicSparseTensor<Real> adaptive_prune(const BasicSparseTensor<Real>& x, std::span<const Real> scores, size_t keep);

/// Row indices (ascending) kept by adaptive_prune.
template <typename Real>
std::vector<int32_t> top_k_rows(std::span<const Real> scores, size_t keep);

/// Children candidates of every voxel (2c + {0,1}^3), sorted and unique.
std::vector<Coord> child_candidates(std::span<const Coord> coords);

namespace reference {

/// Serial scatter-form convolution used as the test and benchmark baseline.
/// Walks offsets and input rows directly without a kernel map.
template <typename Real>
BasicSparseTensor<Real> sparse_conv_scatter(const BasicSparseTensor<Real>& x, const ConvSpec& spec,
                                            std::span<const Real> weight, std::span<const Real> bias,
                                            std::span<const Coord> out_coords);

}  // namespace reference

}  // namespace ddpc
