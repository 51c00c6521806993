// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddpc/entropy.hpp"
#include "ddpc/sparse_nn.hpp"
#include "ddpc/weights.hpp"

namespace ddpc {

/// Channel widths and block counts of the whole codec.
namespace plan {
inline constexpr int kFeat1 = 32;           // feature extraction, scale 1
inline constexpr int kLatent = 64;          // y_t at scale 2
inline constexpr int kEmbed = 64;           // flow embedding and motion latent
inline constexpr int kMotion = 3;           // displacement channels
inline constexpr int kResidualLatent = 8;   // l_t at scale 3
inline constexpr int kRecon1 = 32;          // reconstruction, scale 1
inline constexpr int kRecon0 = 16;          // reconstruction, scale 0
inline constexpr int kIrnBlocks = 3;
inline constexpr int kRnBlocks = 2;
}  // namespace plan

template <typename Real>
struct DownBlockWeights {
  ConvLayer<Real> conv;  // stride 2, kernel 2
  std::vector<IrnWeights<Real>> irn;
};

template <typename Real>
struct UpBlockWeights {
  ConvLayer<Real> conv;  // transposed, stride 2
  std::vector<IrnWeights<Real>> irn;
};

template <typename Real>
struct MotionWeights {
  ConvLayer<Real> embed0;  // 3x3 128 -> 64
  ConvLayer<Real> embed1;  // 3x3 64 -> 64
  ConvLayer<Real> mmf_down;
  std::vector<RnWeights<Real>> mmf_rn;
  ConvLayer<Real> mmf_up;
  ConvLayer<Real> mmf_fine;
  ConvLayer<Real> enc;  // e_t -> scale-4 latent
  ConvLayer<Real> dec;  // latent -> e_hat at scale 3
  std::vector<RnWeights<Real>> mmr_rn;
  ConvLayer<Real> mmr_coarse_head;  // 1x1 64 -> 3
  ConvLayer<Real> mmr_up;           // transposed 64 -> 64
  ConvLayer<Real> mmr_fine_head;    // 1x1 64 -> 3
  ConvLayer<Real> mmr_coarse_up;    // transposed 3 -> 3
};

template <typename Real>
struct ResidualWeights {
  DownBlockWeights<Real> enc_down;
  ConvLayer<Real> enc_out;  // 3x3 64 -> 8
  UpBlockWeights<Real> dec_up;
};

template <typename Real>
struct ReconBlockWeights {
  UpBlockWeights<Real> up;
  ConvLayer<Real> cls;  // 1x1 -> 1
};

template <typename Real>
struct NetworkWeights {
  DownBlockWeights<Real> fe0;
  DownBlockWeights<Real> fe1;
  MotionWeights<Real> motion;
  ResidualWeights<Real> residual;
  ReconBlockWeights<Real> recon1;  // scale 2 -> 1
  ReconBlockWeights<Real> recon0;  // scale 1 -> 0
};

/// Learned parameters plus the frozen entropy tables, loaded from a weight store.
struct Network {
  NetworkWeights<float> weights;
  EntropyModel motion_model;    // 64 channels
  EntropyModel residual_model;  // 8 channels

  static Network from_store(const WeightStore& store);
};

/// Every convolution layer of the codec: (tensor prefix, shape).
std::vector<std::pair<std::string, ConvSpec>> network_layout();

template <typename Real>
NetworkWeights<Real> load_network_weights(const WeightStore& store);

enum class WeightProfile : uint8_t {
  /// Zero-mean uniform weights scaled by fan-in; moderately wide tables.
  kRandom = 0,
  /// Stand-in for trained weights: a hand-set count-coding feature, residual
  /// and reconstruction path, seeded non-negative motion layers with a damped
  /// motion encoder, and entropy tables peaked at zero.
  kSurrogate = 1,
};

/// Seeded weights for every layer plus entropy tables. The seed and profile
/// are recorded as "meta.seed" (two 16-bit halves of the low 32 bits) and "meta.profile".
WeightStore generate_weights(uint64_t seed, WeightProfile profile);

}  // namespace ddpc
