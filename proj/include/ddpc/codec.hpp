// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ddpc/motion.hpp"
#include "ddpc/network.hpp"
#include "ddpc/voxel_cloud.hpp"

namespace ddpc {

inline constexpr std::array<int, 5> kLambdaTags{3, 4, 5, 7, 10};
bool is_lambda_tag(int tag);

struct CodecConfig {
  double alpha = kDefaultAlpha;
  int lambda_tag = 3;
  /// Also send C^3 although the decoder can derive it from C^2.
  bool transmit_c3 = false;
  /// Reference latent is the previous decoded latent y' instead of features of the decoded frame.
  bool latent_carry = false;
};

enum class FrameType : uint8_t { kIntra = 'I', kInter = 'P' };

enum class SubstreamId : uint8_t { kCoords2 = 1, kMotion = 2, kResidual = 3, kCoords3 = 4 };

struct Substream {
  SubstreamId id = SubstreamId::kCoords2;
  std::vector<uint8_t> bytes;

  friend bool operator==(const Substream&, const Substream&) = default;
};

/// One coded frame:
///   "DDPC" | u32 version | u8 type ('I'/'P') | u8 precision | u8 lambda tag |
///   u32 N0 | u32 N1 | u8 count | count x (u8 id, u32 length) | payloads in table order
struct FrameBitstream {
  static constexpr uint32_t kVersion = 1;

  FrameType type = FrameType::kIntra;
  uint8_t precision_bits = 10;
  uint8_t lambda_tag = 3;
  uint32_t n0 = 0;
  uint32_t n1 = 0;
  std::vector<Substream> substreams;

  const Substream* find(SubstreamId id) const;
  size_t payload_bytes() const;

  std::vector<uint8_t> serialize() const;
  /// Throws DecodeError on any structural problem.
  static FrameBitstream parse(std::span<const uint8_t> bytes);

  friend bool operator==(const FrameBitstream&, const FrameBitstream&) = default;
};

/// Two downsample blocks (stride-2 conv + IRN x3 each): scale 0 -> scale 2, 64 channels.
SparseTensor feature_extract(const PointCloudFrame& frame, const NetworkWeights<float>& w);

struct ResidualCoding {
  SparseTensor latent;           // continuous l_t at scale 3 (encoder only)
  std::vector<int32_t> symbols;  // quantized l_t, row-major
  std::vector<uint8_t> bytes;
  SparseTensor r_hat;  // decoded residual on C^2
};

ResidualCoding compress_residual(const SparseTensor& r, const EntropyModel& model, const ResidualWeights<float>& w);

/// Decoder half: l_t symbols on stride_down(C^2) -> r_hat on C^2.
SparseTensor synthesize_residual(std::span<const int32_t> symbols, std::span<const Coord> c2,
                                 const ResidualWeights<float>& w);

struct ScaleScores {
  std::vector<Coord> candidates;
  std::vector<float> logits;
};

struct Reconstruction {
  PointCloudFrame frame;
  std::array<ScaleScores, 2> scales;  // [0]: scale 1 candidates, [1]: scale 0 candidates
};

/// Two upsample blocks, each followed by occupancy classification and top-k pruning.
Reconstruction reconstruct(const SparseTensor& y_dec, uint32_t n1, uint32_t n0, const NetworkWeights<float>& w,
                           int precision_bits);

struct DecodedFrame {
  PointCloudFrame frame;
  SparseTensor latent;  // y'_t

  friend bool operator==(const DecodedFrame& a, const DecodedFrame& b) {
    return a.frame.precision_bits == b.frame.precision_bits && a.frame.points.coords == b.frame.points.coords &&
           a.latent.coords == b.latent.coords && a.latent.feats == b.latent.feats;
  }
};

/// y_hat_{t-1}: features of the decoded previous frame, or its carried latent.
SparseTensor reference_latent(const DecodedFrame& prev, const Network& net, const CodecConfig& cfg);

struct EncodeResult {
  FrameBitstream bitstream;
  DecodedFrame decoded;  // what the decoder will reproduce
  ResidualCoding residual;
  std::optional<MotionCoding> motion;
  Reconstruction recon;
};

EncodeResult encode_intra(const PointCloudFrame& frame, const Network& net, const CodecConfig& cfg);
EncodeResult encode_inter(const PointCloudFrame& frame, const DecodedFrame& prev, const Network& net,
                          const CodecConfig& cfg);

/// `prev` is required for P frames (MissingReferenceError otherwise) and ignored for I frames.
DecodedFrame decode(const FrameBitstream& bits, const DecodedFrame* prev, const Network& net, const CodecConfig& cfg);

struct LossReport {
  double rate_bpp = 0.0;
  double distortion = 0.0;
  double lambda = 0.0;
  double loss = 0.0;
  std::array<double, 2> scale_bce{};
};

/// Mean binary cross entropy (natural log) of logistic(logits) against 0/1 targets.
double bce_from_logits(std::span<const float> logits, std::span<const uint8_t> occupied);

/// Rate + lambda * distortion for one encoded frame. Rate counts every
/// substream (octree bytes as coded, latents by model estimate); with a noise
/// seed the latents are relaxed with uniform noise and billed by the
/// interpolated-CDF rate proxy instead.
LossReport eval_loss(const PointCloudFrame& original, const EncodeResult& enc, const Network& net, double lambda,
                     std::optional<uint64_t> noise_seed = std::nullopt);

}  // namespace ddpc
