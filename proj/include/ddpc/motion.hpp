// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ddpc/entropy.hpp"
#include "ddpc/network.hpp"
#include "ddpc/voxel_cloud.hpp"

namespace ddpc {

inline constexpr double kAwiEpsilon = 1e-8;
inline constexpr double kDefaultAlpha = 3.0;
inline constexpr int kAwiNeighbors = 3;

/// Concatenates the two scale-2 latents on their coordinate union, then
/// conv3 + relu, conv3. Output lives on union(C(y_t), C(y_prev)).
SparseTensor flow_embed(const SparseTensor& y_t, const SparseTensor& y_prev, const MotionWeights<float>& w);

struct MmfOutput {
  SparseTensor e_c;    // coarse, scale 3
  SparseTensor delta;  // e_o minus the upsampled coarse branch, scale 2
  SparseTensor e_f;    // fine, scale 3
  SparseTensor e_t;    // e_c + e_f, scale 3
};

MmfOutput mmf(const SparseTensor& e_o, const MotionWeights<float>& w);

/// Coordinates both sides derive for the motion path, from C(y_prev) and C^2.
struct MotionLattice {
  std::vector<Coord> embed;   // scale 2: union
  std::vector<Coord> fused;   // scale 3
  std::vector<Coord> latent;  // scale 4
};
MotionLattice motion_lattice(std::span<const Coord> prev_coords, std::span<const Coord> c2);

struct MotionCoding {
  SparseTensor latent;           // continuous scale-4 latent (encoder only)
  std::vector<int32_t> symbols;  // quantized latent, row-major
  std::vector<uint8_t> bytes;    // range-coded symbols
  SparseTensor e_hat;            // decoded fused embedding on e_t's coordinates
};

MotionCoding compress_motion(const SparseTensor& e_t, const EntropyModel& model, const MotionWeights<float>& w);

/// Decoder half: integer latent on `lattice.latent` -> e_hat on `lattice.fused`.
SparseTensor synthesize_motion_embedding(std::span<const int32_t> symbols, const MotionLattice& lattice,
                                         const MotionWeights<float>& w);

/// Motion field m_t (3 channels, scale 2) on exactly `target` (C^2).
SparseTensor mmr(const SparseTensor& e_hat, std::span<const Coord> target, const MotionWeights<float>& w);

using AwiNeighbors = std::vector<std::vector<Neighbor>>;

/// 3-nearest neighbours in y_prev of every translated coordinate u + m(u).
template <typename Real>
AwiNeighbors awi_neighbors(const BasicSparseTensor<Real>& motion, std::span<const Coord> prev_coords);

/// Adaptively weighted interpolation with neighbour sets held fixed:
/// out(u) = sum_v f_v / max(d_v, eps) / max(sum_v 1 / max(d_v, eps), alpha),
/// where d_v is the squared distance from u + m(u) to neighbour v.
template <typename Real>
BasicSparseTensor<Real> awi_3d_fixed(const BasicSparseTensor<Real>& motion, const BasicSparseTensor<Real>& y_prev,
                                     double alpha, const AwiNeighbors& neighbors);

template <typename Real>
BasicSparseTensor<Real> awi_3d(const BasicSparseTensor<Real>& motion, const BasicSparseTensor<Real>& y_prev,
                               double alpha = kDefaultAlpha);

template <typename Real>
struct AwiGrads {
  std::vector<Real> grad_prev;    // same layout as y_prev.feats
  std::vector<Real> grad_motion;  // same layout as motion.feats
};

/// Gradients of <grad_out, awi_3d_fixed(...)> with respect to y_prev features and the motion field.
template <typename Real>
AwiGrads<Real> awi_3d_backward(const BasicSparseTensor<Real>& motion, const BasicSparseTensor<Real>& y_prev,
                               double alpha, const AwiNeighbors& neighbors, std::span<const Real> grad_out);

struct Prediction {
  SparseTensor y_bar;   // predicted latent on C^2
  SparseTensor motion;  // m_t
  MotionCoding coding;
};

/// Encoder side: estimation, compression and compensation.
Prediction predict(const SparseTensor& y_t, const SparseTensor& y_prev, const EntropyModel& model,
                   const MotionWeights<float>& w, double alpha);

/// Decoder side: rebuilds y_bar from the motion substream, C^2 and y_prev.
SparseTensor predict_from_stream(std::span<const uint8_t> motion_bytes, std::span<const Coord> c2,
                                 const SparseTensor& y_prev, const EntropyModel& model, const MotionWeights<float>& w,
                                 double alpha);

namespace reference {

/// Serial interpolation with brute-force neighbour search.
template <typename Real>
BasicSparseTensor<Real> awi_3d_serial(const BasicSparseTensor<Real>& motion, const BasicSparseTensor<Real>& y_prev,
                                      double alpha);

}  // namespace reference

}  // namespace ddpc
