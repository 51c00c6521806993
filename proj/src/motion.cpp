// SPDX-License-Identifier: Apache-2.0
#include "ddpc/motion.hpp"

#include <algorithm>
#include <limits>

namespace ddpc {

namespace {

SparseTensor add_same(SparseTensor a, const SparseTensor& b) {
  require(a.coords == b.coords && a.channels == b.channels, "motion: sum of tensors on different lattices");
  for (size_t i = 0; i < a.feats.size(); ++i) a.feats[i] += b.feats[i];
  return a;
}

SparseTensor rn_stack(SparseTensor x, const std::vector<RnWeights<float>>& blocks) {
  for (const auto& b : blocks) x = rn_block(x, b);
  return x;
}

double sq_dist(const Vec3& q, const Coord& c) {
  const double dx = q[0] - c.x, dy = q[1] - c.y, dz = q[2] - c.z;
  return dx * dx + dy * dy + dz * dz;
}

template <typename Real>
Vec3 translated(const BasicSparseTensor<Real>& motion, size_t i) {
  const Coord& u = motion.coords[i];
  const auto m = motion.row(i);
  return {u.x + static_cast<double>(m[0]), u.y + static_cast<double>(m[1]), u.z + static_cast<double>(m[2])};
}

template <typename Real>
void check_awi_inputs(const BasicSparseTensor<Real>& motion, const BasicSparseTensor<Real>& y_prev, double alpha) {
  if (y_prev.empty()) throw EmptyInputError("awi_3d: previous latent is empty");
  require(motion.channels == 3, "awi_3d: motion field must have 3 channels");
  require(alpha > 0.0, "awi_3d: alpha must be positive");
}

}  // namespace

SparseTensor flow_embed(const SparseTensor& y_t, const SparseTensor& y_prev, const MotionWeights<float>& w) {
  require(y_t.scale == y_prev.scale, "flow_embed: scale mismatch");
  require(y_t.channels == y_prev.channels && y_t.channels * 2 == w.embed0.spec.in_channels,
          "flow_embed: channel mismatch");
  const SparseTensor cat = concatenate(y_t, y_prev);
  return sparse_conv(relu(sparse_conv(cat, w.embed0)), w.embed1);
}

MmfOutput mmf(const SparseTensor& e_o, const MotionWeights<float>& w) {
  MmfOutput out;
  out.e_c = rn_stack(sparse_conv(e_o, w.mmf_down), w.mmf_rn);
  const SparseTensor up = sparse_conv(out.e_c, w.mmf_up, e_o.coords);
  out.delta = e_o;
  for (size_t i = 0; i < out.delta.feats.size(); ++i) out.delta.feats[i] -= up.feats[i];
  out.e_f = sparse_conv(out.delta, w.mmf_fine);
  out.e_t = add_same(out.e_c, out.e_f);
  return out;
}

MotionLattice motion_lattice(std::span<const Coord> prev_coords, std::span<const Coord> c2) {
  MotionLattice l;
  l.embed = coord_union(prev_coords, c2);
  l.fused = stride_down_coords(l.embed);
  l.latent = stride_down_coords(l.fused);
  return l;
}

MotionCoding compress_motion(const SparseTensor& e_t, const EntropyModel& model, const MotionWeights<float>& w) {
  require(model.channel_count() == static_cast<size_t>(w.enc.spec.out_channels),
          "compress_motion: entropy model channel count differs from the motion latent");
  MotionCoding c;
  c.latent = sparse_conv(e_t, w.enc);
  c.symbols = quantize<float>(c.latent.feats);
  c.bytes = range_encode(c.symbols, model);
  MotionLattice lattice;
  lattice.fused = e_t.coords;
  lattice.latent = c.latent.coords;
  c.e_hat = synthesize_motion_embedding(c.symbols, lattice, w);
  c.e_hat.scale = e_t.scale;
  return c;
}

SparseTensor synthesize_motion_embedding(std::span<const int32_t> symbols, const MotionLattice& lattice,
                                         const MotionWeights<float>& w) {
  const int c = w.dec.spec.in_channels;
  require(symbols.size() == lattice.latent.size() * static_cast<size_t>(c), "motion: symbol count mismatch");
  SparseTensor latent(4, c, lattice.latent, std::vector<float>(symbols.begin(), symbols.end()));
  return sparse_conv(latent, w.dec, lattice.fused);
}

SparseTensor mmr(const SparseTensor& e_hat, std::span<const Coord> target, const MotionWeights<float>& w) {
  const SparseTensor m_c = sparse_conv(rn_stack(e_hat, w.mmr_rn), w.mmr_coarse_head);
  const SparseTensor m_f = sparse_conv(sparse_conv(e_hat, w.mmr_up, target), w.mmr_fine_head);
  return add_same(sparse_conv(m_c, w.mmr_coarse_up, target), m_f);
}

template <typename Real>
AwiNeighbors awi_neighbors(const BasicSparseTensor<Real>& motion, std::span<const Coord> prev_coords) {
  std::vector<Vec3> q(motion.size());
  for (size_t i = 0; i < q.size(); ++i) q[i] = translated(motion, i);
  return knn(q, prev_coords, kAwiNeighbors);
}

template <typename Real>
BasicSparseTensor<Real> awi_3d_fixed(const BasicSparseTensor<Real>& motion, const BasicSparseTensor<Real>& y_prev,
                                     double alpha, const AwiNeighbors& neighbors) {
  check_awi_inputs(motion, y_prev, alpha);
  require(neighbors.size() == motion.size(), "awi_3d: one neighbour list per point is required");
  const int c = y_prev.channels;
  BasicSparseTensor<Real> out(motion.scale, c, motion.coords);
  const auto n = static_cast<int64_t>(motion.size());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const Vec3 q = translated(motion, static_cast<size_t>(i));
    const auto& nb = neighbors[static_cast<size_t>(i)];
    double wsum = 0.0;
    std::vector<double> acc(static_cast<size_t>(c), 0.0);
    for (const Neighbor& v : nb) {
      const double w = 1.0 / std::max(sq_dist(q, y_prev.coords[static_cast<size_t>(v.index)]), kAwiEpsilon);
      wsum += w;
      const auto f = y_prev.row(static_cast<size_t>(v.index));
      for (int k = 0; k < c; ++k) acc[static_cast<size_t>(k)] += w * static_cast<double>(f[static_cast<size_t>(k)]);
    }
    const double denom = std::max(wsum, alpha);
    auto o = out.row(static_cast<size_t>(i));
    for (int k = 0; k < c; ++k) o[static_cast<size_t>(k)] = static_cast<Real>(acc[static_cast<size_t>(k)] / denom);
  }
  return out;
}

template <typename Real>
BasicSparseTensor<Real> awi_3d(const BasicSparseTensor<Real>& motion, const BasicSparseTensor<Real>& y_prev,
                               double alpha) {
  check_awi_inputs(motion, y_prev, alpha);
  return awi_3d_fixed(motion, y_prev, alpha, awi_neighbors(motion, y_prev.coords));
}

template <typename Real>
AwiGrads<Real> awi_3d_backward(const BasicSparseTensor<Real>& motion, const BasicSparseTensor<Real>& y_prev,
                               double alpha, const AwiNeighbors& neighbors, std::span<const Real> grad_out) {
  check_awi_inputs(motion, y_prev, alpha);
  const auto c = static_cast<size_t>(y_prev.channels);
  require(grad_out.size() == motion.size() * c, "awi_3d_backward: gradient shape mismatch");
  AwiGrads<Real> g{std::vector<Real>(y_prev.feats.size(), Real(0)), std::vector<Real>(motion.feats.size(), Real(0))};
  // Serial: several points may share a neighbour, so grad_prev is a scatter.
  for (size_t i = 0; i < motion.size(); ++i) {
    const Vec3 q = translated(motion, i);
    const auto& nb = neighbors[i];
    const auto go = grad_out.subspan(i * c, c);
    std::vector<double> w(nb.size()), dots(nb.size());
    std::vector<Vec3> dw(nb.size());
    double wsum = 0.0;
    for (size_t j = 0; j < nb.size(); ++j) {
      const Coord& p = y_prev.coords[static_cast<size_t>(nb[j].index)];
      const double d = sq_dist(q, p);
      w[j] = 1.0 / std::max(d, kAwiEpsilon);
      wsum += w[j];
      // d(1/d)/dq = -2 (q - p) / d^2; zero inside the clamp.
      const double s = d > kAwiEpsilon ? -2.0 / (d * d) : 0.0;
      dw[j] = {s * (q[0] - p.x), s * (q[1] - p.y), s * (q[2] - p.z)};
      const auto f = y_prev.row(static_cast<size_t>(nb[j].index));
      double dot = 0.0;
      for (size_t k = 0; k < c; ++k) dot += static_cast<double>(go[k]) * static_cast<double>(f[k]);
      dots[j] = dot;
    }
    const bool normalized = wsum > alpha;
    const double denom = normalized ? wsum : alpha;
    double out_dot = 0.0;  // <grad_out, out>
    for (size_t j = 0; j < nb.size(); ++j) out_dot += w[j] * dots[j] / denom;
    Vec3 gm{0.0, 0.0, 0.0};
    for (size_t j = 0; j < nb.size(); ++j) {
      auto gp = std::span<Real>(g.grad_prev).subspan(static_cast<size_t>(nb[j].index) * c, c);
      for (size_t k = 0; k < c; ++k) gp[k] += static_cast<Real>(static_cast<double>(go[k]) * w[j] / denom);
      const double coef = normalized ? (dots[j] - out_dot) / denom : dots[j] / denom;
      for (int a = 0; a < 3; ++a) gm[static_cast<size_t>(a)] += coef * dw[j][static_cast<size_t>(a)];
    }
    for (size_t a = 0; a < 3; ++a) g.grad_motion[i * 3 + a] = static_cast<Real>(gm[a]);
  }
  return g;
}

Prediction predict(const SparseTensor& y_t, const SparseTensor& y_prev, const EntropyModel& model,
                   const MotionWeights<float>& w, double alpha) {
  if (y_prev.empty()) throw EmptyInputError("predict: previous latent is empty");
  Prediction p;
  const SparseTensor e_o = flow_embed(y_t, y_prev, w);
  const MmfOutput fused = mmf(e_o, w);
  p.coding = compress_motion(fused.e_t, model, w);
  p.motion = mmr(p.coding.e_hat, y_t.coords, w);
  p.y_bar = awi_3d(p.motion, y_prev, alpha);
  return p;
}

SparseTensor predict_from_stream(std::span<const uint8_t> motion_bytes, std::span<const Coord> c2,
                                 const SparseTensor& y_prev, const EntropyModel& model, const MotionWeights<float>& w,
                                 double alpha) {
  if (y_prev.empty()) throw EmptyInputError("predict: previous latent is empty");
  const MotionLattice lattice = motion_lattice(y_prev.coords, c2);
  const auto symbols = range_decode(motion_bytes, model, lattice.latent.size() * model.channel_count());
  SparseTensor e_hat = synthesize_motion_embedding(symbols, lattice, w);
  e_hat.scale = 3;
  const SparseTensor m = mmr(e_hat, c2, w);
  return awi_3d(m, y_prev, alpha);
}

namespace reference {

template <typename Real>
BasicSparseTensor<Real> awi_3d_serial(const BasicSparseTensor<Real>& motion, const BasicSparseTensor<Real>& y_prev,
                                      double alpha) {
  check_awi_inputs(motion, y_prev, alpha);
  const auto c = static_cast<size_t>(y_prev.channels);
  BasicSparseTensor<Real> out(motion.scale, y_prev.channels, motion.coords);
  for (size_t i = 0; i < motion.size(); ++i) {
    const Vec3 q = translated(motion, i);
    std::vector<std::pair<double, size_t>> all;
    for (size_t r = 0; r < y_prev.size(); ++r) all.emplace_back(sq_dist(q, y_prev.coords[r]), r);
    const size_t k = std::min<size_t>(kAwiNeighbors, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
    double wsum = 0.0;
    std::vector<double> acc(c, 0.0);
    for (size_t j = 0; j < k; ++j) {
      const double w = 1.0 / std::max(all[j].first, kAwiEpsilon);
      wsum += w;
      for (size_t ch = 0; ch < c; ++ch) acc[ch] += w * static_cast<double>(y_prev.row(all[j].second)[ch]);
    }
    for (size_t ch = 0; ch < c; ++ch) out.row(i)[ch] = static_cast<Real>(acc[ch] / std::max(wsum, alpha));
  }
  return out;
}

template BasicSparseTensor<float> awi_3d_serial(const BasicSparseTensor<float>&, const BasicSparseTensor<float>&, double);
template BasicSparseTensor<double> awi_3d_serial(const BasicSparseTensor<double>&, const BasicSparseTensor<double>&,
                                                 double);

}  // namespace reference

#define DDPC_INSTANTIATE_AWI(Real)                                                                                  \
  template AwiNeighbors awi_neighbors(const BasicSparseTensor<Real>&, std::span<const Coord>);                      \
  template BasicSparseTensor<Real> awi_3d_fixed(const BasicSparseTensor<Real>&, const BasicSparseTensor<Real>&,     \
                                                double, const AwiNeighbors&);                                       \
  template BasicSparseTensor<Real> awi_3d(const BasicSparseTensor<Real>&, const BasicSparseTensor<Real>&, double);  \
  template AwiGrads<Real> awi_3d_backward(const BasicSparseTensor<Real>&, const BasicSparseTensor<Real>&, double,   \
                                          const AwiNeighbors&, std::span<const Real>);

DDPC_INSTANTIATE_AWI(float)
DDPC_INSTANTIATE_AWI(double)

}  // namespace ddpc
