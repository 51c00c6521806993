// SPDX-License-Identifier: Apache-2.0
#include "ddpc/sparse_nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ddpc {

void ConvSpec::validate() const {
  require(in_channels >= 1 && out_channels >= 1, "conv: channel counts must be >= 1");
  require(kernel_size >= 1 && kernel_size <= 3, "conv: kernel size must be 1, 2 or 3");
  require(stride == 1 || stride == 2, "conv: stride must be 1 or 2");
  require(stride == 1 || kernel_size >= 2, "conv: stride 2 needs kernel size >= 2");
  require(!transposed || (stride == 2 && kernel_size == 2), "conv: transposed layers are stride 2, kernel 2");
}

std::vector<Coord> ConvSpec::offsets() const {
  const int lo = -((kernel_size - 1) / 2);
  std::vector<Coord> out;
  out.reserve(static_cast<size_t>(volume()));
  for (int dx = lo; dx < lo + kernel_size; ++dx)
    for (int dy = lo; dy < lo + kernel_size; ++dy)
      for (int dz = lo; dz < lo + kernel_size; ++dz) out.push_back({dx, dy, dz});
  return out;
}

size_t KernelMap::pair_count() const {
  size_t n = 0;
  for (const auto& p : pairs) n += p.size();
  return n;
}

std::vector<Coord> default_out_coords(std::span<const Coord> in_coords, const ConvSpec& spec) {
  require(!spec.transposed, "transposed convolution needs explicit target coordinates");
  if (spec.stride == 1) return {in_coords.begin(), in_coords.end()};
  return stride_down_coords(in_coords);
}

namespace {

bool all_even(const Coord& c) { return ((c.x | c.y | c.z) & 1) == 0; }

void check_forward_lattice(std::span<const Coord> in_coords, std::span<const Coord> out_coords, const ConvSpec& spec) {
  if (spec.transposed || spec.stride != 2) return;
  const auto expected = stride_down_coords(in_coords);
  require(expected.size() == out_coords.size() && std::equal(expected.begin(), expected.end(), out_coords.begin()),
          "stride-2 output coordinates must be the floor-div set of the input");
}

}  // namespace

GatherMap build_gather_map(std::span<const Coord> in_coords, std::span<const Coord> out_coords, const ConvSpec& spec) {
  spec.validate();
  check_forward_lattice(in_coords, out_coords, spec);
  const auto offsets = spec.offsets();
  const int vol = spec.volume();
  const CoordIndex in_index(in_coords);
  const auto n_out = static_cast<int64_t>(out_coords.size());

  // Fixed-width slots per output row, compacted afterwards.
  std::vector<int32_t> slot(static_cast<size_t>(n_out) * static_cast<size_t>(vol), -1);
#pragma omp parallel for schedule(static)
  for (int64_t j = 0; j < n_out; ++j) {
    const Coord& oc = out_coords[static_cast<size_t>(j)];
    int32_t* s = slot.data() + j * vol;
    for (int o = 0; o < vol; ++o) {
      const Coord& d = offsets[static_cast<size_t>(o)];
      Coord src;
      if (spec.transposed) {
        const Coord diff{oc.x - d.x, oc.y - d.y, oc.z - d.z};
        if (!all_even(diff)) continue;
        src = {diff.x >> 1, diff.y >> 1, diff.z >> 1};
      } else {
        src = {spec.stride * oc.x + d.x, spec.stride * oc.y + d.y, spec.stride * oc.z + d.z};
      }
      s[o] = in_index.find(src);
    }
  }

  GatherMap g;
  g.row_begin.resize(static_cast<size_t>(n_out) + 1, 0);
  std::vector<std::pair<int32_t, int32_t>> row;  // (input, offset)
  for (int64_t j = 0; j < n_out; ++j) {
    row.clear();
    const int32_t* s = slot.data() + j * vol;
    for (int o = 0; o < vol; ++o)
      if (s[o] >= 0) row.emplace_back(s[o], o);
    std::sort(row.begin(), row.end());
    for (const auto& [i, o] : row) {
      g.input.push_back(i);
      g.offset.push_back(o);
    }
    g.row_begin[static_cast<size_t>(j) + 1] = static_cast<int64_t>(g.input.size());
  }
  return g;
}

KernelMap build_kernel_map(std::span<const Coord> in_coords, std::span<const Coord> out_coords, const ConvSpec& spec) {
  const GatherMap g = build_gather_map(in_coords, out_coords, spec);
  KernelMap km;
  km.offsets = spec.offsets();
  km.pairs.resize(km.offsets.size());
  for (size_t j = 0; j + 1 < g.row_begin.size(); ++j)
    for (int64_t p = g.row_begin[j]; p < g.row_begin[j + 1]; ++p)
      km.pairs[static_cast<size_t>(g.offset[static_cast<size_t>(p)])].emplace_back(g.input[static_cast<size_t>(p)],
                                                                                  static_cast<int32_t>(j));
  return km;
}

template <typename Real>
void ConvLayer<Real>::validate() const {
  spec.validate();
  require(weight.size() == static_cast<size_t>(spec.volume()) * static_cast<size_t>(spec.in_channels) *
                               static_cast<size_t>(spec.out_channels),
          "conv: weight size does not match (volume, in, out)");
  require(bias.size() == static_cast<size_t>(spec.out_channels), "conv: bias size does not match out channels");
}

namespace {

template <typename Real>
void check_conv_args(const BasicSparseTensor<Real>& x, const ConvSpec& spec, std::span<const Real> weight,
                     std::span<const Real> bias) {
  spec.validate();
  require(x.channels == spec.in_channels, "conv: input has " + std::to_string(x.channels) + " channels, layer expects " +
                                              std::to_string(spec.in_channels));
  require(weight.size() == static_cast<size_t>(spec.volume()) * static_cast<size_t>(spec.in_channels) *
                               static_cast<size_t>(spec.out_channels),
          "conv: weight size does not match (volume, in, out)");
  require(bias.empty() || bias.size() == static_cast<size_t>(spec.out_channels),
          "conv: bias size does not match out channels");
}

int output_scale(int in_scale, const ConvSpec& spec) {
  if (spec.stride == 1) return in_scale;
  return spec.transposed ? std::max(0, in_scale - 1) : in_scale + 1;
}

}  // namespace

template <typename Real>
BasicSparseTensor<Real> sparse_conv(const BasicSparseTensor<Real>& x, const ConvSpec& spec,
                                    std::span<const Real> weight, std::span<const Real> bias,
                                    std::span<const Coord> out_coords) {
  check_conv_args(x, spec, weight, bias);
  const GatherMap g = build_gather_map(x.coords, out_coords, spec);
  const int cin = spec.in_channels, cout = spec.out_channels;
  const size_t wstride = static_cast<size_t>(cin) * static_cast<size_t>(cout);
  BasicSparseTensor<Real> out(output_scale(x.scale, spec), cout,
                              std::vector<Coord>(out_coords.begin(), out_coords.end()));
  const auto n_out = static_cast<int64_t>(out_coords.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (int64_t j = 0; j < n_out; ++j) {
    Real* acc = out.feats.data() + j * cout;
    if (!bias.empty()) std::copy(bias.begin(), bias.end(), acc);
    for (int64_t p = g.row_begin[static_cast<size_t>(j)]; p < g.row_begin[static_cast<size_t>(j) + 1]; ++p) {
      const Real* xi = x.feats.data() + static_cast<size_t>(g.input[static_cast<size_t>(p)]) * static_cast<size_t>(cin);
      const Real* w = weight.data() + static_cast<size_t>(g.offset[static_cast<size_t>(p)]) * wstride;
      for (int ci = 0; ci < cin; ++ci) {
        const Real v = xi[ci];
        if (v == Real(0)) continue;
        const Real* wr = w + static_cast<size_t>(ci) * static_cast<size_t>(cout);
        for (int co = 0; co < cout; ++co) acc[co] += v * wr[co];
      }
    }
  }
  return out;
}

template <typename Real>
ConvGrads<Real> sparse_conv_backward(const BasicSparseTensor<Real>& x, const ConvSpec& spec,
                                     std::span<const Real> weight, std::span<const Coord> out_coords,
                                     std::span<const Real> grad_out) {
  check_conv_args(x, spec, weight, std::span<const Real>{});
  const int cin = spec.in_channels, cout = spec.out_channels;
  require(grad_out.size() == out_coords.size() * static_cast<size_t>(cout), "conv backward: grad_out size mismatch");
  const KernelMap km = build_kernel_map(x.coords, out_coords, spec);
  const size_t wstride = static_cast<size_t>(cin) * static_cast<size_t>(cout);
  ConvGrads<Real> g;
  g.grad_input.assign(x.feats.size(), Real(0));
  g.grad_weight.assign(weight.size(), Real(0));
  g.grad_bias.assign(static_cast<size_t>(cout), Real(0));
  for (size_t j = 0; j < out_coords.size(); ++j)
    for (int co = 0; co < cout; ++co) g.grad_bias[static_cast<size_t>(co)] += grad_out[j * cout + co];
  for (size_t o = 0; o < km.pairs.size(); ++o) {
    const Real* w = weight.data() + o * wstride;
    Real* gw = g.grad_weight.data() + o * wstride;
    for (const auto& [i, j] : km.pairs[o]) {
      const Real* xi = x.feats.data() + static_cast<size_t>(i) * cin;
      const Real* gj = grad_out.data() + static_cast<size_t>(j) * cout;
      Real* gi = g.grad_input.data() + static_cast<size_t>(i) * cin;
      for (int ci = 0; ci < cin; ++ci) {
        Real s = 0;
        for (int co = 0; co < cout; ++co) {
          s += w[ci * cout + co] * gj[co];
          gw[ci * cout + co] += xi[ci] * gj[co];
        }
        gi[ci] += s;
      }
    }
  }
  return g;
}

template <typename Real>
BasicSparseTensor<Real> relu(BasicSparseTensor<Real> x) {
  for (Real& v : x.feats) v = v > Real(0) ? v : Real(0);
  return x;
}

namespace {

template <typename Real>
BasicSparseTensor<Real> concat_channels(std::initializer_list<const BasicSparseTensor<Real>*> parts) {
  const BasicSparseTensor<Real>& first = **parts.begin();
  int total = 0;
  for (const auto* p : parts) total += p->channels;
  BasicSparseTensor<Real> out(first.scale, total, first.coords);
  for (size_t r = 0; r < first.size(); ++r) {
    auto dst = out.row(r).begin();
    for (const auto* p : parts) dst = std::ranges::copy(p->row(r), dst).out;
  }
  return out;
}

}  // namespace

template <typename Real>
BasicSparseTensor<Real> irn_block(const BasicSparseTensor<Real>& x, const IrnWeights<Real>& w) {
  require(w.b0a.spec.in_channels == x.channels && w.b1a.spec.in_channels == x.channels &&
              w.b2.spec.in_channels == x.channels,
          "irn: input channel mismatch");
  require(w.b0b.spec.out_channels + w.b1b.spec.out_channels + w.b2.spec.out_channels == x.channels,
          "irn: branch widths must sum to the input width");
  const auto b0 = sparse_conv(relu(sparse_conv(x, w.b0a)), w.b0b);
  const auto b1 = sparse_conv(relu(sparse_conv(x, w.b1a)), w.b1b);
  const auto b2 = sparse_conv(x, w.b2);
  auto out = concat_channels<Real>({&b0, &b1, &b2});
  for (size_t i = 0; i < out.feats.size(); ++i) out.feats[i] += x.feats[i];
  return out;
}

template <typename Real>
BasicSparseTensor<Real> rn_block(const BasicSparseTensor<Real>& x, const RnWeights<Real>& w) {
  require(w.conv0.spec.in_channels == x.channels && w.conv1.spec.out_channels == x.channels,
          "rn: channel mismatch");
  auto out = sparse_conv(relu(sparse_conv(x, w.conv0)), w.conv1);
  for (size_t i = 0; i < out.feats.size(); ++i) out.feats[i] += x.feats[i];
  return out;
}

template <typename Real>
OccupancyScores<Real> classify_occupancy(const BasicSparseTensor<Real>& x, const ConvLayer<Real>& head) {
  require(head.spec.out_channels == 1 && head.spec.kernel_size == 1 && head.spec.stride == 1,
          "classifier head must be a 1x1 conv to one channel");
  const auto logits = sparse_conv(x, head);
  OccupancyScores<Real> s;
  s.logits = logits.feats;
  s.probs.resize(s.logits.size());
  for (size_t i = 0; i < s.logits.size(); ++i) s.probs[i] = Real(1) / (Real(1) + std::exp(-s.logits[i]));
  return s;
}

template <typename Real>
std::vector<int32_t> top_k_rows(std::span<const Real> scores, size_t keep) {
  std::vector<int32_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (keep >= scores.size()) return idx;
  auto better = [&](int32_t a, int32_t b) {
    const Real sa = scores[static_cast<size_t>(a)], sb = scores[static_cast<size_t>(b)];
    return sa > sb || (sa == sb && a < b);
  };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(), better);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <typename Real>
BasicSparseTensor<Real> adaptive_prune(const BasicSparseTensor<Real>& x, std::span<const Real> scores, size_t keep) {
  require(scores.size() == x.size(), "prune: one score per voxel required");
  const auto rows = top_k_rows(scores, keep);
  BasicSparseTensor<Real> out(x.scale, x.channels, {});
  out.coords.reserve(rows.size());
  out.feats.reserve(rows.size() * static_cast<size_t>(x.channels));
  for (int32_t r : rows) {
    out.coords.push_back(x.coords[static_cast<size_t>(r)]);
    const auto src = x.row(static_cast<size_t>(r));
    out.feats.insert(out.feats.end(), src.begin(), src.end());
  }
  return out;
}

std::vector<Coord> child_candidates(std::span<const Coord> coords) {
  std::vector<Coord> out;
  out.reserve(coords.size() * 8);
  for (const Coord& c : coords)
    for (int b = 0; b < 8; ++b) out.push_back({2 * c.x + ((b >> 2) & 1), 2 * c.y + ((b >> 1) & 1), 2 * c.z + (b & 1)});
  sort_unique(out);
  return out;
}

namespace reference {

template <typename Real>
BasicSparseTensor<Real> sparse_conv_scatter(const BasicSparseTensor<Real>& x, const ConvSpec& spec,
                                            std::span<const Real> weight, std::span<const Real> bias,
                                            std::span<const Coord> out_coords) {
  check_conv_args(x, spec, weight, bias);
  const auto offsets = spec.offsets();
  const int cin = spec.in_channels, cout = spec.out_channels;
  const CoordIndex out_index(out_coords);
  BasicSparseTensor<Real> out(output_scale(x.scale, spec), cout,
                              std::vector<Coord>(out_coords.begin(), out_coords.end()));
  for (size_t j = 0; j < out.size(); ++j)
    for (int co = 0; co < cout; ++co) out.feats[j * cout + co] = bias.empty() ? Real(0) : bias[static_cast<size_t>(co)];
  for (size_t o = 0; o < offsets.size(); ++o) {
    const Coord d = offsets[o];
    for (size_t i = 0; i < x.size(); ++i) {
      const Coord c = x.coords[i];
      Coord target;
      if (spec.transposed) {
        target = {2 * c.x + d.x, 2 * c.y + d.y, 2 * c.z + d.z};
      } else if (spec.stride == 1) {
        target = {c.x - d.x, c.y - d.y, c.z - d.z};
      } else {
        const Coord diff{c.x - d.x, c.y - d.y, c.z - d.z};
        if (((diff.x | diff.y | diff.z) & 1) != 0) continue;
        target = {diff.x >> 1, diff.y >> 1, diff.z >> 1};
      }
      const int32_t j = out_index.find(target);
      if (j < 0) continue;
      for (int ci = 0; ci < cin; ++ci)
        for (int co = 0; co < cout; ++co)
          out.feats[static_cast<size_t>(j) * cout + co] +=
              x.feats[i * cin + ci] * weight[(o * cin + static_cast<size_t>(ci)) * cout + co];
    }
  }
  return out;
}

template BasicSparseTensor<float> sparse_conv_scatter(const BasicSparseTensor<float>&, const ConvSpec&,
                                                      std::span<const float>, std::span<const float>,
                                                      std::span<const Coord>);
template BasicSparseTensor<double> sparse_conv_scatter(const BasicSparseTensor<double>&, const ConvSpec&,
                                                       std::span<const double>, std::span<const double>,
                                                       std::span<const Coord>);

}  // namespace reference

#define DDPC_INSTANTIATE(Real)                                                                                       \
  template struct ConvLayer<Real>;                                                                                   \
  template BasicSparseTensor<Real> sparse_conv(const BasicSparseTensor<Real>&, const ConvSpec&,                      \
                                               std::span<const Real>, std::span<const Real>, std::span<const Coord>); \
  template ConvGrads<Real> sparse_conv_backward(const BasicSparseTensor<Real>&, const ConvSpec&,                     \
                                                std::span<const Real>, std::span<const Coord>,                       \
                                                std::span<const Real>);                                              \
  template BasicSparseTensor<Real> relu(BasicSparseTensor<Real>);                                                    \
  template BasicSparseTensor<Real> irn_block(const BasicSparseTensor<Real>&, const IrnWeights<Real>&);               \
  template BasicSparseTensor<Real> rn_block(const BasicSparseTensor<Real>&, const RnWeights<Real>&);                 \
  template OccupancyScores<Real> classify_occupancy(const BasicSparseTensor<Real>&, const ConvLayer<Real>&);         \
  template std::vector<int32_t> top_k_rows(std::span<const Real>, size_t);                                           \
  template BasicSparseTensor<Real> adaptive_prune(const BasicSparseTensor<Real>&, std::span<const Real>, size_t);

DDPC_INSTANTIATE(float)
DDPC_INSTANTIATE(double)
#undef DDPC_INSTANTIATE

}  // namespace ddpc
