// SPDX-License-Identifier: Apache-2.0
#include "ddpc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "ddpc/entropy.hpp"
#include "ddpc/motion.hpp"
#include "ddpc/rng.hpp"
#include "ddpc/sparse_nn.hpp"

namespace ddpc {

namespace {

constexpr double h = kFiniteDifferenceStep;

std::vector<double> random_values(Rng& rng, size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

std::vector<Coord> random_coords(Rng& rng, size_t n, int box) {
  std::vector<Coord> c;
  for (size_t i = 0; i < n; ++i)
    c.push_back({static_cast<int32_t>(rng.below(static_cast<uint64_t>(box))),
                 static_cast<int32_t>(rng.below(static_cast<uint64_t>(box))),
                 static_cast<int32_t>(rng.below(static_cast<uint64_t>(box)))});
  sort_unique(c);
  return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Compares analytic[i] with the central difference of `loss` along params[i].
GradBlock compare(const std::string& name, std::vector<double>& params, std::span<const double> analytic,
                  const std::function<double()>& loss) {
  GradBlock b{name, 0.0, 0};
  for (size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss();
    params[i] = saved - h;
    const double down = loss();
    params[i] = saved;
    b.max_rel_error = std::max(b.max_rel_error, relative_error(analytic[i], (up - down) / (2.0 * h)));
    ++b.checked;
  }
  return b;
}

struct ConvInstance {
  SparseTensorD x;
  ConvSpec spec;
  std::vector<double> weight, bias;
  std::vector<Coord> out;
};

ConvInstance make_conv_instance(Rng& rng, size_t max_points, int box) {
  ConvInstance in;
  const int kind = static_cast<int>(rng.below(4));
  in.spec.in_channels = static_cast<int>(rng.range(1, 3));
  in.spec.out_channels = static_cast<int>(rng.range(1, 3));
  if (kind == 0) {
    in.spec.kernel_size = 1;
  } else if (kind == 1) {
    in.spec.kernel_size = 3;
  } else {
    in.spec.kernel_size = 2;
    in.spec.stride = 2;
    in.spec.transposed = kind == 3;
  }
  const auto coords = random_coords(rng, static_cast<size_t>(rng.range(3, static_cast<int64_t>(max_points))), box);
  in.x = SparseTensorD(1, in.spec.in_channels, coords);
  in.x.feats = random_values(rng, in.x.feats.size(), -1.0, 1.0);
  in.weight = random_values(rng, static_cast<size_t>(in.spec.volume() * in.spec.in_channels * in.spec.out_channels),
                            -1.0, 1.0);
  in.bias = random_values(rng, static_cast<size_t>(in.spec.out_channels), -0.5, 0.5);
  if (in.spec.transposed) {
    for (const Coord& c : child_candidates(coords))
      if (rng.below(2) == 0) in.out.push_back(c);
    if (in.out.empty()) in.out.push_back({2 * coords[0].x, 2 * coords[0].y, 2 * coords[0].z});
  } else {
    in.out = default_out_coords(coords, in.spec);
  }
  return in;
}

GradReport finish(GradReport r) {
  for (const auto& b : r.blocks) r.max_rel_error = std::max(r.max_rel_error, b.max_rel_error);
  r.pass = r.max_rel_error <= kGradTolerance;
  r.instances = 1;
  return r;
}

GradReport conv_report(uint64_t seed) {
  Rng rng(seed);
  ConvInstance in = make_conv_instance(rng, 40, 8);
  const size_t n_out = in.out.size() * static_cast<size_t>(in.spec.out_channels);
  const auto g = random_values(rng, n_out, -1.0, 1.0);
  auto loss = [&] {
    return dot(g, sparse_conv<double>(in.x, in.spec, in.weight, in.bias, in.out).feats);
  };
  const auto grads = sparse_conv_backward<double>(in.x, in.spec, in.weight, in.out, g);
  GradReport r;
  r.op = grad_op_name(GradOp::kSparseConv);
  r.blocks.push_back(compare("input", in.x.feats, grads.grad_input, loss));
  r.blocks.push_back(compare("weight", in.weight, grads.grad_weight, loss));
  r.blocks.push_back(compare("bias", in.bias, grads.grad_bias, loss));
  return finish(r);
}

struct AwiInstance {
  SparseTensorD motion;
  SparseTensorD prev;
  double alpha = 3.0;
  AwiNeighbors nb;
};

double inverse_distance_sum(const SparseTensorD& motion, const SparseTensorD& prev, const AwiNeighbors& nb, size_t i,
                            double& min_d) {
  const Coord& u = motion.coords[i];
  double s = 0.0;
  for (const auto& v : nb[i]) {
    const Coord& p = prev.coords[static_cast<size_t>(v.index)];
    const double dx = u.x + motion.row(i)[0] - p.x, dy = u.y + motion.row(i)[1] - p.y,
                 dz = u.z + motion.row(i)[2] - p.z;
    const double d = dx * dx + dy * dy + dz * dz;
    min_d = std::min(min_d, d);
    s += 1.0 / std::max(d, kAwiEpsilon);
  }
  return s;
}

/// Neighbour membership must not change within +-h of every displacement.
bool stable_membership(const AwiInstance& in) {
  for (size_t i = 0; i < in.motion.size(); ++i) {
    const Coord& u = in.motion.coords[i];
    for (int a = 0; a < 3; ++a)
      for (double s : {-2.0 * h, 2.0 * h}) {
        Vec3 q{u.x + in.motion.row(i)[0], u.y + in.motion.row(i)[1], u.z + in.motion.row(i)[2]};
        q[static_cast<size_t>(a)] += s;
        const auto nn = knn(std::span<const Vec3>(&q, 1), in.prev.coords, kAwiNeighbors + 1);
        // Also reject near-ties between the last member and the first outsider.
        if (nn[0].size() > static_cast<size_t>(kAwiNeighbors) &&
            nn[0][kAwiNeighbors].sq_dist - nn[0][kAwiNeighbors - 1].sq_dist < 1e-3)
          return false;
        for (int k = 0; k < kAwiNeighbors && k < static_cast<int>(nn[0].size()); ++k)
          if (nn[0][static_cast<size_t>(k)].index != in.nb[i][static_cast<size_t>(k)].index &&
              std::find_if(in.nb[i].begin(), in.nb[i].end(), [&](const Neighbor& n) {
                return n.index == nn[0][static_cast<size_t>(k)].index;
              }) == in.nb[i].end())
            return false;
      }
  }
  return true;
}

/// Draws until the instance is away from ties, coincidences and the alpha boundary.
AwiInstance make_awi_instance(Rng& rng, bool normalized, size_t queries, size_t prev_points, int channels) {
  for (;;) {
    AwiInstance in;
    in.prev = SparseTensorD(2, channels, random_coords(rng, prev_points, 6));
    in.prev.feats = random_values(rng, in.prev.feats.size(), -1.0, 1.0);
    in.motion = SparseTensorD(2, 3, random_coords(rng, queries, 6));
    in.motion.feats = random_values(rng, in.motion.feats.size(), -0.9, 0.9);
    if (in.prev.size() < static_cast<size_t>(kAwiNeighbors)) continue;
    in.nb = awi_neighbors(in.motion, in.prev.coords);
    double lo = 1e300, hi = 0.0, min_d = 1e300;
    for (size_t i = 0; i < in.motion.size(); ++i) {
      const double s = inverse_distance_sum(in.motion, in.prev, in.nb, i, min_d);
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    if (min_d < 0.05) continue;
    // A factor of two keeps every point clear of the boundary between the two formulas.
    in.alpha = normalized ? 0.5 * lo : 2.0 * hi;
    if (!stable_membership(in)) continue;
    return in;
  }
}

GradReport awi_report(uint64_t seed, bool normalized) {
  Rng rng(seed);
  AwiInstance in = make_awi_instance(rng, normalized, 8, 30, 4);
  const auto g = random_values(rng, in.motion.size() * static_cast<size_t>(in.prev.channels), -1.0, 1.0);
  auto loss = [&] { return dot(g, awi_3d_fixed(in.motion, in.prev, in.alpha, in.nb).feats); };
  const auto grads = awi_3d_backward<double>(in.motion, in.prev, in.alpha, in.nb, g);
  GradReport r;
  r.op = grad_op_name(normalized ? GradOp::kAwiNormalized : GradOp::kAwiShrink);
  r.blocks.push_back(compare("prev_features", in.prev.feats, grads.grad_prev, loss));
  r.blocks.push_back(compare("motion", in.motion.feats, grads.grad_motion, loss));
  return finish(r);
}

GradReport bce_report(uint64_t seed) {
  Rng rng(seed);
  const size_t n = static_cast<size_t>(rng.range(1, 64));
  auto z = random_values(rng, n, -6.0, 6.0);
  std::vector<uint8_t> occ(n);
  for (auto& o : occ) o = static_cast<uint8_t>(rng.below(2));
  const auto g = bce_gradient(z, occ);
  GradReport r;
  r.op = grad_op_name(GradOp::kBce);
  r.blocks.push_back(compare("logits", z, g, [&] { return bce_loss(z, occ); }));
  return finish(r);
}

GradReport rate_report(uint64_t seed) {
  Rng rng(seed);
  for (;;) {
    ChannelPmf pmf;
    pmf.offset = static_cast<int32_t>(rng.range(-8, 0));
    pmf.pmf = random_values(rng, static_cast<size_t>(rng.range(2, 16)), 0.01, 1.0);
    pmf.escape = rng.below(2) ? 0.01 : 0.0;
    const EntropyModel model = build_table_from_pmf(std::span<const ChannelPmf>(&pmf, 1));
    const double span_lo = pmf.offset - 1.0, span_hi = pmf.offset + static_cast<double>(pmf.pmf.size());
    std::vector<double> x(8);
    bool ok = true;
    for (double& v : x) {
      v = rng.uniform(span_lo, span_hi);
      const double frac = v - std::floor(v);
      // Kinks of the interpolated CDF sit at integers, and the floor region is flat.
      if (frac < 1e-3 || frac > 1.0 - 1e-3) ok = false;
      // Central differences resolve -log p only while h |p'| / p stays small.
      const auto nr = noisy_symbol_bits(model, 0, v);
      if (nr.bits >= 16.0 || kFiniteDifferenceStep * std::abs(nr.gradient) * std::log(2.0) > 1e-2) ok = false;
    }
    if (!ok) continue;
    std::vector<double> grad(x.size());
    for (size_t i = 0; i < x.size(); ++i) grad[i] = noisy_symbol_bits(model, 0, x[i]).gradient;
    auto loss = [&] {
      double s = 0.0;
      for (double v : x) s += noisy_symbol_bits(model, 0, v).bits;
      return s;
    };
    GradReport r;
    r.op = grad_op_name(GradOp::kRate);
    r.blocks.push_back(compare("symbols", x, grad, loss));
    return finish(r);
  }
}

GradReport chain_report(uint64_t seed) {
  Rng rng(seed);
  for (;;) {
    // Five source points feed a 3x3 convolution whose output is interpolated.
    SparseTensorD x(2, 2, random_coords(rng, 5, 4));
    if (x.size() < static_cast<size_t>(kAwiNeighbors)) continue;
    x.feats = random_values(rng, x.feats.size(), -1.0, 1.0);
    const ConvSpec spec{2, 3, 3, 1, false};
    auto weight = random_values(rng, static_cast<size_t>(spec.volume() * 2 * 3), -1.0, 1.0);
    const std::vector<double> bias = random_values(rng, 3, -0.5, 0.5);
    AwiInstance in;
    in.prev = sparse_conv<double>(x, spec, weight, bias, x.coords);
    in.motion = SparseTensorD(2, 3, random_coords(rng, 4, 4));
    in.motion.feats = random_values(rng, in.motion.feats.size(), -0.9, 0.9);
    in.nb = awi_neighbors(in.motion, in.prev.coords);
    double min_d = 1e300, lo = 1e300;
    for (size_t i = 0; i < in.motion.size(); ++i) lo = std::min(lo, inverse_distance_sum(in.motion, in.prev, in.nb, i, min_d));
    if (min_d < 0.05 || !stable_membership(in)) continue;
    in.alpha = rng.below(2) ? 0.5 * lo : 1e3;
    const auto g = random_values(rng, in.motion.size() * 3, -1.0, 1.0);
    auto loss = [&] {
      const SparseTensorD p = sparse_conv<double>(x, spec, weight, bias, x.coords);
      return dot(g, awi_3d_fixed(in.motion, p, in.alpha, in.nb).feats);
    };
    const auto ga = awi_3d_backward<double>(in.motion, in.prev, in.alpha, in.nb, g);
    const auto gc = sparse_conv_backward<double>(x, spec, weight, x.coords, ga.grad_prev);
    GradReport r;
    r.op = grad_op_name(GradOp::kChain);
    r.blocks.push_back(compare("input", x.feats, gc.grad_input, loss));
    r.blocks.push_back(compare("weight", weight, gc.grad_weight, loss));
    r.blocks.push_back(compare("motion", in.motion.feats, ga.grad_motion, loss));
    return finish(r);
  }
}

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

double bce_loss(std::span<const double> z, std::span<const uint8_t> occ) {
  require(z.size() == occ.size() && !z.empty(), "bce_loss: size mismatch or empty input");
  double s = 0.0;
  for (size_t i = 0; i < z.size(); ++i)
    s += std::max(z[i], 0.0) + std::log1p(std::exp(-std::abs(z[i]))) - (occ[i] ? z[i] : 0.0);
  return s / static_cast<double>(z.size());
}

std::vector<double> bce_gradient(std::span<const double> z, std::span<const uint8_t> occ) {
  require(z.size() == occ.size() && !z.empty(), "bce_gradient: size mismatch or empty input");
  std::vector<double> g(z.size());
  for (size_t i = 0; i < z.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z[i]));
    g[i] = (p - (occ[i] ? 1.0 : 0.0)) / static_cast<double>(z.size());
  }
  return g;
}

const char* grad_op_name(GradOp op) {
  switch (op) {
    case GradOp::kSparseConv: return "sparse_conv";
    case GradOp::kAwiNormalized: return "awi_normalized";
    case GradOp::kAwiShrink: return "awi_shrink";
    case GradOp::kBce: return "bce";
    case GradOp::kRate: return "rate_proxy";
    case GradOp::kChain: return "awi_of_conv";
  }
  return "?";
}

std::vector<GradOp> all_grad_ops() {
  return {GradOp::kSparseConv, GradOp::kAwiNormalized, GradOp::kAwiShrink, GradOp::kBce, GradOp::kRate, GradOp::kChain};
}

GradReport check_gradient(GradOp op, uint64_t seed) {
  switch (op) {
    case GradOp::kSparseConv: return conv_report(seed);
    case GradOp::kAwiNormalized: return awi_report(seed, true);
    case GradOp::kAwiShrink: return awi_report(seed, false);
    case GradOp::kBce: return bce_report(seed);
    case GradOp::kRate: return rate_report(seed);
    case GradOp::kChain: return chain_report(seed);
  }
  throw ContractViolation("check_gradient: unknown op");
}

GradReport check_gradient_suite(GradOp op, size_t count, uint64_t base_seed) {
  GradReport total;
  total.op = grad_op_name(op);
  for (size_t i = 0; i < count; ++i) {
    const uint64_t seed = base_seed + i;
    const GradReport r = check_gradient(op, seed);
    for (const auto& b : r.blocks) {
      auto it = std::find_if(total.blocks.begin(), total.blocks.end(), [&](const GradBlock& t) { return t.name == b.name; });
      if (it == total.blocks.end()) {
        total.blocks.push_back(b);
      } else {
        it->max_rel_error = std::max(it->max_rel_error, b.max_rel_error);
        it->checked += b.checked;
      }
    }
    if (r.max_rel_error > total.max_rel_error || i == 0) {
      total.max_rel_error = std::max(total.max_rel_error, r.max_rel_error);
      total.worst_seed = seed;
    }
    if (!r.pass) total.failing_seeds.push_back(seed);
    ++total.instances;
  }
  total.pass = total.failing_seeds.empty();
  return total;
}

}  // namespace ddpc
