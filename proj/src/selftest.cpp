// SPDX-License-Identifier: Apache-2.0
#include "ddpc/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "ddpc/entropy.hpp"
#include "ddpc/gradcheck.hpp"
#include "ddpc/motion.hpp"
#include "ddpc/octree.hpp"
#include "ddpc/rng.hpp"

namespace ddpc {

std::vector<uint8_t> octree_single_point_fixture() { return std::vector<uint8_t>(9, 0x80); }

namespace reference {

std::vector<double> dense_conv(const SparseTensorD& x, const ConvSpec& spec, std::span<const double> weight,
                               std::span<const double> bias, std::span<const Coord> out_coords) {
  spec.validate();
  const int cin = spec.in_channels, cout = spec.out_channels;
  Coord lo{0, 0, 0}, hi{0, 0, 0};
  if (!x.coords.empty()) lo = hi = x.coords.front();
  for (const Coord& c : x.coords) {
    lo = {std::min(lo.x, c.x), std::min(lo.y, c.y), std::min(lo.z, c.z)};
    hi = {std::max(hi.x, c.x), std::max(hi.y, c.y), std::max(hi.z, c.z)};
  }
  const int64_t nx = hi.x - lo.x + 1, ny = hi.y - lo.y + 1, nz = hi.z - lo.z + 1;
  std::vector<double> grid(static_cast<size_t>(nx * ny * nz * cin), 0.0);
  auto cell = [&](int32_t gx, int32_t gy, int32_t gz) -> const double* {
    if (gx < lo.x || gx > hi.x || gy < lo.y || gy > hi.y || gz < lo.z || gz > hi.z) return nullptr;
    const int64_t idx = ((gx - lo.x) * ny + (gy - lo.y)) * nz + (gz - lo.z);
    return grid.data() + idx * cin;
  };
  for (size_t i = 0; i < x.size(); ++i) {
    double* dst = const_cast<double*>(cell(x.coords[i].x, x.coords[i].y, x.coords[i].z));
    for (int c = 0; c < cin; ++c) dst[c] = x.feats[i * cin + c];
  }
  const auto offsets = spec.offsets();
  const size_t wstride = static_cast<size_t>(cin) * static_cast<size_t>(cout);
  std::vector<double> out(out_coords.size() * static_cast<size_t>(cout), 0.0);
  for (size_t j = 0; j < out_coords.size(); ++j) {
    const Coord& u = out_coords[j];
    for (int co = 0; co < cout; ++co) out[j * cout + co] = bias.empty() ? 0.0 : bias[static_cast<size_t>(co)];
    for (size_t o = 0; o < offsets.size(); ++o) {
      const Coord& d = offsets[o];
      const double* v = nullptr;
      if (spec.transposed) {
        const int32_t sx = u.x - d.x, sy = u.y - d.y, sz = u.z - d.z;
        if ((sx % 2) != 0 || (sy % 2) != 0 || (sz % 2) != 0) continue;
        v = cell(sx / 2, sy / 2, sz / 2);
      } else {
        v = cell(spec.stride * u.x + d.x, spec.stride * u.y + d.y, spec.stride * u.z + d.z);
      }
      if (v == nullptr) continue;
      for (int ci = 0; ci < cin; ++ci)
        for (int co = 0; co < cout; ++co) out[j * cout + co] += v[ci] * weight[o * wstride + ci * cout + co];
    }
  }
  return out;
}

}  // namespace reference

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

SelfTestCase entropy_case() {
  SelfTestCase r{"entropy round trip", true, ""};
  Rng rng(11);
  for (int t = 0; t < 20 && r.pass; ++t) {
    std::vector<ChannelPmf> pmfs{geometric_pmf(8, 0.6, 1e-3), geometric_pmf(32, 0.9, 1e-3)};
    const EntropyModel model = build_table_from_pmf(pmfs);
    std::vector<int32_t> sym(static_cast<size_t>(rng.range(1, 2000)));
    for (auto& s : sym) s = static_cast<int32_t>(rng.range(-40, 40));
    const auto bytes = range_encode(sym, model);
    if (range_decode(bytes, model, sym.size()) != sym) {
      r.pass = false;
      r.detail = "mismatch at trial " + std::to_string(t);
    }
  }
  return r;
}

SelfTestCase octree_case(const std::optional<std::filesystem::path>& fixture_dir) {
  SelfTestCase r{"octree fixture and round trip", true, ""};
  std::vector<uint8_t> fixture = octree_single_point_fixture();
  if (fixture_dir) {
    const auto path = *fixture_dir / kOctreeFixtureName;
    std::ifstream f(path, std::ios::binary);
    if (!f) return {r.name, false, "cannot read " + path.string()};
    fixture.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }
  const std::vector<Coord> origin{{0, 0, 0}};
  if (octree_occupancy(origin, 9) != fixture) return {r.name, false, "single-point depth-9 stream differs from fixture"};
  Rng rng(12);
  for (int t = 0; t < 20; ++t) {
    const int depth = static_cast<int>(rng.range(4, 10));
    std::vector<Coord> pts(static_cast<size_t>(rng.range(1, 500)));
    const int64_t side = (int64_t{1} << depth) - 1;
    for (auto& p : pts)
      p = {static_cast<int32_t>(rng.range(0, side)), static_cast<int32_t>(rng.range(0, side)),
           static_cast<int32_t>(rng.range(0, side))};
    sort_unique(pts);
    const auto stream = OctreeStream::parse(octree_encode(pts, depth).serialize());
    if (octree_decode(stream) != pts) return {r.name, false, "round trip mismatch at trial " + std::to_string(t)};
  }
  return r;
}

SelfTestCase conv_case() {
  SelfTestCase r{"sparse convolution vs dense oracle", true, ""};
  Rng rng(13);
  const ConvSpec specs[] = {{2, 3, 1, 1, false}, {2, 3, 3, 1, false}, {2, 3, 2, 2, false}, {2, 3, 2, 2, true}};
  double worst = 0.0;
  for (const ConvSpec& spec : specs) {
    std::vector<Coord> pts(60);
    for (auto& p : pts)
      p = {static_cast<int32_t>(rng.range(0, 7)), static_cast<int32_t>(rng.range(0, 7)),
           static_cast<int32_t>(rng.range(0, 7))};
    sort_unique(pts);
    SparseTensorD x(1, spec.in_channels, pts);
    for (auto& v : x.feats) v = rng.uniform(-1, 1);
    std::vector<double> w(static_cast<size_t>(spec.volume() * spec.in_channels * spec.out_channels));
    std::vector<double> b(static_cast<size_t>(spec.out_channels));
    for (auto& v : w) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    const auto out = spec.transposed ? child_candidates(pts) : default_out_coords(pts, spec);
    const auto got = sparse_conv<double>(x, spec, w, b, out);
    const auto want = reference::dense_conv(x, spec, w, b, out);
    for (size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(got.feats[i] - want[i]));
  }
  r.pass = worst <= 1e-9;
  r.detail = "max abs error " + sci(worst);
  return r;
}

double awi_scalar(const std::vector<Coord>& prev, const std::vector<double>& feats, double alpha) {
  SparseTensorD motion(2, 3, {{0, 0, 0}});
  SparseTensorD y_prev(2, 1, prev, feats);
  return awi_3d<double>(motion, y_prev, alpha).feats[0];
}

SelfTestCase awi_case() {
  SelfTestCase r{"interpolation hand cases", true, ""};
  const double unit = awi_scalar({{0, 0, 1}, {0, 1, 0}, {1, 0, 0}}, {1, 2, 3}, 3.0);
  const double shrink = awi_scalar({{0, 1, 1}, {1, 0, 1}, {1, 1, 0}}, {1, 2, 3}, 3.0);
  const double far = awi_scalar({{0, 0, 1000000}, {0, 1000000, 0}, {1000000, 0, 0}}, {1, 2, 3}, 3.0);
  const double coincident = awi_scalar({{0, 0, 0}, {0, 0, 1}, {0, 1, 0}}, {5, 1, 2}, 3.0);
  std::ostringstream d;
  d << "unit=" << unit << " shrink=" << shrink << " far=" << far << " coincident=" << coincident;
  r.detail = d.str();
  r.pass = unit == 2.0 && shrink == 1.0 && std::abs(far) < 1e-3 && std::abs(coincident - 5.0) < 1e-6;
  return r;
}

SelfTestCase gradcheck_case() {
  SelfTestCase r{"gradient check subset", true, ""};
  double worst = 0.0;
  for (GradOp op : all_grad_ops()) {
    const GradReport rep = check_gradient_suite(op, 5, 1);
    worst = std::max(worst, rep.max_rel_error);
    if (!rep.pass) {
      r.pass = false;
      r.detail += std::string(grad_op_name(op)) + " failed; ";
    }
  }
  r.detail += "max relative error " + sci(worst);
  return r;
}

}  // namespace

std::vector<SelfTestCase> run_selftest(const std::optional<std::filesystem::path>& fixture_dir) {
  return {entropy_case(), octree_case(fixture_dir), conv_case(), awi_case(), gradcheck_case()};
}

}  // namespace ddpc
