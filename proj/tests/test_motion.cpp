// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "ddpc/codec.hpp"
#include "ddpc/motion.hpp"
#include "ddpc/synthetic.hpp"
#include "test_support.hpp"

using namespace ddpc;

namespace {

/// Interpolated value at the origin (zero motion) from scalar features.
double at_origin(std::vector<Coord> prev, std::vector<double> feats, double alpha) {
  SparseTensorD motion(2, 3, {{0, 0, 0}});
  SparseTensorD y_prev(2, 1, std::move(prev), std::move(feats));
  return awi_3d<double>(motion, y_prev, alpha).feats[0];
}

/// Independent evaluation of the interpolation formula with brute-force neighbours.
std::vector<double> awi_oracle(const SparseTensorD& motion, const SparseTensorD& prev, double alpha) {
  std::vector<double> out;
  for (size_t i = 0; i < motion.size(); ++i) {
    const double q[3] = {motion.coords[i].x + motion.row(i)[0], motion.coords[i].y + motion.row(i)[1],
                         motion.coords[i].z + motion.row(i)[2]};
    std::vector<std::pair<double, size_t>> d;
    for (size_t j = 0; j < prev.size(); ++j) {
      const double dx = q[0] - prev.coords[j].x, dy = q[1] - prev.coords[j].y, dz = q[2] - prev.coords[j].z;
      d.push_back({dx * dx + dy * dy + dz * dz, j});
    }
    std::sort(d.begin(), d.end());
    d.resize(std::min<size_t>(3, d.size()));
    double wsum = 0;
    std::vector<double> acc(static_cast<size_t>(prev.channels), 0.0);
    for (const auto& [dist, j] : d) {
      const double w = 1.0 / std::max(dist, kAwiEpsilon);
      wsum += w;
      for (int c = 0; c < prev.channels; ++c) acc[static_cast<size_t>(c)] += w * prev.row(j)[static_cast<size_t>(c)];
    }
    for (double a : acc) out.push_back(a / std::max(wsum, alpha));
  }
  return out;
}

struct AwiCase {
  SparseTensorD motion, prev;
};

AwiCase random_awi(Rng& rng, int channels) {
  AwiCase c;
  c.prev = SparseTensorD(2, channels, test::random_coords(rng, static_cast<size_t>(rng.range(3, 200)), 0, 12));
  for (auto& v : c.prev.feats) v = rng.uniform(-1, 1);
  c.motion = SparseTensorD(2, 3, test::random_coords(rng, static_cast<size_t>(rng.range(1, 100)), 0, 12));
  for (auto& v : c.motion.feats) v = rng.uniform(-2, 2);
  return c;
}

}  // namespace

TEST_CASE("three unit-distance neighbours at alpha 3 give the plain inverse-distance mean") {
  CHECK(at_origin({{0, 0, 1}, {0, 1, 0}, {1, 0, 0}}, {1, 2, 3}, 3.0) == 2.0);
}

TEST_CASE("weight sum below alpha shrinks the mean by sum over alpha") {
  CHECK(at_origin({{0, 1, 1}, {1, 0, 1}, {1, 1, 0}}, {1, 2, 3}, 3.0) == 1.0);
}

TEST_CASE("a coincident neighbour dominates") {
  const double v = at_origin({{0, 0, 0}, {0, 0, 1}, {0, 1, 0}}, {5, 1, 2}, 3.0);
  // (5e8 + 1 + 2) / (1e8 + 2)
  CHECK(v == doctest::Approx((5e8 + 3.0) / (1e8 + 2.0)).epsilon(1e-15));
  CHECK(std::abs(v - 5.0) < 1e-6);
}

TEST_CASE("far neighbours drive the prediction to zero") {
  double last = 1e300;
  for (int32_t r : {1000000, 10000000, 100000000}) {
    SparseTensorD motion(2, 3, {{0, 0, 0}});
    SparseTensorD prev(2, 2, {{0, 0, r}, {0, r, 0}, {r, 0, 0}}, {1, -1, 2, 5, 3, 0.5});
    const auto out = awi_3d<double>(motion, prev, kDefaultAlpha);
    const double norm = std::hypot(out.feats[0], out.feats[1]);
    CHECK(norm < 1e-3);
    CHECK(norm < last);
    last = norm;
  }
}

TEST_CASE("interpolation matches an independent brute-force evaluation") {
  Rng rng(701);
  for (int t = 0; t < 40; ++t) {
    const auto c = random_awi(rng, static_cast<int>(rng.range(1, 4)));
    const double alpha = rng.uniform(0.1, 4.0);
    const auto got = awi_3d<double>(c.motion, c.prev, alpha);
    const auto want = awi_oracle(c.motion, c.prev, alpha);
    CHECK(got.coords == c.motion.coords);
    for (size_t i = 0; i < want.size(); ++i) REQUIRE(got.feats[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("parallel interpolation equals the serial reference bit for bit") {
  Rng rng(702);
  for (int t = 0; t < 20; ++t) {
    const auto c = random_awi(rng, 4);
    const auto f_motion = c.motion.cast<float>();
    const auto f_prev = c.prev.cast<float>();
    CHECK(awi_3d<float>(f_motion, f_prev, 3.0).feats == reference::awi_3d_serial<float>(f_motion, f_prev, 3.0).feats);
  }
}

TEST_CASE("interpolation preconditions") {
  SparseTensorD motion(2, 3, {{0, 0, 0}});
  CHECK_THROWS_AS(awi_3d<double>(motion, SparseTensorD(2, 1, {}), 3.0), EmptyInputError);
  SparseTensorD prev(2, 1, {{0, 0, 0}}, {1});
  CHECK_THROWS_AS(awi_3d<double>(motion, prev, 0.0), ContractViolation);
  CHECK_THROWS_AS(awi_3d<double>(SparseTensorD(2, 2, {{0, 0, 0}}), prev, 3.0), ContractViolation);
}

TEST_CASE("feature gradient equals the normalized weights and scales by 1/alpha when shrinking") {
  SparseTensorD motion(2, 3, {{0, 0, 0}});
  SparseTensorD prev(2, 1, {{0, 0, 1}, {0, 1, 1}, {3, 0, 0}}, {1, 2, 3});
  const double w[3] = {1.0, 0.5, 1.0 / 9.0};
  const double s = w[0] + w[1] + w[2];
  const std::vector<double> g{1.0};
  const auto nb = awi_neighbors(motion, prev.coords);
  const auto normalized = awi_3d_backward<double>(motion, prev, 1.0, nb, g);
  const auto shrink = awi_3d_backward<double>(motion, prev, 4.0, nb, g);
  for (int j = 0; j < 3; ++j) {
    CHECK(normalized.grad_prev[static_cast<size_t>(j)] == doctest::Approx(w[j] / s));
    CHECK(shrink.grad_prev[static_cast<size_t>(j)] == doctest::Approx(w[j] / 4.0));
  }
}

TEST_CASE("motion gradient vanishes when all neighbour features are equal") {
  SparseTensorD motion(2, 3, {{0, 0, 0}}, {0.3, -0.2, 0.1});
  SparseTensorD prev(2, 2, {{0, 0, 1}, {0, 1, 1}, {1, 0, 0}}, {7, -1, 7, -1, 7, -1});
  const auto nb = awi_neighbors(motion, prev.coords);
  const auto g = awi_3d_backward<double>(motion, prev, 0.5, nb, std::vector<double>{1.0, 2.0});
  for (double v : g.grad_motion) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("motion lattice is the union and its two stride-downs") {
  const std::vector<Coord> prev{{0, 0, 0}, {5, 5, 5}};
  const std::vector<Coord> c2{{1, 1, 1}, {9, 0, 0}};
  const auto l = motion_lattice(prev, c2);
  CHECK(l.embed == std::vector<Coord>{{0, 0, 0}, {1, 1, 1}, {5, 5, 5}, {9, 0, 0}});
  CHECK(l.fused == std::vector<Coord>{{0, 0, 0}, {2, 2, 2}, {4, 0, 0}});
  CHECK(l.latent == std::vector<Coord>{{0, 0, 0}, {1, 1, 1}, {2, 0, 0}});
}

namespace {

struct Pair {
  Network net;
  SparseTensor y_prev, y_t;
};

Pair latent_pair(WeightProfile profile, double translation) {
  Pair p{Network::from_store(generate_weights(21, profile)), {}, {}};
  RigidSpec spec;
  spec.points = 2000;
  spec.translation = translation;
  spec.precision_bits = 6;
  const auto frames = rigid_sequence(spec);
  p.y_prev = feature_extract(frames[0], p.net.weights);
  p.y_t = feature_extract(frames[1], p.net.weights);
  return p;
}

}  // namespace

TEST_CASE("motion coding round trips and the decoder rebuilds the encoder prediction") {
  for (auto profile : {WeightProfile::kRandom, WeightProfile::kSurrogate}) {
    const auto p = latent_pair(profile, 2.0);
    const auto pred = predict(p.y_t, p.y_prev, p.net.motion_model, p.net.weights.motion, kDefaultAlpha);
    CHECK(pred.y_bar.coords == p.y_t.coords);
    CHECK(pred.motion.coords == p.y_t.coords);
    CHECK(range_decode(pred.coding.bytes, p.net.motion_model, pred.coding.symbols.size()) == pred.coding.symbols);
    const auto lattice = motion_lattice(p.y_prev.coords, p.y_t.coords);
    CHECK(pred.coding.latent.coords == lattice.latent);
    CHECK(synthesize_motion_embedding(pred.coding.symbols, lattice, p.net.weights.motion).feats ==
          pred.coding.e_hat.feats);
    const auto dec = predict_from_stream(pred.coding.bytes, p.y_t.coords, p.y_prev, p.net.motion_model,
                                         p.net.weights.motion, kDefaultAlpha);
    CHECK(dec.coords == pred.y_bar.coords);
    CHECK(dec.feats == pred.y_bar.feats);
    const double est = estimate_bits(pred.coding.symbols, p.net.motion_model);
    CHECK(std::abs(8.0 * static_cast<double>(pred.coding.bytes.size()) - est) <= 0.01 * est + 16.0);
  }
}

TEST_CASE("zero motion latent decodes to zero symbols") {
  auto ws = generate_weights(22, WeightProfile::kSurrogate);
  auto net = Network::from_store(ws);
  for (auto& v : net.weights.motion.enc.weight) v = 0;
  for (auto& v : net.weights.motion.enc.bias) v = 0;
  const auto p = latent_pair(WeightProfile::kSurrogate, 1.0);
  const auto e = mmf(flow_embed(p.y_t, p.y_prev, net.weights.motion), net.weights.motion);
  const auto coding = compress_motion(e.e_t, net.motion_model, net.weights.motion);
  CHECK(std::all_of(coding.symbols.begin(), coding.symbols.end(), [](int32_t s) { return s == 0; }));
  CHECK(range_decode(coding.bytes, net.motion_model, coding.symbols.size()) == coding.symbols);
}

TEST_CASE("motion reconstruction with zero weights is zero on exactly the target lattice") {
  auto net = Network::from_store(generate_weights(23, WeightProfile::kRandom));
  auto& m = net.weights.motion;
  for (auto* l : {&m.mmr_coarse_head, &m.mmr_up, &m.mmr_fine_head, &m.mmr_coarse_up}) {
    std::fill(l->weight.begin(), l->weight.end(), 0.0f);
    std::fill(l->bias.begin(), l->bias.end(), 0.0f);
  }
  SparseTensor e_hat(3, plan::kEmbed, {{0, 0, 0}, {1, 0, 0}});
  for (size_t i = 0; i < e_hat.feats.size(); ++i) e_hat.feats[i] = static_cast<float>(i % 7) - 3.0f;
  const std::vector<Coord> target{{0, 0, 1}, {1, 1, 1}, {3, 0, 0}};
  const auto out = mmr(e_hat, target, m);
  CHECK(out.coords == target);
  CHECK(out.channels == 3);
  CHECK(std::all_of(out.feats.begin(), out.feats.end(), [](float v) { return v == 0.0f; }));
}
