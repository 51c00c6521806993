// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <map>
#include <set>

#include "ddpc/codec.hpp"
#include "ddpc/network.hpp"
#include "test_support.hpp"

using namespace ddpc;

TEST_CASE("layout names are unique and every tensor is generated with its shape") {
  const auto layout = network_layout();
  std::set<std::string> names;
  for (const auto& [name, spec] : layout) CHECK(names.insert(name).second);
  const auto ws = generate_weights(3, WeightProfile::kRandom);
  for (const auto& [name, spec] : layout) {
    const auto vol = static_cast<uint32_t>(spec.volume());
    CHECK_NOTHROW(ws.get(name + ".weight", {vol, static_cast<uint32_t>(spec.in_channels),
                                            static_cast<uint32_t>(spec.out_channels)}));
    CHECK_NOTHROW(ws.get(name + ".bias", {static_cast<uint32_t>(spec.out_channels)}));
  }
}

TEST_CASE("channel plan constants match the loaded layers") {
  const auto net = Network::from_store(generate_weights(4, WeightProfile::kSurrogate));
  const auto& w = net.weights;
  CHECK(w.fe0.conv.spec.out_channels == plan::kFeat1);
  CHECK(w.fe1.conv.spec.out_channels == plan::kLatent);
  CHECK(w.fe0.irn.size() == static_cast<size_t>(plan::kIrnBlocks));
  CHECK(w.motion.embed0.spec.in_channels == 2 * plan::kLatent);
  CHECK(w.motion.enc.spec.out_channels == plan::kEmbed);
  CHECK(w.motion.mmf_rn.size() == static_cast<size_t>(plan::kRnBlocks));
  CHECK(w.motion.mmr_fine_head.spec.out_channels == plan::kMotion);
  CHECK(w.residual.enc_out.spec.out_channels == plan::kResidualLatent);
  CHECK(w.recon1.up.conv.spec.out_channels == plan::kRecon1);
  CHECK(w.recon0.up.conv.spec.out_channels == plan::kRecon0);
  CHECK(net.motion_model.channel_count() == static_cast<size_t>(plan::kEmbed));
  CHECK(net.residual_model.channel_count() == static_cast<size_t>(plan::kResidualLatent));
}

TEST_CASE("weight generation is deterministic per seed and profile") {
  CHECK(generate_weights(9, WeightProfile::kRandom) == generate_weights(9, WeightProfile::kRandom));
  CHECK(!(generate_weights(9, WeightProfile::kRandom) == generate_weights(10, WeightProfile::kRandom)));
  CHECK(!(generate_weights(9, WeightProfile::kRandom) == generate_weights(9, WeightProfile::kSurrogate)));
  const auto ws = generate_weights(0x12345678u, WeightProfile::kSurrogate);
  CHECK(ws.get("meta.seed").values == std::vector<float>{0x1234, 0x5678});
  CHECK(ws.get("meta.profile").values == std::vector<float>{1});
}

TEST_CASE("weight stores round trip through files") {
  const auto dir = test::scratch_dir("weights");
  const auto ws = generate_weights(5, WeightProfile::kSurrogate);
  ws.save(dir / "w.bin");
  CHECK(WeightStore::load(dir / "w.bin") == ws);
}

TEST_CASE("stores with missing tensors or wrong table widths are rejected") {
  auto ws = generate_weights(6, WeightProfile::kRandom);
  WeightStore partial;
  for (const auto& [name, t] : ws.tensors())
    if (name != "motion.enc.bias") partial.put(name, t);
  CHECK_THROWS(Network::from_store(partial));
  const std::vector<ChannelPmf> eight(8, geometric_pmf(4, 0.5, 1e-3));
  build_table_from_pmf(eight).store(ws, "motion");
  CHECK_THROWS_AS(Network::from_store(ws), ParseError);
}

TEST_CASE("surrogate features count the input points of every scale-2 cell") {
  Rng rng(601);
  const auto frame = make_frame(test::random_coords(rng, 3000, 0, 63), 6);
  const auto net = Network::from_store(generate_weights(7, WeightProfile::kSurrogate));
  const auto y = feature_extract(frame, net.weights);
  CHECK(y.scale == 2);
  CHECK(y.coords == stride_down_coords(stride_down_coords(frame.coords())));
  std::map<Coord, int> count;
  for (const Coord& c : frame.coords()) ++count[Coord{c.x >> 2, c.y >> 2, c.z >> 2}];
  for (size_t i = 0; i < y.size(); ++i) REQUIRE(y.row(i)[0] == static_cast<float>(count[y.coords[i]]));
}

TEST_CASE("a single-point frame has a single-point latent") {
  const auto net = Network::from_store(generate_weights(8, WeightProfile::kRandom));
  const auto y = feature_extract(make_frame({{13, 2, 7}}, 5), net.weights);
  CHECK(y.coords == std::vector<Coord>{{3, 0, 1}});
  CHECK(y.channels == plan::kLatent);
}
