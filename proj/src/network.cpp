// SPDX-License-Identifier: Apache-2.0
#include "ddpc/network.hpp"

#include <algorithm>
#include <cmath>

#include "ddpc/rng.hpp"

namespace ddpc {

namespace {

using Layout = std::vector<std::pair<std::string, ConvSpec>>;

ConvSpec down(int in, int out) { return {in, out, 2, 2, false}; }
ConvSpec up(int in, int out) { return {in, out, 2, 2, true}; }
ConvSpec conv3(int in, int out) { return {in, out, 3, 1, false}; }
ConvSpec conv1(int in, int out) { return {in, out, 1, 1, false}; }

void add_irn(Layout& l, const std::string& prefix, int c) {
  for (int b = 0; b < plan::kIrnBlocks; ++b)
    for (const auto& [name, spec] : irn_layer_specs(c)) l.emplace_back(prefix + ".irn" + std::to_string(b) + "." + name, spec);
}

void add_rn(Layout& l, const std::string& prefix, int c) {
  for (int b = 0; b < plan::kRnBlocks; ++b)
    for (const auto& [name, spec] : rn_layer_specs(c)) l.emplace_back(prefix + ".rn" + std::to_string(b) + "." + name, spec);
}

template <typename Real>
DownBlockWeights<Real> load_down(const WeightStore& s, const std::string& prefix, int in, int out) {
  DownBlockWeights<Real> w;
  w.conv = load_conv<Real>(s, prefix + ".conv", down(in, out));
  for (int b = 0; b < plan::kIrnBlocks; ++b) w.irn.push_back(load_irn<Real>(s, prefix + ".irn" + std::to_string(b), out));
  return w;
}

template <typename Real>
UpBlockWeights<Real> load_up(const WeightStore& s, const std::string& prefix, int in, int out) {
  UpBlockWeights<Real> w;
  w.conv = load_conv<Real>(s, prefix + ".conv", up(in, out));
  for (int b = 0; b < plan::kIrnBlocks; ++b) w.irn.push_back(load_irn<Real>(s, prefix + ".irn" + std::to_string(b), out));
  return w;
}

template <typename Real>
std::vector<RnWeights<Real>> load_rns(const WeightStore& s, const std::string& prefix, int c) {
  std::vector<RnWeights<Real>> out;
  for (int b = 0; b < plan::kRnBlocks; ++b) out.push_back(load_rn<Real>(s, prefix + ".rn" + std::to_string(b), c));
  return out;
}

/// Layers on the feature, residual and reconstruction paths are set by hand in
/// the surrogate profile; everything else (motion estimation) is seeded.
bool structural(const std::string& name) {
  return name.rfind("fe.", 0) == 0 || name.rfind("residual.", 0) == 0 || name.rfind("recon.", 0) == 0;
}

void set(WeightStore& s, const std::string& layer, int offset, int in, int out, float v) {
  Tensor t = s.get(layer + ".weight");
  t.values[(static_cast<size_t>(offset) * t.dims[1] + static_cast<size_t>(in)) * t.dims[2] + static_cast<size_t>(out)] = v;
  s.put(layer + ".weight", std::move(t));
}

void set_bias(WeightStore& s, const std::string& layer, int out, float v) {
  Tensor t = s.get(layer + ".bias");
  t.values[static_cast<size_t>(out)] = v;
  s.put(layer + ".bias", std::move(t));
}

/// Count-coding network. Channel 0 of y holds the number of input points
/// inside each scale-2 voxel; the residual latent holds those counts for the
/// 8 children of each scale-3 voxel; the decoder adds a constant channel 1.
/// Reconstruction scores child i of a scale-2 voxel with count n as
/// n - 8i - 0.5 and grandchild k of that child as n - 8i - k - 0.5, so
/// top-k keeps exactly n points per scale-2 voxel and re-extracting
/// features from the decoded frame reproduces channel 0 of y.
void install_count_coder(WeightStore& s) {
  for (int o = 0; o < 8; ++o) {
    set(s, "fe.down0.conv", o, 0, 0, 1.0f);
    set(s, "fe.down1.conv", o, 0, 0, 1.0f);
    set(s, "residual.enc.down.conv", o, 0, o, 1.0f);
    set(s, "residual.dec.up.conv", o, o, 0, 1.0f);
    set(s, "recon.up1.conv", o, 0, 0, 1.0f);
    set(s, "recon.up1.conv", o, 1, 0, -8.0f * static_cast<float>(o));
    set(s, "recon.up1.conv", o, 1, 1, 1.0f);
    set(s, "recon.up0.conv", o, 0, 0, 1.0f);
    set(s, "recon.up0.conv", o, 1, 0, -static_cast<float>(o));
  }
  const auto offs = ConvSpec{plan::kLatent, plan::kResidualLatent, 3, 1, false}.offsets();
  const int center = static_cast<int>(std::find(offs.begin(), offs.end(), Coord{0, 0, 0}) - offs.begin());
  for (int j = 0; j < plan::kResidualLatent; ++j) set(s, "residual.enc.out", center, j, j, 1.0f);
  set_bias(s, "residual.dec.up.conv", 1, 1.0f);
  for (const char* cls : {"recon.up1.cls", "recon.up0.cls"}) {
    set(s, cls, 0, 0, 0, 1.0f);
    set_bias(s, cls, 0, -0.5f);
  }
}

}  // namespace

std::vector<std::pair<std::string, ConvSpec>> network_layout() {
  using namespace plan;
  Layout l;
  l.emplace_back("fe.down0.conv", down(1, kFeat1));
  add_irn(l, "fe.down0", kFeat1);
  l.emplace_back("fe.down1.conv", down(kFeat1, kLatent));
  add_irn(l, "fe.down1", kLatent);

  l.emplace_back("motion.embed.conv0", conv3(2 * kLatent, kEmbed));
  l.emplace_back("motion.embed.conv1", conv3(kEmbed, kEmbed));
  l.emplace_back("motion.mmf.down", down(kEmbed, kEmbed));
  add_rn(l, "motion.mmf", kEmbed);
  l.emplace_back("motion.mmf.up", up(kEmbed, kEmbed));
  l.emplace_back("motion.mmf.fine", down(kEmbed, kEmbed));
  l.emplace_back("motion.enc", down(kEmbed, kEmbed));
  l.emplace_back("motion.dec", up(kEmbed, kEmbed));
  add_rn(l, "motion.mmr", kEmbed);
  l.emplace_back("motion.mmr.coarse_head", conv1(kEmbed, kMotion));
  l.emplace_back("motion.mmr.up", up(kEmbed, kEmbed));
  l.emplace_back("motion.mmr.fine_head", conv1(kEmbed, kMotion));
  l.emplace_back("motion.mmr.coarse_up", up(kMotion, kMotion));

  l.emplace_back("residual.enc.down.conv", down(kLatent, kLatent));
  add_irn(l, "residual.enc.down", kLatent);
  l.emplace_back("residual.enc.out", conv3(kLatent, kResidualLatent));
  l.emplace_back("residual.dec.up.conv", up(kResidualLatent, kLatent));
  add_irn(l, "residual.dec.up", kLatent);

  l.emplace_back("recon.up1.conv", up(kLatent, kRecon1));
  add_irn(l, "recon.up1", kRecon1);
  l.emplace_back("recon.up1.cls", conv1(kRecon1, 1));
  l.emplace_back("recon.up0.conv", up(kRecon1, kRecon0));
  add_irn(l, "recon.up0", kRecon0);
  l.emplace_back("recon.up0.cls", conv1(kRecon0, 1));
  return l;
}

template <typename Real>
NetworkWeights<Real> load_network_weights(const WeightStore& s) {
  using namespace plan;
  NetworkWeights<Real> w;
  w.fe0 = load_down<Real>(s, "fe.down0", 1, kFeat1);
  w.fe1 = load_down<Real>(s, "fe.down1", kFeat1, kLatent);

  auto& m = w.motion;
  m.embed0 = load_conv<Real>(s, "motion.embed.conv0", conv3(2 * kLatent, kEmbed));
  m.embed1 = load_conv<Real>(s, "motion.embed.conv1", conv3(kEmbed, kEmbed));
  m.mmf_down = load_conv<Real>(s, "motion.mmf.down", down(kEmbed, kEmbed));
  m.mmf_rn = load_rns<Real>(s, "motion.mmf", kEmbed);
  m.mmf_up = load_conv<Real>(s, "motion.mmf.up", up(kEmbed, kEmbed));
  m.mmf_fine = load_conv<Real>(s, "motion.mmf.fine", down(kEmbed, kEmbed));
  m.enc = load_conv<Real>(s, "motion.enc", down(kEmbed, kEmbed));
  m.dec = load_conv<Real>(s, "motion.dec", up(kEmbed, kEmbed));
  m.mmr_rn = load_rns<Real>(s, "motion.mmr", kEmbed);
  m.mmr_coarse_head = load_conv<Real>(s, "motion.mmr.coarse_head", conv1(kEmbed, kMotion));
  m.mmr_up = load_conv<Real>(s, "motion.mmr.up", up(kEmbed, kEmbed));
  m.mmr_fine_head = load_conv<Real>(s, "motion.mmr.fine_head", conv1(kEmbed, kMotion));
  m.mmr_coarse_up = load_conv<Real>(s, "motion.mmr.coarse_up", up(kMotion, kMotion));

  w.residual.enc_down = load_down<Real>(s, "residual.enc.down", kLatent, kLatent);
  w.residual.enc_out = load_conv<Real>(s, "residual.enc.out", conv3(kLatent, kResidualLatent));
  w.residual.dec_up = load_up<Real>(s, "residual.dec.up", kResidualLatent, kLatent);

  w.recon1.up = load_up<Real>(s, "recon.up1", kLatent, kRecon1);
  w.recon1.cls = load_conv<Real>(s, "recon.up1.cls", conv1(kRecon1, 1));
  w.recon0.up = load_up<Real>(s, "recon.up0", kRecon1, kRecon0);
  w.recon0.cls = load_conv<Real>(s, "recon.up0.cls", conv1(kRecon0, 1));
  return w;
}

template NetworkWeights<float> load_network_weights(const WeightStore&);
template NetworkWeights<double> load_network_weights(const WeightStore&);

Network Network::from_store(const WeightStore& store) {
  Network n;
  n.weights = load_network_weights<float>(store);
  n.motion_model = EntropyModel::load(store, "motion");
  n.residual_model = EntropyModel::load(store, "residual");
  if (n.motion_model.channel_count() != static_cast<size_t>(plan::kEmbed))
    throw ParseError("entropy.motion must have " + std::to_string(plan::kEmbed) + " channels");
  if (n.residual_model.channel_count() != static_cast<size_t>(plan::kResidualLatent))
    throw ParseError("entropy.residual must have " + std::to_string(plan::kResidualLatent) + " channels");
  return n;
}

WeightStore generate_weights(uint64_t seed, WeightProfile profile) {
  Rng rng(seed);
  WeightStore store;
  const bool surrogate = profile == WeightProfile::kSurrogate;
  for (const auto& [name, spec] : network_layout()) {
    const size_t fan_in = static_cast<size_t>(spec.volume()) * static_cast<size_t>(spec.in_channels);
    const size_t n = fan_in * static_cast<size_t>(spec.out_channels);
    Tensor w{{static_cast<uint32_t>(spec.volume()), static_cast<uint32_t>(spec.in_channels),
              static_cast<uint32_t>(spec.out_channels)},
             std::vector<float>(n)};
    Tensor b{{static_cast<uint32_t>(spec.out_channels)}, std::vector<float>(static_cast<size_t>(spec.out_channels))};
    if (surrogate) {
      // Non-negative smooth motion features; the motion encoder is damped so its latent rounds to zero.
      const double gain = name == "motion.enc" ? 1e-4 : 1.0;
      if (!structural(name))
        for (float& v : w.values) v = static_cast<float>(rng.uniform(0.0, 2.0 * gain / static_cast<double>(fan_in)));
    } else {
      const double a = std::sqrt(3.0 / static_cast<double>(fan_in));
      for (float& v : w.values) v = static_cast<float>(rng.uniform(-a, a));
      for (float& v : b.values) v = static_cast<float>(rng.uniform(-0.05, 0.05));
    }
    store.put(name + ".weight", std::move(w));
    store.put(name + ".bias", std::move(b));
  }

  if (surrogate) install_count_coder(store);

  auto tables = [&](int channels, int32_t half_width, double decay, double escape) {
    std::vector<ChannelPmf> pmfs(static_cast<size_t>(channels), geometric_pmf(half_width, decay, escape));
    return build_table_from_pmf(pmfs);
  };
  if (surrogate) {
    tables(plan::kEmbed, 16, 1e-3, 1e-6).store(store, "motion");
    tables(plan::kResidualLatent, 64, 0.5, 1e-4).store(store, "residual");
  } else {
    tables(plan::kEmbed, 128, 0.9, 1e-3).store(store, "motion");
    tables(plan::kResidualLatent, 128, 0.9, 1e-3).store(store, "residual");
  }

  const auto low = static_cast<uint32_t>(seed);
  store.put("meta.seed", Tensor{{2}, {static_cast<float>(low >> 16), static_cast<float>(low & 0xFFFFu)}});
  store.put("meta.profile", Tensor{{1}, {static_cast<float>(profile)}});
  return store;
}

}  // namespace ddpc
