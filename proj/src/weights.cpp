// SPDX-License-Identifier: Apache-2.0
#include "ddpc/weights.hpp"

#include <fstream>
#include <iterator>

#include "ddpc/byte_io.hpp"

namespace ddpc {

size_t Tensor::numel() const {
  size_t n = 1;
  for (uint32_t d : dims) n *= d;
  return n;
}

void WeightStore::put(const std::string& name, Tensor t) {
  require(!name.empty() && name.size() < 65536, "weight name length out of range");
  require(t.dims.size() < 256, "weight rank out of range");
  require(t.numel() == t.values.size(), "weight '" + name + "': value count does not match dims");
  tensors_[name] = std::move(t);
}

const Tensor& WeightStore::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ParseError("weights: missing tensor '" + name + "'");
  return it->second;
}

const Tensor& WeightStore::get(const std::string& name, const std::vector<uint32_t>& dims) const {
  const Tensor& t = get(name);
  if (t.dims != dims) {
    auto fmt = [](const std::vector<uint32_t>& d) {
      std::string s = "[";
      for (size_t i = 0; i < d.size(); ++i) s += (i ? "," : "") + std::to_string(d[i]);
      return s + "]";
    };
    throw ParseError("weights: tensor '" + name + "' has dims " + fmt(t.dims) + ", expected " + fmt(dims));
  }
  return t;
}

std::vector<uint8_t> WeightStore::serialize() const {
  ByteWriter w;
  w.put_string("DPCW");
  w.put_u32(kVersion);
  w.put_u32(static_cast<uint32_t>(tensors_.size()));
  for (const auto& [name, t] : tensors_) {
    w.put_u16(static_cast<uint16_t>(name.size()));
    w.put_string(name);
    w.put_u8(static_cast<uint8_t>(t.dims.size()));
    for (uint32_t d : t.dims) w.put_u32(d);
    for (float v : t.values) w.put_f32(v);
  }
  return w.take();
}

WeightStore WeightStore::deserialize(std::span<const uint8_t> bytes) {
  ByteReader r(bytes, "weight file");
  if (r.string(4) != "DPCW") throw ParseError("weight file: bad magic");
  const uint32_t version = r.u32();
  if (version != kVersion) throw ParseError("weight file: unsupported version " + std::to_string(version));
  const uint32_t count = r.u32();
  WeightStore store;
  try {
    for (uint32_t k = 0; k < count; ++k) {
      const uint16_t len = r.u16();
      std::string name = r.string(len);
      Tensor t;
      t.dims.resize(r.u8());
      for (auto& d : t.dims) d = r.u32();
      const size_t n = t.numel();
      if (n > r.remaining() / 4) throw ParseError("weight file: tensor '" + name + "' overruns the file");
      t.values.resize(n);
      for (auto& v : t.values) v = r.f32();
      if (store.contains(name)) throw ParseError("weight file: duplicate tensor '" + name + "'");
      store.put(name, std::move(t));
    }
  } catch (const DecodeError& e) {
    throw ParseError(e.what());
  }
  if (!r.at_end()) throw ParseError("weight file: trailing bytes after last tensor");
  return store;
}

void WeightStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  const auto bytes = serialize();
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

WeightStore WeightStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open weight file");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

template <typename Real>
ConvLayer<Real> load_conv(const WeightStore& store, const std::string& prefix, const ConvSpec& spec) {
  spec.validate();
  const auto& w = store.get(prefix + ".weight", {static_cast<uint32_t>(spec.volume()),
                                                static_cast<uint32_t>(spec.in_channels),
                                                static_cast<uint32_t>(spec.out_channels)});
  const auto& b = store.get(prefix + ".bias", {static_cast<uint32_t>(spec.out_channels)});
  return {spec, std::vector<Real>(w.values.begin(), w.values.end()), std::vector<Real>(b.values.begin(), b.values.end())};
}

std::vector<std::pair<std::string, ConvSpec>> irn_layer_specs(int c) {
  require(c % 4 == 0, "irn: channel count must be divisible by 4");
  return {{"b0a", {c, c / 4, 1, 1, false}},
          {"b0b", {c / 4, c / 4, 3, 1, false}},
          {"b1a", {c, c / 4, 3, 1, false}},
          {"b1b", {c / 4, c / 4, 3, 1, false}},
          {"b2", {c, c / 2, 1, 1, false}}};
}

std::vector<std::pair<std::string, ConvSpec>> rn_layer_specs(int c) {
  return {{"conv0", {c, c, 3, 1, false}}, {"conv1", {c, c, 3, 1, false}}};
}

template <typename Real>
IrnWeights<Real> load_irn(const WeightStore& store, const std::string& prefix, int channels) {
  const auto specs = irn_layer_specs(channels);
  auto layer = [&](size_t i) { return load_conv<Real>(store, prefix + "." + specs[i].first, specs[i].second); };
  return {layer(0), layer(1), layer(2), layer(3), layer(4)};
}

template <typename Real>
RnWeights<Real> load_rn(const WeightStore& store, const std::string& prefix, int channels) {
  const auto specs = rn_layer_specs(channels);
  return {load_conv<Real>(store, prefix + ".conv0", specs[0].second),
          load_conv<Real>(store, prefix + ".conv1", specs[1].second)};
}

template ConvLayer<float> load_conv(const WeightStore&, const std::string&, const ConvSpec&);
template ConvLayer<double> load_conv(const WeightStore&, const std::string&, const ConvSpec&);
template IrnWeights<float> load_irn(const WeightStore&, const std::string&, int);
template IrnWeights<double> load_irn(const WeightStore&, const std::string&, int);
template RnWeights<float> load_rn(const WeightStore&, const std::string&, int);
template RnWeights<double> load_rn(const WeightStore&, const std::string&, int);

}  // namespace ddpc
