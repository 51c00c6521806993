// SPDX-License-Identifier: Apache-2.0
#include "ddpc/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ddpc/range_coder.hpp"
#include "ddpc/rng.hpp"

namespace ddpc {

EntropyModel::EntropyModel(std::vector<Channel> channels) : channels_(std::move(channels)) {
  for (const auto& ch : channels_) {
    require(ch.cdf.size() >= 3, "entropy model: a channel needs at least one symbol");
    require(ch.cdf.front() == 0 && ch.cdf.back() == kCdfTotal, "entropy model: cdf must run from 0 to 65536");
    for (size_t k = 0; k + 2 < ch.cdf.size(); ++k)
      require(ch.cdf[k + 1] > ch.cdf[k], "entropy model: every in-range symbol needs probability >= 1/65536");
    require(ch.cdf[ch.cdf.size() - 1] >= ch.cdf[ch.cdf.size() - 2], "entropy model: cdf must be monotone");
  }
}

double EntropyModel::probability(size_t c, int32_t symbol) const {
  const Channel& ch = channels_[c];
  const int64_t k = int64_t{symbol} - ch.offset;
  if (k >= 0 && k < ch.symbols())
    return static_cast<double>(ch.cdf[static_cast<size_t>(k) + 1] - ch.cdf[static_cast<size_t>(k)]) / kCdfTotal;
  return static_cast<double>(ch.escape_freq()) / kCdfTotal;
}

double EntropyModel::symbol_bits(size_t c, int32_t symbol) const {
  const Channel& ch = channels_[c];
  const int64_t k = int64_t{symbol} - ch.offset;
  const double p = probability(c, symbol);
  if (p == 0.0) return std::numeric_limits<double>::infinity();
  const double bits = -std::log2(p);
  return (k >= 0 && k < ch.symbols()) ? bits : bits + 32.0;
}

void EntropyModel::store(WeightStore& ws, const std::string& stream) const {
  require(!channels_.empty(), "entropy model: nothing to store");
  const size_t width = channels_[0].cdf.size();
  Tensor cdf{{static_cast<uint32_t>(channels_.size()), static_cast<uint32_t>(width)}, {}};
  Tensor off{{static_cast<uint32_t>(channels_.size())}, {}};
  for (const auto& ch : channels_) {
    require(ch.cdf.size() == width, "entropy model: stored channels must share a table width");
    for (uint32_t v : ch.cdf) cdf.values.push_back(static_cast<float>(v));
    off.values.push_back(static_cast<float>(ch.offset));
  }
  ws.put("entropy." + stream + ".cdf", std::move(cdf));
  ws.put("entropy." + stream + ".offset", std::move(off));
}

EntropyModel EntropyModel::load(const WeightStore& ws, const std::string& stream) {
  const Tensor& cdf = ws.get("entropy." + stream + ".cdf");
  if (cdf.dims.size() != 2) throw ParseError("entropy." + stream + ".cdf must be rank 2");
  const Tensor& off = ws.get("entropy." + stream + ".offset", {cdf.dims[0]});
  std::vector<Channel> chans(cdf.dims[0]);
  for (size_t c = 0; c < chans.size(); ++c) {
    chans[c].offset = static_cast<int32_t>(off.values[c]);
    for (size_t k = 0; k < cdf.dims[1]; ++k) {
      const float v = cdf.values[c * cdf.dims[1] + k];
      if (!(v >= 0.0f && v <= static_cast<float>(kCdfTotal)) || v != std::floor(v))
        throw ParseError("entropy." + stream + ".cdf holds a non-integer entry");
      chans[c].cdf.push_back(static_cast<uint32_t>(v));
    }
  }
  try {
    return EntropyModel(std::move(chans));
  } catch (const ContractViolation& e) {
    throw ParseError(std::string("entropy.") + stream + ": " + e.what());
  }
}

EntropyModel build_table_from_pmf(std::span<const ChannelPmf> pmfs) {
  std::vector<EntropyModel::Channel> chans;
  for (const ChannelPmf& in : pmfs) {
    if (in.pmf.empty()) throw EmptyInputError("build_table_from_pmf: empty pmf");
    require(in.pmf.size() + 1 < kCdfTotal, "build_table_from_pmf: too many symbols for 16-bit tables");
    double total = in.escape;
    for (double p : in.pmf) {
      require(p >= 0.0 && std::isfinite(p), "build_table_from_pmf: probabilities must be finite and >= 0");
      total += p;
    }
    require(total > 0.0, "build_table_from_pmf: pmf has no mass");
    const size_t n = in.pmf.size();
    std::vector<int64_t> freq(n + 1);
    for (size_t k = 0; k < n; ++k)
      freq[k] = std::max<int64_t>(1, std::llround(in.pmf[k] / total * kCdfTotal));
    freq[n] = in.escape > 0.0 ? std::max<int64_t>(1, std::llround(in.escape / total * kCdfTotal)) : 0;
    int64_t diff = kCdfTotal;
    for (int64_t f : freq) diff -= f;
    while (diff != 0) {
      const size_t big = static_cast<size_t>(std::max_element(freq.begin(), freq.end()) - freq.begin());
      if (diff > 0) {
        freq[big] += diff;
        diff = 0;
      } else {
        const int64_t take = std::min(-diff, freq[big] - 1);
        require(take > 0, "build_table_from_pmf: cannot renormalize");
        freq[big] -= take;
        diff += take;
      }
    }
    EntropyModel::Channel ch;
    ch.offset = in.offset;
    ch.cdf.push_back(0);
    for (int64_t f : freq) ch.cdf.push_back(ch.cdf.back() + static_cast<uint32_t>(f));
    chans.push_back(std::move(ch));
  }
  return EntropyModel(std::move(chans));
}

ChannelPmf geometric_pmf(int32_t half_width, double decay, double escape) {
  require(half_width >= 0 && decay > 0.0 && decay < 1.0, "geometric_pmf: bad parameters");
  ChannelPmf p;
  p.offset = -half_width;
  p.escape = escape;
  std::vector<double> side(static_cast<size_t>(half_width) + 1);
  side[0] = 1.0;
  for (size_t k = 1; k < side.size(); ++k) side[k] = side[k - 1] * decay;
  for (int32_t s = -half_width; s <= half_width; ++s) p.pmf.push_back(side[static_cast<size_t>(std::abs(s))]);
  return p;
}

template <typename Real>
std::vector<int32_t> quantize(std::span<const Real> values) {
  std::vector<int32_t> out(values.size());
  constexpr double lim = 2147483647.0;
  for (size_t i = 0; i < values.size(); ++i) {
    const double v = std::round(static_cast<double>(values[i]));
    out[i] = std::isnan(v) ? 0 : static_cast<int32_t>(std::clamp(v, -lim, lim));
  }
  return out;
}

template <typename Real>
std::vector<Real> add_noise(std::span<const Real> values, uint64_t seed) {
  Rng rng(seed);
  std::vector<Real> out(values.begin(), values.end());
  for (Real& v : out) v += static_cast<Real>(rng.uniform01() - 0.5);
  return out;
}

template std::vector<int32_t> quantize(std::span<const float>);
template std::vector<int32_t> quantize(std::span<const double>);
template std::vector<float> add_noise(std::span<const float>, uint64_t);
template std::vector<double> add_noise(std::span<const double>, uint64_t);

double estimate_bits(std::span<const int32_t> symbols, const EntropyModel& model) {
  require(model.channel_count() > 0 || symbols.empty(), "estimate_bits: model has no channels");
  double bits = 0.0;
  const size_t c = model.channel_count();
  for (size_t i = 0; i < symbols.size(); ++i) bits += model.symbol_bits(i % c, symbols[i]);
  return bits;
}

std::vector<uint8_t> range_encode(std::span<const int32_t> symbols, const EntropyModel& model) {
  require(model.channel_count() > 0 || symbols.empty(), "range_encode: model has no channels");
  RangeEncoder enc;
  const size_t c = model.channel_count();
  for (size_t i = 0; i < symbols.size(); ++i) {
    const auto& ch = model.channel(i % c);
    const int64_t k = int64_t{symbols[i]} - ch.offset;
    if (k >= 0 && k < ch.symbols()) {
      const auto kk = static_cast<size_t>(k);
      enc.encode(ch.cdf[kk], ch.cdf[kk + 1] - ch.cdf[kk], kCdfTotal);
      continue;
    }
    const size_t esc = ch.symbols();
    if (ch.escape_freq() == 0)
      throw ContractViolation("range_encode: symbol " + std::to_string(symbols[i]) +
                              " is outside the table and the model reserves no escape mass");
    enc.encode(ch.cdf[esc], ch.escape_freq(), kCdfTotal);
    const uint32_t z = zigzag(symbols[i]);
    enc.encode_bits(z >> 16, 16);
    enc.encode_bits(z & 0xFFFFu, 16);
  }
  return enc.finish();
}

std::vector<int32_t> range_decode(std::span<const uint8_t> bytes, const EntropyModel& model, size_t count) {
  require(model.channel_count() > 0 || count == 0, "range_decode: model has no channels");
  RangeDecoder dec(bytes);
  std::vector<int32_t> out(count);
  const size_t c = model.channel_count();
  for (size_t i = 0; i < count; ++i) {
    const auto& ch = model.channel(i % c);
    const uint32_t v = dec.target(kCdfTotal);
    const auto it = std::upper_bound(ch.cdf.begin(), ch.cdf.end(), v);
    const auto k = static_cast<size_t>(it - ch.cdf.begin()) - 1;
    dec.consume(ch.cdf[k], ch.cdf[k + 1] - ch.cdf[k], kCdfTotal);
    if (k < ch.symbols()) {
      out[i] = ch.offset + static_cast<int32_t>(k);
    } else {
      const uint32_t hi = dec.decode_bits(16);
      const uint32_t lo = dec.decode_bits(16);
      out[i] = unzigzag((hi << 16) | lo);
    }
    if (dec.overread() > 4) throw DecodeError("range_decode: stream truncated");
  }
  // The encoder is deterministic, so a valid stream is exactly its re-encoding.
  const auto check = range_encode(out, model);
  if (check.size() != bytes.size() || !std::equal(check.begin(), check.end(), bytes.begin()))
    throw DecodeError("range_decode: stream is truncated or does not match the model");
  return out;
}

NoisyRate noisy_symbol_bits(const EntropyModel& model, size_t channel, double x) {
  const auto& ch = model.channel(channel);
  const double n = ch.symbols();
  // Knot k sits at offset - 0.5 + k with value cdf[k] / 65536, for k = 0..n.
  auto eval = [&](double t, double& slope) {
    const double u = t - (ch.offset - 0.5);
    if (u <= 0.0) {
      slope = 0.0;
      return 0.0;
    }
    if (u >= n) {
      slope = 0.0;
      return static_cast<double>(ch.cdf[static_cast<size_t>(n)]) / kCdfTotal;
    }
    const auto k = static_cast<size_t>(std::floor(u));
    const double lo = static_cast<double>(ch.cdf[k]) / kCdfTotal;
    const double hi = static_cast<double>(ch.cdf[k + 1]) / kCdfTotal;
    slope = hi - lo;
    return lo + (u - static_cast<double>(k)) * slope;
  };
  double s_hi = 0.0, s_lo = 0.0;
  const double p = eval(x + 0.5, s_hi) - eval(x - 0.5, s_lo);
  constexpr double floor_p = 1.0 / kCdfTotal;
  NoisyRate r;
  if (p <= floor_p) {
    r.bits = -std::log2(floor_p);
    return r;
  }
  r.bits = -std::log2(p);
  r.gradient = -(s_hi - s_lo) / (p * std::log(2.0));
  return r;
}

}  // namespace ddpc
