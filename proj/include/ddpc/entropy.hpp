// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ddpc/weights.hpp"

namespace ddpc {

inline constexpr uint32_t kCdfTotal = 1u << 16;

/// Factorized prior frozen into per-channel quantized CDF tables.
///
/// Channel i covers symbols [offset, offset + n) with an escape slot at
/// table index n. cdf has n + 2 entries from 0 to 65536; the probability of
/// table index k is (cdf[k+1] - cdf[k]) / 65536. Symbols outside the range
/// are coded as the escape slot followed by 32 raw bits (zig-zag signed).
class EntropyModel {
 public:
  struct Channel {
    int32_t offset = 0;
    std::vector<uint32_t> cdf;

    uint32_t symbols() const { return static_cast<uint32_t>(cdf.size() - 2); }
    uint32_t escape_freq() const { return cdf[cdf.size() - 1] - cdf[cdf.size() - 2]; }
  };

  EntropyModel() = default;
  explicit EntropyModel(std::vector<Channel> channels);

  size_t channel_count() const { return channels_.size(); }
  const Channel& channel(size_t i) const { return channels_[i]; }

  /// Probability of `symbol` under channel `c` (escape probability when out of range).
  double probability(size_t c, int32_t symbol) const;
  /// -log2 p, plus 32 raw bits for escaped symbols.
  double symbol_bits(size_t c, int32_t symbol) const;

  /// Stores "entropy.<stream>.cdf" [C, n+2] and "entropy.<stream>.offset" [C].
  void store(WeightStore& ws, const std::string& stream) const;
  static EntropyModel load(const WeightStore& ws, const std::string& stream);

  friend bool operator==(const EntropyModel& a, const EntropyModel& b) {
    if (a.channels_.size() != b.channels_.size()) return false;
    for (size_t i = 0; i < a.channels_.size(); ++i)
      if (a.channels_[i].offset != b.channels_[i].offset || a.channels_[i].cdf != b.channels_[i].cdf) return false;
    return true;
  }

 private:
  std::vector<Channel> channels_;
};

struct ChannelPmf {
  int32_t offset = 0;
  std::vector<double> pmf;  // in-range symbols offset, offset+1, ...
  double escape = 0.0;      // probability mass reserved for out-of-range symbols
};

/// Proportional 16-bit quantization with a floor of one count per in-range
/// symbol (and for the escape slot when its mass is non-zero), renormalized
/// to sum to 65536 by adjusting the largest entries.
EntropyModel build_table_from_pmf(std::span<const ChannelPmf> pmfs);

/// Two-sided geometric pmf p(s) proportional to decay^|s| over [-half_width, half_width].
/// Built with multiplications only so tables are identical on every platform.
ChannelPmf geometric_pmf(int32_t half_width, double decay, double escape);

/// Round half away from zero.
template <typename Real>
std::vector<int32_t> quantize(std::span<const Real> values);

/// Adds U(-0.5, 0.5) noise from a seeded generator (training-time quantization surrogate).
template <typename Real>
std::vector<Real> add_noise(std::span<const Real> values, uint64_t seed);

/// Sum of -log2 p over symbols; element i uses channel i % C.
double estimate_bits(std::span<const int32_t> symbols, const EntropyModel& model);

std::vector<uint8_t> range_encode(std::span<const int32_t> symbols, const EntropyModel& model);
/// Decodes exactly `count` symbols. Truncated or corrupted input throws DecodeError.
std::vector<int32_t> range_decode(std::span<const uint8_t> bytes, const EntropyModel& model, size_t count);

inline uint32_t zigzag(int32_t v) { return (static_cast<uint32_t>(v) << 1) ^ static_cast<uint32_t>(v >> 31); }
inline int32_t unzigzag(uint32_t v) { return static_cast<int32_t>(v >> 1) ^ -static_cast<int32_t>(v & 1); }

/// Rate proxy for noisy (continuous) symbols: the table CDF is linearly
/// interpolated between half-integer knots, and p(x) = F(x + 0.5) - F(x - 0.5).
struct NoisyRate {
  double bits = 0.0;      // -log2 p(x)
  double gradient = 0.0;  // d bits / d x
};
NoisyRate noisy_symbol_bits(const EntropyModel& model, size_t channel, double x);

}  // namespace ddpc
