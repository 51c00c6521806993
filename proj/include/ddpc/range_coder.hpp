// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ddpc {

/// 32-bit renormalizing range coder.
///
/// A symbol with cumulative frequency `cum`, frequency `freq` and table total
/// `total` (<= 2^16) maps the current range R to
/// [floor(R*cum/total), floor(R*(cum+freq)/total)), computed with 64-bit
/// products, so the partition of R is exact. Renormalization emits one byte
/// whenever R < 2^24; carries propagate back into the emitted bytes. The
/// flush emits the fewest bytes that pin a value inside the final interval
/// and trailing zero bytes are dropped (the decoder reads zeros past the end).
class RangeEncoder {
 public:
  void encode(uint32_t cum, uint32_t freq, uint32_t total);
  /// Encodes `bits` (<= 16) raw bits.
  void encode_bits(uint32_t value, int bits);
  std::vector<uint8_t> finish();

 private:
  void propagate_carry();
  void shift_byte();

  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> data);

  /// Target value in [0, total); throws DecodeError when the stream is inconsistent.
  uint32_t target(uint32_t total) const;
  void consume(uint32_t cum, uint32_t freq, uint32_t total);
  uint32_t decode_bits(int bits);

  /// Bytes read beyond the end of the input (implicit zero padding).
  size_t overread() const { return pos_ > data_.size() ? pos_ - data_.size() : 0; }

 private:
  uint8_t next_byte();

  std::span<const uint8_t> data_;
  size_t pos_ = 0;
  uint32_t code_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
};

}  // namespace ddpc
