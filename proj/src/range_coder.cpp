// SPDX-License-Identifier: Apache-2.0
#include "ddpc/range_coder.hpp"

#include "ddpc/errors.hpp"

namespace ddpc {

namespace {
constexpr uint32_t kTop = 1u << 24;
constexpr uint64_t kCarry = uint64_t{1} << 32;
}  // namespace

void RangeEncoder::propagate_carry() {
  size_t i = out_.size();
  while (i > 0 && out_[i - 1] == 0xFF) out_[--i] = 0;
  if (i == 0) throw std::logic_error("range coder: carry out of the leading byte");
  ++out_[i - 1];
}

void RangeEncoder::shift_byte() {
  out_.push_back(static_cast<uint8_t>(low_ >> 24));
  low_ = (low_ << 8) & 0xFFFFFFFFu;
  range_ <<= 8;
}

void RangeEncoder::encode(uint32_t cum, uint32_t freq, uint32_t total) {
  require(total >= 1 && total <= (1u << 16), "range coder: total must be in [1, 65536]");
  require(freq >= 1 && cum + freq <= total, "range coder: empty or out-of-range symbol interval");
  const uint64_t r = range_;
  const uint64_t lo = r * cum / total;
  const uint64_t hi = r * (cum + freq) / total;
  low_ += lo;
  range_ = static_cast<uint32_t>(hi - lo);
  if (low_ >= kCarry) {
    propagate_carry();
    low_ -= kCarry;
  }
  while (range_ < kTop) shift_byte();
}

void RangeEncoder::encode_bits(uint32_t value, int bits) {
  require(bits >= 1 && bits <= 16, "range coder: raw chunk must be 1..16 bits");
  encode(value & ((1u << bits) - 1), 1, 1u << bits);
}

std::vector<uint8_t> RangeEncoder::finish() {
  const uint64_t hi = low_ + range_;
  for (int n = 0; n <= 4; ++n) {
    const uint64_t mask = (uint64_t{1} << (32 - 8 * n)) - 1;
    uint64_t v = (low_ + mask) & ~mask;
    if (v >= hi) continue;
    if (v >= kCarry) {
      propagate_carry();
      v -= kCarry;
    }
    for (int b = 0; b < n; ++b) out_.push_back(static_cast<uint8_t>(v >> (24 - 8 * b)));
    break;
  }
  while (!out_.empty() && out_.back() == 0) out_.pop_back();
  low_ = 0;
  range_ = 0xFFFFFFFFu;
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> data) : data_(data) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
  const uint8_t b = pos_ < data_.size() ? data_[pos_] : 0;
  ++pos_;
  return b;
}

uint32_t RangeDecoder::target(uint32_t total) const {
  if (code_ >= range_) throw DecodeError("range decoder: code outside the current interval");
  const uint64_t v = ((uint64_t{code_} + 1) * total - 1) / range_;
  if (v >= total) throw DecodeError("range decoder: target outside the table");
  return static_cast<uint32_t>(v);
}

void RangeDecoder::consume(uint32_t cum, uint32_t freq, uint32_t total) {
  const uint64_t r = range_;
  const uint64_t lo = r * cum / total;
  const uint64_t hi = r * (cum + freq) / total;
  code_ -= static_cast<uint32_t>(lo);
  range_ = static_cast<uint32_t>(hi - lo);
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
}

uint32_t RangeDecoder::decode_bits(int bits) {
  const uint32_t total = 1u << bits;
  const uint32_t v = target(total);
  consume(v, 1, total);
  return v;
}

}  // namespace ddpc
