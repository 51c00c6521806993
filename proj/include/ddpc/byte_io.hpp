// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ddpc/errors.hpp"

namespace ddpc {

template <typename T>
T load_le(const unsigned char* p) {
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
  return v;
}

/// Little-endian serializer, independent of host byte order.
class ByteWriter {
 public:
  void put_u8(uint8_t v) { buf_.push_back(v); }
  void put_u16(uint16_t v) { put_le(v); }
  void put_u32(uint32_t v) { put_le(v); }
  void put_u64(uint64_t v) { put_le(v); }
  void put_f32(float v) { put_le(std::bit_cast<uint32_t>(v)); }
  void put_bytes(std::span<const uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void put_string(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  const std::vector<uint8_t>& bytes() const { return buf_; }
  std::vector<uint8_t> take() { return std::move(buf_); }

 private:
  template <typename T>
  void put_le(T v) {
    for (size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  std::vector<uint8_t> buf_;
};

/// Bounds-checked little-endian reader; overruns throw DecodeError.
class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data, std::string context = "stream")
      : data_(data), context_(std::move(context)) {}

  uint8_t u8() { return need(1)[0]; }
  uint16_t u16() { return load_le<uint16_t>(need(2)); }
  uint32_t u32() { return load_le<uint32_t>(need(4)); }
  uint64_t u64() { return load_le<uint64_t>(need(8)); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::span<const uint8_t> bytes(size_t n) {
    const unsigned char* p = need(n);
    return {p, n};
  }
  std::string string(size_t n) {
    const unsigned char* p = need(n);
    return {reinterpret_cast<const char*>(p), n};
  }

  size_t offset() const { return pos_; }
  size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  const unsigned char* need(size_t n) {
    if (n > data_.size() - pos_)
      throw DecodeError(context_ + ": truncated at byte " + std::to_string(pos_) + " (need " + std::to_string(n) +
                        ", have " + std::to_string(data_.size() - pos_) + ")");
    const unsigned char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::span<const uint8_t> data_;
  std::string context_;
  size_t pos_ = 0;
};

}  // namespace ddpc
