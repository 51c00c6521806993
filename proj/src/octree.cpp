// SPDX-License-Identifier: Apache-2.0
#include "ddpc/octree.hpp"

#include <algorithm>
#include <array>

#include "ddpc/byte_io.hpp"
#include "ddpc/range_coder.hpp"

namespace ddpc {

namespace {

uint64_t spread3(uint32_t v) {
  uint64_t x = v & 0x1FFFFFu;
  x = (x | x << 32) & 0x1F00000000FFFFull;
  x = (x | x << 16) & 0x1F0000FF0000FFull;
  x = (x | x << 8) & 0x100F00F00F00F00Full;
  x = (x | x << 4) & 0x10C30C30C30C30C3ull;
  x = (x | x << 2) & 0x1249249249249249ull;
  return x;
}

uint32_t compact3(uint64_t x) {
  x &= 0x1249249249249249ull;
  x = (x ^ (x >> 2)) & 0x10C30C30C30C30C3ull;
  x = (x ^ (x >> 4)) & 0x100F00F00F00F00Full;
  x = (x ^ (x >> 8)) & 0x1F0000FF0000FFull;
  x = (x ^ (x >> 16)) & 0x1F00000000FFFFull;
  x = (x ^ (x >> 32)) & 0x1FFFFFull;
  return static_cast<uint32_t>(x);
}

uint64_t morton(const Coord& c) {
  return spread3(static_cast<uint32_t>(c.x)) << 2 | spread3(static_cast<uint32_t>(c.y)) << 1 |
         spread3(static_cast<uint32_t>(c.z));
}

Coord demorton(uint64_t m) { return {int32_t(compact3(m >> 2)), int32_t(compact3(m >> 1)), int32_t(compact3(m))}; }

/// Adaptive frequency model over bytes.
class AdaptiveByteModel {
 public:
  AdaptiveByteModel() { freq_.fill(1); }

  uint32_t total() const { return total_; }
  uint32_t cum(int sym) const {
    uint32_t c = 0;
    for (int s = 0; s < sym; ++s) c += freq_[static_cast<size_t>(s)];
    return c;
  }
  uint32_t freq(int sym) const { return freq_[static_cast<size_t>(sym)]; }
  int find(uint32_t target, uint32_t& cum_out) const {
    uint32_t c = 0;
    for (int s = 0; s < 256; ++s) {
      if (target < c + freq_[static_cast<size_t>(s)]) {
        cum_out = c;
        return s;
      }
      c += freq_[static_cast<size_t>(s)];
    }
    throw DecodeError("octree: adaptive model target out of range");
  }
  void update(int sym) {
    freq_[static_cast<size_t>(sym)] += kIncrement;
    total_ += kIncrement;
    if (total_ > kLimit) {
      total_ = 0;
      for (auto& f : freq_) {
        f = (f + 1) / 2;
        total_ += f;
      }
    }
  }

 private:
  static constexpr uint32_t kIncrement = 32;
  static constexpr uint32_t kLimit = 1u << 16;
  std::array<uint32_t, 256> freq_{};
  uint32_t total_ = 256;
};

std::vector<uint8_t> wrap_range(std::span<const uint8_t> raw) {
  RangeEncoder enc;
  AdaptiveByteModel model;
  for (uint8_t b : raw) {
    enc.encode(model.cum(b), model.freq(b), model.total());
    model.update(b);
  }
  return enc.finish();
}

/// Produces occupancy bytes on demand from a raw or range-coded payload.
class OccupancySource {
 public:
  explicit OccupancySource(const OctreeStream& s) : stream_(s), dec_(s.payload) {}

  uint8_t next() {
    if (!stream_.range_coded()) {
      if (pos_ >= stream_.payload.size()) throw DecodeError("octree: payload truncated");
      return stream_.payload[pos_++];
    }
    uint32_t cum = 0;
    const int sym = model_.find(dec_.target(model_.total()), cum);
    dec_.consume(cum, model_.freq(sym), model_.total());
    model_.update(sym);
    if (dec_.overread() > 4) throw DecodeError("octree: payload truncated");
    decoded_.push_back(static_cast<uint8_t>(sym));
    return static_cast<uint8_t>(sym);
  }

  void finish() const {
    if (!stream_.range_coded()) {
      if (pos_ != stream_.payload.size()) throw DecodeError("octree: trailing payload bytes");
      return;
    }
    if (wrap_range(decoded_) != stream_.payload) throw DecodeError("octree: range-coded payload is inconsistent");
  }

 private:
  const OctreeStream& stream_;
  RangeDecoder dec_;
  AdaptiveByteModel model_;
  size_t pos_ = 0;
  std::vector<uint8_t> decoded_;
};

}  // namespace

int octree_depth_for(std::span<const Coord> coords) {
  int32_t hi = 0;
  for (const Coord& c : coords) hi = std::max({hi, c.x, c.y, c.z});
  int d = 1;
  while (d < kMaxPrecisionBits && (int64_t{1} << d) <= hi) ++d;
  return d;
}

std::vector<uint8_t> octree_occupancy(std::span<const Coord> coords, int depth) {
  if (coords.empty()) throw EmptyInputError("octree: cannot encode an empty coordinate set");
  require(depth >= 0 && depth <= kMaxPrecisionBits, "octree: depth must be in [0, 21]");
  const int64_t side = int64_t{1} << depth;
  std::vector<uint64_t> codes;
  codes.reserve(coords.size());
  for (const Coord& c : coords) {
    if (c.x < 0 || c.y < 0 || c.z < 0 || c.x >= side || c.y >= side || c.z >= side)
      throw ContractViolation("octree: coordinate outside the 2^" + std::to_string(depth) + " cube");
    codes.push_back(morton(c));
  }
  std::sort(codes.begin(), codes.end());
  codes.erase(std::unique(codes.begin(), codes.end()), codes.end());

  // Morton order is breadth-first order within every level.
  std::vector<uint8_t> out;
  for (int level = 0; level < depth; ++level) {
    const int shift_node = 3 * (depth - level);
    const int shift_child = shift_node - 3;
    size_t i = 0;
    while (i < codes.size()) {
      const uint64_t node = codes[i] >> shift_node;
      uint8_t byte = 0;
      while (i < codes.size() && (codes[i] >> shift_node) == node) {
        byte |= static_cast<uint8_t>(0x80u >> ((codes[i] >> shift_child) & 7));
        ++i;
      }
      out.push_back(byte);
    }
  }
  return out;
}

OctreeStream octree_encode(std::span<const Coord> coords, int depth, bool range_coded) {
  OctreeStream s;
  s.depth = static_cast<uint8_t>(depth);
  auto raw = octree_occupancy(coords, depth);
  std::vector<Coord> uniq(coords.begin(), coords.end());
  sort_unique(uniq);
  s.point_count = static_cast<uint32_t>(uniq.size());
  if (range_coded) {
    s.flags = OctreeStream::kRangeCoded;
    s.payload = wrap_range(raw);
  } else {
    s.payload = std::move(raw);
  }
  return s;
}

std::vector<Coord> octree_decode(const OctreeStream& stream) {
  if (stream.depth > kMaxPrecisionBits) throw DecodeError("octree: depth exceeds 21");
  if (stream.point_count == 0) throw DecodeError("octree: empty coordinate set is not a valid stream");
  if ((stream.flags & ~OctreeStream::kRangeCoded) != 0) throw DecodeError("octree: unknown flag bits");
  OccupancySource src(stream);
  std::vector<uint64_t> nodes{0};
  std::vector<uint64_t> next;
  for (int level = 0; level < stream.depth; ++level) {
    next.clear();
    for (uint64_t n : nodes) {
      const uint8_t byte = src.next();
      if (byte == 0) throw DecodeError("octree: empty occupancy byte at level " + std::to_string(level));
      for (int b = 0; b < 8; ++b)
        if (byte & (0x80u >> b)) next.push_back(n << 3 | static_cast<uint64_t>(b));
      if (next.size() > stream.point_count)
        throw DecodeError("octree: more occupied nodes than the declared point count");
    }
    nodes.swap(next);
  }
  src.finish();
  if (nodes.size() != stream.point_count)
    throw DecodeError("octree: decoded " + std::to_string(nodes.size()) + " points, header says " +
                      std::to_string(stream.point_count));
  std::vector<Coord> out;
  out.reserve(nodes.size());
  for (uint64_t m : nodes) out.push_back(demorton(m));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<uint8_t> OctreeStream::serialize() const {
  ByteWriter w;
  w.put_u8(depth);
  w.put_u8(flags);
  w.put_u32(point_count);
  w.put_bytes(payload);
  return w.take();
}

OctreeStream OctreeStream::parse(std::span<const uint8_t> bytes) {
  ByteReader r(bytes, "octree substream");
  OctreeStream s;
  s.depth = r.u8();
  s.flags = r.u8();
  s.point_count = r.u32();
  const auto rest = r.bytes(r.remaining());
  s.payload.assign(rest.begin(), rest.end());
  return s;
}

}  // namespace ddpc
