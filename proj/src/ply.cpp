// SPDX-License-Identifier: Apache-2.0
#include "ddpc/ply.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "ddpc/byte_io.hpp"

namespace ddpc {

namespace {

enum class PlyType { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat32, kFloat64 };

std::optional<PlyType> parse_type(const std::string& t) {
  if (t == "char" || t == "int8") return PlyType::kInt8;
  if (t == "uchar" || t == "uint8") return PlyType::kUInt8;
  if (t == "short" || t == "int16") return PlyType::kInt16;
  if (t == "ushort" || t == "uint16") return PlyType::kUInt16;
  if (t == "int" || t == "int32") return PlyType::kInt32;
  if (t == "uint" || t == "uint32") return PlyType::kUInt32;
  if (t == "float" || t == "float32") return PlyType::kFloat32;
  if (t == "double" || t == "float64") return PlyType::kFloat64;
  return std::nullopt;
}

size_t type_size(PlyType t) {
  switch (t) {
    case PlyType::kInt8:
    case PlyType::kUInt8:
      return 1;
    case PlyType::kInt16:
    case PlyType::kUInt16:
      return 2;
    case PlyType::kInt32:
    case PlyType::kUInt32:
    case PlyType::kFloat32:
      return 4;
    case PlyType::kFloat64:
      return 8;
  }
  return 0;
}

double read_binary(const unsigned char* p, PlyType t) {
  switch (t) {
    case PlyType::kInt8:
      return static_cast<int8_t>(p[0]);
    case PlyType::kUInt8:
      return p[0];
    case PlyType::kInt16:
      return static_cast<int16_t>(load_le<uint16_t>(p));
    case PlyType::kUInt16:
      return load_le<uint16_t>(p);
    case PlyType::kInt32:
      return static_cast<int32_t>(load_le<uint32_t>(p));
    case PlyType::kUInt32:
      return load_le<uint32_t>(p);
    case PlyType::kFloat32:
      return std::bit_cast<float>(load_le<uint32_t>(p));
    case PlyType::kFloat64:
      return std::bit_cast<double>(load_le<uint64_t>(p));
  }
  return 0.0;
}

struct Property {
  std::string name;
  PlyType type;
};

struct Element {
  std::string name;
  size_t count = 0;
  std::vector<Property> props;
  bool has_list = false;
};

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& where, const std::string& msg) {
  throw ParseError(path.string() + ": " + where + ": " + msg);
}

}  // namespace

std::vector<Vec3> read_ply_vertices(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open file");

  std::string line;
  size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  auto where = [&] { return "line " + std::to_string(line_no); };

  if (!next_line() || line != "ply") fail(path, where(), "missing 'ply' magic");
  bool binary = false;
  bool have_format = false;
  std::vector<Element> elements;
  while (true) {
    if (!next_line()) fail(path, where(), "unterminated header");
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "end_header") break;
    if (kw == "comment" || kw == "obj_info" || kw.empty()) continue;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") {
        binary = false;
      } else if (fmt == "binary_little_endian") {
        binary = true;
      } else {
        fail(path, where(), "unsupported format '" + fmt + "'");
      }
      have_format = true;
    } else if (kw == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (!ls || count < 0) fail(path, where(), "bad element declaration");
      e.count = static_cast<size_t>(count);
      elements.push_back(std::move(e));
    } else if (kw == "property") {
      if (elements.empty()) fail(path, where(), "property before any element");
      std::string type;
      ls >> type;
      if (type == "list") {
        elements.back().has_list = true;
        continue;
      }
      auto t = parse_type(type);
      std::string name;
      ls >> name;
      if (!t || name.empty()) fail(path, where(), "bad property '" + line + "'");
      elements.back().props.push_back({name, *t});
    } else {
      fail(path, where(), "unknown header keyword '" + kw + "'");
    }
  }
  if (!have_format) fail(path, where(), "missing format line");

  std::vector<Vec3> out;
  for (const Element& e : elements) {
    if (e.name != "vertex") {
      if (!binary) {
        for (size_t i = 0; i < e.count; ++i)
          if (!next_line()) fail(path, where(), "truncated element '" + e.name + "'");
        continue;
      }
      if (e.has_list) fail(path, "header", "cannot skip binary list element '" + e.name + "' before vertices");
      size_t stride = 0;
      for (const auto& p : e.props) stride += type_size(p.type);
      in.ignore(static_cast<std::streamsize>(stride * e.count));
      continue;
    }
    if (e.has_list) fail(path, "header", "list properties on vertex element are not supported");
    int ix = -1, iy = -1, iz = -1;
    for (size_t p = 0; p < e.props.size(); ++p) {
      if (e.props[p].name == "x") ix = static_cast<int>(p);
      if (e.props[p].name == "y") iy = static_cast<int>(p);
      if (e.props[p].name == "z") iz = static_cast<int>(p);
    }
    if (ix < 0 || iy < 0 || iz < 0) fail(path, "header", "vertex element lacks x/y/z");
    out.reserve(e.count);
    if (binary) {
      std::vector<size_t> offsets;
      size_t stride = 0;
      for (const auto& p : e.props) {
        offsets.push_back(stride);
        stride += type_size(p.type);
      }
      std::vector<unsigned char> rec(stride);
      const std::streamoff base = in.tellg();
      for (size_t i = 0; i < e.count; ++i) {
        if (!in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(stride)))
          fail(path, "byte offset " + std::to_string(base + static_cast<std::streamoff>(i * stride)),
               "truncated vertex data");
        out.push_back({read_binary(rec.data() + offsets[static_cast<size_t>(ix)], e.props[static_cast<size_t>(ix)].type),
                       read_binary(rec.data() + offsets[static_cast<size_t>(iy)], e.props[static_cast<size_t>(iy)].type),
                       read_binary(rec.data() + offsets[static_cast<size_t>(iz)], e.props[static_cast<size_t>(iz)].type)});
      }
    } else {
      std::vector<double> vals(e.props.size());
      for (size_t i = 0; i < e.count; ++i) {
        if (!next_line()) fail(path, where(), "truncated vertex list");
        std::istringstream ls(line);
        for (auto& v : vals)
          if (!(ls >> v)) fail(path, where(), "malformed vertex row");
        out.push_back({vals[static_cast<size_t>(ix)], vals[static_cast<size_t>(iy)], vals[static_cast<size_t>(iz)]});
      }
    }
    return out;
  }
  return out;
}

PointCloudFrame voxelize(std::span<const Vec3> positions, const PlyLoadOptions& opts) {
  const int p = opts.precision_bits;
  require(p >= 1 && p <= kMaxPrecisionBits, "precision must be in [1, 21]");
  if (positions.empty()) throw EmptyInputError("point cloud has no vertices");
  const double cube = std::ldexp(1.0, p);

  double lo = positions[0][0], hi = positions[0][0];
  for (const auto& v : positions)
    for (double c : v) {
      if (!std::isfinite(c)) throw ParseError("non-finite vertex coordinate");
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }

  double scale = 1.0;
  if (opts.source_bits) {
    scale = std::ldexp(1.0, p - *opts.source_bits);
  } else if (lo < 0.0) {
    throw ParseError("negative coordinates need an explicit source bit depth");
  } else if (hi >= cube) {
    int s = p;
    while (std::ldexp(1.0, s) <= hi) ++s;
    scale = std::ldexp(1.0, p - s);
  }

  std::vector<Coord> coords;
  coords.reserve(positions.size());
  for (const auto& v : positions) {
    Coord c{static_cast<int32_t>(std::floor(v[0] * scale)), static_cast<int32_t>(std::floor(v[1] * scale)),
            static_cast<int32_t>(std::floor(v[2] * scale))};
    const double m = std::max({double(c.x), double(c.y), double(c.z)});
    const double n = std::min({double(c.x), double(c.y), double(c.z)});
    if (n < 0 || m >= cube) throw ParseError("vertex outside the [0, 2^precision) cube after scaling");
    coords.push_back(c);
  }
  return make_frame(std::move(coords), p);
}

PointCloudFrame load_ply(const std::filesystem::path& path, const PlyLoadOptions& opts) {
  const auto verts = read_ply_vertices(path);
  if (verts.empty()) throw EmptyInputError(path.string() + ": empty vertex list");
  return voxelize(verts, opts);
}

void write_ply(const std::filesystem::path& path, std::span<const Coord> coords) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << coords.size()
      << "\nproperty int x\nproperty int y\nproperty int z\nend_header\n";
  ByteWriter w;
  for (const Coord& c : coords) {
    w.put_u32(static_cast<uint32_t>(c.x));
    w.put_u32(static_cast<uint32_t>(c.y));
    w.put_u32(static_cast<uint32_t>(c.z));
  }
  out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
}

void write_ply_ascii(const std::filesystem::path& path, std::span<const Vec3> positions) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << "ply\nformat ascii 1.0\nelement vertex " << positions.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  out.precision(9);
  for (const auto& v : positions) out << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
}

}  // namespace ddpc
