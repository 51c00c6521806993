// SPDX-License-Identifier: Apache-2.0
#include "ddpc/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "ddpc/rng.hpp"

namespace ddpc {

namespace {

std::vector<Coord> shell(double cx, double cy, double cz, double radius) {
  std::vector<Coord> out;
  const int r = static_cast<int>(std::ceil(radius)) + 1;
  const int x0 = static_cast<int>(std::floor(cx)) - r, y0 = static_cast<int>(std::floor(cy)) - r,
            z0 = static_cast<int>(std::floor(cz)) - r;
  for (int x = x0; x <= x0 + 2 * r; ++x)
    for (int y = y0; y <= y0 + 2 * r; ++y)
      for (int z = z0; z <= z0 + 2 * r; ++z) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy, dz = z + 0.5 - cz;
        const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
        if (d >= radius - 0.5 && d < radius + 0.5) out.push_back({x, y, z});
      }
  return out;
}

}  // namespace

RigidSpec parse_rigid_spec(const std::string& text) {
  const std::string prefix = "rigid:";
  if (text.rfind(prefix, 0) != 0) throw ParseError("synthetic: expected rigid:N,frames,translation");
  std::istringstream in(text.substr(prefix.size()));
  RigidSpec s;
  char c1 = 0, c2 = 0;
  long long n = 0;
  if (!(in >> n >> c1 >> s.frames >> c2 >> s.translation) || c1 != ',' || c2 != ',' || !(in >> std::ws).eof())
    throw ParseError("synthetic: expected rigid:N,frames,translation, got '" + text + "'");
  if (n < 1 || s.frames < 1 || !std::isfinite(s.translation))
    throw ParseError("synthetic: N and frames must be positive and translation finite");
  s.points = static_cast<size_t>(n);
  return s;
}

std::vector<PointCloudFrame> rigid_sequence(const RigidSpec& spec) {
  require(spec.points > 0 && spec.frames > 0, "rigid_sequence: need at least one point and one frame");
  require(spec.precision_bits >= 2 && spec.precision_bits <= kMaxPrecisionBits, "rigid_sequence: bad precision");
  const double side = std::ldexp(1.0, spec.precision_bits);
  const double travel = std::round((spec.frames - 1) * spec.translation);
  const double cx = side / 2 - travel / 2, cy = side / 2, cz = side / 2;

  double radius = std::max(1.0, std::sqrt(static_cast<double>(spec.points) / (4.0 * std::numbers::pi)) - 1.0);
  std::vector<Coord> base = shell(cx, cy, cz, radius);
  while (base.size() < spec.points) {
    radius += 0.25;
    if (radius + 1.0 + std::abs(travel) / 2 > side / 2)
      throw ContractViolation("rigid_sequence: " + std::to_string(spec.points) + " points do not fit at precision " +
                              std::to_string(spec.precision_bits));
    base = shell(cx, cy, cz, radius);
  }
  Rng rng(spec.seed);
  for (size_t i = base.size() - 1; i > 0; --i) std::swap(base[i], base[rng.below(i + 1)]);
  base.resize(spec.points);

  std::vector<PointCloudFrame> frames;
  for (int f = 0; f < spec.frames; ++f) {
    const auto dx = static_cast<int32_t>(std::round(f * spec.translation));
    std::vector<Coord> pts;
    pts.reserve(base.size());
    for (const Coord& c : base) {
      const Coord m{c.x + dx, c.y, c.z};
      require(m.x >= 0 && m.y >= 0 && m.z >= 0 && m.x < side && m.y < side && m.z < side,
              "rigid_sequence: motion leaves the coordinate cube");
      pts.push_back(m);
    }
    frames.push_back(make_frame(std::move(pts), spec.precision_bits));
  }
  return frames;
}

}  // namespace ddpc
