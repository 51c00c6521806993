// SPDX-License-Identifier: Apache-2.0
#include "ddpc/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace ddpc {

namespace {

void require_cloud(std::span<const Coord> c, const char* what) {
  if (c.empty()) throw EmptyInputError(std::string(what) + ": empty point cloud");
}

std::vector<Vec3> as_queries(std::span<const Coord> c) {
  std::vector<Vec3> q(c.size());
  for (size_t i = 0; i < c.size(); ++i) q[i] = to_vec(c[i]);
  return q;
}

/// Coefficients (c0..c3) of the least-squares cubic y(x).
Eigen::Vector4d cubic_fit(const std::vector<double>& x, const std::vector<double>& y) {
  Eigen::MatrixXd v(static_cast<Eigen::Index>(x.size()), 4);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(x.size()));
  for (size_t i = 0; i < x.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    v(r, 0) = 1.0;
    v(r, 1) = x[i];
    v(r, 2) = x[i] * x[i];
    v(r, 3) = x[i] * x[i] * x[i];
    rhs(r) = y[i];
  }
  return v.colPivHouseholderQr().solve(rhs);
}

double cubic_integral(const Eigen::Vector4d& c, double lo, double hi) {
  auto prim = [&](double t) { return c(0) * t + c(1) * t * t / 2 + c(2) * t * t * t / 3 + c(3) * t * t * t * t / 4; };
  return prim(hi) - prim(lo);
}

double parse_number(const std::string& field, size_t line) {
  if (field == "inf") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || p != field.data() + field.size())
    throw ParseError("rd csv line " + std::to_string(line) + ": bad number '" + field + "'");
  return v;
}

int parse_int(const std::string& field, size_t line) {
  int v = 0;
  const auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || p != field.data() + field.size())
    throw ParseError("rd csv line " + std::to_string(line) + ": bad integer '" + field + "'");
  return v;
}

}  // namespace

PsnrResult psnr_from_mse(double mse, double peak) {
  require(mse >= 0.0 && peak > 0.0, "psnr: mse must be >= 0 and peak > 0");
  PsnrResult r;
  r.mse = mse;
  if (mse == 0.0) {
    r.infinite = true;
    r.psnr_db = std::numeric_limits<double>::infinity();
  } else {
    r.psnr_db = 10.0 * std::log10(3.0 * peak * peak / mse);
  }
  return r;
}

double directional_mse_d1(std::span<const Coord> from, std::span<const Coord> to) {
  const auto nn = knn(as_queries(from), to, 1);
  double sum = 0.0;
  for (const auto& n : nn) sum += n[0].sq_dist;
  return sum / static_cast<double>(from.size());
}

double directional_mse_d2(std::span<const Coord> from, std::span<const Coord> to, std::span<const Vec3> to_normals) {
  const auto nn = knn(as_queries(from), to, 1);
  double sum = 0.0;
  for (size_t i = 0; i < from.size(); ++i) {
    const auto j = static_cast<size_t>(nn[i][0].index);
    const Vec3& n = to_normals[j];
    const double ex = from[i].x - to[j].x, ey = from[i].y - to[j].y, ez = from[i].z - to[j].z;
    if (n[0] == 0.0 && n[1] == 0.0 && n[2] == 0.0) {
      sum += ex * ex + ey * ey + ez * ez;
    } else {
      const double p = ex * n[0] + ey * n[1] + ez * n[2];
      sum += p * p;
    }
  }
  return sum / static_cast<double>(from.size());
}

PsnrResult d1_psnr(std::span<const Coord> a, std::span<const Coord> b, double peak) {
  require_cloud(a, "d1_psnr");
  require_cloud(b, "d1_psnr");
  return psnr_from_mse(std::max(directional_mse_d1(a, b), directional_mse_d1(b, a)), peak);
}

std::vector<Vec3> estimate_normals(std::span<const Coord> cloud, int k) {
  std::vector<Vec3> normals(cloud.size(), Vec3{0.0, 0.0, 0.0});
  if (cloud.size() < 3) return normals;
  const auto nn = knn(as_queries(cloud), cloud, k);
  for (size_t i = 0; i < cloud.size(); ++i) {
    const auto& nb = nn[i];
    if (nb.size() < 3) continue;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& n : nb) {
      const Coord& c = cloud[static_cast<size_t>(n.index)];
      mean += Eigen::Vector3d(c.x, c.y, c.z);
    }
    mean /= static_cast<double>(nb.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& n : nb) {
      const Coord& c = cloud[static_cast<size_t>(n.index)];
      const Eigen::Vector3d d = Eigen::Vector3d(c.x, c.y, c.z) - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    Eigen::Vector3d v = es.eigenvectors().col(0).normalized();
    const bool flip = v.x() < 0.0 || (v.x() == 0.0 && (v.y() < 0.0 || (v.y() == 0.0 && v.z() < 0.0)));
    if (flip) v = -v;
    normals[i] = {v.x(), v.y(), v.z()};
  }
  return normals;
}

PsnrResult d2_psnr(std::span<const Coord> a, std::span<const Coord> b, double peak) {
  require_cloud(a, "d2_psnr");
  require_cloud(b, "d2_psnr");
  const auto na = estimate_normals(a);
  const auto nb = estimate_normals(b);
  return psnr_from_mse(std::max(directional_mse_d2(a, b, nb), directional_mse_d2(b, a, na)), peak);
}

double bpp(uint64_t bits, size_t points) {
  if (points == 0) throw EmptyInputError("bpp: zero points");
  return static_cast<double>(bits) / static_cast<double>(points);
}

double bd_rate(std::span<const RdPoint> anchor, std::span<const RdPoint> test) {
  require(anchor.size() >= 4 && test.size() >= 4, "bd_rate: each curve needs at least 4 points");
  auto prepare = [](std::span<const RdPoint> c, std::vector<double>& q, std::vector<double>& lr) {
    std::vector<RdPoint> s(c.begin(), c.end());
    std::sort(s.begin(), s.end(), [](const RdPoint& x, const RdPoint& y) { return x.psnr_db < y.psnr_db; });
    for (const auto& p : s) {
      require(p.bpp > 0.0 && std::isfinite(p.bpp), "bd_rate: rates must be positive and finite");
      require(std::isfinite(p.psnr_db), "bd_rate: infinite PSNR cannot be fitted");
      q.push_back(p.psnr_db);
      lr.push_back(std::log10(p.bpp));
    }
  };
  std::vector<double> qa, ra, qb, rb;
  prepare(anchor, qa, ra);
  prepare(test, qb, rb);
  const double lo = std::max(qa.front(), qb.front());
  const double hi = std::min(qa.back(), qb.back());
  require(hi > lo, "bd_rate: the curves share no PSNR interval");
  const double ia = cubic_integral(cubic_fit(qa, ra), lo, hi);
  const double ib = cubic_integral(cubic_fit(qb, rb), lo, hi);
  const double avg = (ib - ia) / (hi - lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string rd_csv_line(const RdRow& r) {
  require(r.sequence.find_first_of(",\n\"") == std::string::npos, "rd csv: sequence name must not contain , \" or newline");
  return r.sequence + "," + std::to_string(r.frame) + "," + std::to_string(r.lambda) + "," + format_double(r.bpp) + "," +
         format_double(r.d1_db) + "," + format_double(r.d2_db);
}

std::vector<RdRow> parse_rd_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  size_t n = 0;
  std::vector<RdRow> rows;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (n == 1) {
      if (line != kRdCsvHeader) throw ParseError(std::string("rd csv: expected header '") + kRdCsvHeader + "'");
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw ParseError("rd csv line " + std::to_string(n) + ": expected 6 fields");
    rows.push_back({f[0], parse_int(f[1], n), parse_int(f[2], n), parse_number(f[3], n), parse_number(f[4], n),
                    parse_number(f[5], n)});
  }
  if (n == 0) throw ParseError("rd csv: empty file");
  return rows;
}

std::vector<RdRow> read_rd_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_rd_csv(ss.str());
}

}  // namespace ddpc
