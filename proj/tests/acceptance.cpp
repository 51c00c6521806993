// SPDX-License-Identifier: Apache-2.0
// Acceptance harness: one status line per criterion. PASS and FAIL are
// measured here; UNVERIFIED marks a requirement this host cannot exercise.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ddpc/cli.hpp"
#include "ddpc/codec.hpp"
#include "ddpc/entropy.hpp"
#include "ddpc/gradcheck.hpp"
#include "ddpc/metrics.hpp"
#include "ddpc/motion.hpp"
#include "ddpc/octree.hpp"
#include "ddpc/ply.hpp"
#include "ddpc/range_coder.hpp"
#include "ddpc/rng.hpp"
#include "ddpc/selftest.hpp"
#include "ddpc/synthetic.hpp"

using namespace ddpc;
namespace fs = std::filesystem;

namespace {

enum class Status { kPass, kFail, kUnverified };

struct Outcome {
  Status status = Status::kFail;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(3) << v;
  return s.str();
}

std::string fix(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

Status pass_if(bool ok) { return ok ? Status::kPass : Status::kFail; }

std::vector<Coord> random_cloud(Rng& rng, size_t n, int64_t side) {
  std::vector<Coord> c(n);
  for (auto& p : c)
    p = {static_cast<int32_t>(rng.range(0, side - 1)), static_cast<int32_t>(rng.range(0, side - 1)),
         static_cast<int32_t>(rng.range(0, side - 1))};
  sort_unique(c);
  return c;
}

// ------------------------------------------------------------------ 1

Outcome conv_oracle() {
  const auto t0 = Clock::now();
  Rng rng(1001);
  struct Shape {
    int kernel, stride;
    bool transposed;
  };
  const Shape shapes[] = {{1, 1, false}, {2, 1, false}, {3, 1, false}, {2, 2, false}, {3, 2, false}, {2, 2, true}};
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Shape& sh = shapes[static_cast<size_t>(t) % std::size(shapes)];
    ConvSpec spec{static_cast<int>(rng.range(1, 4)), static_cast<int>(rng.range(1, 4)), sh.kernel, sh.stride,
                  sh.transposed};
    const auto pts = random_cloud(rng, static_cast<size_t>(rng.range(1, 400)), 16);
    SparseTensorD x(1, spec.in_channels, pts);
    for (auto& v : x.feats) v = rng.uniform(-1, 1);
    std::vector<double> w(static_cast<size_t>(spec.volume() * spec.in_channels * spec.out_channels));
    std::vector<double> b(static_cast<size_t>(spec.out_channels));
    for (auto& v : w) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    std::vector<Coord> out;
    if (spec.transposed) {
      for (const Coord& c : child_candidates(pts))
        if (rng.below(2) == 0) out.push_back(c);
      if (out.empty()) out.push_back({2 * pts[0].x, 2 * pts[0].y, 2 * pts[0].z});
    } else {
      out = default_out_coords(pts, spec);
    }
    const auto got = sparse_conv<double>(x, spec, w, b, out);
    const auto want = reference::dense_conv(x, spec, w, b, out);
    if (got.feats.size() != want.size()) return {Status::kFail, "output size mismatch at instance " + std::to_string(t)};
    for (size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(got.feats[i] - want[i]));
  }
  const double secs = seconds_since(t0);
  return {pass_if(worst <= 1e-5 && secs < 30.0),
          "200 instances, max abs error " + sci(worst) + ", " + fix(secs, 2) + " s"};
}

// ------------------------------------------------------------------ 2

double awi_at_origin(const std::vector<Coord>& prev, const std::vector<double>& feats, double alpha) {
  SparseTensorD motion(2, 3, {{0, 0, 0}});
  SparseTensorD y_prev(2, 1, prev, feats);
  return awi_3d<double>(motion, y_prev, alpha).feats[0];
}

Outcome awi_hand_cases() {
  const double alpha = 3.0;
  // Unit distances: weight sum 3 equals alpha, plain mean of 1, 2, 3.
  const double unit = awi_at_origin({{0, 0, 1}, {0, 1, 0}, {1, 0, 0}}, {1, 2, 3}, alpha);
  // Squared distance 2: weight sum 1.5, mean 2 scaled by 1.5 / 3.
  const double shrink = awi_at_origin({{0, 1, 1}, {1, 0, 1}, {1, 1, 0}}, {1, 2, 3}, alpha);
  const double coincident = awi_at_origin({{0, 0, 0}, {0, 0, 1}, {0, 1, 0}}, {5, 1, 2}, alpha);
  const double far = awi_at_origin({{0, 0, 1000000}, {0, 1000000, 0}, {1000000, 0, 0}}, {1, 2, 3}, alpha);
  bool ok = unit == 2.0 && shrink == 1.0 && std::abs(coincident - 5.0) < 1e-6 && std::abs(far) < 1e-3;
  // Limit: at distance D the output is 6 / (alpha D^2), tending to zero.
  std::ostringstream limit;
  double last = std::abs(far) + 1.0;
  for (int32_t d : {1000000, 10000000, 100000000, 1000000000}) {
    const double v = awi_at_origin({{0, 0, d}, {0, d, 0}, {d, 0, 0}}, {1, 2, 3}, alpha);
    const double expect = 6.0 / (alpha * static_cast<double>(d) * static_cast<double>(d));
    ok = ok && std::abs(v) < last && std::abs(v - expect) <= 1e-9 * expect;
    last = std::abs(v);
    limit << " " << sci(v);
  }
  return {pass_if(ok), "unit=" + fix(unit, 6) + " shrink=" + fix(shrink, 6) + " coincident=" + fix(coincident, 6) +
                           " far=" + sci(far) + " limit(1e6..1e9):" + limit.str()};
}

// ------------------------------------------------------------------ 3

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;
  for (GradOp op : all_grad_ops()) {
    const GradReport r = check_gradient_suite(op, 100, 1);
    ok = ok && r.pass && r.instances == 100;
    detail += std::string(grad_op_name(op)) + "=" + sci(r.max_rel_error) + (r.pass ? " " : "(FAIL) ");
  }
  const double secs = seconds_since(t0);
  return {pass_if(ok && secs < 120.0), "100 instances per op, max rel error " + detail + fix(secs, 2) + " s"};
}

// ------------------------------------------------------------------ 4

EntropyModel random_model(Rng& rng) {
  std::vector<ChannelPmf> pmfs;
  const size_t channels = static_cast<size_t>(rng.range(1, 8));
  for (size_t c = 0; c < channels; ++c) {
    ChannelPmf p;
    p.offset = static_cast<int32_t>(rng.range(-30, 0));
    p.pmf.resize(static_cast<size_t>(rng.range(1, 64)));
    for (auto& v : p.pmf) v = rng.uniform01() < 0.2 ? 0.0 : rng.uniform(0.0, 1.0);
    p.pmf[0] += 1e-3;
    p.escape = rng.uniform01() < 0.5 ? 0.0 : rng.uniform(1e-4, 0.05);
    pmfs.push_back(p);
  }
  return build_table_from_pmf(pmfs);
}

std::vector<int32_t> sample_symbols(Rng& rng, const EntropyModel& m, size_t n) {
  std::vector<int32_t> s(n);
  for (size_t i = 0; i < n; ++i) {
    const auto& ch = m.channel(i % m.channel_count());
    const uint32_t u = static_cast<uint32_t>(rng.below(kCdfTotal));
    size_t k = 0;
    while (ch.cdf[k + 1] <= u) ++k;
    s[i] = k == ch.symbols() ? ch.offset + static_cast<int32_t>(ch.symbols()) + static_cast<int32_t>(rng.range(0, 100000))
                             : ch.offset + static_cast<int32_t>(k);
  }
  return s;
}

Outcome entropy_coder() {
  Rng rng(1004);
  int round_trips = 0, bounded = 0, long_seqs = 0;
  double worst_excess = -1e300;
  for (int t = 0; t < 1000; ++t) {
    const auto m = random_model(rng);
    const auto s = sample_symbols(rng, m, static_cast<size_t>(rng.range(0, 5000)));
    const auto bytes = range_encode(s, m);
    if (range_decode(bytes, m, s.size()) == s) ++round_trips;
    if (s.size() >= 1000) {
      ++long_seqs;
      const double est = estimate_bits(s, m);
      const double excess = std::abs(8.0 * static_cast<double>(bytes.size()) - est) - (0.01 * est + 128.0);
      worst_excess = std::max(worst_excess, excess);
      if (excess <= 0.0) ++bounded;
    }
  }
  return {pass_if(round_trips == 1000 && bounded == long_seqs && long_seqs > 0),
          std::to_string(round_trips) + "/1000 exact round trips, " + std::to_string(bounded) + "/" +
              std::to_string(long_seqs) + " long sequences within bound (worst margin " + fix(-worst_excess, 1) +
              " bits)"};
}

// ------------------------------------------------------------------ 5

Outcome octree_codec(const fs::path& fixture_dir) {
  Rng rng(1005);
  int exact = 0;
  for (int t = 0; t < 1000; ++t) {
    const int depth = static_cast<int>(rng.range(4, 10));
    const auto pts = random_cloud(rng, static_cast<size_t>(rng.range(1, 2000)), int64_t{1} << depth);
    const auto back = octree_decode(OctreeStream::parse(octree_encode(pts, depth).serialize()));
    if (back == pts) ++exact;
  }
  std::ifstream f(fixture_dir / kOctreeFixtureName, std::ios::binary);
  const std::vector<uint8_t> fixture((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::vector<Coord> origin{{0, 0, 0}};
  const bool fixture_ok = fixture.size() == 9 && octree_occupancy(origin, 9) == fixture;
  return {pass_if(exact == 1000 && fixture_ok), std::to_string(exact) + "/1000 exact, depth-9 single-point fixture " +
                                                    (fixture_ok ? "matches" : "DIFFERS")};
}

// ------------------------------------------------------------------ 6, 7

const Network& surrogate() {
  static const Network net = Network::from_store(generate_weights(1, WeightProfile::kSurrogate));
  return net;
}

Outcome closed_loop() {
  const auto t0 = Clock::now();
  RigidSpec spec;
  spec.points = 10000;
  spec.frames = 2;
  spec.translation = 1.0;
  spec.precision_bits = 7;
  const auto frames = rigid_sequence(spec);
  const CodecConfig cfg;
  const auto i = encode_intra(frames[0], surrogate(), cfg);
  const auto p = encode_inter(frames[1], i.decoded, surrogate(), cfg);
  const auto di = decode(FrameBitstream::parse(i.bitstream.serialize()), nullptr, surrogate(), cfg);
  const auto dp = decode(FrameBitstream::parse(p.bitstream.serialize()), &di, surrogate(), cfg);
  const double secs = seconds_since(t0);
  const bool counts = di.frame.size() == frames[0].size() && dp.frame.size() == frames[1].size();
  const bool latents = di == i.decoded && dp == p.decoded;
  return {pass_if(counts && latents && secs < 60.0),
          "N0=" + std::to_string(frames[0].size()) + "/" + std::to_string(frames[1].size()) + " decoded " +
              std::to_string(di.frame.size()) + "/" + std::to_string(dp.frame.size()) + ", latents and coordinates " +
              (latents ? "bit-exact" : "DIFFER") + ", I " + std::to_string(i.bitstream.serialize().size()) + " B, P " +
              std::to_string(p.bitstream.serialize().size()) + " B, " + fix(secs, 2) + " s"};
}

Outcome inter_gain() {
  RigidSpec spec;
  spec.points = 10000;
  spec.frames = 2;
  spec.translation = 0.0;
  spec.precision_bits = 7;
  const auto frames = rigid_sequence(spec);
  const CodecConfig cfg;
  const auto i = encode_intra(frames[0], surrogate(), cfg);
  const auto as_i = encode_intra(frames[1], surrogate(), cfg);
  const auto as_p = encode_inter(frames[1], i.decoded, surrogate(), cfg);
  const size_t bits_i = 8 * as_i.bitstream.serialize().size();
  const size_t bits_p = 8 * as_p.bitstream.serialize().size();
  return {pass_if(bits_p < bits_i), "identical frame as P " + std::to_string(bits_p) + " bits, as I " +
                                        std::to_string(bits_i) +
                                        " bits (directional check only; BD-rate against an external "
                                        "anchor codec needs trained weights and is not reproduced)"};
}

// ------------------------------------------------------------------ 8

double brute_directional(const std::vector<Coord>& from, const std::vector<Coord>& to) {
  double sum = 0.0;
  for (const Coord& a : from) {
    int64_t best = INT64_MAX;
    for (const Coord& b : to) {
      const int64_t dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    sum += static_cast<double>(best);
  }
  return sum / static_cast<double>(from.size());
}

Outcome metrics_suite() {
  const std::vector<Coord> a{{0, 0, 0}}, b{{1, 0, 0}};
  const double d1 = d1_psnr(a, b, 1023.0).psnr_db;
  const double want = 10.0 * std::log10(3.0 * 1023.0 * 1023.0);
  const bool d1_ok = std::abs(d1 - want) <= 0.01;

  std::vector<RdPoint> anchor, half;
  for (int i = 0; i < 5; ++i) {
    const double rate = 0.1 * std::pow(2.0, i), q = 30.0 + 3.0 * i;
    anchor.push_back({rate, q});
    half.push_back({rate / 2.0, q});
  }
  const double bd = bd_rate(anchor, half);
  const bool bd_ok = std::abs(bd + 50.0) <= 0.1;

  Rng rng(1008);
  int nn_ok = 0;
  for (int t = 0; t < 50; ++t) {
    const auto x = random_cloud(rng, static_cast<size_t>(rng.range(1, 10000)), 64);
    const auto y = random_cloud(rng, static_cast<size_t>(rng.range(1, 10000)), 64);
    const double fast = directional_mse_d1(x, y), slow = brute_directional(x, y);
    if (std::abs(fast - slow) <= 1e-12 * std::max(1.0, slow)) ++nn_ok;
  }
  return {pass_if(d1_ok && bd_ok && nn_ok == 50), "D1 " + fix(d1, 4) + " dB (target " + fix(want, 4) + "), BD-rate " +
                                                      fix(bd, 4) + " %, NN oracle " + std::to_string(nn_ok) + "/50"};
}

// ------------------------------------------------------------------ 9

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream f(e.path(), std::ios::binary);
    files[fs::relative(e.path(), root).string()] =
        std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }
  return files;
}

bool pipeline(const fs::path& root, const fs::path& weights, std::string& err) {
  std::ostringstream out, e;
  const fs::path enc = root / "enc", dec = root / "dec";
  const std::string csv = (root / "rd.csv").string();
  // Paths inside the manifest are relative, so the trees are comparable across roots.
  const std::vector<std::vector<std::string>> steps{
      {"--weights", weights.string(), "--precision", "7", "encode", "--synthetic", "rigid:4000,3,1", "--out",
       enc.string()},
      {"--weights", weights.string(), "decode", "--manifest", (enc / "manifest.json").string(), "--out", dec.string()},
      {"eval", "--manifest", (enc / "manifest.json").string(), "--decoded-dir", dec.string(), "--csv", csv}};
  for (const auto& s : steps)
    if (run_cli(s, out, e) != kExitOk) {
      err = e.str();
      return false;
    }
  return true;
}

Outcome determinism() {
  const fs::path base = fs::temp_directory_path() / "ddpc_acceptance_determinism";
  fs::remove_all(base);
  fs::create_directories(base);
  const fs::path weights = base / "weights.bin";
  std::ostringstream out, err;
  if (run_cli({"genweights", "--out", weights.string()}, out, err) != kExitOk)
    return {Status::kFail, "genweights failed: " + err.str()};
  std::string e;
  if (!pipeline(base / "run_a", weights, e) || !pipeline(base / "run_b", weights, e))
    return {Status::kFail, "pipeline failed: " + e};
  const auto a = tree_contents(base / "run_a"), b = tree_contents(base / "run_b");
  if (a != b) return {Status::kFail, "outputs of two same-host runs differ"};
  // Same-host identity is measured; the second host is not available here.
  return {Status::kUnverified, std::to_string(a.size()) +
                                   " files (bitstreams, PLYs, CSV, manifest) byte-identical across two runs on this "
                                   "host; cross-platform identity needs a second host and was not run"};
}

// ------------------------------------------------------------------ 10

Outcome real_frame(const std::optional<fs::path>& path, int precision) {
  if (!path)
    return {Status::kUnverified, "no real frame supplied (pass --real-frame FILE or set DDPC_REAL_FRAME)"};
  const auto frame = load_ply(*path, precision);
  const auto c2 = stride_down_coords(stride_down_coords(frame.coords()));
  const size_t bytes = octree_encode(c2, precision - 2).serialize().size();
  const double rate = bpp(8 * bytes, frame.size());
  return {pass_if(rate < 0.05), path->filename().string() + ": " + std::to_string(frame.size()) + " points, C2 " +
                                    std::to_string(c2.size()) + " coords, " + std::to_string(bytes) + " B, " +
                                    fix(rate, 5) + " bpp"};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path fixture_dir = DDPC_FIXTURE_DIR;
  std::optional<fs::path> frame;
  int frame_precision = 10;
  if (const char* env = std::getenv("DDPC_REAL_FRAME"); env && *env) frame = env;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--real-frame" && i + 1 < argc) {
      frame = argv[++i];
    } else if (a == "--real-precision" && i + 1 < argc) {
      frame_precision = std::atoi(argv[++i]);
    } else if (a == "--fixture-dir" && i + 1 < argc) {
      fixture_dir = argv[++i];
    } else {
      std::cerr << "usage: ddpc_acceptance [--fixture-dir DIR] [--real-frame FILE] [--real-precision BITS]\n";
      return 2;
    }
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"sparse convolution matches the dense oracle", conv_oracle},
      {"interpolation hand cases and far limit", awi_hand_cases},
      {"central-difference gradient checks", gradient_suite},
      {"entropy coder round trip and size bound", entropy_coder},
      {"octree round trip and fixture", [&] { return octree_codec(fixture_dir); }},
      {"closed-loop I+P codec", closed_loop},
      {"inter gain on an identical frame", inter_gain},
      {"metrics", metrics_suite},
      {"determinism", determinism},
      {"scale-2 coordinate rate on a real frame", [&] { return real_frame(frame, frame_precision); }}};

  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "UNVERIFIED";
    if (o.status == Status::kFail) ++failures;
    std::cout << "criterion " << (i + 1) << ": " << tag << " " << criteria[i].first << " (" << o.detail << ")"
              << std::endl;
  }
  std::cout << (failures == 0 ? "acceptance: no failures" : "acceptance: " + std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
