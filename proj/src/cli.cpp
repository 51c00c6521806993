// SPDX-License-Identifier: Apache-2.0
#include "ddpc/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ddpc/codec.hpp"
#include "ddpc/errors.hpp"
#include "ddpc/gradcheck.hpp"
#include "ddpc/metrics.hpp"
#include "ddpc/network.hpp"
#include "ddpc/ply.hpp"
#include "ddpc/selftest.hpp"
#include "ddpc/synthetic.hpp"

namespace ddpc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class MissingWeightsError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class CountMismatchError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class TooFewPointsError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kManifestFormat = "ddpc-sequence";
inline constexpr int kManifestVersion = 1;

struct RunConfig {
  std::string weights;
  int lambda = 3;
  double alpha = kDefaultAlpha;
  int precision = 10;
  int gop = 0;  // 0: one intra frame, then inter frames to the end
  uint64_t seed = 1;
  bool transmit_c3 = false;
  bool latent_carry = false;
  int workers = 0;  // 0: runtime default
  std::string channel_plan = "default";

  // encode
  std::string synthetic;
  std::vector<std::string> inputs;
  std::optional<int> source_bits;
  std::string out_dir;
  std::string name;
  // decode / eval
  std::string manifest;
  std::vector<std::string> decoded;
  std::string decoded_dir;
  std::string csv;
  std::optional<double> peak;
  // rdcsv
  std::string anchor;
  std::string test;
  std::string svg;
  // selftest
  std::string fixture_dir;
  // gradcheck
  size_t instances = 100;
  std::string op = "all";
  // genweights
  std::string profile = "surrogate";
};

CodecConfig codec_config(const RunConfig& rc) {
  CodecConfig c;
  c.alpha = rc.alpha;
  c.lambda_tag = rc.lambda;
  c.transmit_c3 = rc.transmit_c3;
  c.latent_carry = rc.latent_carry;
  return c;
}

void set_workers(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

Network load_network(const RunConfig& rc) {
  if (rc.weights.empty()) throw MissingWeightsError("no weights: pass --weights or set DDPC_WEIGHTS");
  if (!fs::is_regular_file(rc.weights)) throw MissingWeightsError("weights file not found: " + rc.weights);
  try {
    return Network::from_store(WeightStore::load(rc.weights));
  } catch (const std::exception& e) {
    throw MissingWeightsError("unusable weights file " + rc.weights + ": " + e.what());
  }
}

std::vector<uint8_t> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ParseError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, std::span<const uint8_t> bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("cannot write " + p.string());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + p.string());
}

std::string indexed(const char* stem, size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu%s", stem, i, ext);
  return buf;
}

std::string fixed(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s.imbue(std::locale::classic());
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

PlyLoadOptions exact_load(int precision) { return PlyLoadOptions{precision, precision}; }

// ---------------------------------------------------------------- encode

int cmd_encode(const RunConfig& rc, std::ostream& out) {
  if (rc.synthetic.empty() == rc.inputs.empty()) throw ParseError("encode: give exactly one of --synthetic or --input");
  for (const auto& p : rc.inputs)
    if (!fs::is_regular_file(p)) throw ParseError("input not found: " + p);
  if (rc.channel_plan != "default") throw ParseError("unknown channel plan: " + rc.channel_plan);

  std::vector<PointCloudFrame> frames;
  std::string name = rc.name;
  if (!rc.synthetic.empty()) {
    RigidSpec spec = parse_rigid_spec(rc.synthetic);
    spec.precision_bits = rc.precision;
    spec.seed = rc.seed;
    frames = rigid_sequence(spec);
    if (name.empty()) name = "synthetic";
  } else {
    for (const auto& p : rc.inputs) frames.push_back(load_ply(p, PlyLoadOptions{rc.precision, rc.source_bits}));
    if (name.empty()) name = fs::path(rc.inputs.front()).stem().string();
  }
  std::replace_if(name.begin(), name.end(), [](char c) { return c == ',' || c == '"' || c == '\n'; }, '_');
  if (frames.empty()) throw EmptyInputError("encode: no frames");

  const Network net = load_network(rc);
  const CodecConfig cfg = codec_config(rc);
  const fs::path dir(rc.out_dir);
  fs::create_directories(dir);

  json m;
  m["format"] = kManifestFormat;
  m["version"] = kManifestVersion;
  m["sequence"] = name;
  m["precision"] = rc.precision;
  m["lambda"] = rc.lambda;
  m["alpha"] = rc.alpha;
  m["gop"] = rc.gop;
  m["seed"] = rc.seed;
  m["transmit_c3"] = rc.transmit_c3;
  m["latent_carry"] = rc.latent_carry;
  m["channel_plan"] = rc.channel_plan;
  m["frames"] = json::array();

  std::optional<DecodedFrame> prev;
  uint64_t total_bits = 0;
  size_t total_points = 0;
  for (size_t i = 0; i < frames.size(); ++i) {
    const PointCloudFrame& f = frames[i];
    const bool intra = !prev || (rc.gop > 0 && i % static_cast<size_t>(rc.gop) == 0);
    EncodeResult r = intra ? encode_intra(f, net, cfg) : encode_inter(f, *prev, net, cfg);
    const auto bytes = r.bitstream.serialize();
    const std::string file = indexed("frame", i, ".ddpc");
    const std::string orig = indexed("original", i, ".ply");
    write_bytes(dir / file, bytes);
    write_ply(dir / orig, f.coords());
    const uint64_t bits = 8ull * r.bitstream.payload_bytes();
    const double frame_bpp = bpp(bits, f.size());
    total_bits += bits;
    total_points += f.size();
    m["frames"].push_back({{"index", i},
                           {"type", intra ? "I" : "P"},
                           {"file", file},
                           {"original", orig},
                           {"points", f.size()},
                           {"payload_bytes", r.bitstream.payload_bytes()},
                           {"file_bytes", bytes.size()},
                           {"bits", bits},
                           {"bpp", frame_bpp}});
    out << "frame " << i << " " << (intra ? 'I' : 'P') << " points=" << f.size() << " bytes=" << bytes.size()
        << " bits=" << bits << " bpp=" << fixed(frame_bpp, 6) << "\n";
    prev = std::move(r.decoded);
  }
  const double seq_bpp = bpp(total_bits, total_points);
  m["total_bits"] = total_bits;
  m["total_points"] = total_points;
  m["bpp"] = seq_bpp;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  out << "total frames=" << frames.size() << " bits=" << total_bits << " bpp=" << fixed(seq_bpp, 6) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- manifest

struct ManifestFrame {
  size_t index = 0;
  FrameType type = FrameType::kIntra;
  fs::path file;
  fs::path original;
  size_t points = 0;
  uint64_t bits = 0;
  double bpp = 0.0;
};

struct Manifest {
  std::string sequence;
  int precision = 10;
  int lambda = 3;
  double alpha = kDefaultAlpha;
  bool latent_carry = false;
  bool transmit_c3 = false;
  std::vector<ManifestFrame> frames;
};

Manifest read_manifest(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ParseError("manifest not found: " + path.string());
  json j;
  try {
    std::ifstream f(path);
    j = json::parse(f);
    if (j.at("format").get<std::string>() != kManifestFormat || j.at("version").get<int>() != kManifestVersion)
      throw ParseError("unsupported manifest format");
    Manifest m;
    m.sequence = j.at("sequence").get<std::string>();
    m.precision = j.at("precision").get<int>();
    m.lambda = j.at("lambda").get<int>();
    m.alpha = j.at("alpha").get<double>();
    m.latent_carry = j.at("latent_carry").get<bool>();
    m.transmit_c3 = j.at("transmit_c3").get<bool>();
    const fs::path dir = path.parent_path();
    for (const auto& e : j.at("frames")) {
      ManifestFrame mf;
      mf.index = e.at("index").get<size_t>();
      const auto t = e.at("type").get<std::string>();
      if (t != "I" && t != "P") throw ParseError("manifest: bad frame type " + t);
      mf.type = t == "I" ? FrameType::kIntra : FrameType::kInter;
      mf.file = dir / e.at("file").get<std::string>();
      mf.original = dir / e.at("original").get<std::string>();
      mf.points = e.at("points").get<size_t>();
      mf.bits = e.at("bits").get<uint64_t>();
      mf.bpp = e.at("bpp").get<double>();
      m.frames.push_back(std::move(mf));
    }
    if (m.precision < 2 || m.precision > kMaxPrecisionBits || !is_lambda_tag(m.lambda) || !(m.alpha > 0.0))
      throw ParseError("manifest: parameter out of range");
    return m;
  } catch (const json::exception& e) {
    throw ParseError("malformed manifest " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- decode

int cmd_decode(const RunConfig& rc, std::ostream& out) {
  if (rc.manifest.empty() == rc.inputs.empty()) throw ParseError("decode: give exactly one of --manifest or --input");
  struct Job {
    fs::path file;
    std::optional<FrameType> expected;
  };
  std::vector<Job> jobs;
  CodecConfig cfg = codec_config(rc);
  if (!rc.manifest.empty()) {
    const Manifest m = read_manifest(rc.manifest);
    cfg.alpha = m.alpha;
    cfg.lambda_tag = m.lambda;
    cfg.latent_carry = m.latent_carry;
    cfg.transmit_c3 = m.transmit_c3;
    for (const auto& f : m.frames) jobs.push_back({f.file, f.type});
  } else {
    for (const auto& p : rc.inputs) jobs.push_back({p, std::nullopt});
  }
  for (const auto& j : jobs)
    if (!fs::is_regular_file(j.file)) throw MissingReferenceError("frame file missing: " + j.file.string());

  const Network net = load_network(rc);
  const fs::path dir(rc.out_dir);
  fs::create_directories(dir);
  std::optional<DecodedFrame> prev;
  for (size_t i = 0; i < jobs.size(); ++i) {
    const FrameBitstream bits = FrameBitstream::parse(read_bytes(jobs[i].file));
    if (jobs[i].expected && *jobs[i].expected != bits.type)
      throw DecodeError("frame " + std::to_string(i) + ": type differs from the manifest");
    DecodedFrame d = decode(bits, prev ? &*prev : nullptr, net, cfg);
    write_ply(dir / indexed("decoded", i, ".ply"), d.frame.coords());
    out << "frame " << i << " " << static_cast<char>(bits.type) << " points=" << d.frame.size() << "\n";
    prev = std::move(d);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const RunConfig& rc, std::ostream& out) {
  const Manifest m = read_manifest(rc.manifest);
  std::vector<fs::path> decoded;
  if (!rc.decoded.empty() && !rc.decoded_dir.empty()) throw ParseError("eval: give --decoded or --decoded-dir, not both");
  if (!rc.decoded.empty()) {
    decoded.assign(rc.decoded.begin(), rc.decoded.end());
  } else if (!rc.decoded_dir.empty()) {
    if (!fs::is_directory(rc.decoded_dir)) throw ParseError("not a directory: " + rc.decoded_dir);
    for (const auto& e : fs::directory_iterator(rc.decoded_dir)) {
      const auto fn = e.path().filename().string();
      if (fn.rfind("decoded_", 0) == 0 && e.path().extension() == ".ply") decoded.push_back(e.path());
    }
    std::sort(decoded.begin(), decoded.end());
  } else {
    throw ParseError("eval: --decoded or --decoded-dir is required");
  }
  if (decoded.size() != m.frames.size())
    throw CountMismatchError("eval: " + std::to_string(m.frames.size()) + " originals but " +
                             std::to_string(decoded.size()) + " decoded frames");
  for (const auto& p : decoded)
    if (!fs::is_regular_file(p)) throw ParseError("decoded file not found: " + p.string());

  const double peak = rc.peak.value_or(std::ldexp(1.0, m.precision) - 1.0);
  std::vector<RdRow> rows;
  for (size_t i = 0; i < decoded.size(); ++i) {
    const auto orig = load_ply(m.frames[i].original, exact_load(m.precision));
    const auto dec = load_ply(decoded[i], exact_load(m.precision));
    RdRow r;
    r.sequence = m.sequence;
    r.frame = static_cast<int>(m.frames[i].index);
    r.lambda = m.lambda;
    r.bpp = bpp(m.frames[i].bits, orig.size());
    r.d1_db = d1_psnr(orig.coords(), dec.coords(), peak).psnr_db;
    r.d2_db = d2_psnr(orig.coords(), dec.coords(), peak).psnr_db;
    rows.push_back(r);
  }
  out << kRdCsvHeader << "\n";
  for (const auto& r : rows) out << rd_csv_line(r) << "\n";
  if (!rc.csv.empty()) {
    const bool fresh = !fs::exists(rc.csv) || fs::file_size(rc.csv) == 0;
    std::ofstream f(rc.csv, std::ios::binary | std::ios::app);
    if (fresh) f << kRdCsvHeader << "\n";
    for (const auto& r : rows) f << rd_csv_line(r) << "\n";
    if (!f) throw std::runtime_error("cannot write " + rc.csv);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- rdcsv

struct Curve {
  std::vector<RdPoint> d1;
  std::vector<RdPoint> d2;
};

/// One point per lambda: mean bpp and mean PSNR over the frames at that lambda.
Curve curve_from_rows(const std::vector<RdRow>& rows) {
  struct Acc {
    double bpp = 0, d1 = 0, d2 = 0;
    size_t n = 0;
  };
  std::map<int, Acc> by_lambda;
  for (const auto& r : rows) {
    Acc& a = by_lambda[r.lambda];
    a.bpp += r.bpp;
    a.d1 += r.d1_db;
    a.d2 += r.d2_db;
    ++a.n;
  }
  Curve c;
  for (const auto& [lambda, a] : by_lambda) {
    const double n = static_cast<double>(a.n);
    c.d1.push_back({a.bpp / n, a.d1 / n});
    c.d2.push_back({a.bpp / n, a.d2 / n});
  }
  return c;
}

std::string svg_plot(const Curve& anchor, const Curve& test) {
  constexpr double kW = 640, kH = 480, kM = 60;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const Curve* c : {&anchor, &test})
    for (const auto* pts : {&c->d1, &c->d2})
      for (const auto& p : *pts) {
        if (!std::isfinite(p.psnr_db)) continue;
        x0 = std::min(x0, p.bpp), x1 = std::max(x1, p.bpp);
        y0 = std::min(y0, p.psnr_db), y1 = std::max(y1, p.psnr_db);
      }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  auto px = [&](double x) { return kM + (x - x0) / (x1 - x0) * (kW - 2 * kM); };
  auto py = [&](double y) { return kH - kM - (y - y0) / (y1 - y0) * (kH - 2 * kM); };
  std::ostringstream s;
  s.imbue(std::locale::classic());
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW
    << " " << kH << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<line x1=\"" << kM << "\" y1=\"" << kH - kM << "\" x2=\"" << kW - kM << "\" y2=\"" << kH - kM
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << kM << "\" y1=\"" << kM << "\" x2=\"" << kM << "\" y2=\"" << kH - kM << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 15 << "\" text-anchor=\"middle\">bpp (" << fixed(x0, 4) << " to "
    << fixed(x1, 4) << ")</text>\n"
    << "<text x=\"15\" y=\"" << kH / 2 << "\" transform=\"rotate(-90 15 " << kH / 2
    << ")\" text-anchor=\"middle\">PSNR dB (" << fixed(y0, 2) << " to " << fixed(y1, 2) << ")</text>\n";
  struct Series {
    const std::vector<RdPoint>* pts;
    const char* label;
    const char* color;
    const char* dash;
  };
  const Series series[] = {{&anchor.d1, "anchor D1", "#1f77b4", ""},
                           {&anchor.d2, "anchor D2", "#1f77b4", " stroke-dasharray=\"6 4\""},
                           {&test.d1, "test D1", "#d62728", ""},
                           {&test.d2, "test D2", "#d62728", " stroke-dasharray=\"6 4\""}};
  int legend = 0;
  for (const auto& se : series) {
    std::vector<RdPoint> pts;
    for (const auto& p : *se.pts)
      if (std::isfinite(p.psnr_db)) pts.push_back(p);
    std::sort(pts.begin(), pts.end(), [](const RdPoint& a, const RdPoint& b) { return a.bpp < b.bpp; });
    s << "<polyline fill=\"none\" stroke=\"" << se.color << "\"" << se.dash << " points=\"";
    for (size_t i = 0; i < pts.size(); ++i) s << (i ? " " : "") << fixed(px(pts[i].bpp), 2) << "," << fixed(py(pts[i].psnr_db), 2);
    s << "\"/>\n";
    s << "<text x=\"" << kW - kM - 120 << "\" y=\"" << kM + 18 * legend++ << "\" fill=\"" << se.color << "\">"
      << se.label << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

int cmd_rdcsv(const RunConfig& rc, std::ostream& out) {
  const Curve a = curve_from_rows(read_rd_csv(rc.anchor));
  const Curve t = curve_from_rows(read_rd_csv(rc.test));
  if (a.d1.size() < 4 || t.d1.size() < 4)
    throw TooFewPointsError("rdcsv: each curve needs at least 4 rate points (anchor " + std::to_string(a.d1.size()) +
                            ", test " + std::to_string(t.d1.size()) + ")");
  if (!rc.svg.empty()) write_text(rc.svg, svg_plot(a, t));
  const double d1 = bd_rate(a.d1, t.d1);
  const double d2 = bd_rate(a.d2, t.d2);
  out << "BD-rate D1 (%): " << fixed(d1, 4) << "\n";
  out << "BD-rate D2 (%): " << fixed(d2, 4) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- selftest, gradcheck, genweights

int cmd_selftest(const RunConfig& rc, std::ostream& out) {
  std::optional<fs::path> dir;
  if (!rc.fixture_dir.empty()) dir = rc.fixture_dir;
  bool ok = true;
  for (const auto& c : run_selftest(dir)) {
    out << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    ok = ok && c.pass;
  }
  out << (ok ? "selftest passed" : "selftest FAILED") << "\n";
  return ok ? kExitOk : kExitFailure;
}

int cmd_gradcheck(const RunConfig& rc, std::ostream& out) {
  std::vector<GradOp> ops;
  for (GradOp op : all_grad_ops())
    if (rc.op == "all" || rc.op == grad_op_name(op)) ops.push_back(op);
  if (ops.empty()) throw ParseError("unknown gradient op: " + rc.op);
  bool ok = true;
  for (GradOp op : ops) {
    const GradReport r = check_gradient_suite(op, rc.instances, rc.seed);
    std::ostringstream e;
    e << std::scientific << std::setprecision(3) << r.max_rel_error;
    out << (r.pass ? "PASS " : "FAIL ") << r.op << " instances=" << r.instances << " max_rel_error=" << e.str() << "\n";
    for (const auto& b : r.blocks) {
      std::ostringstream be;
      be << std::scientific << std::setprecision(3) << b.max_rel_error;
      out << "  " << b.name << " checked=" << b.checked << " max_rel_error=" << be.str() << "\n";
    }
    if (!r.pass) {
      out << "  failing seeds:";
      for (auto s : r.failing_seeds) out << " " << s;
      out << "\n";
    }
    ok = ok && r.pass;
  }
  return ok ? kExitOk : kExitFailure;
}

int cmd_genweights(const RunConfig& rc, std::ostream& out) {
  WeightProfile profile;
  if (rc.profile == "surrogate") profile = WeightProfile::kSurrogate;
  else if (rc.profile == "random") profile = WeightProfile::kRandom;
  else throw ParseError("unknown profile: " + rc.profile);
  const WeightStore ws = generate_weights(rc.seed, profile);
  const fs::path p(rc.out_dir);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  ws.save(p);
  out << "wrote " << ws.size() << " tensors to " << p.string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  CLI::App app{"Learned dynamic point cloud geometry codec", "ddpc"};
  app.set_config("--config", "", "key=value file with top-level options; unknown keys are rejected");
  app.allow_config_extras(false);
  app.require_subcommand(1);
  app.fallthrough();

  app.add_option("--weights", rc.weights, "Weight store")->envname("DDPC_WEIGHTS");
  app.add_option("--lambda", rc.lambda, "Rate point tag")->check(CLI::IsMember({3, 4, 5, 7, 10}));
  app.add_option("--alpha", rc.alpha, "Interpolation weight-sum floor")->check(CLI::PositiveNumber);
  app.add_option("--precision", rc.precision, "Coordinate bit depth")->check(CLI::Range(2, kMaxPrecisionBits));
  app.add_option("--gop", rc.gop, "Intra period; 0 codes only frame 0 as intra")->check(CLI::NonNegativeNumber);
  app.add_option("--seed", rc.seed, "Seed for synthetic data, weights and gradient checks");
  app.add_flag("--transmit-c3", rc.transmit_c3, "Also send the scale-3 coordinates");
  app.add_flag("--latent-carry", rc.latent_carry, "Reference latent is the previous decoded latent");
  app.add_option("--workers", rc.workers, "Worker threads")->check(CLI::NonNegativeNumber);
  app.add_option("--channel-plan", rc.channel_plan, "Channel plan name")->check(CLI::IsMember({"default"}));

  auto* enc = app.add_subcommand("encode", "Encode a sequence into one .ddpc file per frame plus a manifest");
  enc->add_option("--synthetic", rc.synthetic, "rigid:N,frames,translation");
  enc->add_option("--input", rc.inputs, "PLY frames in order");
  enc->add_option("--source-bits", rc.source_bits, "Bit depth of the input coordinates")
      ->check(CLI::Range(1, kMaxPrecisionBits));
  enc->add_option("--out", rc.out_dir, "Output directory")->required();
  enc->add_option("--name", rc.name, "Sequence name for the CSV");

  auto* dec = app.add_subcommand("decode", "Decode a manifest or .ddpc files into binary PLY");
  dec->add_option("--manifest", rc.manifest, "Manifest written by encode");
  dec->add_option("--input", rc.inputs, ".ddpc files in order");
  dec->add_option("--out", rc.out_dir, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "D1/D2 PSNR and bpp against the originals; appends CSV rows");
  ev->add_option("--manifest", rc.manifest, "Manifest written by encode")->required();
  ev->add_option("--decoded", rc.decoded, "Decoded PLY files in frame order");
  ev->add_option("--decoded-dir", rc.decoded_dir, "Directory holding decoded_*.ply");
  ev->add_option("--csv", rc.csv, "CSV file to append to");
  ev->add_option("--peak", rc.peak, "PSNR peak; default 2^precision - 1")->check(CLI::PositiveNumber);

  auto* rd = app.add_subcommand("rdcsv", "BD-rate of a test curve against an anchor curve");
  rd->add_option("--anchor", rc.anchor, "Anchor CSV")->required()->check(CLI::ExistingFile);
  rd->add_option("--test", rc.test, "Test CSV")->required()->check(CLI::ExistingFile);
  rd->add_option("--svg", rc.svg, "Write an SVG plot");

  auto* st = app.add_subcommand("selftest", "Round trips, oracles and hand cases");
  st->add_option("--fixture-dir", rc.fixture_dir, "Directory with fixture files");

  auto* gc = app.add_subcommand("gradcheck", "Central-difference gradient verification");
  gc->add_option("--instances", rc.instances, "Instances per op")->check(CLI::PositiveNumber);
  gc->add_option("--op", rc.op, "sparse_conv, awi_normalized, awi_shrink, bce, rate_proxy, awi_of_conv or all");

  auto* gw = app.add_subcommand("genweights", "Write a seeded weight store");
  gw->add_option("--out", rc.out_dir, "Output file")->required();
  gw->add_option("--profile", rc.profile, "surrogate or random");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitMalformedInput;
  }

  set_workers(rc.workers);
  try {
    if (enc->parsed()) return cmd_encode(rc, out);
    if (dec->parsed()) return cmd_decode(rc, out);
    if (ev->parsed()) return cmd_eval(rc, out);
    if (rd->parsed()) return cmd_rdcsv(rc, out);
    if (st->parsed()) return cmd_selftest(rc, out);
    if (gc->parsed()) return cmd_gradcheck(rc, out);
    if (gw->parsed()) return cmd_genweights(rc, out);
  } catch (const MissingWeightsError& e) {
    err << "error: " << e.what() << "\n";
    return kExitMissingWeights;
  } catch (const MissingReferenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitMissingReference;
  } catch (const CountMismatchError& e) {
    err << "error: " << e.what() << "\n";
    return kExitCountMismatch;
  } catch (const TooFewPointsError& e) {
    err << "error: " << e.what() << "\n";
    return kExitTooFewPoints;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitMalformedInput;
  } catch (const DecodeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitMalformedInput;
  } catch (const EmptyInputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitMalformedInput;
  } catch (const ContractViolation& e) {
    err << "error: " << e.what() << "\n";
    return kExitMalformedInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace ddpc
