// SPDX-License-Identifier: Apache-2.0
#include "ddpc/codec.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ddpc/byte_io.hpp"
#include "ddpc/octree.hpp"

namespace ddpc {

namespace {

constexpr char kMagic[4] = {'D', 'D', 'P', 'C'};

SparseTensor irn_stack(SparseTensor x, const std::vector<IrnWeights<float>>& blocks) {
  for (const auto& b : blocks) x = irn_block(x, b);
  return x;
}

SparseTensor down_block(const SparseTensor& x, const DownBlockWeights<float>& w) {
  return irn_stack(sparse_conv(x, w.conv), w.irn);
}

void check_precision(int p) {
  require(p >= 2 && p <= kMaxPrecisionBits, "codec: precision must be in [2, 21] bits");
}

std::vector<uint8_t> coords_substream(std::span<const Coord> coords, int depth) {
  return octree_encode(coords, depth).serialize();
}

std::vector<Coord> read_coords(const Substream& s, int depth) {
  const OctreeStream os = OctreeStream::parse(s.bytes);
  if (os.depth != depth) throw DecodeError("codec: coordinate substream depth does not match the precision");
  return octree_decode(os);
}

FrameBitstream header_for(const PointCloudFrame& frame, FrameType type, const CodecConfig& cfg) {
  require(is_lambda_tag(cfg.lambda_tag), "codec: unsupported lambda tag");
  require(cfg.alpha > 0.0, "codec: alpha must be positive");
  check_precision(frame.precision_bits);
  if (frame.size() == 0) throw EmptyInputError("codec: cannot encode an empty frame");
  FrameBitstream b;
  b.type = type;
  b.precision_bits = static_cast<uint8_t>(frame.precision_bits);
  b.lambda_tag = static_cast<uint8_t>(cfg.lambda_tag);
  b.n0 = static_cast<uint32_t>(frame.size());
  b.n1 = static_cast<uint32_t>(stride_down_coords(frame.coords()).size());
  return b;
}

void add_coords(FrameBitstream& b, const std::vector<Coord>& c2, const CodecConfig& cfg) {
  b.substreams.push_back({SubstreamId::kCoords2, coords_substream(c2, b.precision_bits - 2)});
  if (cfg.transmit_c3)
    b.substreams.push_back({SubstreamId::kCoords3, coords_substream(stride_down_coords(c2), b.precision_bits - 3)});
}

EncodeResult finish_encode(FrameBitstream b, SparseTensor y_dec, ResidualCoding residual,
                           std::optional<MotionCoding> motion, const Network& net) {
  EncodeResult r;
  r.recon = reconstruct(y_dec, b.n1, b.n0, net.weights, b.precision_bits);
  r.decoded = {r.recon.frame, std::move(y_dec)};
  r.bitstream = std::move(b);
  r.residual = std::move(residual);
  r.motion = std::move(motion);
  return r;
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double noisy_bits(const SparseTensor& latent, const EntropyModel& model, uint64_t seed) {
  const auto noisy = add_noise<float>(latent.feats, seed);
  double bits = 0.0;
  const size_t c = model.channel_count();
  for (size_t i = 0; i < noisy.size(); ++i) bits += noisy_symbol_bits(model, i % c, noisy[i]).bits;
  return bits;
}

double scale_bce(const ScaleScores& s, const std::vector<Coord>& truth) {
  if (s.candidates.empty()) return 0.0;
  std::vector<uint8_t> occ(s.candidates.size());
  for (size_t i = 0; i < occ.size(); ++i)
    occ[i] = std::binary_search(truth.begin(), truth.end(), s.candidates[i]) ? 1 : 0;
  return bce_from_logits(s.logits, occ);
}

}  // namespace

bool is_lambda_tag(int tag) { return std::find(kLambdaTags.begin(), kLambdaTags.end(), tag) != kLambdaTags.end(); }

const Substream* FrameBitstream::find(SubstreamId id) const {
  for (const auto& s : substreams)
    if (s.id == id) return &s;
  return nullptr;
}

size_t FrameBitstream::payload_bytes() const {
  size_t n = 0;
  for (const auto& s : substreams) n += s.bytes.size();
  return n;
}

std::vector<uint8_t> FrameBitstream::serialize() const {
  ByteWriter w;
  w.put_bytes(std::span(reinterpret_cast<const uint8_t*>(kMagic), 4));
  w.put_u32(kVersion);
  w.put_u8(static_cast<uint8_t>(type));
  w.put_u8(precision_bits);
  w.put_u8(lambda_tag);
  w.put_u32(n0);
  w.put_u32(n1);
  require(substreams.size() < 256, "container: too many substreams");
  w.put_u8(static_cast<uint8_t>(substreams.size()));
  for (const auto& s : substreams) {
    w.put_u8(static_cast<uint8_t>(s.id));
    w.put_u32(static_cast<uint32_t>(s.bytes.size()));
  }
  for (const auto& s : substreams) w.put_bytes(s.bytes);
  return w.take();
}

FrameBitstream FrameBitstream::parse(std::span<const uint8_t> bytes) {
  ByteReader r(bytes, "frame container");
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), reinterpret_cast<const uint8_t*>(kMagic)))
    throw DecodeError("container: bad magic");
  if (const uint32_t v = r.u32(); v != kVersion) throw DecodeError("container: unsupported version " + std::to_string(v));
  FrameBitstream b;
  const uint8_t type = r.u8();
  if (type != 'I' && type != 'P') throw DecodeError("container: unknown frame type");
  b.type = static_cast<FrameType>(type);
  b.precision_bits = r.u8();
  if (b.precision_bits < 2 || b.precision_bits > kMaxPrecisionBits) throw DecodeError("container: bad precision");
  b.lambda_tag = r.u8();
  if (!is_lambda_tag(b.lambda_tag)) throw DecodeError("container: unsupported lambda tag");
  b.n0 = r.u32();
  b.n1 = r.u32();
  const uint8_t count = r.u8();
  std::vector<std::pair<uint8_t, uint32_t>> table;
  std::set<uint8_t> seen;
  size_t total = 0;
  for (uint8_t i = 0; i < count; ++i) {
    const uint8_t id = r.u8();
    const uint32_t len = r.u32();
    if (id < 1 || id > 4) throw DecodeError("container: unknown substream id " + std::to_string(id));
    if (!seen.insert(id).second) throw DecodeError("container: duplicate substream id " + std::to_string(id));
    table.emplace_back(id, len);
    total += len;
  }
  if (total != r.remaining()) throw DecodeError("container: substream lengths do not match the payload size");
  for (const auto& [id, len] : table) {
    const auto body = r.bytes(len);
    b.substreams.push_back({static_cast<SubstreamId>(id), std::vector<uint8_t>(body.begin(), body.end())});
  }
  const bool inter = b.type == FrameType::kInter;
  if (!b.find(SubstreamId::kCoords2) || !b.find(SubstreamId::kResidual))
    throw DecodeError("container: coordinate or residual substream missing");
  if (inter != (b.find(SubstreamId::kMotion) != nullptr))
    throw DecodeError("container: motion substream must be present exactly for P frames");
  return b;
}

SparseTensor feature_extract(const PointCloudFrame& frame, const NetworkWeights<float>& w) {
  if (frame.size() == 0) throw EmptyInputError("feature_extract: empty frame");
  return down_block(down_block(frame.points, w.fe0), w.fe1);
}

ResidualCoding compress_residual(const SparseTensor& r, const EntropyModel& model, const ResidualWeights<float>& w) {
  require(model.channel_count() == static_cast<size_t>(w.enc_out.spec.out_channels),
          "compress_residual: entropy model channel count differs from the residual latent");
  ResidualCoding c;
  c.latent = sparse_conv(down_block(r, w.enc_down), w.enc_out);
  c.symbols = quantize<float>(c.latent.feats);
  c.bytes = range_encode(c.symbols, model);
  c.r_hat = synthesize_residual(c.symbols, r.coords, w);
  return c;
}

SparseTensor synthesize_residual(std::span<const int32_t> symbols, std::span<const Coord> c2,
                                 const ResidualWeights<float>& w) {
  const int c = w.dec_up.conv.spec.in_channels;
  auto coords = stride_down_coords(c2);
  require(symbols.size() == coords.size() * static_cast<size_t>(c), "residual: symbol count mismatch");
  SparseTensor latent(3, c, std::move(coords), std::vector<float>(symbols.begin(), symbols.end()));
  return irn_stack(sparse_conv(latent, w.dec_up.conv, c2), w.dec_up.irn);
}

Reconstruction reconstruct(const SparseTensor& y_dec, uint32_t n1, uint32_t n0, const NetworkWeights<float>& w,
                           int precision_bits) {
  check_precision(precision_bits);
  Reconstruction out;
  SparseTensor x = y_dec;
  const ReconBlockWeights<float>* blocks[2] = {&w.recon1, &w.recon0};
  const uint32_t keep[2] = {n1, n0};
  for (int s = 0; s < 2; ++s) {
    const auto cand = child_candidates(x.coords);
    SparseTensor h = irn_stack(sparse_conv(x, blocks[s]->up.conv, cand), blocks[s]->up.irn);
    auto scores = classify_occupancy(h, blocks[s]->cls);
    out.scales[static_cast<size_t>(s)] = {cand, scores.logits};
    x = adaptive_prune<float>(h, scores.logits, keep[s]);
  }
  out.frame = make_frame(x.coords, precision_bits);
  return out;
}

SparseTensor reference_latent(const DecodedFrame& prev, const Network& net, const CodecConfig& cfg) {
  if (cfg.latent_carry) return prev.latent;
  if (prev.frame.size() == 0) throw EmptyInputError("reference: decoded previous frame is empty");
  return feature_extract(prev.frame, net.weights);
}

EncodeResult encode_intra(const PointCloudFrame& frame, const Network& net, const CodecConfig& cfg) {
  FrameBitstream b = header_for(frame, FrameType::kIntra, cfg);
  const SparseTensor y = feature_extract(frame, net.weights);
  add_coords(b, y.coords, cfg);
  ResidualCoding res = compress_residual(y, net.residual_model, net.weights.residual);
  b.substreams.push_back({SubstreamId::kResidual, res.bytes});
  SparseTensor y_dec = res.r_hat;
  return finish_encode(std::move(b), std::move(y_dec), std::move(res), std::nullopt, net);
}

EncodeResult encode_inter(const PointCloudFrame& frame, const DecodedFrame& prev, const Network& net,
                          const CodecConfig& cfg) {
  FrameBitstream b = header_for(frame, FrameType::kInter, cfg);
  const SparseTensor y = feature_extract(frame, net.weights);
  const SparseTensor y_prev = reference_latent(prev, net, cfg);
  if (y_prev.empty()) throw EmptyInputError("encode_inter: previous latent is empty; code an I frame");
  add_coords(b, y.coords, cfg);
  Prediction pred = predict(y, y_prev, net.motion_model, net.weights.motion, cfg.alpha);
  b.substreams.push_back({SubstreamId::kMotion, pred.coding.bytes});
  SparseTensor r = y;
  for (size_t i = 0; i < r.feats.size(); ++i) r.feats[i] -= pred.y_bar.feats[i];
  ResidualCoding res = compress_residual(r, net.residual_model, net.weights.residual);
  b.substreams.push_back({SubstreamId::kResidual, res.bytes});
  SparseTensor y_dec = pred.y_bar;
  for (size_t i = 0; i < y_dec.feats.size(); ++i) y_dec.feats[i] += res.r_hat.feats[i];
  return finish_encode(std::move(b), std::move(y_dec), std::move(res), std::move(pred.coding), net);
}

DecodedFrame decode(const FrameBitstream& bits, const DecodedFrame* prev, const Network& net, const CodecConfig& cfg) {
  const Substream* coords = bits.find(SubstreamId::kCoords2);
  const Substream* residual = bits.find(SubstreamId::kResidual);
  if (!coords || !residual) throw DecodeError("decode: coordinate or residual substream missing");
  const bool inter = bits.type == FrameType::kInter;
  if (inter && !prev) throw MissingReferenceError("decode: P frame without a decoded reference frame");
  const int p = bits.precision_bits;
  const std::vector<Coord> c2 = read_coords(*coords, p - 2);
  if (const Substream* c3 = bits.find(SubstreamId::kCoords3))
    if (read_coords(*c3, p - 3) != stride_down_coords(c2)) throw DecodeError("decode: C^3 substream disagrees with C^2");
  if (bits.n1 > 0 && c2.empty()) throw DecodeError("decode: empty coordinate set");

  const size_t count = stride_down_coords(c2).size() * net.residual_model.channel_count();
  const auto symbols = range_decode(residual->bytes, net.residual_model, count);
  const SparseTensor r_hat = synthesize_residual(symbols, c2, net.weights.residual);

  SparseTensor y_dec = r_hat;
  if (inter) {
    const Substream* motion = bits.find(SubstreamId::kMotion);
    if (!motion) throw DecodeError("decode: P frame without a motion substream");
    const SparseTensor y_prev = reference_latent(*prev, net, cfg);
    const SparseTensor y_bar =
        predict_from_stream(motion->bytes, c2, y_prev, net.motion_model, net.weights.motion, cfg.alpha);
    y_dec = y_bar;
    for (size_t i = 0; i < y_dec.feats.size(); ++i) y_dec.feats[i] += r_hat.feats[i];
  }
  DecodedFrame out;
  out.frame = reconstruct(y_dec, bits.n1, bits.n0, net.weights, p).frame;
  out.latent = std::move(y_dec);
  return out;
}

double bce_from_logits(std::span<const float> logits, std::span<const uint8_t> occupied) {
  require(logits.size() == occupied.size(), "bce: size mismatch");
  if (logits.empty()) return 0.0;
  double sum = 0.0;
  // -[O ln s(z) + (1 - O) ln(1 - s(z))] = softplus(z) - O z
  for (size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    sum += softplus(z) - (occupied[i] ? z : 0.0);
  }
  return sum / static_cast<double>(logits.size());
}

LossReport eval_loss(const PointCloudFrame& original, const EncodeResult& enc, const Network& net, double lambda,
                     std::optional<uint64_t> noise_seed) {
  if (original.size() == 0) throw EmptyInputError("eval_loss: empty frame");
  double bits = 0.0;
  for (const auto& s : enc.bitstream.substreams)
    if (s.id == SubstreamId::kCoords2 || s.id == SubstreamId::kCoords3) bits += 8.0 * static_cast<double>(s.bytes.size());
  if (noise_seed) {
    bits += noisy_bits(enc.residual.latent, net.residual_model, *noise_seed);
    if (enc.motion) bits += noisy_bits(enc.motion->latent, net.motion_model, *noise_seed + 1);
  } else {
    bits += estimate_bits(enc.residual.symbols, net.residual_model);
    if (enc.motion) bits += estimate_bits(enc.motion->symbols, net.motion_model);
  }
  LossReport r;
  r.rate_bpp = bits / static_cast<double>(original.size());
  const auto truth1 = stride_down_coords(original.coords());
  r.scale_bce[0] = scale_bce(enc.recon.scales[0], truth1);
  r.scale_bce[1] = scale_bce(enc.recon.scales[1], original.coords());
  r.distortion = 0.5 * (r.scale_bce[0] + r.scale_bce[1]);
  r.lambda = lambda;
  r.loss = r.rate_bpp + lambda * r.distortion;
  return r;
}

}  // namespace ddpc
