// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>

#include "ddpc/entropy.hpp"
#include "ddpc/range_coder.hpp"
#include "test_support.hpp"

using namespace ddpc;

namespace {

EntropyModel random_model(Rng& rng, size_t channels) {
  std::vector<ChannelPmf> pmfs;
  for (size_t c = 0; c < channels; ++c) {
    ChannelPmf p;
    p.offset = static_cast<int32_t>(rng.range(-20, 0));
    p.pmf.resize(static_cast<size_t>(rng.range(1, 60)));
    for (auto& v : p.pmf) v = rng.uniform01() < 0.2 ? 0.0 : rng.uniform(0.0, 1.0);
    p.pmf[0] += 1e-3;
    p.escape = rng.uniform01() < 0.5 ? 0.0 : rng.uniform(1e-4, 0.05);
    pmfs.push_back(p);
  }
  return build_table_from_pmf(pmfs);
}

/// Symbols drawn from the table itself, plus escapes where the channel allows them.
std::vector<int32_t> sample(Rng& rng, const EntropyModel& m, size_t n) {
  std::vector<int32_t> s(n);
  for (size_t i = 0; i < n; ++i) {
    const auto& ch = m.channel(i % m.channel_count());
    const uint32_t u = static_cast<uint32_t>(rng.below(kCdfTotal));
    size_t k = 0;
    while (ch.cdf[k + 1] <= u) ++k;
    s[i] = k == ch.symbols() ? ch.offset + static_cast<int32_t>(ch.symbols()) + static_cast<int32_t>(rng.range(0, 1000))
                             : ch.offset + static_cast<int32_t>(k);
  }
  return s;
}

}  // namespace

TEST_CASE("uniform pmf over four symbols quantizes to 16384 each") {
  const std::vector<ChannelPmf> p{{0, {1, 1, 1, 1}, 0.0}};
  const auto m = build_table_from_pmf(p);
  CHECK(m.channel(0).cdf == std::vector<uint32_t>{0, 16384, 32768, 49152, 65536, 65536});
  CHECK(m.channel(0).escape_freq() == 0);
  CHECK(m.symbol_bits(0, 2) == doctest::Approx(2.0));
  CHECK(estimate_bits(std::vector<int32_t>{0, 1, 2, 3, 3}, m) == doctest::Approx(10.0));
}

TEST_CASE("delta pmf keeps one count for every other symbol") {
  const std::vector<ChannelPmf> p{{-1, {0, 1, 0}, 0.0}, {0, {0, 1}, 0.5}};
  const auto m = build_table_from_pmf(p);
  CHECK(m.channel(0).cdf == std::vector<uint32_t>{0, 1, 65535, 65536, 65536});
  // escape mass 0.5 of total 1.5 -> round(65536 / 3) = 21845; floor 1 for symbol 0
  CHECK(m.channel(1).cdf == std::vector<uint32_t>{0, 1, 65536 - 21845, 65536});
  CHECK(m.probability(1, 7) == doctest::Approx(21845.0 / 65536.0));
  CHECK(m.symbol_bits(1, 7) == doctest::Approx(-std::log2(21845.0 / 65536.0) + 32.0));
}

TEST_CASE("invalid pmfs are rejected") {
  const std::vector<ChannelPmf> empty{{0, {}, 0.0}};
  CHECK_THROWS_AS(build_table_from_pmf(empty), EmptyInputError);
  const std::vector<ChannelPmf> neg{{0, {1, -1}, 0.0}};
  CHECK_THROWS_AS(build_table_from_pmf(neg), ContractViolation);
  const std::vector<ChannelPmf> none{{0, {0, 0}, 0.0}};
  CHECK_THROWS_AS(build_table_from_pmf(none), ContractViolation);
}

TEST_CASE("quantize rounds half away from zero") {
  const std::vector<double> v{2.4, -2.5, 2.5, -0.4, 0.5, std::numeric_limits<double>::quiet_NaN()};
  CHECK(quantize<double>(v) == std::vector<int32_t>{2, -3, 3, 0, 1, 0});
  const std::vector<float> big{1e12f, -1e12f};
  CHECK(quantize<float>(big) == std::vector<int32_t>{2147483647, -2147483647});
}

TEST_CASE("uniform noise is reproducible, bounded and centred") {
  const std::vector<double> zeros(1000000, 0.0);
  const auto a = add_noise<double>(zeros, 5);
  CHECK(a == add_noise<double>(zeros, 5));
  CHECK(a != add_noise<double>(zeros, 6));
  double sum = 0;
  for (double v : a) {
    REQUIRE(v >= -0.5);
    REQUIRE(v < 0.5);
    sum += v;
  }
  const double sigma_mean = std::sqrt(1.0 / 12.0 / 1e6);
  CHECK(std::abs(sum / 1e6) < 3 * sigma_mean);
}

TEST_CASE("range coder round trips random models and sequences") {
  Rng rng(301);
  for (int t = 0; t < 200; ++t) {
    const auto m = random_model(rng, static_cast<size_t>(rng.range(1, 8)));
    const auto s = sample(rng, m, static_cast<size_t>(rng.range(0, 3000)));
    const auto bytes = range_encode(s, m);
    REQUIRE(range_decode(bytes, m, s.size()) == s);
  }
}

TEST_CASE("coded size is within 1 percent plus 128 bits of the ideal") {
  Rng rng(302);
  for (int t = 0; t < 30; ++t) {
    const auto m = random_model(rng, 4);
    const auto s = sample(rng, m, static_cast<size_t>(rng.range(1000, 20000)));
    const double est = estimate_bits(s, m);
    const double actual = 8.0 * static_cast<double>(range_encode(s, m).size());
    CHECK(std::abs(actual - est) <= 0.01 * est + 128.0);
  }
}

TEST_CASE("escaped symbols round trip at both extremes") {
  const std::vector<ChannelPmf> p{geometric_pmf(4, 0.5, 1e-3)};
  const auto m = build_table_from_pmf(p);
  const std::vector<int32_t> s{0, 5, -5, 2147483647, -2147483647 - 1, 4, -4, 1000000};
  CHECK(range_decode(range_encode(s, m), m, s.size()) == s);
}

TEST_CASE("out-of-range symbol without escape mass is a contract violation") {
  const std::vector<ChannelPmf> p{{0, {1, 1}, 0.0}};
  const auto m = build_table_from_pmf(p);
  CHECK_THROWS_AS(range_encode(std::vector<int32_t>{0, 2}, m), ContractViolation);
}

TEST_CASE("truncated streams raise decode errors") {
  const std::vector<ChannelPmf> p{geometric_pmf(16, 0.8, 1e-3)};
  const auto m = build_table_from_pmf(p);
  Rng rng(303);
  const auto s = sample(rng, m, 4000);
  auto bytes = range_encode(s, m);
  CHECK_THROWS_AS(range_decode(std::vector<uint8_t>{}, m, 10), DecodeError);
  bytes.resize(bytes.size() / 4);
  CHECK_THROWS_AS(range_decode(bytes, m, s.size()), DecodeError);
}

TEST_CASE("tables survive a weight-store round trip") {
  const std::vector<ChannelPmf> pmfs{geometric_pmf(6, 0.5, 1e-3), geometric_pmf(6, 0.9, 0.0),
                                     {-3, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13}, 0.01}};
  const auto m = build_table_from_pmf(pmfs);
  WeightStore ws;
  m.store(ws, "motion");
  const auto back = EntropyModel::load(WeightStore::deserialize(ws.serialize()), "motion");
  CHECK(back == m);
  CHECK_THROWS(EntropyModel::load(ws, "residual"));
  WeightStore ragged;
  CHECK_THROWS_AS(build_table_from_pmf(std::vector<ChannelPmf>{geometric_pmf(2, 0.5, 0), geometric_pmf(3, 0.5, 0)})
                      .store(ragged, "motion"),
                  ContractViolation);
}

TEST_CASE("zigzag maps signed values onto interleaved naturals") {
  CHECK(zigzag(0) == 0u);
  CHECK(zigzag(-1) == 1u);
  CHECK(zigzag(1) == 2u);
  CHECK(zigzag(-2) == 3u);
  for (int32_t v : {0, 1, -1, 12345, -2147483647 - 1, 2147483647}) CHECK(unzigzag(zigzag(v)) == v);
}

TEST_CASE("noisy rate proxy equals table bits at integers and is flat for uniform tables") {
  const std::vector<ChannelPmf> p{geometric_pmf(8, 0.7, 1e-3), {-2, {1, 1, 1, 1, 1}, 0.0}};
  const auto m = build_table_from_pmf(p);
  for (int32_t s = -8; s <= 8; ++s) CHECK(noisy_symbol_bits(m, 0, s).bits == doctest::Approx(m.symbol_bits(0, s)));
  const auto flat = noisy_symbol_bits(m, 1, 0.3);
  CHECK(flat.gradient == doctest::Approx(0.0));
  CHECK(flat.bits == doctest::Approx(-std::log2(m.probability(1, 0))));
}
