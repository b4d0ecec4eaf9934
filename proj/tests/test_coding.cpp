#include <doctest.h>

#include <cstdint>
#include <vector>

#include "pcac/coding.hpp"
#include "pcac/rng.hpp"

using namespace pcac;

namespace {

MatXi random_symbols(Index rows, Index cols, int lo, int hi, Rng& rng) {
  MatXi s(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r)
      s(r, c) = lo + static_cast<int>(rng.below(static_cast<uint64_t>(hi - lo + 1)));
  return s;
}

}  // namespace

TEST_CASE("coded payload round-trips in-alphabet symbols") {
  Rng rng(90);
  EntropyModel<float> em = make_entropy_model<float>(4, 91);
  em.alphabet_max = 15;
  const CodingTables t = build_coding_tables(em);
  for (int trial = 0; trial < 20; ++trial) {
    const Index rows = 1 + static_cast<Index>(rng.below(200));
    const MatXi s = random_symbols(rows, 4, -15, 15, rng);
    const std::vector<uint8_t> payload = ac_encode(s, t);
    CHECK(ac_decode(payload, rows, 4, t) == s);
  }
}

TEST_CASE("out-of-alphabet symbols escape to raw values and round-trip") {
  Rng rng(92);
  EntropyModel<float> em = make_entropy_model<float>(2, 93);
  em.alphabet_max = 7;
  const CodingTables t = build_coding_tables(em);
  MatXi s = random_symbols(50000, 2, -200, 200, rng);  // mostly escapes
  s(0, 0) = INT32_MIN;
  s(1, 0) = INT32_MAX;
  s(2, 1) = -8;  // just past the edge
  s(3, 1) = 8;
  const std::vector<uint8_t> payload = ac_encode(s, t);
  CHECK(ac_decode(payload, s.rows(), 2, t) == s);
}

TEST_CASE("empty input codes to just a checksum") {
  const EntropyModel<float> em = make_entropy_model<float>(3, 94);
  const MatXi s(0, 3);
  const std::vector<uint8_t> payload = ac_encode(s, em);
  CHECK(payload.size() == 4);
  const MatXi back = ac_decode(payload, 0, 3, em);
  CHECK(back.rows() == 0);
  CHECK(back.cols() == 3);
}

TEST_CASE("coded size tracks the model estimate") {
  Rng rng(95);
  EntropyModel<double> em = make_entropy_model<double>(3, 96);
  // draw symbols from the model itself so the estimate is meaningful
  const CodingTables t = build_coding_tables(em);
  const Index rows = 4000;
  MatXi s(rows, 3);
  MatX<double> q(rows, 3);
  for (Index c = 0; c < 3; ++c) {
    const std::vector<uint32_t>& cum = t.cum[static_cast<size_t>(c)];
    for (Index r = 0; r < rows; ++r) {
      const uint32_t u = static_cast<uint32_t>(rng.below(kFreqTotal));
      Index sym = 0;
      while (cum[static_cast<size_t>(sym) + 1] <= u) ++sym;
      if (sym == t.escape_index()) sym = 0;  // keep every draw in-alphabet
      s(r, c) = static_cast<int>(sym) - static_cast<int>(t.alphabet_max);
      q(r, c) = s(r, c);
    }
  }
  const double est_bits = rate_estimate(q, em);
  const double actual_bits = 8.0 * static_cast<double>(ac_encode(s, t).size() - 4);
  CHECK(actual_bits <= est_bits * 1.05 + 512.0);
}

TEST_CASE("corrupted payloads are rejected, never mis-decoded") {
  Rng rng(97);
  EntropyModel<float> em = make_entropy_model<float>(2, 98);
  em.alphabet_max = 15;
  const CodingTables t = build_coding_tables(em);
  const MatXi s = random_symbols(300, 2, -15, 15, rng);
  const std::vector<uint8_t> payload = ac_encode(s, t);

  for (int trial = 0; trial < 100; ++trial) {
    std::vector<uint8_t> bad = payload;
    const size_t pos = rng.below(bad.size());
    bad[pos] ^= static_cast<uint8_t>(1 + rng.below(255));
    CHECK_THROWS_AS(ac_decode(bad, 300, 2, t), FormatError);
  }
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<uint8_t> bad = payload;
    bad.resize(rng.below(bad.size()));
    CHECK_THROWS_AS(ac_decode(bad, 300, 2, t), FormatError);
  }
}

TEST_CASE("payload is deterministic") {
  Rng rng(99);
  EntropyModel<float> em = make_entropy_model<float>(2, 100);
  const MatXi s = random_symbols(500, 2, -40, 40, rng);
  CHECK(ac_encode(s, em) == ac_encode(s, em));
}
