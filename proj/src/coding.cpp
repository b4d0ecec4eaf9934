#include "pcac/coding.hpp"

#include <algorithm>

#include "pcac/crc32.hpp"
#include "pcac/range_coder.hpp"

namespace pcac {
namespace {

void check_tables(const CodingTables& t, Index cols) {
  if (static_cast<size_t>(cols) > t.freq.size())
    throw PreconditionError("symbol matrix has more channels than the coding tables");
}

}  // namespace

std::vector<uint8_t> ac_encode(const MatXi& symbols, const CodingTables& tables) {
  check_tables(tables, symbols.cols());
  std::vector<uint8_t> coded;
  if (symbols.size() > 0) {
    RangeEncoder enc;
    const int32_t a = static_cast<int32_t>(tables.alphabet_max);
    for (Index r = 0; r < symbols.rows(); ++r)
      for (Index c = 0; c < symbols.cols(); ++c) {
        const auto& freq = tables.freq[static_cast<size_t>(c)];
        const auto& cum = tables.cum[static_cast<size_t>(c)];
        const int32_t s = symbols(r, c);
        if (s >= -a && s <= a) {
          const size_t idx = static_cast<size_t>(s + a);
          enc.encode(cum[idx], freq[idx], kFreqTotal);
        } else {
          const size_t esc = static_cast<size_t>(tables.escape_index());
          enc.encode(cum[esc], freq[esc], kFreqTotal);
          enc.encode_bits(static_cast<uint32_t>(s), 32);
        }
      }
    coded = enc.finish();
  }
  const uint32_t crc = crc32(coded.data(), coded.size());
  std::vector<uint8_t> payload;
  payload.reserve(coded.size() + 4);
  for (int i = 0; i < 4; ++i) payload.push_back(static_cast<uint8_t>(crc >> (8 * i)));
  payload.insert(payload.end(), coded.begin(), coded.end());
  return payload;
}

MatXi ac_decode(const std::vector<uint8_t>& payload, Index rows, Index cols,
                const CodingTables& tables) {
  check_tables(tables, cols);
  if (rows < 0 || cols < 0) throw PreconditionError("ac_decode: negative shape");
  if (payload.size() < 4) throw FormatError("bitstream underrun");
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<uint32_t>(payload[static_cast<size_t>(i)]) << (8 * i);
  const uint8_t* coded = payload.data() + 4;
  const size_t coded_size = payload.size() - 4;
  if (crc32(coded, coded_size) != stored) throw FormatError("corrupt stream");

  MatXi out(rows, cols);
  if (out.size() == 0) return out;
  RangeDecoder dec(coded, coded_size);
  const int32_t a = static_cast<int32_t>(tables.alphabet_max);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) {
      const auto& cum = tables.cum[static_cast<size_t>(c)];
      const auto& freq = tables.freq[static_cast<size_t>(c)];
      const uint32_t f = dec.decode_freq(kFreqTotal);
      // last interval whose cumulative start is <= f
      const size_t idx = static_cast<size_t>(
          std::upper_bound(cum.begin(), cum.end(), f) - cum.begin() - 1);
      dec.decode_update(cum[idx], freq[idx], kFreqTotal);
      if (idx == static_cast<size_t>(tables.escape_index()))
        out(r, c) = static_cast<int32_t>(dec.decode_bits(32));
      else
        out(r, c) = static_cast<int32_t>(idx) - a;
    }
  return out;
}

}  // namespace pcac
