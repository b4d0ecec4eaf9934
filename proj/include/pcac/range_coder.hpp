#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

// Byte-oriented range coder with 64-bit low / 32-bit range and deferred
// carry propagation through the cached byte and its pending 0xFF run. A
// symbol is an interval [cum, cum+freq) out of `total`; total must not
// exceed 2^16 so range/total never degenerates between renormalizations.

namespace pcac {

class RangeEncoder {
 public:
  /// Narrows the interval to [cum, cum+freq) / total.
  void encode(uint32_t cum, uint32_t freq, uint32_t total);

  /// Writes `bits` (1..32) raw bits at exactly `bits` bits of cost.
  void encode_bits(uint32_t value, int bits);

  /// Flushes the final bytes and returns the stream. The encoder is spent.
  std::vector<uint8_t> finish();

  size_t byte_count() const { return out_.size(); }

 private:
  void shift_low();

  std::vector<uint8_t> out_;
  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint8_t cache_ = 0;
  uint64_t cache_size_ = 1;  // counts the cache byte plus pending 0xFF bytes
};

class RangeDecoder {
 public:
  /// Starts decoding; reads the 5 priming bytes immediately. Reading past the
  /// end at any point throws FormatError("bitstream underrun").
  RangeDecoder(const uint8_t* data, size_t size);

  /// Returns the scaled cumulative value in [0, total); follow with
  /// decode_update for the symbol whose [cum, cum+freq) contains it.
  uint32_t decode_freq(uint32_t total);
  void decode_update(uint32_t cum, uint32_t freq, uint32_t total);

  uint32_t decode_bits(int bits);

 private:
  uint8_t next_byte();

  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint32_t code_ = 0;
  uint32_t r_ = 0;  // range_/total carried from decode_freq to decode_update
};

}  // namespace pcac
