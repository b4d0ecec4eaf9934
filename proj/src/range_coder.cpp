#include "pcac/range_coder.hpp"

#include "pcac/types.hpp"

namespace pcac {
namespace {

constexpr uint32_t kTopValue = 1u << 24;  // renormalize below this range

}  // namespace

void RangeEncoder::shift_low() {
  if (static_cast<uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    // carry is settled: release the cached byte and the 0xFF run behind it
    const uint8_t carry = static_cast<uint8_t>(low_ >> 32);
    uint8_t b = cache_;
    do {
      out_.push_back(static_cast<uint8_t>(b + carry));
      b = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ << 8) & 0xFFFFFFFFull;
}

void RangeEncoder::encode(uint32_t cum, uint32_t freq, uint32_t total) {
  if (freq == 0 || total == 0 || total > (1u << 16) || cum + freq > total)
    throw PreconditionError("range encoder: bad symbol interval");
  const uint32_t r = range_ / total;
  low_ += static_cast<uint64_t>(r) * cum;
  if (cum + freq < total)
    range_ = r * freq;
  else
    range_ -= r * cum;  // the last interval absorbs the division remainder
  while (range_ < kTopValue) {
    shift_low();
    range_ <<= 8;
  }
}

void RangeEncoder::encode_bits(uint32_t value, int bits) {
  if (bits < 1 || bits > 32) throw PreconditionError("range encoder: bits must be 1..32");
  while (bits > 0) {
    const int chunk = bits > 16 ? 16 : bits;
    bits -= chunk;
    const uint32_t v = (value >> bits) & ((1u << chunk) - 1u);
    encode(v, 1, 1u << chunk);
  }
}

std::vector<uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(const uint8_t* data, size_t size) : data_(data), size_(size) {
  next_byte();  // the encoder's initial cache byte; carries no information
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
  if (pos_ >= size_) throw FormatError("bitstream underrun");
  return data_[pos_++];
}

uint32_t RangeDecoder::decode_freq(uint32_t total) {
  if (total == 0 || total > (1u << 16)) throw PreconditionError("range decoder: bad total");
  r_ = range_ / total;
  const uint32_t v = code_ / r_;
  return v < total ? v : total - 1;
}

void RangeDecoder::decode_update(uint32_t cum, uint32_t freq, uint32_t total) {
  code_ -= cum * r_;
  if (cum + freq < total)
    range_ = r_ * freq;
  else
    range_ -= r_ * cum;
  while (range_ < kTopValue) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
}

uint32_t RangeDecoder::decode_bits(int bits) {
  if (bits < 1 || bits > 32) throw PreconditionError("range decoder: bits must be 1..32");
  uint32_t value = 0;
  while (bits > 0) {
    const int chunk = bits > 16 ? 16 : bits;
    bits -= chunk;
    const uint32_t f = decode_freq(1u << chunk);
    decode_update(f, 1, 1u << chunk);
    value = (value << chunk) | f;
  }
  return value;
}

}  // namespace pcac
