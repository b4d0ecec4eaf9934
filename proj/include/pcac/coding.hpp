#pragma once

#include <cstdint>
#include <vector>

#include "pcac/entropy.hpp"
#include "pcac/types.hpp"

namespace pcac {

/// Entropy-codes a symbol matrix (columns are channels, scanned row-major)
/// against per-channel tables. In-alphabet values use their table interval;
/// anything outside [-A, A] codes an escape followed by the raw 32-bit value.
/// Layout: 4-byte little-endian CRC-32 of the coded bytes, then the coded
/// bytes. A zero-size matrix yields just the checksum.
std::vector<uint8_t> ac_encode(const MatXi& symbols, const CodingTables& tables);

/// Inverse of ac_encode; the caller supplies the shape. Checksum mismatch
/// throws FormatError("corrupt stream"); truncation throws
/// FormatError("bitstream underrun"). Never crashes on arbitrary bytes.
MatXi ac_decode(const std::vector<uint8_t>& payload, Index rows, Index cols,
                const CodingTables& tables);

template <typename Scalar>
std::vector<uint8_t> ac_encode(const MatXi& symbols, const EntropyModel<Scalar>& em) {
  return ac_encode(symbols, build_coding_tables(em));
}

template <typename Scalar>
MatXi ac_decode(const std::vector<uint8_t>& payload, Index rows, Index cols,
                const EntropyModel<Scalar>& em) {
  return ac_decode(payload, rows, cols, build_coding_tables(em));
}

}  // namespace pcac
