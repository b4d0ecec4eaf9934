#pragma once

#include <cstdint>
#include <vector>

#include "pcac/types.hpp"

namespace pcac {

/// Per-patch entry of a compressed stream. `owned_points` counts the rows the
/// patch contributes to the reconstruction (its non-filler rows).
struct PatchRecord {
  uint32_t owned_points = 0;
  uint32_t latent_rows = 0;
  std::vector<uint8_t> payload;
};

/// Everything the decoder needs besides the geometry and the model. The
/// geometry travels losslessly out of band; patching is re-derived from it
/// with `patch_seed`, so no sampling information is stored.
struct Bitstream {
  uint32_t config_hash = 0;  // binds the stream to the model that wrote it
  uint64_t n_points = 0;
  uint64_t patch_seed = 0;
  uint32_t patch_size = 0;
  std::vector<PatchRecord> patches;
};

/// Serialized layout, all integers little-endian and all lengths explicit:
///   "A2CP" | version u8 | config_hash u32 | n_points u64 | patch_seed u64 |
///   patch_size u32 | patch_count u32 |
///   per patch: owned_points u32, latent_rows u32, payload_len u32 |
///   payload bytes, concatenated in patch order.
std::vector<uint8_t> pack_bitstream(const Bitstream& bs);

/// Throws FormatError on bad magic, unsupported version, or truncation.
Bitstream unpack_bitstream(const std::vector<uint8_t>& bytes);

}  // namespace pcac
