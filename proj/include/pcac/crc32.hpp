#pragma once

#include <cstddef>
#include <cstdint>

namespace pcac {

/// IEEE CRC-32 (reflected polynomial 0xEDB88320). Pass the previous value to
/// checksum data in chunks.
uint32_t crc32(const uint8_t* data, size_t size, uint32_t crc = 0);

}  // namespace pcac
