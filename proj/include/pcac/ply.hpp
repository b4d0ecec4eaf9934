#pragma once

#include <string>

#include "pcac/pointcloud.hpp"

namespace pcac {

enum class PlyFormat { kAscii, kBinaryLittleEndian };

/// Reads a PLY file with float/double x,y,z and 8-bit red,green,blue vertex
/// properties (ascii or binary_little_endian). Colors come back in [0,1],
/// tagged RGB. Unknown scalar vertex properties are skipped; elements after
/// the vertex element are ignored.
PointCloud read_ply(const std::string& path);

/// Writes positions as 32-bit floats and colors as 8-bit red,green,blue
/// (rounded half away from zero). YUV clouds are converted to RGB first so
/// the red/green/blue properties always mean what they say.
void write_ply(const PointCloud& pc, const std::string& path,
               PlyFormat format = PlyFormat::kBinaryLittleEndian);

}  // namespace pcac
