#include "pcac/bitstream.hpp"

#include <cstring>

namespace pcac {
namespace {

constexpr uint8_t kVersion = 1;
constexpr char kMagic[4] = {'A', '2', 'C', 'P'};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

struct Reader {
  const uint8_t* p;
  size_t left;

  void need(size_t n) const {
    if (n > left) throw FormatError("truncated bitstream");
  }
  uint8_t u8() {
    need(1);
    --left;
    return *p++;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    p += 8;
    left -= 8;
    return v;
  }
};

}  // namespace

std::vector<uint8_t> pack_bitstream(const Bitstream& bs) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  put_u32(out, bs.config_hash);
  put_u64(out, bs.n_points);
  put_u64(out, bs.patch_seed);
  put_u32(out, bs.patch_size);
  put_u32(out, static_cast<uint32_t>(bs.patches.size()));
  for (const PatchRecord& pr : bs.patches) {
    put_u32(out, pr.owned_points);
    put_u32(out, pr.latent_rows);
    put_u32(out, static_cast<uint32_t>(pr.payload.size()));
  }
  for (const PatchRecord& pr : bs.patches)
    out.insert(out.end(), pr.payload.begin(), pr.payload.end());
  return out;
}

Bitstream unpack_bitstream(const std::vector<uint8_t>& bytes) {
  Reader r{bytes.data(), bytes.size()};
  r.need(4);
  if (std::memcmp(r.p, kMagic, 4) != 0) throw FormatError("bad magic (not a compressed stream)");
  r.p += 4;
  r.left -= 4;
  const uint8_t version = r.u8();
  if (version != kVersion)
    throw FormatError("unsupported stream version " + std::to_string(version));
  Bitstream bs;
  bs.config_hash = r.u32();
  bs.n_points = r.u64();
  bs.patch_seed = r.u64();
  bs.patch_size = r.u32();
  const uint32_t count = r.u32();
  // 12 header bytes per patch must fit in what's left
  if (static_cast<uint64_t>(count) * 12 > r.left) throw FormatError("truncated bitstream");
  bs.patches.resize(count);
  std::vector<uint32_t> lens(count);
  for (uint32_t i = 0; i < count; ++i) {
    bs.patches[i].owned_points = r.u32();
    bs.patches[i].latent_rows = r.u32();
    lens[i] = r.u32();
  }
  for (uint32_t i = 0; i < count; ++i) {
    r.need(lens[i]);
    bs.patches[i].payload.assign(r.p, r.p + lens[i]);
    r.p += lens[i];
    r.left -= lens[i];
  }
  if (r.left != 0) throw FormatError("trailing bytes after bitstream payload");
  return bs;
}

}  // namespace pcac
