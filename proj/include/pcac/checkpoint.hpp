#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "pcac/codec.hpp"
#include "pcac/crc32.hpp"
#include "pcac/entropy.hpp"

// Model persistence. Parameters are stored as little-endian float32 in visit
// order, so a checkpoint loads identically whatever scalar type each side
// computes in. The stream header's config hash is the CRC-32 of this
// serialized image, which binds a bitstream to the exact model that wrote it.

namespace pcac {
namespace detail {

inline void ck_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

inline void ck_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

struct CkReader {
  const uint8_t* p;
  size_t left;

  void need(size_t n) const {
    if (n > left) throw FormatError("corrupt model file: truncated");
  }
  uint8_t u8() {
    need(1);
    --left;
    return *p++;
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    left -= 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
};

}  // namespace detail

constexpr uint8_t kCheckpointVersion = 1;

/// Byte image of a model + entropy model (without the trailing file CRC).
template <typename Scalar>
std::vector<uint8_t> serialize_checkpoint(Model<Scalar>& model, EntropyModel<Scalar>& em) {
  std::vector<uint8_t> out;
  const char magic[4] = {'A', '2', 'C', 'K'};
  out.insert(out.end(), magic, magic + 4);
  out.push_back(kCheckpointVersion);
  detail::ck_u32(out, static_cast<uint32_t>(model.cfg.num_scales));
  detail::ck_u32(out, static_cast<uint32_t>(model.cfg.sample_ratio));
  detail::ck_u32(out, static_cast<uint32_t>(model.cfg.layers_per_block));
  detail::ck_u32(out, static_cast<uint32_t>(model.cfg.channels));
  detail::ck_u32(out, static_cast<uint32_t>(model.cfg.k_neighbors));
  detail::ck_u32(out, static_cast<uint32_t>(model.cfg.latent_channels));
  detail::ck_u32(out, static_cast<uint32_t>(em.channels));
  detail::ck_u32(out, static_cast<uint32_t>(em.alphabet_max));

  std::vector<std::pair<std::string, Tensor<Scalar>*>> tensors;
  auto collect = [&tensors](const std::string& name, Tensor<Scalar>& t) {
    tensors.emplace_back(name, &t);
  };
  model.visit(collect);
  em.visit(collect);

  detail::ck_u32(out, static_cast<uint32_t>(tensors.size()));
  for (auto& [name, t] : tensors) {
    detail::ck_u16(out, static_cast<uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    detail::ck_u32(out, static_cast<uint32_t>(t->rows()));
    detail::ck_u32(out, static_cast<uint32_t>(t->cols()));
    for (Index c = 0; c < t->cols(); ++c)
      for (Index r = 0; r < t->rows(); ++r)
        detail::ck_u32(out, std::bit_cast<uint32_t>(static_cast<float>(t->v(r, c))));
  }
  return out;
}

/// CRC-32 of the serialized image: identifies both architecture and weights.
template <typename Scalar>
uint32_t config_hash(Model<Scalar>& model, EntropyModel<Scalar>& em) {
  const std::vector<uint8_t> bytes = serialize_checkpoint(model, em);
  return crc32(bytes.data(), bytes.size());
}

template <typename Scalar>
void save_checkpoint(Model<Scalar>& model, EntropyModel<Scalar>& em, const std::string& path) {
  std::vector<uint8_t> bytes = serialize_checkpoint(model, em);
  detail::ck_u32(bytes, crc32(bytes.data(), bytes.size()));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError("write failed for " + path);
}

template <typename Scalar>
void load_checkpoint(const std::string& path, Model<Scalar>& model, EntropyModel<Scalar>& em) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 13) throw FormatError("corrupt model file: too short");
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= static_cast<uint32_t>(bytes[bytes.size() - 4 + static_cast<size_t>(i)]) << (8 * i);
  if (crc32(bytes.data(), bytes.size() - 4) != stored)
    throw FormatError("corrupt model file: checksum mismatch");

  detail::CkReader r{bytes.data(), bytes.size() - 4};
  r.need(4);
  if (r.p[0] != 'A' || r.p[1] != '2' || r.p[2] != 'C' || r.p[3] != 'K')
    throw FormatError("corrupt model file: bad magic");
  r.p += 4;
  r.left -= 4;
  if (r.u8() != kCheckpointVersion)
    throw FormatError("corrupt model file: unsupported version");

  CodecConfig cfg;
  cfg.num_scales = r.u32();
  cfg.sample_ratio = r.u32();
  cfg.layers_per_block = r.u32();
  cfg.channels = r.u32();
  cfg.k_neighbors = r.u32();
  cfg.latent_channels = r.u32();
  const Index em_channels = r.u32();
  const Index alphabet_max = r.u32();
  model = make_model<Scalar>(cfg);
  em.resize(em_channels);
  em.alphabet_max = alphabet_max;

  std::vector<std::pair<std::string, Tensor<Scalar>*>> tensors;
  auto collect = [&tensors](const std::string& name, Tensor<Scalar>& t) {
    tensors.emplace_back(name, &t);
  };
  model.visit(collect);
  em.visit(collect);

  if (r.u32() != tensors.size()) throw FormatError("corrupt model file: tensor count mismatch");
  for (auto& [name, t] : tensors) {
    const uint16_t len = r.u16();
    r.need(len);
    const std::string got(reinterpret_cast<const char*>(r.p), len);
    r.p += len;
    r.left -= len;
    if (got != name) throw FormatError("corrupt model file: unexpected tensor '" + got + "'");
    const Index rows = r.u32();
    const Index cols = r.u32();
    if (rows != t->rows() || cols != t->cols())
      throw FormatError("corrupt model file: shape mismatch for '" + name + "'");
    for (Index c = 0; c < cols; ++c)
      for (Index row = 0; row < rows; ++row)
        t->v(row, c) = static_cast<Scalar>(std::bit_cast<float>(r.u32()));
  }
  if (r.left != 0) throw FormatError("corrupt model file: trailing bytes");
}

}  // namespace pcac
