#include "pcac/ply.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

namespace pcac {
namespace {

enum class PropType { kInt8, kUint8, kInt16, kUint16, kInt32, kUint32, kFloat32, kFloat64 };

struct Property {
  std::string name;
  PropType type = PropType::kFloat32;
  bool is_list = false;
};

struct Element {
  std::string name;
  long long count = 0;
  std::vector<Property> props;
};

[[noreturn]] void parse_fail(long long byte, const std::string& what) {
  throw FormatError("ply parse error at byte " + std::to_string(byte) + ": " + what);
}

bool lookup_type(const std::string& s, PropType& out) {
  if (s == "char" || s == "int8") out = PropType::kInt8;
  else if (s == "uchar" || s == "uint8") out = PropType::kUint8;
  else if (s == "short" || s == "int16") out = PropType::kInt16;
  else if (s == "ushort" || s == "uint16") out = PropType::kUint16;
  else if (s == "int" || s == "int32") out = PropType::kInt32;
  else if (s == "uint" || s == "uint32") out = PropType::kUint32;
  else if (s == "float" || s == "float32") out = PropType::kFloat32;
  else if (s == "double" || s == "float64") out = PropType::kFloat64;
  else return false;
  return true;
}

size_t type_size(PropType t) {
  switch (t) {
    case PropType::kInt8:
    case PropType::kUint8: return 1;
    case PropType::kInt16:
    case PropType::kUint16: return 2;
    case PropType::kInt32:
    case PropType::kUint32:
    case PropType::kFloat32: return 4;
    case PropType::kFloat64: return 8;
  }
  return 0;
}

// Reads one little-endian scalar of the given type and widens it to double.
double read_binary_scalar(std::istream& in, PropType t, long long byte) {
  unsigned char buf[8];
  const size_t n = type_size(t);
  if (!in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n)))
    parse_fail(byte, "unexpected end of file");
  uint64_t bits = 0;
  for (size_t i = 0; i < n; ++i) bits |= static_cast<uint64_t>(buf[i]) << (8 * i);
  switch (t) {
    case PropType::kInt8: return static_cast<double>(static_cast<int8_t>(bits));
    case PropType::kUint8: return static_cast<double>(static_cast<uint8_t>(bits));
    case PropType::kInt16: return static_cast<double>(static_cast<int16_t>(bits));
    case PropType::kUint16: return static_cast<double>(static_cast<uint16_t>(bits));
    case PropType::kInt32: return static_cast<double>(static_cast<int32_t>(bits));
    case PropType::kUint32: return static_cast<double>(static_cast<uint32_t>(bits));
    case PropType::kFloat32: {
      float f;
      uint32_t b32 = static_cast<uint32_t>(bits);
      std::memcpy(&f, &b32, 4);
      return static_cast<double>(f);
    }
    case PropType::kFloat64: {
      double d;
      std::memcpy(&d, &bits, 8);
      return d;
    }
  }
  return 0.0;
}

// Reads one whitespace-separated value. Narrowing through the declared type
// keeps ascii and binary files of the same cloud bit-identical after load.
double read_ascii_scalar(std::istream& in, PropType t, long long byte) {
  double v;
  if (!(in >> v)) parse_fail(byte, "expected a numeric value");
  if (t == PropType::kFloat32) return static_cast<double>(static_cast<float>(v));
  return v;
}

}  // namespace

PointCloud read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);

  // --- header ---
  long long offset = 0;  // byte offset of the line currently being parsed
  auto next_line = [&](std::string& line) {
    offset = static_cast<long long>(in.tellg());
    if (!std::getline(in, line)) parse_fail(offset, "unexpected end of header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };

  std::string line;
  next_line(line);
  if (line != "ply") parse_fail(offset, "missing 'ply' magic");

  bool binary = false;
  bool have_format = false;
  std::vector<Element> elements;
  for (;;) {
    next_line(line);
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok.empty() || tok == "comment" || tok == "obj_info") continue;
    if (tok == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt == "ascii") binary = false;
      else if (fmt == "binary_little_endian") binary = true;
      else parse_fail(offset, "unsupported format '" + fmt + "'");
      have_format = true;
    } else if (tok == "element") {
      Element el;
      if (!(ls >> el.name >> el.count) || el.count < 0)
        parse_fail(offset, "malformed element declaration");
      elements.push_back(el);
    } else if (tok == "property") {
      if (elements.empty()) parse_fail(offset, "property before any element");
      Property p;
      std::string tname;
      ls >> tname;
      if (tname == "list") {
        std::string count_t, value_t;
        if (!(ls >> count_t >> value_t >> p.name))
          parse_fail(offset, "malformed list property");
        p.is_list = true;
      } else {
        if (!lookup_type(tname, p.type)) parse_fail(offset, "unknown type '" + tname + "'");
        if (!(ls >> p.name)) parse_fail(offset, "property missing a name");
      }
      elements.back().props.push_back(p);
    } else if (tok == "end_header") {
      break;
    } else {
      parse_fail(offset, "unknown header keyword '" + tok + "'");
    }
  }
  if (!have_format) parse_fail(offset, "header missing format line");

  // --- locate the vertex element and its x/y/z + color columns ---
  size_t vertex_idx = elements.size();
  for (size_t i = 0; i < elements.size(); ++i)
    if (elements[i].name == "vertex") { vertex_idx = i; break; }
  if (vertex_idx == elements.size()) parse_fail(offset, "no vertex element");

  const Element& vert = elements[vertex_idx];
  int col_of[6] = {-1, -1, -1, -1, -1, -1};  // x y z red green blue
  static const char* kWanted[6] = {"x", "y", "z", "red", "green", "blue"};
  for (size_t p = 0; p < vert.props.size(); ++p) {
    if (vert.props[p].is_list) parse_fail(offset, "list property on vertex element");
    for (int w = 0; w < 6; ++w)
      if (vert.props[p].name == kWanted[w]) col_of[w] = static_cast<int>(p);
  }
  for (int w = 0; w < 3; ++w)
    if (col_of[w] < 0) parse_fail(offset, std::string("vertex element missing '") + kWanted[w] + "'");
  if (col_of[3] < 0 || col_of[4] < 0 || col_of[5] < 0)
    throw FormatError(path + ": attributes required (no red/green/blue vertex properties)");
  if (vert.count == 0) throw FormatError(path + ": empty cloud");

  // --- elements preceding vertex must be skippable (fixed-size rows) ---
  for (size_t e = 0; e < vertex_idx; ++e) {
    for (const Property& p : elements[e].props)
      if (p.is_list)
        parse_fail(offset, "list property in element '" + elements[e].name +
                               "' ahead of vertex data");
    if (binary) {
      size_t row = 0;
      for (const Property& p : elements[e].props) row += type_size(p.type);
      in.seekg(static_cast<std::streamoff>(row) * elements[e].count, std::ios::cur);
    } else {
      double dummy;
      for (long long r = 0; r < elements[e].count; ++r)
        for (size_t p = 0; p < elements[e].props.size(); ++p)
          if (!(in >> dummy)) parse_fail(static_cast<long long>(in.tellg()), "truncated element data");
    }
  }

  // --- vertex rows ---
  PointCloud pc;
  pc.positions.resize(vert.count, 3);
  pc.colors.resize(vert.count, 3);
  pc.space = ColorSpace::kRgb;
  const size_t nprops = vert.props.size();
  std::vector<double> row(nprops);
  for (long long r = 0; r < vert.count; ++r) {
    const long long row_byte = static_cast<long long>(in.tellg());
    for (size_t p = 0; p < nprops; ++p)
      row[p] = binary ? read_binary_scalar(in, vert.props[p].type, row_byte)
                      : read_ascii_scalar(in, vert.props[p].type, row_byte);
    for (int w = 0; w < 3; ++w) pc.positions(r, w) = row[static_cast<size_t>(col_of[w])];
    for (int w = 0; w < 3; ++w) {
      double c = row[static_cast<size_t>(col_of[3 + w])] / 255.0;
      pc.colors(r, w) = std::min(1.0, std::max(0.0, c));
    }
  }
  validate(pc);
  return pc;
}

void write_ply(const PointCloud& pc, const std::string& path, PlyFormat format) {
  if (pc.positions.rows() == 0) throw PreconditionError("empty cloud");
  PointCloud out = pc;
  if (out.space == ColorSpace::kYuv) {
    out.colors = yuv_to_rgb<double>(out.colors);
    out.space = ColorSpace::kRgb;
  }
  validate(out);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  const Index n = out.positions.rows();
  os << "ply\n"
     << (format == PlyFormat::kAscii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n")
     << "element vertex " << n << "\n"
     << "property float x\nproperty float y\nproperty float z\n"
     << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
     << "end_header\n";

  auto byte_of = [](double c) {
    long v = std::lround(c * 255.0);  // lround: half away from zero
    return static_cast<unsigned char>(std::min(255l, std::max(0l, v)));
  };

  if (format == PlyFormat::kAscii) {
    char buf[160];
    for (Index i = 0; i < n; ++i) {
      // %.9g round-trips a float exactly
      std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g %u %u %u\n",
                    static_cast<double>(static_cast<float>(out.positions(i, 0))),
                    static_cast<double>(static_cast<float>(out.positions(i, 1))),
                    static_cast<double>(static_cast<float>(out.positions(i, 2))),
                    byte_of(out.colors(i, 0)), byte_of(out.colors(i, 1)),
                    byte_of(out.colors(i, 2)));
      os << buf;
    }
  } else {
    for (Index i = 0; i < n; ++i) {
      float xyz[3] = {static_cast<float>(out.positions(i, 0)),
                      static_cast<float>(out.positions(i, 1)),
                      static_cast<float>(out.positions(i, 2))};
      unsigned char rgb[3] = {byte_of(out.colors(i, 0)), byte_of(out.colors(i, 1)),
                              byte_of(out.colors(i, 2))};
      os.write(reinterpret_cast<const char*>(xyz), 12);
      os.write(reinterpret_cast<const char*>(rgb), 3);
    }
  }
  if (!os) throw FormatError("write failed for " + path);
}

}  // namespace pcac
