#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "regpipe/io/text.hpp"
#include "regpipe/point_cloud.hpp"

namespace regpipe {

enum class CloudFormat { PlyAscii, PlyBinaryLe, XyzText };

constexpr std::string_view to_string(CloudFormat f) {
  switch (f) {
    case CloudFormat::PlyAscii: return "ply_ascii";
    case CloudFormat::PlyBinaryLe: return "ply_binary_le";
    case CloudFormat::XyzText: return "xyz_text";
  }
  return "?";
}

inline CloudFormat parse_cloud_format(std::string_view s) {
  for (auto f : {CloudFormat::PlyAscii, CloudFormat::PlyBinaryLe, CloudFormat::XyzText})
    if (to_string(f) == s) return f;
  fail(ErrorCode::ConfigError, "unknown cloud format '" + std::string(s) + "'");
}

namespace detail {

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

inline std::optional<PlyType> ply_type(std::string_view s) {
  if (s == "char" || s == "int8") return PlyType::I8;
  if (s == "uchar" || s == "uint8") return PlyType::U8;
  if (s == "short" || s == "int16") return PlyType::I16;
  if (s == "ushort" || s == "uint16") return PlyType::U16;
  if (s == "int" || s == "int32") return PlyType::I32;
  if (s == "uint" || s == "uint32") return PlyType::U32;
  if (s == "float" || s == "float32") return PlyType::F32;
  if (s == "double" || s == "float64") return PlyType::F64;
  return std::nullopt;
}

inline std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::I8:
    case PlyType::U8: return 1;
    case PlyType::I16:
    case PlyType::U16: return 2;
    case PlyType::I32:
    case PlyType::U32:
    case PlyType::F32: return 4;
    case PlyType::F64: return 8;
  }
  return 0;
}

template <class T>
T load_le(const unsigned char* p) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  T v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline double ply_value(PlyType t, const unsigned char* p) {
  switch (t) {
    case PlyType::I8: return load_le<std::int8_t>(p);
    case PlyType::U8: return load_le<std::uint8_t>(p);
    case PlyType::I16: return load_le<std::int16_t>(p);
    case PlyType::U16: return load_le<std::uint16_t>(p);
    case PlyType::I32: return load_le<std::int32_t>(p);
    case PlyType::U32: return load_le<std::uint32_t>(p);
    case PlyType::F32: return load_le<float>(p);
    case PlyType::F64: return load_le<double>(p);
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::F64;
  bool is_list = false;
  PlyType count_type = PlyType::U8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

struct PlyHeader {
  bool binary = false;
  std::vector<PlyElement> elements;
  std::size_t lines = 0;  // header lines including end_header
};

inline PlyHeader parse_ply_header(std::istream& in) {
  PlyHeader h;
  std::string line;
  auto bad = [&](const std::string& what) {
    fail(ErrorCode::ParseError, "PLY header line " + std::to_string(h.lines) + ": " + what);
  };
  if (!std::getline(in, line) || trim(line) != "ply") fail(ErrorCode::ParseError, "line 1: missing 'ply' magic");
  h.lines = 1;
  bool have_format = false;
  while (std::getline(in, line)) {
    ++h.lines;
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") {
      if (!have_format) bad("no format line");
      return h;
    }
    if (tok[0] == "format") {
      if (tok.size() < 2) bad("incomplete format line");
      if (tok[1] == "ascii") h.binary = false;
      else if (tok[1] == "binary_little_endian") h.binary = true;
      else bad("unsupported format '" + tok[1] + "'");
      have_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) bad("malformed element line");
      PlyElement e;
      e.name = tok[1];
      e.count = parse_count(tok[2], "PLY header line " + std::to_string(h.lines));
      h.elements.push_back(std::move(e));
    } else if (tok[0] == "property") {
      if (h.elements.empty()) bad("property before any element");
      PlyProperty p;
      if (tok.size() == 5 && tok[1] == "list") {
        const auto ct = ply_type(tok[2]), vt = ply_type(tok[3]);
        if (!ct || !vt) bad("unknown list type");
        p.is_list = true;
        p.count_type = *ct;
        p.type = *vt;
        p.name = tok[4];
      } else if (tok.size() == 3) {
        const auto t = ply_type(tok[1]);
        if (!t) bad("unknown property type '" + tok[1] + "'");
        p.type = *t;
        p.name = tok[2];
      } else {
        bad("malformed property line");
      }
      h.elements.back().properties.push_back(std::move(p));
    } else {
      bad("unexpected keyword '" + tok[0] + "'");
    }
  }
  fail(ErrorCode::ParseError, "PLY header is missing end_header");
}

/// Where each recognized vertex property lands; -1 when absent.
struct VertexLayout {
  std::array<int, 3> xyz{-1, -1, -1};
  std::array<int, 3> normal{-1, -1, -1};
  int intensity = -1;
};

inline VertexLayout vertex_layout(const PlyElement& e, std::vector<std::string>* warnings) {
  VertexLayout l;
  const char* names[] = {"x", "y", "z", "nx", "ny", "nz"};
  for (std::size_t i = 0; i < e.properties.size(); ++i) {
    const auto& p = e.properties[i];
    bool used = false;
    if (!p.is_list) {
      for (int a = 0; a < 6; ++a)
        if (p.name == names[a]) {
          (a < 3 ? l.xyz[a] : l.normal[a - 3]) = static_cast<int>(i);
          used = true;
        }
      if (p.name == "intensity") {
        l.intensity = static_cast<int>(i);
        used = true;
      }
    }
    if (!used && warnings)
      warnings->push_back(std::string(to_string(ErrorCode::UnsupportedProperty)) + ": skipping vertex property '" +
                          p.name + "'");
  }
  if (l.xyz[0] < 0 || l.xyz[1] < 0 || l.xyz[2] < 0) fail(ErrorCode::ParseError, "PLY vertex element lacks x/y/z");
  const int normals = (l.normal[0] >= 0) + (l.normal[1] >= 0) + (l.normal[2] >= 0);
  if (normals != 0 && normals != 3) {
    if (warnings) warnings->push_back("UnsupportedProperty: incomplete normal, ignoring nx/ny/nz");
    l.normal = {-1, -1, -1};
  }
  return l;
}

inline void store_vertex(PointCloud& cloud, const VertexLayout& l, const std::vector<double>& v) {
  cloud.points.emplace_back(v[l.xyz[0]], v[l.xyz[1]], v[l.xyz[2]]);
  if (l.normal[0] >= 0) {
    Vector3 n(v[l.normal[0]], v[l.normal[1]], v[l.normal[2]]);
    const double len = n.norm();
    cloud.normals.push_back(len > 0.0 ? Vector3(n / len) : Vector3::Zero());
  }
  if (l.intensity >= 0) cloud.scalar.push_back(v[l.intensity]);
}

inline PointCloud read_ply_ascii(std::istream& in, const PlyHeader& h, std::vector<std::string>* warnings) {
  PointCloud cloud;
  std::size_t line_no = h.lines;
  std::string line;
  for (const auto& e : h.elements) {
    const bool vertex = e.name == "vertex";
    std::optional<VertexLayout> layout;
    if (vertex) {
      layout = vertex_layout(e, warnings);
      cloud.points.reserve(e.count);
    }
    std::vector<double> values(e.properties.size());
    for (std::size_t r = 0; r < e.count; ++r) {
      if (!std::getline(in, line))
        fail(ErrorCode::ParseError, "line " + std::to_string(line_no + 1) + ": unexpected end of file");
      ++line_no;
      if (!vertex) continue;
      const auto tok = split_ws(line);
      std::size_t t = 0;
      for (std::size_t i = 0; i < e.properties.size(); ++i) {
        const std::string where = "line " + std::to_string(line_no);
        if (t >= tok.size()) fail(ErrorCode::ParseError, where + ": too few values");
        if (e.properties[i].is_list) {
          const std::size_t n = parse_count(tok[t++], where);
          if (t + n > tok.size()) fail(ErrorCode::ParseError, where + ": list runs past end of line");
          t += n;
          values[i] = 0.0;
        } else {
          values[i] = parse_double(tok[t++], where);
        }
      }
      store_vertex(cloud, *layout, values);
    }
  }
  return cloud;
}

inline PointCloud read_ply_binary(std::istream& in, const PlyHeader& h, std::vector<std::string>* warnings) {
  const std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(body.data());
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > body.size())
      fail(ErrorCode::ParseError, "binary PLY truncated at byte offset " + std::to_string(pos) + " of the body");
  };
  PointCloud cloud;
  for (const auto& e : h.elements) {
    const bool vertex = e.name == "vertex";
    std::optional<VertexLayout> layout;
    if (vertex) {
      layout = vertex_layout(e, warnings);
      cloud.points.reserve(e.count);
    }
    std::vector<double> values(e.properties.size());
    for (std::size_t r = 0; r < e.count; ++r) {
      for (std::size_t i = 0; i < e.properties.size(); ++i) {
        const auto& p = e.properties[i];
        if (p.is_list) {
          need(ply_size(p.count_type));
          const double n = ply_value(p.count_type, data + pos);
          pos += ply_size(p.count_type);
          if (n < 0) fail(ErrorCode::ParseError, "negative list length at byte offset " + std::to_string(pos));
          need(static_cast<std::size_t>(n) * ply_size(p.type));
          pos += static_cast<std::size_t>(n) * ply_size(p.type);
          values[i] = 0.0;
        } else {
          need(ply_size(p.type));
          values[i] = ply_value(p.type, data + pos);
          pos += ply_size(p.type);
        }
      }
      if (vertex) store_vertex(cloud, *layout, values);
    }
  }
  return cloud;
}

inline PointCloud read_xyz(std::istream& in) {
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> columns;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    if (tok.size() != 3 && tok.size() != 4) fail(ErrorCode::ParseError, where + ": expected 'x y z [intensity]'");
    if (!columns) columns = tok.size();
    if (tok.size() != *columns) fail(ErrorCode::ParseError, where + ": column count changed");
    cloud.points.emplace_back(parse_double(tok[0], where), parse_double(tok[1], where), parse_double(tok[2], where));
    if (tok.size() == 4) cloud.scalar.push_back(parse_double(tok[3], where));
  }
  return cloud;
}

inline void append_le(std::string& out, double v) {
  char buf[sizeof v];
  std::memcpy(buf, &v, sizeof v);
  out.append(buf, sizeof v);
}

}  // namespace detail

/// Reads a cloud. PLY files may carry any extra properties or elements; the
/// unrecognized ones are skipped with a message in `warnings`.
inline PointCloud read_cloud(std::istream& in, CloudFormat format, std::vector<std::string>* warnings = nullptr) {
  PointCloud cloud;
  if (format == CloudFormat::XyzText) {
    cloud = detail::read_xyz(in);
  } else {
    const auto header = detail::parse_ply_header(in);
    if (header.binary != (format == CloudFormat::PlyBinaryLe))
      fail(ErrorCode::ParseError, std::string("PLY header declares ") + (header.binary ? "binary" : "ascii") +
                                      " but " + std::string(to_string(format)) + " was requested");
    cloud = header.binary ? detail::read_ply_binary(in, header, warnings) : detail::read_ply_ascii(in, header, warnings);
  }
  cloud.validate();
  return cloud;
}

inline PointCloud read_cloud(const std::string& path, CloudFormat format, std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  return read_cloud(in, format, warnings);
}

/// Format from the file itself: PLY by its header, anything else as XYZ text.
inline CloudFormat sniff_cloud_format(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (trim(line) != "ply") return CloudFormat::XyzText;
  while (std::getline(in, line)) {
    const auto tok = split_ws(line);
    if (tok.size() >= 2 && tok[0] == "format")
      return tok[1] == "binary_little_endian" ? CloudFormat::PlyBinaryLe : CloudFormat::PlyAscii;
    if (!tok.empty() && tok[0] == "end_header") break;
  }
  return CloudFormat::PlyAscii;
}

inline PointCloud read_cloud(const std::string& path, std::vector<std::string>* warnings = nullptr) {
  return read_cloud(path, sniff_cloud_format(path), warnings);
}

/// Writes x/y/z (plus nx/ny/nz and intensity when present) as doubles; ascii
/// values carry 17 significant digits so they read back exactly.
inline void write_cloud(const PointCloud& cloud, std::ostream& out, CloudFormat format) {
  cloud.validate();
  std::string buf;
  if (format == CloudFormat::XyzText) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& p = cloud.points[i];
      buf += format_double(p.x()) + ' ' + format_double(p.y()) + ' ' + format_double(p.z());
      if (cloud.has_scalar()) buf += ' ' + format_double(cloud.scalar[i]);
      buf += '\n';
    }
  } else {
    const bool binary = format == CloudFormat::PlyBinaryLe;
    buf += "ply\nformat ";
    buf += binary ? "binary_little_endian" : "ascii";
    buf += " 1.0\nelement vertex " + std::to_string(cloud.size()) + '\n';
    buf += "property double x\nproperty double y\nproperty double z\n";
    if (cloud.has_normals()) buf += "property double nx\nproperty double ny\nproperty double nz\n";
    if (cloud.has_scalar()) buf += "property double intensity\n";
    buf += "end_header\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      std::vector<double> row{cloud.points[i].x(), cloud.points[i].y(), cloud.points[i].z()};
      if (cloud.has_normals()) row.insert(row.end(), {cloud.normals[i].x(), cloud.normals[i].y(), cloud.normals[i].z()});
      if (cloud.has_scalar()) row.push_back(cloud.scalar[i]);
      if (binary) {
        for (double v : row) detail::append_le(buf, v);
      } else {
        for (std::size_t k = 0; k < row.size(); ++k) buf += (k ? " " : "") + format_double(row[k]);
        buf += '\n';
      }
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(ErrorCode::IoError, "write failed");
}

inline void write_cloud(const PointCloud& cloud, const std::string& path, CloudFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot create '" + path + "'");
  write_cloud(cloud, out, format);
}

}  // namespace regpipe
