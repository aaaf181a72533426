#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "regpipe/descriptors/feature.hpp"
#include "regpipe/detectors/keypoint.hpp"
#include "regpipe/evaluation.hpp"
#include "regpipe/io/text.hpp"
#include "regpipe/range_image.hpp"
#include "regpipe/rigid_transform.hpp"

namespace regpipe {

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot create '" + path + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorCode::IoError, "write to '" + path + "' failed");
}

namespace detail {

/// Non-empty lines with '#' comments removed, paired with 1-based line numbers.
inline std::vector<std::pair<std::size_t, std::string>> content_lines(const std::string& text) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = trim(line);
    if (!t.empty()) out.emplace_back(n, std::string(t));
  }
  return out;
}

}  // namespace detail

// Transform: four rows of four numbers.

inline std::string format_transform(const RigidTransform& t) {
  const Eigen::Matrix4d m = t.matrix();
  std::string out;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) out += (c ? " " : "") + format_double(m(r, c));
    out += '\n';
  }
  return out;
}

inline RigidTransform parse_transform(const std::string& text) {
  const auto lines = detail::content_lines(text);
  if (lines.size() != 4) fail(ErrorCode::ParseError, "transform needs 4 rows, found " + std::to_string(lines.size()));
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    const auto& [n, line] = lines[static_cast<std::size_t>(r)];
    const auto tok = split_ws(line);
    if (tok.size() != 4) fail(ErrorCode::ParseError, "line " + std::to_string(n) + ": expected 4 values");
    for (int c = 0; c < 4; ++c) m(r, c) = parse_double(tok[static_cast<std::size_t>(c)], "line " + std::to_string(n));
  }
  return RigidTransform::from_matrix(m);
}

// Keypoints: "x y z saliency scale" per line.

inline std::string format_keypoints(const std::vector<Keypoint>& kps) {
  std::string out = "# x y z saliency scale\n";
  if (!kps.empty()) out += "# detector " + std::string(to_string(kps.front().detector)) + '\n';
  for (const auto& k : kps)
    out += format_double(k.position.x()) + ' ' + format_double(k.position.y()) + ' ' + format_double(k.position.z()) +
           ' ' + format_double(k.saliency) + ' ' + format_double(k.scale) + '\n';
  return out;
}

inline std::vector<Keypoint> parse_keypoints(const std::string& text) {
  std::vector<Keypoint> out;
  for (const auto& [n, line] : detail::content_lines(text)) {
    const auto tok = split_ws(line);
    const std::string where = "line " + std::to_string(n);
    if (tok.size() < 3 || tok.size() > 5) fail(ErrorCode::ParseError, where + ": expected 'x y z [saliency [scale]]'");
    Keypoint k;
    k.position = Point3(parse_double(tok[0], where), parse_double(tok[1], where), parse_double(tok[2], where));
    if (tok.size() > 3) k.saliency = parse_double(tok[3], where);
    if (tok.size() > 4) k.scale = parse_double(tok[4], where);
    out.push_back(k);
  }
  return out;
}

// Descriptors: one CSV row per keypoint that received a feature.

inline std::string descriptor_csv(const std::vector<Keypoint>& kps, const DescriptorList& features) {
  std::size_t length = 0;
  for (const auto& f : features)
    if (f) length = std::max(length, f->values.size());
  std::string out = "keypoint,x,y,z,method";
  for (std::size_t i = 0; i < length; ++i) out += ",v" + std::to_string(i);
  out += '\n';
  for (std::size_t k = 0; k < features.size() && k < kps.size(); ++k) {
    if (!features[k]) continue;
    const auto& p = kps[k].position;
    out += std::to_string(k) + ',' + format_double(p.x()) + ',' + format_double(p.y()) + ',' + format_double(p.z()) +
           ',' + std::string(to_string(features[k]->method));
    for (double v : features[k]->values) out += ',' + format_double(v);
    out += '\n';
  }
  return out;
}

// Check spheres: "x y z [radius]" per line, in file order.

inline std::vector<CheckSphere> parse_spheres(const std::string& text) {
  std::vector<CheckSphere> out;
  for (const auto& [n, line] : detail::content_lines(text)) {
    const auto tok = split_ws(line);
    const std::string where = "line " + std::to_string(n);
    if (tok.size() != 3 && tok.size() != 4) fail(ErrorCode::ParseError, where + ": expected 'x y z [radius]'");
    CheckSphere s;
    s.center = Point3(parse_double(tok[0], where), parse_double(tok[1], where), parse_double(tok[2], where));
    if (tok.size() == 4) s.radius = parse_double(tok[3], where);
    out.push_back(s);
  }
  return out;
}

inline std::string format_spheres(const std::vector<CheckSphere>& spheres) {
  std::string out = "# x y z radius\n";
  for (const auto& s : spheres)
    out += format_double(s.center.x()) + ' ' + format_double(s.center.y()) + ' ' + format_double(s.center.z()) + ' ' +
           format_double(s.radius) + '\n';
  return out;
}

inline std::string sphere_accuracy_csv(const std::vector<SphereAccuracy>& acc) {
  std::string out = "sphere,x,y,z,radius,mean,sd,matched,failed\n";
  for (std::size_t k = 0; k < acc.size(); ++k) {
    const auto& a = acc[k];
    out += std::to_string(k + 1) + ',' + format_double(a.sphere.center.x()) + ',' + format_double(a.sphere.center.y()) +
           ',' + format_double(a.sphere.center.z()) + ',' + format_double(a.sphere.radius) + ',' +
           (a.failed ? "F" : format_double(a.mean_distance)) + ',' + (a.failed ? "F" : format_double(a.sd_distance)) +
           ',' + std::to_string(a.matched_count) + ',' + (a.failed ? "true" : "false") + '\n';
  }
  return out;
}

/// 8-bit binary PGM of a range image: near is bright, empty pixels are black.
inline std::string range_image_pgm(const RangeImage& img) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t px = 0; px < img.range.size(); ++px)
    if (img.filled(px)) {
      lo = std::min(lo, img.range[px]);
      hi = std::max(hi, img.range[px]);
    }
  std::string out = "P5\n" + std::to_string(img.width) + ' ' + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.range.size());
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t px = 0; px < img.range.size(); ++px) {
    if (!img.filled(px)) {
      out += '\0';
      continue;
    }
    const double t = (img.range[px] - lo) / span;
    out += static_cast<char>(static_cast<unsigned char>(255.0 - 254.0 * t + 0.5));
  }
  return out;
}

}  // namespace regpipe
