#pragma once

// MOT16-style text files, one box per line:
//   frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z
// x,y,z carry the world position, -1,-1,-1 when absent. Numbers use the
// shortest representation that parses back to the same double.

#include <algorithm>
#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "geoloc/atomic_file.hpp"
#include "geoloc/error.hpp"
#include "geoloc/scene.hpp"

namespace geoloc {

struct MotRow {
  int frame = 0;
  int id = -1;
  BBox bbox;
  double confidence = 1.0;
  std::optional<Vec3> position;

  friend bool operator==(const MotRow&, const MotRow&) = default;
};

inline std::string format_number(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) fail(ErrorKind::Format, "cannot format number");
  return std::string(buf.data(), end);
}

inline void sort_mot_rows(std::vector<MotRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const MotRow& a, const MotRow& b) { return a.frame != b.frame ? a.frame < b.frame : a.id < b.id; });
}

/// Serializes rows frame-major, then id-major. No header line.
inline std::string write_mot(std::vector<MotRow> rows) {
  sort_mot_rows(rows);
  std::string out;
  for (const auto& r : rows) {
    out += std::to_string(r.frame) + ',' + std::to_string(r.id) + ',' + format_number(r.bbox.left) + ',' +
           format_number(r.bbox.top) + ',' + format_number(r.bbox.width) + ',' + format_number(r.bbox.height) + ',' +
           format_number(r.confidence);
    if (r.position) {
      out += ',' + format_number(r.position->x()) + ',' + format_number(r.position->y()) + ',' +
             format_number(r.position->z());
    } else {
      out += ",-1,-1,-1";
    }
    out += '\n';
  }
  return out;
}

namespace detail {

inline double parse_number(std::string_view s, std::size_t line, int column) {
  double v = 0.0;
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    fail(ErrorKind::Format, "line " + std::to_string(line) + ": field " + std::to_string(column) + " is not a number");
  return v;
}

inline int parse_int(std::string_view s, std::size_t line, int column) {
  const double v = parse_number(s, line, column);
  if (v != static_cast<double>(static_cast<int>(v)))
    fail(ErrorKind::Format, "line " + std::to_string(line) + ": field " + std::to_string(column) + " must be an integer");
  return static_cast<int>(v);
}

}  // namespace detail

inline std::vector<MotRow> parse_mot(std::string_view text) {
  std::vector<MotRow> rows;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 10)
      fail(ErrorKind::Format,
           "line " + std::to_string(line_no) + ": expected 10 fields, got " + std::to_string(fields.size()));
    MotRow r;
    r.frame = detail::parse_int(fields[0], line_no, 1);
    r.id = detail::parse_int(fields[1], line_no, 2);
    r.bbox = {detail::parse_number(fields[2], line_no, 3), detail::parse_number(fields[3], line_no, 4),
              detail::parse_number(fields[4], line_no, 5), detail::parse_number(fields[5], line_no, 6)};
    r.confidence = detail::parse_number(fields[6], line_no, 7);
    const Vec3 p(detail::parse_number(fields[7], line_no, 8), detail::parse_number(fields[8], line_no, 9),
                 detail::parse_number(fields[9], line_no, 10));
    if (!(p.x() == -1.0 && p.y() == -1.0 && p.z() == -1.0)) r.position = p;
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<MotRow> import_mot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_mot(buf.str());
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
}

/// Ground-truth rows of a scene: one per visible object carrying a bbox.
inline std::vector<MotRow> ground_truth_rows(const SceneSequence& scene) {
  std::vector<MotRow> rows;
  for (const auto& f : scene.frames) {
    if (!f.gt_objects) continue;
    for (const auto& g : *f.gt_objects)
      if (g.bbox) rows.push_back({f.frame_index, g.object_id, *g.bbox, 1.0, g.pose.T});
  }
  sort_mot_rows(rows);
  return rows;
}

struct MotFiles {
  std::filesystem::path ground_truth;
  std::filesystem::path hypotheses;
};

/// Writes `gt.txt` (from the scene's ground truth) and `hyp.txt` into `dir`.
inline MotFiles export_mot(const SceneSequence& scene, const std::vector<MotRow>& hypotheses,
                           const std::filesystem::path& dir) {
  for (const auto& r : hypotheses)
    if (r.id <= 0) fail(ErrorKind::Format, "hypothesis track ids must be positive, got " + std::to_string(r.id));
  MotFiles files{dir / "gt.txt", dir / "hyp.txt"};
  write_file_atomically(files.ground_truth, write_mot(ground_truth_rows(scene)));
  write_file_atomically(files.hypotheses, write_mot(hypotheses));
  return files;
}

}  // namespace geoloc
