/* Copyright 2026 The KCR Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "kcr/dataio.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "kcr/error.hpp"

namespace kcr::dataio {

using geometry::AABox;
using geometry::Quad;
using geometry::RotatedBox;
using Json = nlohmann::ordered_json;

namespace {

std::string_view trim(std::string_view s) {
  const char* ws = " \t\r\n\v\f";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t b = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

std::vector<std::string_view> split_char(std::string_view s, char c) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto p = s.find(c, start);
    if (p == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, p - start));
    start = p + 1;
  }
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// --- JSON helpers -------------------------------------------------------------

Json parse_json(std::string_view text) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    throw ParseError(0, e.byte == 0 ? 1 : e.byte, "malformed JSON");
  } catch (const Json::exception& e) {
    // Number overflow and similar lexer-level rejections carry no offset.
    throw ParseError(0, 1, std::string("malformed JSON: ") + e.what());
  }
}

const Json& member(const Json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path, std::string("missing key '") + key + "'");
  return *it;
}

double number(const Json& obj, const char* key, const std::string& path) {
  const Json& v = member(obj, key, path);
  if (!v.is_number()) throw ParseError(path + "/" + key, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ParseError(path + "/" + key, "number is not finite");
  return d;
}

std::string string_member(const Json& obj, const char* key, const std::string& path) {
  const Json& v = member(obj, key, path);
  if (!v.is_string()) throw ParseError(path + "/" + key, "expected a string");
  return v.get<std::string>();
}

const Json& array_member(const Json& obj, const char* key, const std::string& path) {
  const Json& v = member(obj, key, path);
  if (!v.is_array()) throw ParseError(path + "/" + key, "expected an array");
  return v;
}

void check_header(const Json& doc, const char* schema) {
  if (!doc.is_object()) throw ParseError("/", "expected an object");
  if (string_member(doc, "schema", "") != schema)
    throw ParseError("/schema", std::string("expected schema '") + schema + "'");
  const Json& v = member(doc, "version", "");
  if (!v.is_number_integer() || v.get<long long>() != kSchemaVersion)
    throw ParseError("/version", "unsupported schema version");
}

Json header(const char* schema) {
  Json doc;
  doc["schema"] = schema;
  doc["version"] = kSchemaVersion;
  return doc;
}

std::string dump(const Json& doc, bool pretty) { return doc.dump(pretty ? 2 : -1) + "\n"; }

RotatedBox rotated_from(const Json& b, const std::string& path) {
  RotatedBox r{number(b, "cx", path), number(b, "cy", path), number(b, "w", path),
               number(b, "h", path), number(b, "theta", path)};
  if (!(r.w > 0 && r.h > 0))
    throw ParseError(path, "box width and height must be positive", ErrorCode::kInvalidBox);
  r.theta = geometry::canonical_angle(r.theta);
  return r;
}

AABox aabox_checked(double x0, double y0, double x1, double y1, std::size_t line,
                    const std::string& path) {
  if (x0 > x1 || y0 > y1) {
    const char* why = "xmin > xmax or ymin > ymax";
    if (line > 0) throw ParseError(line, why, ErrorCode::kInvalidBox);
    throw ParseError(path, why, ErrorCode::kInvalidBox);
  }
  return {x0, y0, x1, y1};
}

AABox extent_of(const Annotation& a) {
  if (const auto* box = std::get_if<AABox>(&a.shape)) return *box;
  const Quad& q = std::get<Quad>(a.shape);
  AABox b{q.v[0].x, q.v[0].y, q.v[0].x, q.v[0].y};
  for (const auto& p : q.v) {
    b.xmin = std::min(b.xmin, p.x);
    b.ymin = std::min(b.ymin, p.y);
    b.xmax = std::max(b.xmax, p.x);
    b.ymax = std::max(b.ymax, p.y);
  }
  return b;
}

}  // namespace

// --- DOTA ---------------------------------------------------------------------

AnnotationRecord parse_dota(std::string_view text, std::string image_id) {
  AnnotationRecord rec;
  rec.image_id = std::move(image_id);
  const auto lines = split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::size_t line_no = n + 1;
    const std::string_view line = trim(lines[n]);
    if (line.empty()) continue;
    if (line.starts_with("imagesource:") || line.starts_with("gsd:")) continue;
    const auto f = split_ws(line);
    if (f.size() < 10)
      throw ParseError(line_no, "expected 10 fields, found " + std::to_string(f.size()));
    if (f.size() > 10) throw ParseError(line_no, "unexpected field after difficulty");
    Quad q;
    for (int k = 0; k < 4; ++k) {
      if (!parse_double(f[2 * k], q.v[k].x) || !parse_double(f[2 * k + 1], q.v[k].y))
        throw ParseError(line_no, "non-numeric coordinate");
    }
    Annotation a;
    a.label = std::string(f[8]);
    if (f[9] == "0") {
      a.difficult = false;
    } else if (f[9] == "1") {
      a.difficult = true;
    } else {
      throw ParseError(line_no, "unknown difficulty token '" + std::string(f[9]) + "'");
    }
    q = geometry::normalize_winding(q);
    const double area = geometry::signed_area(q);
    if (!(area > geometry::kAreaEpsilon) || !std::isfinite(area))
      throw ParseError(line_no, "degenerate quadrilateral");
    if (!geometry::is_convex(q)) throw ParseError(line_no, "quadrilateral is not convex");
    a.shape = q;
    rec.objects.push_back(std::move(a));
  }
  return rec;
}

std::string write_dota(const AnnotationRecord& record) {
  std::string out;
  for (const Annotation& a : record.objects) {
    Quad q;
    if (const auto* box = std::get_if<AABox>(&a.shape)) {
      q.v = {{{box->xmin, box->ymin}, {box->xmax, box->ymin},
              {box->xmax, box->ymax}, {box->xmin, box->ymax}}};
    } else {
      q = std::get<Quad>(a.shape);
    }
    for (const auto& p : q.v) out += fmt6(p.x) + " " + fmt6(p.y) + " ";
    out += a.label;
    out += a.difficult ? " 1\n" : " 0\n";
  }
  return out;
}

// --- axis-aligned ---------------------------------------------------------------

namespace {

std::vector<AnnotationRecord> parse_axis_csv(std::string_view text) {
  std::vector<AnnotationRecord> out;
  std::map<std::string, std::size_t, std::less<>> index;
  const auto lines = split_lines(text);
  bool first = true;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::size_t line_no = n + 1;
    const std::string_view line = trim(lines[n]);
    if (line.empty()) continue;
    auto f = split_char(line, ',');
    for (auto& x : f) x = trim(x);
    if (f.size() != 6)
      throw ParseError(line_no, "expected 6 comma-separated fields, found " +
                                    std::to_string(f.size()));
    if (first) {
      first = false;
      if (f[0] == "image_id" && f[1] == "xmin" && f[2] == "ymin" && f[3] == "xmax" &&
          f[4] == "ymax" && f[5] == "label")
        continue;
    }
    if (f[0].empty()) throw ParseError(line_no, "empty image id");
    if (f[5].empty()) throw ParseError(line_no, "empty label");
    double v[4];
    for (int k = 0; k < 4; ++k)
      if (!parse_double(f[1 + k], v[k])) throw ParseError(line_no, "non-numeric coordinate");
    Annotation a;
    a.shape = aabox_checked(v[0], v[1], v[2], v[3], line_no, {});
    a.label = std::string(f[5]);
    auto it = index.find(f[0]);
    if (it == index.end()) {
      it = index.emplace(std::string(f[0]), out.size()).first;
      out.push_back({std::string(f[0]), {}});
    }
    out[it->second].objects.push_back(std::move(a));
  }
  return out;
}

std::vector<AnnotationRecord> parse_axis_json(std::string_view text) {
  const Json doc = parse_json(text);
  check_header(doc, "kcr.axis_aligned");
  std::vector<AnnotationRecord> out;
  const Json& images = array_member(doc, "images", "");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string ip = "/images/" + std::to_string(i);
    AnnotationRecord rec;
    rec.image_id = string_member(images[i], "image_id", ip);
    const Json& boxes = array_member(images[i], "boxes", ip);
    for (std::size_t k = 0; k < boxes.size(); ++k) {
      const std::string bp = ip + "/boxes/" + std::to_string(k);
      Annotation a;
      a.shape = aabox_checked(number(boxes[k], "xmin", bp), number(boxes[k], "ymin", bp),
                              number(boxes[k], "xmax", bp), number(boxes[k], "ymax", bp), 0,
                              bp);
      a.label = std::string(trim(string_member(boxes[k], "label", bp)));
      if (a.label.empty()) throw ParseError(bp + "/label", "empty label");
      rec.objects.push_back(std::move(a));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

std::vector<AnnotationRecord> parse_axis_aligned(std::string_view text, AxisFormat format) {
  return format == AxisFormat::kCsv ? parse_axis_csv(text) : parse_axis_json(text);
}

std::string write_axis_aligned(const std::vector<AnnotationRecord>& records,
                               AxisFormat format, bool pretty) {
  if (format == AxisFormat::kCsv) {
    std::string out = "image_id,xmin,ymin,xmax,ymax,label\n";
    char buf[160];
    for (const AnnotationRecord& r : records)
      for (const Annotation& a : r.objects) {
        const AABox b = extent_of(a);
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,", b.xmin, b.ymin, b.xmax,
                      b.ymax);
        out += r.image_id + buf + a.label + "\n";
      }
    return out;
  }
  Json doc = header("kcr.axis_aligned");
  Json images = Json::array();
  for (const AnnotationRecord& r : records) {
    Json boxes = Json::array();
    for (const Annotation& a : r.objects) {
      const AABox b = extent_of(a);
      boxes.push_back({{"xmin", b.xmin}, {"ymin", b.ymin}, {"xmax", b.xmax},
                       {"ymax", b.ymax}, {"label", a.label}});
    }
    images.push_back({{"image_id", r.image_id}, {"boxes", std::move(boxes)}});
  }
  doc["images"] = std::move(images);
  return dump(doc, pretty);
}

// --- rotated boxes ----------------------------------------------------------------

std::vector<RotatedImage> read_rotated_boxes(std::string_view text) {
  const Json doc = parse_json(text);
  check_header(doc, "kcr.boxes");
  std::vector<RotatedImage> out;
  const Json& images = array_member(doc, "images", "");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string ip = "/images/" + std::to_string(i);
    RotatedImage im;
    im.image_id = string_member(images[i], "image_id", ip);
    const Json& boxes = array_member(images[i], "boxes", ip);
    for (std::size_t k = 0; k < boxes.size(); ++k) {
      const std::string bp = ip + "/boxes/" + std::to_string(k);
      LabelledBox lb;
      lb.box = rotated_from(boxes[k], bp);
      if (boxes[k].contains("label")) lb.label = string_member(boxes[k], "label", bp);
      if (boxes[k].contains("difficult")) {
        const Json& d = boxes[k]["difficult"];
        if (!d.is_boolean()) throw ParseError(bp + "/difficult", "expected a boolean");
        lb.difficult = d.get<bool>();
      }
      im.boxes.push_back(std::move(lb));
    }
    out.push_back(std::move(im));
  }
  return out;
}

std::string write_rotated_boxes(const std::vector<RotatedImage>& images, bool pretty) {
  Json doc = header("kcr.boxes");
  Json arr = Json::array();
  for (const RotatedImage& im : images) {
    Json boxes = Json::array();
    for (const LabelledBox& b : im.boxes) {
      const RotatedBox r = geometry::canonicalize(b.box);
      boxes.push_back({{"cx", r.cx}, {"cy", r.cy}, {"w", r.w}, {"h", r.h},
                       {"theta", r.theta}, {"label", b.label}, {"difficult", b.difficult}});
    }
    arr.push_back({{"image_id", im.image_id}, {"boxes", std::move(boxes)}});
  }
  doc["images"] = std::move(arr);
  return dump(doc, pretty);
}

// --- detections -------------------------------------------------------------------

DetectionFile read_detections(std::string_view text) {
  const Json doc = parse_json(text);
  check_header(doc, "kcr.detections");
  DetectionFile out;
  const Json& images = array_member(doc, "images", "");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string ip = "/images/" + std::to_string(i);
    ImageDetections im;
    im.image_id = string_member(images[i], "image_id", ip);
    const Json& dets = array_member(images[i], "detections", ip);
    for (std::size_t k = 0; k < dets.size(); ++k) {
      const std::string dp = ip + "/detections/" + std::to_string(k);
      evaluation::Detection d;
      d.box = rotated_from(dets[k], dp);
      d.score = number(dets[k], "score", dp);
      if (dets[k].contains("label")) {
        const Json& l = dets[k]["label"];
        if (!l.is_number_integer()) throw ParseError(dp + "/label", "expected an integer");
        d.label = l.get<int>();
      }
      im.detections.push_back(d);
    }
    out.images.push_back(std::move(im));
  }
  return out;
}

std::string write_detections(const DetectionFile& file, bool pretty) {
  Json doc = header("kcr.detections");
  Json arr = Json::array();
  for (const ImageDetections& im : file.images) {
    Json dets = Json::array();
    for (const evaluation::Detection& d : im.detections) {
      const RotatedBox r = geometry::canonicalize(d.box);
      Json j = {{"cx", r.cx}, {"cy", r.cy}, {"w", r.w}, {"h", r.h}, {"theta", r.theta},
                {"score", d.score}};
      if (d.label != 0) j["label"] = d.label;
      dets.push_back(std::move(j));
    }
    arr.push_back({{"image_id", im.image_id}, {"detections", std::move(dets)}});
  }
  doc["images"] = std::move(arr);
  return dump(doc, pretty);
}

// --- files --------------------------------------------------------------------------

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::kIo, "failed reading '" + path + "'");
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  out.close();
  if (!out) throw Error(ErrorCode::kIo, "failed writing '" + path + "'");
}

}  // namespace kcr::dataio
