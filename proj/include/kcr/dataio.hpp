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
#ifndef KCR_DATAIO_HPP_
#define KCR_DATAIO_HPP_

// Annotation and prediction formats.
//
// Coordinates are pixels, origin top-left, y down. Winding is defined in raw
// pixel coordinates (no y flip). Every parser either returns a value or
// throws ParseError with a line, byte offset or JSON path.
//
// DOTA:          x1 y1 x2 y2 x3 y3 x4 y4 category difficulty   (per line;
//                `imagesource:` / `gsd:` headers and blank lines skipped)
// axis CSV:      image_id,xmin,ymin,xmax,ymax,label             (header optional)
// axis JSON:     {"schema":"kcr.axis_aligned","version":1,"images":[
//                  {"image_id":..,"boxes":[{xmin,ymin,xmax,ymax,label}]}]}
// rotated JSON:  {"schema":"kcr.boxes","version":1,"images":[
//                  {"image_id":..,"boxes":[{cx,cy,w,h,theta,label,difficult}]}]}
// detections:    {"schema":"kcr.detections","version":1,"images":[
//                  {"image_id":..,"detections":[{cx,cy,w,h,theta,score}]}]}

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kcr/evaluation.hpp"
#include "kcr/geometry.hpp"

namespace kcr::dataio {

inline constexpr int kSchemaVersion = 1;

struct Annotation {
  std::variant<geometry::Quad, geometry::AABox> shape;
  std::string label;
  bool difficult = false;
};

struct AnnotationRecord {
  std::string image_id;
  std::vector<Annotation> objects;
};

enum class AxisFormat { kCsv, kJson };

AnnotationRecord parse_dota(std::string_view text, std::string image_id = {});
// Quads are written as is; axis-aligned objects as their four corners.
// Coordinates use 6 significant digits.
std::string write_dota(const AnnotationRecord& record);

// Records are grouped by image id in order of first appearance.
std::vector<AnnotationRecord> parse_axis_aligned(std::string_view text, AxisFormat format);
// Quads are written as their axis-aligned extent.
std::string write_axis_aligned(const std::vector<AnnotationRecord>& records,
                               AxisFormat format, bool pretty = false);

struct LabelledBox {
  geometry::RotatedBox box;
  std::string label;
  bool difficult = false;
};

struct RotatedImage {
  std::string image_id;
  std::vector<LabelledBox> boxes;
};

std::vector<RotatedImage> read_rotated_boxes(std::string_view text);
std::string write_rotated_boxes(const std::vector<RotatedImage>& images, bool pretty = false);

struct ImageDetections {
  std::string image_id;
  std::vector<evaluation::Detection> detections;
};

struct DetectionFile {
  std::vector<ImageDetections> images;
};

// Theta is canonicalised on read and on write.
DetectionFile read_detections(std::string_view text);
std::string write_detections(const DetectionFile& file, bool pretty = false);

// Reads a whole file; throws Error(kIo) on failure.
std::string read_file(const std::string& path);
// Writes a whole file at once; throws Error(kIo) on failure.
void write_file(const std::string& path, std::string_view contents);

}  // namespace kcr::dataio

#endif  // KCR_DATAIO_HPP_
