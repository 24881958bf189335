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
#include "kcr/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <variant>

#include "json.hpp"
#include "kcr/dataio.hpp"
#include "kcr/error.hpp"
#include "kcr/evaluation.hpp"

namespace kcr::commands {

using geometry::AABox;
using geometry::Quad;
using geometry::RotatedBox;
using Json = nlohmann::ordered_json;

namespace {

struct Object {
  std::variant<Quad, RotatedBox, AABox> shape;
  std::string label;
  bool difficult = false;
};

struct Image {
  std::string id;
  std::vector<Object> objects;
};

std::vector<Image> load(std::string_view text, const std::string& fmt,
                        const std::string& image_id) {
  std::vector<Image> out;
  if (fmt == "dota") {
    const dataio::AnnotationRecord r = dataio::parse_dota(text, image_id);
    Image img{r.image_id, {}};
    for (const auto& a : r.objects)
      img.objects.push_back({std::get<Quad>(a.shape), a.label, a.difficult});
    out.push_back(std::move(img));
  } else if (fmt == "rotated") {
    for (const auto& ri : dataio::read_rotated_boxes(text)) {
      Image img{ri.image_id, {}};
      for (const auto& b : ri.boxes) img.objects.push_back({b.box, b.label, b.difficult});
      out.push_back(std::move(img));
    }
  } else if (fmt == "axis_csv" || fmt == "axis_json") {
    const auto f = fmt == "axis_csv" ? dataio::AxisFormat::kCsv : dataio::AxisFormat::kJson;
    for (const auto& r : dataio::parse_axis_aligned(text, f)) {
      Image img{r.image_id, {}};
      for (const auto& a : r.objects)
        img.objects.push_back({std::get<AABox>(a.shape), a.label, a.difficult});
      out.push_back(std::move(img));
    }
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown annotation format '" + fmt + "'");
  }
  return out;
}

RotatedBox as_rotated(const Object& o) {
  if (const auto* q = std::get_if<Quad>(&o.shape)) return geometry::quad_to_rotated(*q);
  if (const auto* a = std::get_if<AABox>(&o.shape)) return geometry::to_rotated(*a);
  return std::get<RotatedBox>(o.shape);
}

AABox as_axis(const Object& o) {
  if (const auto* a = std::get_if<AABox>(&o.shape)) return *a;
  return geometry::project_rotated(as_rotated(o));
}

Quad as_quad(const Object& o) {
  if (const auto* q = std::get_if<Quad>(&o.shape)) return *q;
  return geometry::rotated_to_quad(as_rotated(o));
}

// DOTA and axis-aligned files need a category on every object.
constexpr const char* kDefaultLabel = "object";

std::string label_or_default(const std::string& l) { return l.empty() ? kDefaultLabel : l; }

std::vector<dataio::RotatedImage> to_rotated_images(const std::vector<Image>& images) {
  std::vector<dataio::RotatedImage> out;
  for (const Image& img : images) {
    dataio::RotatedImage ri{img.id, {}};
    for (const Object& o : img.objects) ri.boxes.push_back({as_rotated(o), o.label, o.difficult});
    out.push_back(std::move(ri));
  }
  return out;
}

std::vector<RotatedBox> all_boxes(std::string_view text) {
  std::vector<RotatedBox> out;
  for (const auto& img : dataio::read_rotated_boxes(text))
    for (const auto& b : img.boxes) out.push_back(b.box);
  return out;
}

std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string dump(const Json& j, bool pretty) { return (pretty ? j.dump(2) : j.dump()) + "\n"; }

// splitmix64; the workload must not depend on the standard library.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : s_(seed) {}
  double uniform(double lo, double hi) {
    s_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = s_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return lo + (hi - lo) * static_cast<double>(z >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t s_;
};

}  // namespace

std::string convert(std::string_view input, const std::string& from, const std::string& to,
                    const std::string& image_id, bool pretty) {
  const std::vector<Image> images = load(input, from, image_id.empty() ? "image" : image_id);
  if (to == "dota") {
    if (images.size() > 1)
      throw Error(ErrorCode::kInvalidArgument,
                  "DOTA output holds one image; the input has " + std::to_string(images.size()));
    dataio::AnnotationRecord r;
    if (!images.empty()) {
      r.image_id = images[0].id;
      for (const Object& o : images[0].objects) r.objects.push_back({as_quad(o), label_or_default(o.label), o.difficult});
    }
    return dataio::write_dota(r);
  }
  if (to == "rotated") return dataio::write_rotated_boxes(to_rotated_images(images), pretty);
  if (to == "axis_csv" || to == "axis_json") {
    std::vector<dataio::AnnotationRecord> records;
    for (const Image& img : images) {
      dataio::AnnotationRecord r{img.id, {}};
      for (const Object& o : img.objects) r.objects.push_back({as_axis(o), label_or_default(o.label), o.difficult});
      records.push_back(std::move(r));
    }
    return dataio::write_axis_aligned(
        records, to == "axis_csv" ? dataio::AxisFormat::kCsv : dataio::AxisFormat::kJson, pretty);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown annotation format '" + to + "'");
}

std::string iou_table(std::string_view a, std::optional<std::string_view> b, bool pretty) {
  const std::vector<RotatedBox> ba = all_boxes(a);
  const std::vector<RotatedBox> bb = b ? all_boxes(*b) : ba;
  const std::vector<double> m = geometry::iou_matrix(ba, bb);
  std::string out;
  if (!pretty) {
    out = "a,b,iou\n";
    char line[96];
    for (std::size_t i = 0; i < ba.size(); ++i)
      for (std::size_t j = 0; j < bb.size(); ++j) {
        std::snprintf(line, sizeof line, "%zu,%zu,%.12g\n", i, j, m[i * bb.size() + j]);
        out += line;
      }
    return out;
  }
  out = pad("", 6);
  for (std::size_t j = 0; j < bb.size(); ++j) out += pad("b" + std::to_string(j), 9);
  out += "\n";
  for (std::size_t i = 0; i < ba.size(); ++i) {
    out += pad("a" + std::to_string(i), 6);
    for (std::size_t j = 0; j < bb.size(); ++j) out += pad(format("%.5f", m[i * bb.size() + j]), 9);
    out += "\n";
  }
  return out;
}

std::string assign(std::string_view proposals, std::string_view ground_truth,
                   const AssignOptions& opt, bool pretty) {
  using namespace assignment;
  static const char* const kStrategies[] = {"first_stage", "source", "plain", "projection",
                                            "heuristic"};
  if (std::find(std::begin(kStrategies), std::end(kStrategies), opt.strategy) ==
      std::end(kStrategies))
    throw Error(ErrorCode::kInvalidArgument, "unknown strategy '" + opt.strategy + "'");
  if (opt.gt_format == "dota")
    throw Error(ErrorCode::kInvalidArgument, "assign reads rotated or axis-aligned ground truth");
  opt.heuristic.validate();

  const bool rotated_gt = opt.gt_format == "rotated";
  std::map<std::string, GroundTruthSet> gt;
  for (const Image& img : load(ground_truth, opt.gt_format, "image")) {
    if (rotated_gt) {
      SourceGroundTruth s;
      for (const Object& o : img.objects) s.boxes.push_back(as_rotated(o));
      gt[img.id] = std::move(s);
    } else {
      TargetGroundTruth t;
      for (const Object& o : img.objects) t.boxes.push_back(as_axis(o));
      gt[img.id] = std::move(t);
    }
  }
  if (opt.strategy == "source" && !rotated_gt)
    throw Error(ErrorCode::kInvalidArgument, "the source strategy needs rotated ground truth");

  Json images = Json::array();
  for (const auto& img : dataio::read_rotated_boxes(proposals)) {
    std::vector<RotatedBox> props;
    for (const auto& b : img.boxes) props.push_back(b.box);
    GroundTruthSet g = rotated_gt ? GroundTruthSet{SourceGroundTruth{}}
                                  : GroundTruthSet{TargetGroundTruth{}};
    if (auto it = gt.find(img.image_id); it != gt.end()) g = it->second;
    // Target strategies read rotated ground truth through its external box.
    TargetGroundTruth target;
    if (const auto* t = std::get_if<TargetGroundTruth>(&g)) {
      target = *t;
    } else {
      for (const RotatedBox& b : std::get<SourceGroundTruth>(g).boxes)
        target.boxes.push_back(geometry::project_rotated(b));
    }

    std::vector<AssignmentResult> res;
    if (opt.strategy == "first_stage") {
      std::vector<geometry::MidpointOffsetProposal> mo;
      for (const RotatedBox& p : props) mo.push_back(geometry::theta_to_midpoint_offset(p));
      res = assign_first_stage(mo, g, opt.gamma, opt.assigner);
    } else if (opt.strategy == "source") {
      res = assign_second_stage_source(props, std::get<SourceGroundTruth>(g), opt.assigner);
    } else if (opt.strategy == "plain") {
      res = assign_second_stage_target_plain(props, target, opt.assigner);
    } else {
      res = assign_second_stage_projection(props, target, opt.gamma, opt.assigner);
      if (opt.strategy == "heuristic") res = reliability_switch(res, target, opt.heuristic);
    }

    Json rows = Json::array();
    for (std::size_t k = 0; k < res.size(); ++k) {
      Json r;
      r["proposal"] = k;
      r["gt"] = res[k].sigma ? Json(*res[k].sigma) : Json(nullptr);
      r["iou"] = res[k].tau;
      r["positive"] = res[k].positive;
      r["reliable"] = res[k].reliable;
      rows.push_back(std::move(r));
    }
    images.push_back({{"image_id", img.image_id}, {"assignments", std::move(rows)}});
  }
  Json j;
  j["schema"] = "kcr.assignments";
  j["version"] = 1;
  j["strategy"] = opt.strategy;
  j["gamma"] = opt.gamma;
  j["positive_threshold"] = opt.assigner.positive_threshold;
  j["images"] = std::move(images);
  return dump(j, pretty);
}

EvalOutput evaluate(std::string_view detections, std::string_view ground_truth,
                    const EvalOptions& opt, bool pretty) {
  const dataio::DetectionFile dets = dataio::read_detections(detections);
  std::map<std::string, evaluation::ImageEvaluation> by_id;
  for (const Image& img : load(ground_truth, opt.gt_format, opt.image_id)) {
    auto& e = by_id[img.id];
    e.image_id = img.id;
    for (const Object& o : img.objects) {
      e.ground_truth.push_back(as_rotated(o));
      e.difficult.push_back(o.difficult);
    }
  }
  for (const auto& img : dets.images) {
    auto& e = by_id[img.image_id];
    e.image_id = img.image_id;
    e.detections.insert(e.detections.end(), img.detections.begin(), img.detections.end());
  }
  std::vector<evaluation::ImageEvaluation> images;
  for (auto& [id, e] : by_id) images.push_back(std::move(e));
  evaluation::MatchConfig cfg;
  cfg.iou_threshold = opt.iou_threshold;
  cfg.skip_difficult = opt.skip_difficult;
  const evaluation::EvalReport r = evaluation::evaluate_dataset(images, cfg);
  return {evaluation::report_to_json(r, pretty), evaluation::curve_to_csv(r.curve)};
}

std::string bench(std::uint64_t n, std::uint64_t seed, bool pretty) {
  using Clock = std::chrono::steady_clock;
  Json results = Json::array();
  if (n > 0) {
    Stream rng(seed);
    const double extent = 512.0;
    std::vector<RotatedBox> a(n), b(n);
    std::vector<evaluation::Detection> dets(n);
    for (std::size_t k = 0; k < n; ++k) {
      a[k] = {rng.uniform(0, extent), rng.uniform(0, extent), rng.uniform(8, 40),
              rng.uniform(4, 20), rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2)};
      b[k] = a[k];
      b[k].cx += rng.uniform(-6, 6);
      b[k].cy += rng.uniform(-6, 6);
      b[k].theta = geometry::canonical_angle(b[k].theta + rng.uniform(-0.5, 0.5));
    }
    // NMS input: clusters of 8 near-duplicates, as a detector would emit.
    RotatedBox base;
    for (std::size_t k = 0; k < n; ++k) {
      if (k % 8 == 0) base = a[k];
      RotatedBox d = base;
      d.cx += rng.uniform(-2, 2);
      d.cy += rng.uniform(-2, 2);
      d.theta = geometry::canonical_angle(d.theta + rng.uniform(-0.1, 0.1));
      dets[k] = {d, rng.uniform(0, 1), 0};
    }

    const auto t0 = Clock::now();
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) sum += geometry::iou_rotated(a[k], b[k]);
    const double s_iou = std::chrono::duration<double>(Clock::now() - t0).count();

    const auto t1 = Clock::now();
    const auto kept = evaluation::rotated_nms_indices(dets, 0.5);
    const double s_nms = std::chrono::duration<double>(Clock::now() - t1).count();
    std::uint64_t kept_sum = 0;
    for (std::size_t i : kept) kept_sum += i;

    auto rate = [](double items, double s) { return s > 0 ? items / s : 0.0; };
    results.push_back({{"kernel", "rotated_iou"},
                       {"items", n},
                       {"seconds", s_iou},
                       {"items_per_second", rate(static_cast<double>(n), s_iou)},
                       {"checksum", sum}});
    results.push_back({{"kernel", "rotated_nms"},
                       {"items", n},
                       {"seconds", s_nms},
                       {"items_per_second", rate(static_cast<double>(n), s_nms)},
                       {"kept", kept.size()},
                       {"checksum", kept_sum}});
  }
  if (pretty) {
    std::string out = "kernel        items      seconds      items/s\n";
    for (const Json& r : results) {
      char line[160];
      std::snprintf(line, sizeof line, "%-12s %6llu %12.6f %12.0f\n",
                    r["kernel"].get<std::string>().c_str(),
                    static_cast<unsigned long long>(r["items"].get<std::uint64_t>()),
                    r["seconds"].get<double>(), r["items_per_second"].get<double>());
      out += line;
    }
    return out;
  }
  Json j;
  j["schema"] = "kcr.bench";
  j["version"] = 1;
  j["n"] = n;
  j["seed"] = seed;
  j["results"] = std::move(results);
  return dump(j, false);
}

std::string pretty_table(std::string_view csv) {
  std::vector<std::vector<std::string>> rows;
  std::size_t start = 0;
  while (start < csv.size()) {
    std::size_t end = csv.find('\n', start);
    if (end == std::string_view::npos) end = csv.size();
    std::vector<std::string> cells;
    std::string_view line = csv.substr(start, end - start);
    std::size_t p = 0;
    while (true) {
      const std::size_t c = line.find(',', p);
      cells.emplace_back(line.substr(p, c == std::string_view::npos ? line.npos : c - p));
      if (c == std::string_view::npos) break;
      p = c + 1;
    }
    rows.push_back(std::move(cells));
    start = end + 1;
  }
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (width.size() <= k) width.push_back(0);
      width[k] = std::max(width[k], r[k].size());
    }
  std::string out;
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (k) out += "  ";
      out += k == 0 ? r[k] + std::string(width[k] - r[k].size(), ' ') : pad(r[k], width[k]);
    }
    out += "\n";
  }
  return out;
}

}  // namespace kcr::commands
