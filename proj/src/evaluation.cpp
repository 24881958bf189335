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
#include "kcr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "kcr/error.hpp"
#include "kcr/runtime.hpp"
#include "json.hpp"

namespace kcr::evaluation {

using geometry::RotatedBox;

namespace {

std::vector<std::size_t> score_order(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  return order;
}

void check_scores(std::span<const Detection> dets) {
  for (const Detection& d : dets)
    if (!std::isfinite(d.score))
      throw Error(ErrorCode::kInvalidArgument, "detection score is not finite");
}

}  // namespace

std::vector<std::size_t> rotated_nms_indices(std::span<const Detection> dets,
                                             double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "NMS threshold must be in (0, 1]");
  check_scores(dets);
  const std::vector<std::size_t> order = score_order(dets);
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (geometry::iou_rotated(dets[i].box, dets[k].box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

std::vector<Detection> rotated_nms(std::span<const Detection> dets, double iou_threshold) {
  std::vector<Detection> out;
  for (std::size_t i : rotated_nms_indices(dets, iou_threshold)) out.push_back(dets[i]);
  return out;
}

std::vector<MatchFlag> match_detections(std::span<const Detection> dets,
                                        std::span<const RotatedBox> gt,
                                        const MatchConfig& cfg,
                                        const std::vector<bool>& difficult) {
  if (!difficult.empty() && difficult.size() != gt.size())
    throw Error(ErrorCode::kInvalidArgument, "difficulty flags must match ground truth");
  check_scores(dets);
  std::vector<MatchFlag> flags(dets.size(), MatchFlag::kFalsePositive);
  std::vector<bool> matched(gt.size(), false);
  for (std::size_t i : score_order(dets)) {
    double best = 0.0;
    std::size_t best_j = gt.size();
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (matched[j]) continue;
      const double v = geometry::iou_rotated(dets[i].box, gt[j]);
      if (v > best) {
        best = v;
        best_j = j;
      }
    }
    if (best_j == gt.size() || best < cfg.iou_threshold) continue;
    if (cfg.skip_difficult && !difficult.empty() && difficult[best_j]) {
      flags[i] = MatchFlag::kIgnored;
      continue;
    }
    matched[best_j] = true;
    flags[i] = MatchFlag::kTruePositive;
  }
  return flags;
}

std::vector<PrPoint> pr_curve(const std::vector<bool>& ranked_tp,
                              std::span<const double> ranked_scores, std::size_t n_gt) {
  if (n_gt == 0)
    throw Error(ErrorCode::kZeroGroundTruth, "precision/recall undefined without ground truth");
  if (!ranked_scores.empty() && ranked_scores.size() != ranked_tp.size())
    throw Error(ErrorCode::kInvalidArgument, "one score per ranked detection expected");
  std::vector<PrPoint> out;
  out.reserve(ranked_tp.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < ranked_tp.size(); ++k) {
    tp += ranked_tp[k];
    PrPoint p;
    p.score = ranked_scores.empty() ? 0.0 : ranked_scores[k];
    p.precision = static_cast<double>(tp) / static_cast<double>(k + 1);
    p.recall = static_cast<double>(tp) / static_cast<double>(n_gt);
    out.push_back(p);
  }
  return out;
}

double average_precision(const std::vector<bool>& ranked_tp, std::size_t n_gt) {
  const std::vector<PrPoint> curve = pr_curve(ranked_tp, {}, n_gt);
  // Recall grows by 1/n_gt at each hit, so the integral is the envelope
  // summed over hits; summing before dividing keeps AP = 1 exact.
  CompensatedSum sum;
  double envelope = 0.0;
  for (std::size_t k = curve.size(); k-- > 0;) {
    envelope = std::max(envelope, curve[k].precision);
    if (ranked_tp[k]) sum.add(envelope);
  }
  return sum.value() / static_cast<double>(n_gt);
}

double precision_at_recall(std::span<const PrPoint> curve, double recall) {
  for (const PrPoint& p : curve)
    if (p.recall >= recall) return p.precision;
  return 0.0;
}

EvalReport evaluate_dataset(std::span<const ImageEvaluation> images,
                            const MatchConfig& cfg) {
  std::vector<std::size_t> by_id(images.size());
  std::iota(by_id.begin(), by_id.end(), 0);
  std::stable_sort(by_id.begin(), by_id.end(), [&](std::size_t a, std::size_t b) {
    return images[a].image_id < images[b].image_id;
  });

  std::vector<std::vector<MatchFlag>> flags(images.size());
  parallel_for(images.size(), [&](std::size_t k) {
    const ImageEvaluation& im = images[k];
    flags[k] = match_detections(im.detections, im.ground_truth, cfg, im.difficult);
  });

  struct Ranked {
    double score;
    std::size_t image_rank;
    std::size_t det;
    bool tp;
  };
  EvalReport report;
  std::vector<Ranked> ranked;
  for (std::size_t r = 0; r < by_id.size(); ++r) {
    const std::size_t k = by_id[r];
    const ImageEvaluation& im = images[k];
    ImageCounts counts;
    counts.image_id = im.image_id;
    std::size_t gt_counted = im.ground_truth.size();
    if (cfg.skip_difficult)
      for (bool d : im.difficult) gt_counted -= d;
    for (std::size_t i = 0; i < im.detections.size(); ++i) {
      if (flags[k][i] == MatchFlag::kIgnored) continue;
      const bool tp = flags[k][i] == MatchFlag::kTruePositive;
      tp ? ++counts.tp : ++counts.fp;
      ranked.push_back({im.detections[i].score, r, i, tp});
    }
    counts.fn = gt_counted - counts.tp;
    report.num_ground_truth += gt_counted;
    report.images.push_back(std::move(counts));
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image_rank != b.image_rank) return a.image_rank < b.image_rank;
    return a.det < b.det;
  });
  std::vector<bool> tp_flags(ranked.size());
  std::vector<double> scores(ranked.size());
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    tp_flags[k] = ranked[k].tp;
    scores[k] = ranked[k].score;
  }
  report.num_detections = ranked.size();
  report.curve = pr_curve(tp_flags, scores, report.num_ground_truth);
  report.ap50 = average_precision(tp_flags, report.num_ground_truth);
  return report;
}

std::string report_to_json(const EvalReport& r, bool pretty) {
  nlohmann::ordered_json j;
  j["schema"] = "kcr.eval_report";
  j["version"] = 1;
  j["ap50"] = r.ap50;
  j["num_ground_truth"] = r.num_ground_truth;
  j["num_detections"] = r.num_detections;
  nlohmann::ordered_json imgs = nlohmann::ordered_json::array();
  for (const ImageCounts& c : r.images)
    imgs.push_back({{"image_id", c.image_id}, {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}});
  j["images"] = std::move(imgs);
  nlohmann::ordered_json curve = nlohmann::ordered_json::array();
  for (const PrPoint& p : r.curve)
    curve.push_back({{"score", p.score}, {"precision", p.precision}, {"recall", p.recall}});
  j["curve"] = std::move(curve);
  return j.dump(pretty ? 2 : -1) + "\n";
}

std::string curve_to_csv(std::span<const PrPoint> curve) {
  std::string out = "rank,score,precision,recall\n";
  char line[128];
  for (std::size_t k = 0; k < curve.size(); ++k) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g\n", k + 1, curve[k].score,
                  curve[k].precision, curve[k].recall);
    out += line;
  }
  return out;
}

}  // namespace kcr::evaluation
