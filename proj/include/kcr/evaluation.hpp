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
#ifndef KCR_EVALUATION_HPP_
#define KCR_EVALUATION_HPP_

// Rotated NMS, greedy detection matching and all-point AP.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kcr/geometry.hpp"

namespace kcr::evaluation {

struct Detection {
  geometry::RotatedBox box;
  double score = 0.0;
  int label = 0;
};

// Greedy suppression in descending score order (stable on ties): a box is
// dropped when its rotated IoU with a kept box exceeds the threshold.
// Returns kept input indices in output order.
std::vector<std::size_t> rotated_nms_indices(std::span<const Detection> dets,
                                             double iou_threshold);
std::vector<Detection> rotated_nms(std::span<const Detection> dets, double iou_threshold);

enum class MatchFlag { kFalsePositive, kTruePositive, kIgnored };

struct MatchConfig {
  double iou_threshold = 0.5;
  bool skip_difficult = false;
};

// Flags aligned with `dets`. Detections are visited in descending score
// order; each takes the unmatched ground truth of highest IoU and is a true
// positive when that IoU reaches the threshold. With skip_difficult, a hit
// on a difficult box is ignored rather than counted.
std::vector<MatchFlag> match_detections(std::span<const Detection> dets,
                                        std::span<const geometry::RotatedBox> gt,
                                        const MatchConfig& cfg = {},
                                        const std::vector<bool>& difficult = {});

struct PrPoint {
  double score = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// Precision / recall after each ranked detection (true = TP).
std::vector<PrPoint> pr_curve(const std::vector<bool>& ranked_tp,
                              std::span<const double> ranked_scores, std::size_t n_gt);

// All-point interpolated AP: the precision envelope (running maximum from
// the right) integrated over recall. Throws Error(kZeroGroundTruth) when
// n_gt is 0.
double average_precision(const std::vector<bool>& ranked_tp, std::size_t n_gt);

// Precision at the first rank whose recall reaches `recall`; 0 if never
// reached.
double precision_at_recall(std::span<const PrPoint> curve, double recall);

struct ImageEvaluation {
  std::string image_id;
  std::vector<Detection> detections;
  std::vector<geometry::RotatedBox> ground_truth;
  std::vector<bool> difficult;  // empty or one per ground-truth box
};

struct ImageCounts {
  std::string image_id;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct EvalReport {
  double ap50 = 0.0;
  std::size_t num_ground_truth = 0;
  std::size_t num_detections = 0;
  std::vector<PrPoint> curve;
  std::vector<ImageCounts> images;  // sorted by image id
};

// Matches every image independently, then ranks all detections together by
// (score desc, image id, detection index).
EvalReport evaluate_dataset(std::span<const ImageEvaluation> images,
                            const MatchConfig& cfg = {});

std::string report_to_json(const EvalReport& r, bool pretty = false);
std::string curve_to_csv(std::span<const PrPoint> curve);

}  // namespace kcr::evaluation

#endif  // KCR_EVALUATION_HPP_
