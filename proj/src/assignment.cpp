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
#include "kcr/assignment.hpp"

#include <algorithm>
#include <cmath>

#include "kcr/error.hpp"

namespace kcr::assignment {

using geometry::AABox;
using geometry::RotatedBox;

namespace {

template <typename IouFn>
std::vector<AssignmentResult> argmax_assign(std::size_t n_proposals,
                                            std::size_t n_gt,
                                            const AssignerConfig& cfg,
                                            IouFn&& iou) {
  std::vector<AssignmentResult> out(n_proposals);
  for (std::size_t i = 0; i < n_proposals; ++i) {
    AssignmentResult& r = out[i];
    double best = 0.0;
    for (std::size_t j = 0; j < n_gt; ++j) {
      const double v = iou(i, j);
      if (v > best) {
        best = v;
        r.sigma = j;
      }
    }
    r.tau = best;
    r.positive = r.sigma.has_value() && best >= cfg.positive_threshold;
  }
  return out;
}

}  // namespace

void HeuristicConfig::validate() const {
  if (!(aspect_ratio_min >= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "aspect_ratio_min must be >= 1");
  if (!(area_threshold >= 0.0))
    throw Error(ErrorCode::kInvalidArgument, "area_threshold must be >= 0");
}

AABox transform_ground_truth(const RotatedBox& b) {
  return geometry::project_rotated(b);
}

AABox transform_ground_truth(const AABox& b, double gamma,
                             geometry::EnlargementMode mode) {
  return geometry::enlarge_aabox(b, gamma, mode);
}

std::vector<AssignmentResult> assign_first_stage(
    std::span<const geometry::MidpointOffsetProposal> proposals,
    const GroundTruthSet& gt, double gamma, const AssignerConfig& cfg) {
  if (!(gamma >= 1.0))
    throw Error(ErrorCode::kInvalidGamma, "enlargement factor must be >= 1");
  std::vector<AABox> projected;
  if (const auto* src = std::get_if<SourceGroundTruth>(&gt)) {
    for (const RotatedBox& b : src->boxes)
      projected.push_back(transform_ground_truth(b));
  } else {
    for (const AABox& b : std::get<TargetGroundTruth>(gt).boxes)
      projected.push_back(transform_ground_truth(b, gamma, cfg.enlargement));
  }
  std::vector<AABox> external(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i)
    external[i] = geometry::external_rect(proposals[i]);
  return argmax_assign(proposals.size(), projected.size(), cfg,
                       [&](std::size_t i, std::size_t j) {
                         return geometry::iou_aabb(external[i], projected[j]);
                       });
}

std::vector<AssignmentResult> assign_second_stage_source(
    std::span<const RotatedBox> proposals, const SourceGroundTruth& gt,
    const AssignerConfig& cfg) {
  return argmax_assign(proposals.size(), gt.boxes.size(), cfg,
                       [&](std::size_t i, std::size_t j) {
                         return geometry::iou_rotated(proposals[i], gt.boxes[j]);
                       });
}

std::vector<AssignmentResult> assign_second_stage_target_plain(
    std::span<const RotatedBox> proposals, const TargetGroundTruth& gt,
    const AssignerConfig& cfg) {
  std::vector<RotatedBox> as_rotated;
  as_rotated.reserve(gt.boxes.size());
  for (const AABox& b : gt.boxes) as_rotated.push_back(geometry::to_rotated(b));
  return argmax_assign(proposals.size(), as_rotated.size(), cfg,
                       [&](std::size_t i, std::size_t j) {
                         return geometry::iou_rotated(proposals[i], as_rotated[j]);
                       });
}

std::vector<AssignmentResult> assign_second_stage_projection(
    std::span<const RotatedBox> proposals, const TargetGroundTruth& gt,
    double gamma, const AssignerConfig& cfg) {
  std::vector<AABox> enlarged;
  enlarged.reserve(gt.boxes.size());
  for (const AABox& b : gt.boxes)
    enlarged.push_back(transform_ground_truth(b, gamma, cfg.enlargement));
  std::vector<AABox> projected(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i)
    projected[i] = geometry::project_rotated(proposals[i]);
  return argmax_assign(proposals.size(), enlarged.size(), cfg,
                       [&](std::size_t i, std::size_t j) {
                         return geometry::iou_aabb(projected[i], enlarged[j]);
                       });
}

bool is_reliable(const AABox& gt, const HeuristicConfig& cfg) {
  const double w = gt.width();
  const double h = gt.height();
  const double lo = std::min(w, h);
  const double ratio = lo > 0.0 ? std::max(w, h) / lo : INFINITY;
  const bool elongated = ratio > cfg.aspect_ratio_min;
  const double area = w * h;
  if (cfg.area_rule == AreaRule::kKeepSmall)
    return elongated || area < cfg.area_threshold;
  return elongated && area >= cfg.area_threshold;
}

std::vector<AssignmentResult> reliability_switch(
    std::span<const AssignmentResult> assignments, const TargetGroundTruth& gt,
    const HeuristicConfig& cfg) {
  cfg.validate();
  std::vector<bool> reliable(gt.boxes.size());
  for (std::size_t j = 0; j < gt.boxes.size(); ++j)
    reliable[j] = is_reliable(gt.boxes[j], cfg);
  std::vector<AssignmentResult> out(assignments.begin(), assignments.end());
  for (AssignmentResult& r : out) {
    r.reliable = true;
    if (!r.positive || !r.sigma) continue;
    if (*r.sigma >= gt.boxes.size())
      throw Error(ErrorCode::kInvalidArgument,
                  "assignment refers to a ground-truth index out of range");
    r.reliable = reliable[*r.sigma];
  }
  return out;
}

double positive_recall(std::span<const AssignmentResult> assignments,
                       std::span<const bool> relevant) {
  if (assignments.size() != relevant.size())
    throw Error(ErrorCode::kInvalidArgument,
                "positive_recall needs one relevance flag per assignment");
  std::size_t total = 0, hit = 0;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (!relevant[i]) continue;
    ++total;
    hit += assignments[i].positive;
  }
  return total == 0 ? 1.0 : static_cast<double>(hit) / total;
}

}  // namespace kcr::assignment
