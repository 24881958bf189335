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
#ifndef KCR_ASSIGNMENT_HPP_
#define KCR_ASSIGNMENT_HPP_

// Ground-truth assignment for both detector stages.
//
// Every rule is an argmax-IoU match: sigma(i) is the best ground truth for
// proposal i, tau(i) the IoU it realises, and the proposal is positive when
// tau(i) >= positive_threshold. Ties go to the lowest ground-truth index.
// Proposals overlapping no ground truth get sigma = nullopt and tau = 0.

#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "kcr/geometry.hpp"

namespace kcr::assignment {

// Strongly labelled (rotated) ground truth of one image.
struct SourceGroundTruth {
  std::vector<geometry::RotatedBox> boxes;
  std::vector<int> labels;  // optional; empty means single class
};

// Weakly labelled (axis-aligned) ground truth of one image.
struct TargetGroundTruth {
  std::vector<geometry::AABox> boxes;
  std::vector<int> labels;
};

using GroundTruthSet = std::variant<SourceGroundTruth, TargetGroundTruth>;

struct AssignmentResult {
  std::optional<std::size_t> sigma;
  double tau = 0.0;
  bool positive = false;
  bool reliable = true;  // heuristic-selection switch g
};

enum class AreaRule {
  kKeepSmall,  // g = (r > r_min) or (area < a_thr)
  kMaskSmall,  // g = (r > r_min) and (area >= a_thr)
};

struct HeuristicConfig {
  double aspect_ratio_min = 3.0;
  double area_threshold = 0.0;
  AreaRule area_rule = AreaRule::kKeepSmall;

  void validate() const;
};

struct AssignerConfig {
  double positive_threshold = 0.5;
  geometry::EnlargementMode enlargement = geometry::EnlargementMode::kScale;
};

// P(B): external rectangle of a rotated box, or the enlarged target box.
geometry::AABox transform_ground_truth(const geometry::RotatedBox& b);
geometry::AABox transform_ground_truth(const geometry::AABox& b, double gamma,
                                       geometry::EnlargementMode mode);

// Stage one: proposal external rectangles against P(B_j).
std::vector<AssignmentResult> assign_first_stage(
    std::span<const geometry::MidpointOffsetProposal> proposals,
    const GroundTruthSet& gt, double gamma, const AssignerConfig& cfg = {});

// Stage two, source images: rotated IoU against rotated ground truth. The
// proposals are the decoded first-stage boxes, not the refinements.
std::vector<AssignmentResult> assign_second_stage_source(
    std::span<const geometry::RotatedBox> proposals, const SourceGroundTruth& gt,
    const AssignerConfig& cfg = {});

// Stage two, target images, source rule: rotated IoU against each
// axis-aligned box read as a theta = 0 rotated box.
std::vector<AssignmentResult> assign_second_stage_target_plain(
    std::span<const geometry::RotatedBox> proposals, const TargetGroundTruth& gt,
    const AssignerConfig& cfg = {});

// Stage two, target images, projection assignment:
// iou_aabb(project_rotated(proposal), P(gt_j)).
std::vector<AssignmentResult> assign_second_stage_projection(
    std::span<const geometry::RotatedBox> proposals, const TargetGroundTruth& gt,
    double gamma, const AssignerConfig& cfg = {});

// Whether an axis-aligned ground-truth box is a reliable rotation label.
bool is_reliable(const geometry::AABox& gt, const HeuristicConfig& cfg);

// Sets g from the assigned ground truth. Proposals without an assigned
// ground truth, and negatives, keep g = 1.
std::vector<AssignmentResult> reliability_switch(
    std::span<const AssignmentResult> assignments, const TargetGroundTruth& gt,
    const HeuristicConfig& cfg);

// Fraction of `relevant` proposals that are labelled positive; 1 when none
// are relevant.
double positive_recall(std::span<const AssignmentResult> assignments,
                       std::span<const bool> relevant);

}  // namespace kcr::assignment

#endif  // KCR_ASSIGNMENT_HPP_
