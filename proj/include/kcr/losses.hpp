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
#ifndef KCR_LOSSES_HPP_
#define KCR_LOSSES_HPP_

// Co-training objectives for both detector stages.
//
// Every loss is a mean over the proposals of one batch part: full binary
// cross entropy on objectness plus an l1 box term on positives only. Box
// terms compare encoded deltas, so a predictor that emits deltas directly
// (the affine predictor below) gets its gradient without any chain rule
// through the decoder.
//
// Delta encodings (kRelative):
//   stage one, against anchor (ax, ay, aw, ah):
//     ((cx - ax) / aw, (cy - ay) / ah, log(w / aw), log(h / ah), alpha / w,
//      beta / h)
//   stage two, in the frame of the decoded proposal (px, py, pw, ph, pt):
//     (dx c + dy s) / pw, (-dx s + dy c) / ph, log(w / pw), log(h / ph),
//     theta - pt
//   where the ground truth is relabelled (w <-> h, theta -/+ pi/2) so that
//   |theta - pt| <= pi/4.
// kNone keeps absolute parameters; it exists for worked examples.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "kcr/assignment.hpp"
#include "kcr/geometry.hpp"

namespace kcr::losses {

inline constexpr std::size_t kFirstStageOutputs = 7;   // 6 deltas + logit
inline constexpr std::size_t kSecondStageOutputs = 6;  // 5 deltas + logit

using FirstStageOutput = std::array<double, kFirstStageOutputs>;
using SecondStageOutput = std::array<double, kSecondStageOutputs>;

enum class DeltaNormalization { kRelative, kNone };
enum class RegressionKind { kL1, kSmoothL1 };
enum class TargetStrategy { kProjection, kHeuristic };

struct LossConfig {
  DeltaNormalization normalization = DeltaNormalization::kRelative;
  RegressionKind regression = RegressionKind::kL1;
  double smooth_l1_beta = 1.0 / 9.0;
  double probability_epsilon = 1e-7;
  double regression_weight = 1.0;  // 0 leaves an objectness-only fit
};

struct LossWeights {
  double source = 1.0;
  double target = 1.0;
};

// Loss of one batch part with its gradient per proposal output. The
// gradient is already divided by the part's proposal count.
struct PartialLoss {
  double value = 0.0;
  double bce = 0.0;
  double regression = 0.0;
  std::size_t count = 0;
  std::vector<double> output_gradient;  // count x outputs, row-major
};

// Components carry their batch-part weight, so total_first() is always
// L_S + L_T.
struct LossBreakdown {
  double L_S = 0.0;
  double L_T = 0.0;
  double L_S_star = 0.0;
  double L_T_star = 0.0;
  std::vector<double> gradient;

  double total_first() const { return L_S + L_T; }
  double total_second() const { return L_S_star + L_T_star; }
  double total() const { return total_first() + total_second(); }
};

// --- encodings --------------------------------------------------------------

std::array<double, 6> encode_first_stage(const geometry::AABox& anchor,
                                         const geometry::MidpointOffsetProposal& box,
                                         DeltaNormalization norm);
geometry::MidpointOffsetProposal decode_first_stage(
    const geometry::AABox& anchor, std::span<const double> deltas,
    DeltaNormalization norm);
// Decoded rotated proposal: clamps the offsets to the external rectangle and
// falls back to the external rectangle itself if the parallelogram collapses.
geometry::RotatedBox decode_rotated_proposal(const geometry::AABox& anchor,
                                             std::span<const double> deltas,
                                             DeltaNormalization norm);

// Ground truth relabelled so its angle is within pi/4 of `frame`.
geometry::RotatedBox align_to_frame(const geometry::RotatedBox& gt,
                                    const geometry::RotatedBox& frame);
std::array<double, 5> encode_second_stage(const geometry::RotatedBox& frame,
                                          const geometry::RotatedBox& box,
                                          DeltaNormalization norm);
geometry::RotatedBox decode_second_stage(const geometry::RotatedBox& frame,
                                         std::span<const double> deltas,
                                         DeltaNormalization norm);

// --- partial losses ---------------------------------------------------------

double sigmoid(double z);
double logit(double p);

// One first-stage proposal together with the anchor it was regressed from.
struct FirstStageSample {
  geometry::AABox anchor;
  FirstStageOutput output{};  // encoded deltas and objectness logit
};

// One refinement together with the decoded proposal it refines.
struct SecondStageSample {
  geometry::RotatedBox frame;
  SecondStageOutput output{};
};

FirstStageSample make_first_stage_sample(const geometry::AABox& anchor,
                                         const geometry::MidpointOffsetProposal& r,
                                         DeltaNormalization norm);
SecondStageSample make_second_stage_sample(const geometry::RotatedBox& frame,
                                           const geometry::RotatedBox& refined,
                                           double p, DeltaNormalization norm);

// BCE + l1 on (x, y, w, h, alpha, beta) against the rotated ground truth.
PartialLoss rpn_loss_source(std::span<const FirstStageSample> samples,
                            const assignment::SourceGroundTruth& gt,
                            std::span<const assignment::AssignmentResult> assignments,
                            const LossConfig& cfg = {});

// BCE + l1 on (x, y, w, h) only against the enlarged axis-aligned ground
// truth. Gradients on the alpha / beta outputs are zero.
PartialLoss rpn_loss_target(std::span<const FirstStageSample> samples,
                            const assignment::TargetGroundTruth& gt,
                            std::span<const assignment::AssignmentResult> assignments,
                            double gamma, const LossConfig& cfg = {},
                            geometry::EnlargementMode mode =
                                geometry::EnlargementMode::kScale);

// BCE + l1 on (x, y, w, h, theta) against the rotated ground truth.
PartialLoss rcnn_loss_source(std::span<const SecondStageSample> samples,
                             const assignment::SourceGroundTruth& gt,
                             std::span<const assignment::AssignmentResult> assignments,
                             const LossConfig& cfg = {});

// BCE only. In heuristic mode the positive term is multiplied by g.
PartialLoss rcnn_loss_target(std::span<const SecondStageSample> samples,
                             std::span<const assignment::AssignmentResult> assignments,
                             TargetStrategy mode, const LossConfig& cfg = {});

struct PartialSet {
  std::vector<PartialLoss> first;
  std::vector<PartialLoss> second;
};

// Pools the parts of each domain (a proposal-count weighted mean, i.e. one
// mean over all proposals of the domain), weights them and fills L_S ...
// L_T_star. The gradient field is left empty.
LossBreakdown combined_loss(const PartialSet& source, const PartialSet& target,
                            const LossWeights& weights = {});

// --- affine predictor and training objective --------------------------------

// Shared affine map: stage one W1 (7 x F), stage two W2 (6 x F), stored
// row-major, W1 first. Feature 0 is expected to be the constant 1.
struct AffinePredictor {
  std::size_t features = 0;
  std::vector<double> params;

  AffinePredictor() = default;
  explicit AffinePredictor(std::size_t f)
      : features(f), params((kFirstStageOutputs + kSecondStageOutputs) * f, 0.0) {}

  FirstStageOutput first_stage(std::span<const double> x) const;
  SecondStageOutput second_stage(std::span<const double> x) const;
  // Index of W1[row][col] / W2[row][col] in params.
  std::size_t w1_index(std::size_t row, std::size_t col) const {
    return row * features + col;
  }
  std::size_t w2_index(std::size_t row, std::size_t col) const {
    return (kFirstStageOutputs + row) * features + col;
  }
};

// One training image: anchors, their features (anchors x F, row-major) and
// its ground truth. A rotated ground truth selects source-style losses; an
// axis-aligned ground truth selects the weak losses.
struct TrainingImage {
  std::vector<geometry::AABox> anchors;
  std::vector<double> features;
  assignment::GroundTruthSet gt;
};

struct TrainingBatch {
  std::vector<TrainingImage> source;
  std::vector<TrainingImage> target;
};

struct ObjectiveConfig {
  double gamma = 1.0;
  TargetStrategy strategy = TargetStrategy::kProjection;
  assignment::AssignerConfig assigner;
  assignment::HeuristicConfig heuristic;
  LossConfig loss;
  LossWeights weights;
};

// Stop-gradient state: assignments and decoded proposals for every image.
struct ImageContext {
  std::vector<assignment::AssignmentResult> first;
  std::vector<geometry::RotatedBox> proposals;
  std::vector<assignment::AssignmentResult> second;
};

struct BatchContext {
  std::vector<ImageContext> source;
  std::vector<ImageContext> target;
};

BatchContext prepare_context(const AffinePredictor& model, const TrainingBatch& batch,
                             const ObjectiveConfig& cfg);

// Loss and analytic gradient with the assignments held fixed.
LossBreakdown loss_and_gradient(const AffinePredictor& model,
                                const TrainingBatch& batch, const BatchContext& ctx,
                                const ObjectiveConfig& cfg);

// prepare_context followed by loss_and_gradient.
LossBreakdown loss_gradient(const AffinePredictor& model, const TrainingBatch& batch,
                            const ObjectiveConfig& cfg);

}  // namespace kcr::losses

#endif  // KCR_LOSSES_HPP_
