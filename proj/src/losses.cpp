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
#include "kcr/losses.hpp"

#include <algorithm>
#include <cmath>

#include "kcr/error.hpp"
#include "kcr/runtime.hpp"

namespace kcr::losses {

using assignment::AssignmentResult;
using assignment::SourceGroundTruth;
using assignment::TargetGroundTruth;
using geometry::AABox;
using geometry::kPi;
using geometry::MidpointOffsetProposal;
using geometry::RotatedBox;

namespace {

constexpr double kMaxLogScale = 4.0;

struct Bce {
  double value;
  double dz;
};

// weight scales the whole term (g for masked positives).
Bce bce(double z, bool positive, double weight, double eps) {
  const double p = sigmoid(z);
  if (weight == 0.0) return {0.0, 0.0};
  if (positive) {
    if (p < eps) return {-weight * std::log(eps), 0.0};
    if (p > 1.0 - eps) return {-weight * std::log(1.0 - eps), 0.0};
    return {-weight * std::log(p), weight * (p - 1.0)};
  }
  if (p > 1.0 - eps) return {-weight * std::log(eps), 0.0};
  if (p < eps) return {-weight * std::log(1.0 - eps), 0.0};
  return {-weight * std::log1p(-p), weight * p};
}

struct Reg {
  double value;
  double dd;
};

Reg regression(double d, const LossConfig& cfg) {
  const double a = std::abs(d);
  const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
  if (cfg.regression == RegressionKind::kL1) return {a, sgn};
  const double b = cfg.smooth_l1_beta;
  if (a < b) return {0.5 * d * d / b, d / b};
  return {a - 0.5 * b, sgn};
}

void check_assignments(std::size_t n, std::size_t m) {
  if (n != m)
    throw Error(ErrorCode::kInvalidArgument,
                "loss needs exactly one assignment per proposal");
}

std::size_t checked_sigma(const AssignmentResult& r, std::size_t n_gt) {
  if (!r.sigma || *r.sigma >= n_gt)
    throw Error(ErrorCode::kInvalidArgument,
                "positive assignment without a valid ground-truth index");
  return *r.sigma;
}

template <std::size_t K>
void check_finite(const std::array<double, K>& out) {
  for (double v : out)
    if (!std::isfinite(v))
      throw Error(ErrorCode::kNonFiniteLoss, "non-finite predictor output");
}

// Shared driver: BCE on the last output plus regression on `reg_dims`
// leading outputs against target(i).
template <std::size_t K, typename Sample, typename TargetFn>
PartialLoss box_and_bce(std::span<const Sample> samples,
                        std::span<const AssignmentResult> assignments,
                        std::size_t reg_dims, const LossConfig& cfg,
                        TargetFn&& target) {
  check_assignments(samples.size(), assignments.size());
  PartialLoss out;
  out.count = samples.size();
  out.output_gradient.assign(samples.size() * K, 0.0);
  if (samples.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  CompensatedSum bce_sum, reg_sum;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& o = samples[i].output;
    check_finite(o);
    const AssignmentResult& a = assignments[i];
    double* g = out.output_gradient.data() + i * K;
    const Bce c = bce(o[K - 1], a.positive, 1.0, cfg.probability_epsilon);
    bce_sum.add(c.value);
    g[K - 1] = c.dz * inv_n;
    if (!a.positive) continue;
    const auto t = target(i, a);
    for (std::size_t k = 0; k < reg_dims; ++k) {
      const Reg r = regression(o[k] - t[k], cfg);
      reg_sum.add(cfg.regression_weight * r.value);
      g[k] = cfg.regression_weight * r.dd * inv_n;
    }
  }
  out.bce = bce_sum.value() * inv_n;
  out.regression = reg_sum.value() * inv_n;
  out.value = out.bce + out.regression;
  if (!std::isfinite(out.value))
    throw Error(ErrorCode::kNonFiniteLoss, "loss is not finite");
  return out;
}

}  // namespace

// --- encodings --------------------------------------------------------------

std::array<double, 6> encode_first_stage(const AABox& anchor,
                                         const MidpointOffsetProposal& b,
                                         DeltaNormalization norm) {
  if (norm == DeltaNormalization::kNone)
    return {b.cx, b.cy, b.w, b.h, b.alpha, b.beta};
  const double aw = anchor.width(), ah = anchor.height();
  return {(b.cx - anchor.cx()) / aw, (b.cy - anchor.cy()) / ah,
          std::log(b.w / aw),        std::log(b.h / ah),
          b.alpha / b.w,             b.beta / b.h};
}

MidpointOffsetProposal decode_first_stage(const AABox& anchor,
                                          std::span<const double> d,
                                          DeltaNormalization norm) {
  if (d.size() < 6)
    throw Error(ErrorCode::kInvalidArgument, "first-stage decode needs 6 deltas");
  if (norm == DeltaNormalization::kNone) return {d[0], d[1], d[2], d[3], d[4], d[5], 1.0};
  const double aw = anchor.width(), ah = anchor.height();
  MidpointOffsetProposal r;
  r.cx = anchor.cx() + d[0] * aw;
  r.cy = anchor.cy() + d[1] * ah;
  r.w = aw * std::exp(std::clamp(d[2], -kMaxLogScale, kMaxLogScale));
  r.h = ah * std::exp(std::clamp(d[3], -kMaxLogScale, kMaxLogScale));
  r.alpha = d[4] * r.w;
  r.beta = d[5] * r.h;
  return r;
}

RotatedBox decode_rotated_proposal(const AABox& anchor, std::span<const double> d,
                                   DeltaNormalization norm) {
  MidpointOffsetProposal r = decode_first_stage(anchor, d, norm);
  r.alpha = std::clamp(r.alpha, -0.5 * r.w, 0.5 * r.w);
  r.beta = std::clamp(r.beta, -0.5 * r.h, 0.5 * r.h);
  try {
    return geometry::midpoint_offset_to_rotated(r);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDegenerateQuad) throw;
    return geometry::long_edge_form({r.cx, r.cy, r.w, r.h, 0.0});
  }
}

RotatedBox align_to_frame(const RotatedBox& gt, const RotatedBox& frame) {
  RotatedBox g = gt;
  double d = geometry::canonical_angle(gt.theta - frame.theta);
  if (d >= kPi / 4 || d < -kPi / 4) {
    std::swap(g.w, g.h);
    d = geometry::canonical_angle(d - kPi / 2);
  }
  g.theta = frame.theta + d;
  return g;
}

std::array<double, 5> encode_second_stage(const RotatedBox& frame,
                                          const RotatedBox& box,
                                          DeltaNormalization norm) {
  const RotatedBox g = align_to_frame(box, frame);
  if (norm == DeltaNormalization::kNone) return {g.cx, g.cy, g.w, g.h, g.theta};
  const double c = std::cos(frame.theta), s = std::sin(frame.theta);
  const double dx = g.cx - frame.cx, dy = g.cy - frame.cy;
  return {(dx * c + dy * s) / frame.w, (-dx * s + dy * c) / frame.h,
          std::log(g.w / frame.w), std::log(g.h / frame.h), g.theta - frame.theta};
}

RotatedBox decode_second_stage(const RotatedBox& frame, std::span<const double> d,
                               DeltaNormalization norm) {
  if (d.size() < 5)
    throw Error(ErrorCode::kInvalidArgument, "second-stage decode needs 5 deltas");
  if (norm == DeltaNormalization::kNone)
    return geometry::canonicalize({d[0], d[1], d[2], d[3], d[4]});
  const double c = std::cos(frame.theta), s = std::sin(frame.theta);
  const double u = d[0] * frame.w, v = d[1] * frame.h;
  RotatedBox b;
  b.cx = frame.cx + u * c - v * s;
  b.cy = frame.cy + u * s + v * c;
  b.w = frame.w * std::exp(std::clamp(d[2], -kMaxLogScale, kMaxLogScale));
  b.h = frame.h * std::exp(std::clamp(d[3], -kMaxLogScale, kMaxLogScale));
  b.theta = frame.theta + d[4];
  return geometry::canonicalize(b);
}

// --- partial losses ---------------------------------------------------------

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

FirstStageSample make_first_stage_sample(const AABox& anchor,
                                         const MidpointOffsetProposal& r,
                                         DeltaNormalization norm) {
  FirstStageSample s;
  s.anchor = anchor;
  const auto d = encode_first_stage(anchor, r, norm);
  std::copy(d.begin(), d.end(), s.output.begin());
  s.output[6] = logit(r.p);
  return s;
}

SecondStageSample make_second_stage_sample(const RotatedBox& frame,
                                           const RotatedBox& refined, double p,
                                           DeltaNormalization norm) {
  SecondStageSample s;
  s.frame = frame;
  std::array<double, 5> d;
  if (norm == DeltaNormalization::kNone) {
    d = {refined.cx, refined.cy, refined.w, refined.h, refined.theta};
  } else {
    const double c = std::cos(frame.theta), sn = std::sin(frame.theta);
    const double dx = refined.cx - frame.cx, dy = refined.cy - frame.cy;
    d = {(dx * c + dy * sn) / frame.w, (-dx * sn + dy * c) / frame.h,
         std::log(refined.w / frame.w), std::log(refined.h / frame.h),
         refined.theta - frame.theta};
  }
  std::copy(d.begin(), d.end(), s.output.begin());
  s.output[5] = logit(p);
  return s;
}

PartialLoss rpn_loss_source(std::span<const FirstStageSample> samples,
                            const SourceGroundTruth& gt,
                            std::span<const AssignmentResult> assignments,
                            const LossConfig& cfg) {
  return box_and_bce<kFirstStageOutputs>(
      samples, assignments, 6, cfg, [&](std::size_t i, const AssignmentResult& a) {
        const std::size_t j = checked_sigma(a, gt.boxes.size());
        const MidpointOffsetProposal t = geometry::theta_to_midpoint_offset(gt.boxes[j]);
        return encode_first_stage(samples[i].anchor, t, cfg.normalization);
      });
}

PartialLoss rpn_loss_target(std::span<const FirstStageSample> samples,
                            const TargetGroundTruth& gt,
                            std::span<const AssignmentResult> assignments,
                            double gamma, const LossConfig& cfg,
                            geometry::EnlargementMode mode) {
  std::vector<AABox> enlarged;
  enlarged.reserve(gt.boxes.size());
  for (const AABox& b : gt.boxes) enlarged.push_back(geometry::enlarge_aabox(b, gamma, mode));
  return box_and_bce<kFirstStageOutputs>(
      samples, assignments, 4, cfg, [&](std::size_t i, const AssignmentResult& a) {
        const AABox& e = enlarged[checked_sigma(a, enlarged.size())];
        const MidpointOffsetProposal t{e.cx(), e.cy(), e.width(), e.height(), 0.0, 0.0, 1.0};
        return encode_first_stage(samples[i].anchor, t, cfg.normalization);
      });
}

PartialLoss rcnn_loss_source(std::span<const SecondStageSample> samples,
                             const SourceGroundTruth& gt,
                             std::span<const AssignmentResult> assignments,
                             const LossConfig& cfg) {
  return box_and_bce<kSecondStageOutputs>(
      samples, assignments, 5, cfg, [&](std::size_t i, const AssignmentResult& a) {
        const std::size_t j = checked_sigma(a, gt.boxes.size());
        return encode_second_stage(samples[i].frame, gt.boxes[j], cfg.normalization);
      });
}

PartialLoss rcnn_loss_target(std::span<const SecondStageSample> samples,
                             std::span<const AssignmentResult> assignments,
                             TargetStrategy mode, const LossConfig& cfg) {
  check_assignments(samples.size(), assignments.size());
  constexpr std::size_t K = kSecondStageOutputs;
  PartialLoss out;
  out.count = samples.size();
  out.output_gradient.assign(samples.size() * K, 0.0);
  if (samples.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  CompensatedSum sum;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& o = samples[i].output;
    check_finite(o);
    const AssignmentResult& a = assignments[i];
    const double w =
        (mode == TargetStrategy::kHeuristic && a.positive && !a.reliable) ? 0.0 : 1.0;
    const Bce c = bce(o[K - 1], a.positive, w, cfg.probability_epsilon);
    sum.add(c.value);
    out.output_gradient[i * K + K - 1] = c.dz * inv_n;
  }
  out.bce = sum.value() * inv_n;
  out.value = out.bce;
  if (!std::isfinite(out.value))
    throw Error(ErrorCode::kNonFiniteLoss, "loss is not finite");
  return out;
}

namespace {

double pooled(const std::vector<PartialLoss>& parts) {
  CompensatedSum sum;
  std::size_t n = 0;
  for (const PartialLoss& p : parts) {
    sum.add(p.value * static_cast<double>(p.count));
    n += p.count;
  }
  return n == 0 ? 0.0 : sum.value() / static_cast<double>(n);
}

}  // namespace

LossBreakdown combined_loss(const PartialSet& source, const PartialSet& target,
                            const LossWeights& weights) {
  LossBreakdown b;
  b.L_S = weights.source * pooled(source.first);
  b.L_T = weights.target * pooled(target.first);
  b.L_S_star = weights.source * pooled(source.second);
  b.L_T_star = weights.target * pooled(target.second);
  if (!std::isfinite(b.total()))
    throw Error(ErrorCode::kNonFiniteLoss, "combined loss is not finite");
  return b;
}

// --- affine predictor and training objective --------------------------------

FirstStageOutput AffinePredictor::first_stage(std::span<const double> x) const {
  FirstStageOutput o{};
  for (std::size_t r = 0; r < kFirstStageOutputs; ++r) {
    const double* w = params.data() + w1_index(r, 0);
    double acc = 0.0;
    for (std::size_t f = 0; f < features; ++f) acc += w[f] * x[f];
    o[r] = acc;
  }
  return o;
}

SecondStageOutput AffinePredictor::second_stage(std::span<const double> x) const {
  SecondStageOutput o{};
  for (std::size_t r = 0; r < kSecondStageOutputs; ++r) {
    const double* w = params.data() + w2_index(r, 0);
    double acc = 0.0;
    for (std::size_t f = 0; f < features; ++f) acc += w[f] * x[f];
    o[r] = acc;
  }
  return o;
}

namespace {

void check_image(const AffinePredictor& model, const TrainingImage& img) {
  if (model.features == 0 || model.params.size() !=
                                 (kFirstStageOutputs + kSecondStageOutputs) * model.features)
    throw Error(ErrorCode::kInvalidArgument, "predictor has an inconsistent shape");
  if (img.features.size() != img.anchors.size() * model.features)
    throw Error(ErrorCode::kInvalidArgument,
                "training image needs one feature row per anchor");
}

std::span<const double> row(const TrainingImage& img, std::size_t i, std::size_t f) {
  return std::span<const double>(img.features).subspan(i * f, f);
}

ImageContext image_context(const AffinePredictor& model, const TrainingImage& img,
                           const ObjectiveConfig& cfg) {
  check_image(model, img);
  ImageContext ctx;
  const std::size_t n = img.anchors.size();
  std::vector<MidpointOffsetProposal> anchors(n);
  ctx.proposals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const AABox& a = img.anchors[i];
    anchors[i] = {a.cx(), a.cy(), a.width(), a.height(), 0.0, 0.0, 1.0};
    const FirstStageOutput o = model.first_stage(row(img, i, model.features));
    check_finite(o);
    ctx.proposals[i] = decode_rotated_proposal(a, o, cfg.loss.normalization);
  }
  ctx.first = assignment::assign_first_stage(anchors, img.gt, cfg.gamma, cfg.assigner);
  if (const auto* src = std::get_if<SourceGroundTruth>(&img.gt)) {
    ctx.second = assignment::assign_second_stage_source(ctx.proposals, *src, cfg.assigner);
  } else {
    const auto& tgt = std::get<TargetGroundTruth>(img.gt);
    if (cfg.strategy == TargetStrategy::kProjection) {
      ctx.second = assignment::assign_second_stage_projection(ctx.proposals, tgt,
                                                              cfg.gamma, cfg.assigner);
    } else {
      const auto plain =
          assignment::assign_second_stage_target_plain(ctx.proposals, tgt, cfg.assigner);
      ctx.second = assignment::reliability_switch(plain, tgt, cfg.heuristic);
    }
  }
  return ctx;
}

struct ImageParts {
  PartialLoss first;
  PartialLoss second;
};

ImageParts image_parts(const AffinePredictor& model, const TrainingImage& img,
                       const ImageContext& ctx, const ObjectiveConfig& cfg) {
  const std::size_t n = img.anchors.size();
  if (ctx.first.size() != n || ctx.second.size() != n || ctx.proposals.size() != n)
    throw Error(ErrorCode::kInvalidArgument, "context does not match the batch");
  std::vector<FirstStageSample> s1(n);
  std::vector<SecondStageSample> s2(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = row(img, i, model.features);
    s1[i].anchor = img.anchors[i];
    s1[i].output = model.first_stage(x);
    s2[i].frame = ctx.proposals[i];
    s2[i].output = model.second_stage(x);
  }
  ImageParts parts;
  if (const auto* src = std::get_if<SourceGroundTruth>(&img.gt)) {
    parts.first = rpn_loss_source(s1, *src, ctx.first, cfg.loss);
    parts.second = rcnn_loss_source(s2, *src, ctx.second, cfg.loss);
  } else {
    const auto& tgt = std::get<TargetGroundTruth>(img.gt);
    parts.first = rpn_loss_target(s1, tgt, ctx.first, cfg.gamma, cfg.loss,
                                  cfg.assigner.enlargement);
    parts.second = rcnn_loss_target(s2, ctx.second, cfg.strategy, cfg.loss);
  }
  return parts;
}

// Adds scale * d(part)/d(params) to grad.
void accumulate(const AffinePredictor& model, const TrainingImage& img,
                const PartialLoss& part, std::size_t outputs, std::size_t row0,
                double scale, std::vector<double>& grad) {
  const std::size_t f = model.features;
  for (std::size_t i = 0; i < part.count; ++i) {
    const double* g = part.output_gradient.data() + i * outputs;
    const double* x = img.features.data() + i * f;
    for (std::size_t r = 0; r < outputs; ++r) {
      if (g[r] == 0.0) continue;
      double* w = grad.data() + (row0 + r) * f;
      const double gs = scale * g[r];
      for (std::size_t k = 0; k < f; ++k) w[k] += gs * x[k];
    }
  }
}

}  // namespace

BatchContext prepare_context(const AffinePredictor& model, const TrainingBatch& batch,
                             const ObjectiveConfig& cfg) {
  BatchContext ctx;
  for (const TrainingImage& img : batch.source) {
    if (!std::holds_alternative<SourceGroundTruth>(img.gt))
      throw Error(ErrorCode::kInvalidArgument,
                  "source images need rotated ground truth");
    ctx.source.push_back(image_context(model, img, cfg));
  }
  for (const TrainingImage& img : batch.target)
    ctx.target.push_back(image_context(model, img, cfg));
  return ctx;
}

LossBreakdown loss_and_gradient(const AffinePredictor& model,
                                const TrainingBatch& batch, const BatchContext& ctx,
                                const ObjectiveConfig& cfg) {
  if (ctx.source.size() != batch.source.size() || ctx.target.size() != batch.target.size())
    throw Error(ErrorCode::kInvalidArgument, "context does not match the batch");
  PartialSet src, tgt;
  for (std::size_t k = 0; k < batch.source.size(); ++k) {
    ImageParts p = image_parts(model, batch.source[k], ctx.source[k], cfg);
    src.first.push_back(std::move(p.first));
    src.second.push_back(std::move(p.second));
  }
  for (std::size_t k = 0; k < batch.target.size(); ++k) {
    ImageParts p = image_parts(model, batch.target[k], ctx.target[k], cfg);
    tgt.first.push_back(std::move(p.first));
    tgt.second.push_back(std::move(p.second));
  }
  LossBreakdown out = combined_loss(src, tgt, cfg.weights);
  out.gradient.assign(model.params.size(), 0.0);

  auto add_domain = [&](const std::vector<TrainingImage>& images, const PartialSet& parts,
                        double weight) {
    std::size_t n = 0;
    for (const PartialLoss& p : parts.first) n += p.count;
    if (n == 0) return;
    for (std::size_t k = 0; k < images.size(); ++k) {
      const double scale = weight * static_cast<double>(parts.first[k].count) /
                           static_cast<double>(n);
      accumulate(model, images[k], parts.first[k], kFirstStageOutputs, 0, scale,
                 out.gradient);
      accumulate(model, images[k], parts.second[k], kSecondStageOutputs,
                 kFirstStageOutputs, scale, out.gradient);
    }
  };
  add_domain(batch.source, src, cfg.weights.source);
  add_domain(batch.target, tgt, cfg.weights.target);
  return out;
}

LossBreakdown loss_gradient(const AffinePredictor& model, const TrainingBatch& batch,
                            const ObjectiveConfig& cfg) {
  return loss_and_gradient(model, batch, prepare_context(model, batch, cfg), cfg);
}

}  // namespace kcr::losses
