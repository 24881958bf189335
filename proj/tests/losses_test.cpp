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
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "kcr/error.hpp"
#include "oracles.hpp"

using namespace kcr::losses;
using namespace kcr::geometry;
using kcr::assignment::AssignmentResult;
using kcr::assignment::SourceGroundTruth;
using kcr::assignment::TargetGroundTruth;

namespace {

constexpr double kEps = 1e-7;

AssignmentResult positive(std::size_t j) {
  AssignmentResult r;
  r.sigma = j;
  r.tau = 1.0;
  r.positive = true;
  return r;
}

AABox anchor_of(const RotatedBox& b) { return project_rotated(b); }

}  // namespace

TEST_CASE("rpn source: perfect positive and confident negative cost nothing") {
  const RotatedBox gt{10, 20, 8, 3, 0.3};
  const AABox anchor = anchor_of(gt);
  MidpointOffsetProposal exact = theta_to_midpoint_offset(gt);
  exact.p = 1.0 - kEps;
  const std::vector<FirstStageSample> pos{make_first_stage_sample(anchor, exact,
                                                                  DeltaNormalization::kRelative)};
  const std::vector<AssignmentResult> a_pos{positive(0)};
  const PartialLoss l = rpn_loss_source(pos, SourceGroundTruth{{gt}, {}}, a_pos);
  CHECK(l.value < 1e-6);
  CHECK(l.regression < 1e-12);

  MidpointOffsetProposal bg{100, 100, 5, 5, 0, 0, kEps};
  const std::vector<FirstStageSample> neg{
      make_first_stage_sample({97.5, 97.5, 102.5, 102.5}, bg, DeltaNormalization::kRelative)};
  const std::vector<AssignmentResult> a_neg(1);
  const PartialLoss n = rpn_loss_source(neg, SourceGroundTruth{{gt}, {}}, a_neg);
  CHECK(n.value < 1e-6);
}

TEST_CASE("rpn source: p = 0.5 positive with exact box costs ln 2") {
  const RotatedBox gt{0, 0, 6, 2, -0.7};
  MidpointOffsetProposal r = theta_to_midpoint_offset(gt);
  r.p = 0.5;
  const std::vector<FirstStageSample> s{
      make_first_stage_sample(anchor_of(gt), r, DeltaNormalization::kRelative)};
  const std::vector<AssignmentResult> a{positive(0)};
  const PartialLoss l = rpn_loss_source(s, SourceGroundTruth{{gt}, {}}, a);
  CHECK(l.bce == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(l.regression < 1e-12);
}

TEST_CASE("rpn target: offset of one in cx costs 1/N") {
  const AABox gt{0, 0, 10, 4};
  const MidpointOffsetProposal off{6, 2, 10, 4, 1.3, -0.4, 1.0 - kEps};
  const MidpointOffsetProposal bg{50, 50, 3, 3, 0, 0, kEps};
  LossConfig cfg;
  cfg.normalization = DeltaNormalization::kNone;
  const std::vector<FirstStageSample> s{
      make_first_stage_sample(gt, off, cfg.normalization),
      make_first_stage_sample({48.5, 48.5, 51.5, 51.5}, bg, cfg.normalization)};
  const std::vector<AssignmentResult> a{positive(0), AssignmentResult{}};
  const PartialLoss l = rpn_loss_target(s, TargetGroundTruth{{gt}, {}}, a, 1.0, cfg);
  CHECK(l.regression == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(l.bce < 1e-6);
}

TEST_CASE("rpn target: exact enlarged match costs nothing") {
  const AABox gt{0, 0, 10, 4};
  const AABox e = enlarge_aabox(gt, 1.2);
  const MidpointOffsetProposal r{e.cx(), e.cy(), e.width(), e.height(), 0.3, 0.2,
                                 1.0 - kEps};
  const std::vector<FirstStageSample> s{
      make_first_stage_sample(gt, r, DeltaNormalization::kRelative)};
  const std::vector<AssignmentResult> a{positive(0)};
  const PartialLoss l = rpn_loss_target(s, TargetGroundTruth{{gt}, {}}, a, 1.2);
  CHECK(l.value < 1e-6);
  CHECK(l.regression < 1e-12);
}

TEST_CASE("rpn target: alpha and beta never receive gradient") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 200; ++trial) {
    TargetGroundTruth gt{{project_rotated(kcr::testing::random_box(rng, 20))}, {}};
    std::vector<FirstStageSample> s(8);
    std::vector<AssignmentResult> a(8);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i].anchor = project_rotated(kcr::testing::random_box(rng, 20));
      for (double& v : s[i].output) v = n01(rng);
      if (i % 2 == 0) a[i] = positive(0);
    }
    const PartialLoss l = rpn_loss_target(s, gt, a, 1.1);
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(l.output_gradient[i * kFirstStageOutputs + 4] == 0.0);
      CHECK(l.output_gradient[i * kFirstStageOutputs + 5] == 0.0);
    }
    // Perturbing alpha / beta leaves the loss bit-identical.
    auto t = s;
    for (auto& x : t) {
      x.output[4] += n01(rng);
      x.output[5] += n01(rng);
    }
    CHECK(rpn_loss_target(t, gt, a, 1.1).value == l.value);
  }
}

TEST_CASE("rcnn target: projection example and heuristic mask") {
  const RotatedBox frame{0, 0, 4, 2, 0};
  const std::vector<SecondStageSample> s{
      make_second_stage_sample(frame, frame, 0.8, DeltaNormalization::kRelative),
      make_second_stage_sample(frame, frame, 0.1, DeltaNormalization::kRelative)};
  const std::vector<AssignmentResult> a{positive(0), AssignmentResult{}};
  const PartialLoss l = rcnn_loss_target(s, a, TargetStrategy::kProjection);
  CHECK(l.value == doctest::Approx((-std::log(0.8) - std::log(0.9)) / 2).epsilon(1e-12));
  CHECK(l.value == doctest::Approx(0.1643).epsilon(1e-3));
  CHECK(l.regression == 0.0);

  std::vector<AssignmentResult> masked{positive(0), positive(0)};
  for (auto& r : masked) r.reliable = false;
  const PartialLoss h = rcnn_loss_target(s, masked, TargetStrategy::kHeuristic);
  CHECK(h.value == 0.0);
  std::vector<AssignmentResult> mixed{masked[0], AssignmentResult{}};
  const PartialLoss m = rcnn_loss_target(s, mixed, TargetStrategy::kHeuristic);
  CHECK(m.value == doctest::Approx(-std::log(0.9) / 2).epsilon(1e-12));
  // Only the logit carries gradient.
  for (std::size_t k = 0; k + 1 < kSecondStageOutputs; ++k)
    CHECK(l.output_gradient[k] == 0.0);
}

TEST_CASE("rcnn target: projection loss ignores theta -> pi - theta and -theta") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> upper(kPi / 2, kPi);
  std::uniform_real_distribution<double> prob(0.05, 0.95);
  for (int trial = 0; trial < 100; ++trial) {
    TargetGroundTruth gt;
    for (int j = 0; j < 3; ++j)
      gt.boxes.push_back(project_rotated(kcr::testing::random_box(rng, 20)));
    std::vector<RotatedBox> props, mirror, neg;
    std::vector<double> ps;
    for (int i = 0; i < 10; ++i) {
      RotatedBox p = kcr::testing::random_box(rng, 20);
      p.theta = upper(rng);
      props.push_back(p);
      mirror.push_back({p.cx, p.cy, p.w, p.h, kPi - p.theta});
      neg.push_back({p.cx, p.cy, p.w, p.h, -p.theta});
      ps.push_back(prob(rng));
    }
    auto loss_of = [&](const std::vector<RotatedBox>& boxes) {
      const auto a = kcr::assignment::assign_second_stage_projection(boxes, gt, 1.0);
      std::vector<SecondStageSample> s;
      for (std::size_t i = 0; i < boxes.size(); ++i)
        s.push_back(make_second_stage_sample(boxes[i], boxes[i], ps[i],
                                             DeltaNormalization::kRelative));
      return rcnn_loss_target(s, a, TargetStrategy::kProjection).value;
    };
    CHECK(loss_of(props) == loss_of(mirror));
    CHECK(loss_of(props) == loss_of(neg));
  }
}

TEST_CASE("rcnn source: exact refinement and theta relabelling") {
  const RotatedBox gt{3, 4, 6, 2, 0.2};
  // The same rectangle labelled the other way round.
  const RotatedBox frame{3, 4, 2, 6, 0.2 + kPi / 2};
  const auto d = encode_second_stage(frame, gt, DeltaNormalization::kRelative);
  for (double v : d) CHECK(std::abs(v) < 1e-12);
  const std::vector<SecondStageSample> s{
      make_second_stage_sample(frame, frame, 0.5, DeltaNormalization::kRelative)};
  const std::vector<AssignmentResult> a{positive(0)};
  const PartialLoss l = rcnn_loss_source(s, SourceGroundTruth{{gt}, {}}, a);
  CHECK(l.bce == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(l.regression < 1e-12);
}

TEST_CASE("second-stage encoding round trips") {
  std::mt19937_64 rng(23);
  for (int k = 0; k < 2000; ++k) {
    const RotatedBox frame = kcr::testing::random_box(rng, 50, 2, 30);
    const RotatedBox box = kcr::testing::random_box(rng, 50, 2, 30);
    const auto d = encode_second_stage(frame, box, DeltaNormalization::kRelative);
    CHECK(std::abs(d[4]) <= kPi / 4 + 1e-12);
    const RotatedBox back = decode_second_stage(frame, d, DeltaNormalization::kRelative);
    CHECK(kcr::testing::corner_set_distance(back, box) < 1e-9);
  }
}

TEST_CASE("first-stage encoding round trips") {
  std::mt19937_64 rng(29);
  for (int k = 0; k < 2000; ++k) {
    const RotatedBox b = kcr::testing::random_box(rng, 50, 2, 30);
    const MidpointOffsetProposal m = theta_to_midpoint_offset(b);
    const AABox anchor = project_rotated(kcr::testing::random_neighbour(b, rng));
    const auto d = encode_first_stage(anchor, m, DeltaNormalization::kRelative);
    const MidpointOffsetProposal back =
        decode_first_stage(anchor, d, DeltaNormalization::kRelative);
    CHECK(back.cx == doctest::Approx(m.cx).epsilon(1e-12));
    CHECK(back.w == doctest::Approx(m.w).epsilon(1e-12));
    CHECK(back.alpha == doctest::Approx(m.alpha).epsilon(1e-12));
    CHECK(back.beta == doctest::Approx(m.beta).epsilon(1e-12));
  }
}

TEST_CASE("combined loss: sums, empty target and weights") {
  PartialLoss a;
  a.value = 0.4;
  a.count = 10;
  PartialLoss b;
  b.value = 0.1;
  b.count = 30;
  PartialLoss c;
  c.value = 0.2;
  c.count = 5;
  const PartialSet src{{a, b}, {c}};
  const PartialSet tgt{{c}, {a}};
  const LossBreakdown l = combined_loss(src, tgt);
  CHECK(l.L_S == doctest::Approx((0.4 * 10 + 0.1 * 30) / 40).epsilon(1e-15));
  CHECK(l.L_T == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(l.total_first() == l.L_S + l.L_T);
  CHECK(l.total_second() == l.L_S_star + l.L_T_star);

  const LossBreakdown e = combined_loss(src, PartialSet{});
  CHECK(e.total_first() == e.L_S);
  CHECK(e.total_second() == e.L_S_star);

  const LossBreakdown w = combined_loss(src, tgt, LossWeights{2.0, 1.0});
  CHECK(w.total_first() == doctest::Approx(2 * l.L_S + l.L_T).epsilon(1e-15));
  CHECK(w.total_second() == doctest::Approx(2 * l.L_S_star + l.L_T_star).epsilon(1e-15));
}

TEST_CASE("non-finite outputs are rejected") {
  std::vector<FirstStageSample> s(1);
  s[0].anchor = {0, 0, 1, 1};
  s[0].output[6] = NAN;
  const std::vector<AssignmentResult> a(1);
  try {
    rpn_loss_source(s, SourceGroundTruth{}, a);
    FAIL("expected an error");
  } catch (const kcr::Error& e) {
    CHECK(e.code() == kcr::ErrorCode::kNonFiniteLoss);
  }
}

TEST_CASE("analytic gradient matches central differences") {
  for (int mode = 0; mode < 4; ++mode) {
    ObjectiveConfig cfg;
    cfg.gamma = mode == 1 ? 1.1 : 1.0;
    cfg.strategy = mode == 2 ? TargetStrategy::kHeuristic : TargetStrategy::kProjection;
    cfg.heuristic.area_threshold = 150;
    if (mode == 3) cfg.loss.regression = RegressionKind::kSmoothL1;
    if (mode == 1) cfg.weights = {2.0, 0.5};
    const auto result = kcr::testing::gradient_check(cfg, 25, 1000 + mode);
    INFO("mode " << mode);
    CHECK(result.points == 25);
    CHECK(result.max_relative_error < 1e-5);
  }
}

TEST_CASE("zero gradient at the minimum of a separable toy instance") {
  // One positive source anchor and one negative; features are one-hot so
  // each output is a free parameter.
  const RotatedBox gt{10, 10, 8, 2, 0.4};
  TrainingImage img;
  img.anchors = {project_rotated(gt), {40, 40, 45, 45}};
  img.features = {1, 0, 0, 1};
  img.gt = SourceGroundTruth{{gt}, {}};
  TrainingBatch batch;
  batch.source.push_back(img);
  AffinePredictor model(2);
  const auto t1 = encode_first_stage(img.anchors[0], theta_to_midpoint_offset(gt),
                                     DeltaNormalization::kRelative);
  for (std::size_t k = 0; k < 6; ++k) model.params[model.w1_index(k, 0)] = t1[k];
  model.params[model.w1_index(6, 0)] = 40.0;   // saturated positive
  model.params[model.w1_index(6, 1)] = -40.0;  // saturated negative
  ObjectiveConfig cfg;
  const BatchContext ctx = prepare_context(model, batch, cfg);
  REQUIRE(ctx.source[0].first[0].positive);
  REQUIRE(ctx.source[0].second[0].positive);
  const auto t2 = encode_second_stage(ctx.source[0].proposals[0], gt,
                                      DeltaNormalization::kRelative);
  for (std::size_t k = 0; k < 5; ++k) model.params[model.w2_index(k, 0)] = t2[k];
  model.params[model.w2_index(5, 0)] = 40.0;
  model.params[model.w2_index(5, 1)] = -40.0;
  const LossBreakdown l = loss_and_gradient(model, batch, ctx, cfg);
  for (double g : l.gradient) CHECK(std::abs(g) < 1e-12);
  CHECK(l.total() < 1e-5);
}

TEST_CASE("weak images never push orientation outputs in stage one") {
  std::mt19937_64 rng(41);
  const TrainingBatch batch = kcr::testing::random_batch(rng, 6, 0, 3);
  for (auto strategy : {TargetStrategy::kProjection, TargetStrategy::kHeuristic}) {
    AffinePredictor model(6);
    std::normal_distribution<double> n01(0.0, 0.3);
    for (double& p : model.params) p = n01(rng);
    ObjectiveConfig cfg;
    cfg.strategy = strategy;
    const LossBreakdown l = loss_gradient(model, batch, cfg);
    CHECK(l.L_S == 0.0);
    for (std::size_t f = 0; f < 6; ++f) {
      CHECK(l.gradient[model.w1_index(4, f)] == 0.0);
      CHECK(l.gradient[model.w1_index(5, f)] == 0.0);
      for (std::size_t r = 0; r < 5; ++r) CHECK(l.gradient[model.w2_index(r, f)] == 0.0);
    }
  }
}

TEST_CASE("combined loss is invariant to proposal order") {
  std::mt19937_64 rng(43);
  const TrainingBatch batch = kcr::testing::random_batch(rng, 6, 2, 2);
  AffinePredictor model(6);
  std::normal_distribution<double> n01(0.0, 0.3);
  for (double& p : model.params) p = n01(rng);
  ObjectiveConfig cfg;
  const LossBreakdown a = loss_gradient(model, batch, cfg);

  TrainingBatch shuffled = batch;
  for (auto* images : {&shuffled.source, &shuffled.target})
    for (TrainingImage& img : *images) {
      const std::size_t n = img.anchors.size();
      std::vector<std::size_t> perm(n);
      for (std::size_t i = 0; i < n; ++i) perm[i] = n - 1 - i;
      TrainingImage out = img;
      for (std::size_t i = 0; i < n; ++i) {
        out.anchors[i] = img.anchors[perm[i]];
        std::copy_n(img.features.begin() + perm[i] * 6, 6, out.features.begin() + i * 6);
      }
      img = out;
    }
  const LossBreakdown b = loss_gradient(model, shuffled, cfg);
  CHECK(b.L_S == doctest::Approx(a.L_S).epsilon(1e-13));
  CHECK(b.L_T == doctest::Approx(a.L_T).epsilon(1e-13));
  CHECK(b.L_S_star == doctest::Approx(a.L_S_star).epsilon(1e-13));
  CHECK(b.L_T_star == doctest::Approx(a.L_T_star).epsilon(1e-13));
  for (std::size_t k = 0; k < a.gradient.size(); ++k)
    CHECK(b.gradient[k] == doctest::Approx(a.gradient[k]).epsilon(1e-10).scale(1e-12));
}
