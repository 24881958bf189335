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

#include <cmath>
#include <random>

#include "doctest.h"
#include "kcr/error.hpp"
#include "oracles.hpp"

using namespace kcr::assignment;
using namespace kcr::geometry;

namespace {

MidpointOffsetProposal from_aabox(const AABox& b) {
  return {b.cx(), b.cy(), b.width(), b.height(), 0.0, 0.0, 0.5};
}

bool same(const AssignmentResult& a, const AssignmentResult& b) {
  return a.sigma == b.sigma && a.tau == b.tau && a.positive == b.positive &&
         a.reliable == b.reliable;
}

}  // namespace

TEST_CASE("first stage: exact external match and disjoint proposal") {
  const RotatedBox gt{10, 10, 6, 3, 0.4};
  const AABox p = project_rotated(gt);
  const std::vector<MidpointOffsetProposal> props{from_aabox(p),
                                                  {100, 100, 4, 4, 0, 0, 0.5}};
  const auto r = assign_first_stage(props, SourceGroundTruth{{gt}, {}}, 1.0);
  REQUIRE(r.size() == 2);
  CHECK(r[0].sigma == 0u);
  CHECK(r[0].tau == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r[0].positive);
  CHECK_FALSE(r[1].sigma.has_value());
  CHECK(r[1].tau == 0.0);
  CHECK_FALSE(r[1].positive);
}

TEST_CASE("first stage: diagonal source box matches its projection") {
  const RotatedBox gt{0, 0, 4, 1, kPi / 4};
  const double e = 5.0 / (2.0 * std::sqrt(2.0));  // (4 + 1) / 2 / sqrt(2)
  const std::vector<MidpointOffsetProposal> props{{0, 0, 2 * e, 2 * e, 0, 0, 0.5}};
  const auto r = assign_first_stage(props, SourceGroundTruth{{gt}, {}}, 1.0);
  CHECK(r[0].tau == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r[0].positive);
}

TEST_CASE("first stage: target boxes are enlarged before matching") {
  const AABox gt{-1, -1, 1, 1};
  const std::vector<MidpointOffsetProposal> props{{0, 0, 2.4, 2.4, 0, 0, 0.5}};
  const auto r1 = assign_first_stage(props, TargetGroundTruth{{gt}, {}}, 1.2);
  CHECK(r1[0].tau == doctest::Approx(1.0).epsilon(1e-12));
  const auto r0 = assign_first_stage(props, TargetGroundTruth{{gt}, {}}, 1.0);
  CHECK(r0[0].tau == doctest::Approx(4.0 / 5.76).epsilon(1e-12));
  CHECK_THROWS_AS(assign_first_stage(props, TargetGroundTruth{{gt}, {}}, 0.9),
                  kcr::Error);
}

TEST_CASE("empty ground truth leaves every proposal negative") {
  const std::vector<MidpointOffsetProposal> props{{0, 0, 2, 2, 0, 0, 0.5}};
  const auto r = assign_first_stage(props, TargetGroundTruth{}, 1.0);
  CHECK_FALSE(r[0].positive);
  CHECK(r[0].tau == 0.0);
  const std::vector<RotatedBox> rp{{0, 0, 2, 2, 0}};
  const auto s = assign_second_stage_source(rp, SourceGroundTruth{});
  CHECK_FALSE(s[0].positive);
  CHECK_FALSE(s[0].sigma.has_value());
}

TEST_CASE("second stage source: mirror proposal is negative") {
  const RotatedBox gt{0, 0, 4, 1, 0.5};
  const std::vector<RotatedBox> props{gt, {0, 0, 4, 1, kPi - 0.5}};
  const auto r = assign_second_stage_source(props, SourceGroundTruth{{gt}, {}});
  CHECK(r[0].tau == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r[0].positive);
  CHECK(r[1].tau == doctest::Approx(0.1744662416908838).epsilon(1e-9));
  CHECK_FALSE(r[1].positive);
}

TEST_CASE("second stage source: argmax picks the larger overlap") {
  const SourceGroundTruth gt{{{0, 0, 4, 4, 0}, {3, 0, 4, 4, 0}}, {}};
  const std::vector<RotatedBox> props{{2.5, 0, 4, 4, 0}};
  const auto r = assign_second_stage_source(props, gt);
  CHECK(r[0].sigma == 1u);
  CHECK(r[0].tau == doctest::Approx(3.5 / 4.5).epsilon(1e-12));
}

TEST_CASE("ties go to the lowest ground-truth index") {
  const SourceGroundTruth gt{{{-1, 0, 2, 2, 0}, {1, 0, 2, 2, 0}}, {}};
  const std::vector<RotatedBox> props{{0, 0, 2, 2, 0}};
  const auto r = assign_second_stage_source(props, gt);
  CHECK(r[0].sigma == 0u);
}

TEST_CASE("projection assignment ignores orientation") {
  const RotatedBox b{5, 5, 8, 2, 2.0};
  const AABox gt = project_rotated(b);
  const std::vector<RotatedBox> props{b, {5, 5, 8, 2, kPi - 2.0}, {5, 5, 8, 2, -2.0}};
  const auto r = assign_second_stage_projection(props, TargetGroundTruth{{gt}, {}}, 1.0);
  for (const auto& x : r) {
    CHECK(x.positive);
    CHECK(x.tau == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(same(r[0], r[1]));
  CHECK(same(r[0], r[2]));
}

TEST_CASE("elongated diagonal proposal: projection positive, plain negative") {
  const RotatedBox prop{0, 0, 8, 2, kPi / 4};
  const double s = project_rotated(prop).width();
  const double t = s / std::sqrt(0.6);
  const AABox gt{-t / 2, -t / 2, t / 2, t / 2};
  const std::vector<RotatedBox> props{prop};
  const TargetGroundTruth tgt{{gt}, {}};
  const auto proj = assign_second_stage_projection(props, tgt, 1.0);
  const auto plain = assign_second_stage_target_plain(props, tgt);
  CHECK(proj[0].tau == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(proj[0].positive);
  CHECK(plain[0].tau == doctest::Approx(16.0 / (t * t)).epsilon(1e-9));
  CHECK_FALSE(plain[0].positive);
}

TEST_CASE("both first-stage transforms agree on axis-aligned boxes") {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 200; ++k) {
    RotatedBox b = kcr::testing::random_box(rng);
    b.theta = 0.0;
    std::vector<MidpointOffsetProposal> props;
    for (int i = 0; i < 20; ++i) {
      const RotatedBox q = kcr::testing::random_neighbour(b, rng);
      props.push_back(from_aabox(project_rotated(q)));
    }
    const auto a = assign_first_stage(props, SourceGroundTruth{{b}, {}}, 1.0);
    const auto c = assign_first_stage(
        props, TargetGroundTruth{{project_rotated(b)}, {}}, 1.0);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(same(a[i], c[i]));
  }
}

TEST_CASE("projection assignment is invariant under theta -> pi - theta and -theta") {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 200; ++k) {
    TargetGroundTruth gt;
    for (int j = 0; j < 4; ++j)
      gt.boxes.push_back(project_rotated(kcr::testing::random_box(rng, 30)));
    std::vector<RotatedBox> props, mirror, neg;
    // theta in [pi/2, pi) keeps kPi - theta exact.
    std::uniform_real_distribution<double> upper(kPi / 2, kPi);
    for (int i = 0; i < 16; ++i) {
      RotatedBox p = kcr::testing::random_box(rng, 30);
      p.theta = upper(rng);
      props.push_back(p);
      mirror.push_back({p.cx, p.cy, p.w, p.h, kPi - p.theta});
      neg.push_back({p.cx, p.cy, p.w, p.h, -p.theta});
    }
    const auto a = assign_second_stage_projection(props, gt, 1.1);
    const auto b = assign_second_stage_projection(mirror, gt, 1.1);
    const auto c = assign_second_stage_projection(neg, gt, 1.1);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(same(a[i], b[i]));
      CHECK(same(a[i], c[i]));
    }
  }
}

TEST_CASE("reliability switch examples") {
  HeuristicConfig cfg;
  cfg.area_threshold = 150;
  CHECK(is_reliable({0, 0, 40, 10}, cfg));
  cfg.area_rule = AreaRule::kMaskSmall;
  CHECK(is_reliable({0, 0, 40, 10}, cfg));
  CHECK_FALSE(is_reliable({0, 0, 20, 10}, cfg));
  cfg.area_rule = AreaRule::kKeepSmall;
  CHECK(is_reliable({0, 0, 12, 10}, cfg));
  CHECK_FALSE(is_reliable({0, 0, 20, 10}, cfg));

  HeuristicConfig bad;
  bad.aspect_ratio_min = 0.5;
  CHECK_THROWS_AS(bad.validate(), kcr::Error);
}

TEST_CASE("reliability switch masks only positives on unreliable ground truth") {
  const TargetGroundTruth gt{{{0, 0, 40, 10}, {100, 100, 120, 110}}, {}};
  const std::vector<RotatedBox> props{
      {20, 5, 40, 10, 0}, {110, 105, 20, 10, 0}, {300, 300, 5, 5, 0},
      {110, 105, 20, 10, 1.2}};
  const auto plain = assign_second_stage_target_plain(props, gt);
  HeuristicConfig cfg;
  cfg.area_threshold = 150;
  const auto r = reliability_switch(plain, gt, cfg);
  CHECK(r[0].positive);
  CHECK(r[0].reliable);
  CHECK(r[1].positive);
  CHECK_FALSE(r[1].reliable);
  CHECK_FALSE(r[2].positive);
  CHECK(r[2].reliable);
  CHECK_FALSE(r[3].positive);
  CHECK(r[3].reliable);
}

TEST_CASE("assignment is deterministic") {
  std::mt19937_64 rng(3);
  SourceGroundTruth gt;
  for (int j = 0; j < 10; ++j) gt.boxes.push_back(kcr::testing::random_box(rng, 40));
  std::vector<RotatedBox> props;
  for (int i = 0; i < 100; ++i) props.push_back(kcr::testing::random_box(rng, 40));
  const auto a = assign_second_stage_source(props, gt);
  const auto b = assign_second_stage_source(props, gt);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(same(a[i], b[i]));
}

TEST_CASE("positive recall") {
  std::vector<AssignmentResult> r(3);
  r[0].positive = true;
  const bool rel[] = {true, true, false};
  CHECK(positive_recall(r, rel) == 0.5);
  const bool none[] = {false, false, false};
  CHECK(positive_recall(r, none) == 1.0);
}
