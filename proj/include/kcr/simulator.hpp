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
#ifndef KCR_SIMULATOR_HPP_
#define KCR_SIMULATOR_HPP_

// Synthetic co-training experiments.
//
// A scene is a set of rotated rectangles. Proposals (anchors) are jittered
// external rectangles of the objects plus background boxes. Each anchor is
// described by the area moments of its support region (the object covering
// most of a window 1.5 times the anchor size, clipped to that window); the
// shared affine predictor maps these features to both stages' outputs.
//
// Feature layout (kFeatureCount values per anchor):
//   0  constant 1
//   1  occupancy: support area / anchor area
//   2  (centroid x - anchor cx) / anchor w
//   3  (centroid y - anchor cy) / anchor h
//   4  log(estimated external width / anchor w)
//   5  log(estimated external height / anchor h)
//   6  estimated alpha / w of the moment-fitted rectangle
//   7  estimated beta / h of the moment-fitted rectangle
//   8  e cos(2 phi), e = (l1 - l2) / (l1 + l2), phi the major-axis angle
//   9  e sin(2 phi)
//  10  misfit: f2^2 + f3^2 + f4^2 + f5^2
// With symmetric features, 6, 7 and 9 are replaced by their absolute values,
// so mirror-image objects (theta and pi - theta) look identical.

#include <cstdint>
#include <string>
#include <vector>

#include "kcr/assignment.hpp"
#include "kcr/evaluation.hpp"
#include "kcr/geometry.hpp"
#include "kcr/losses.hpp"

namespace kcr::simulator {

inline constexpr std::size_t kFeatureCount = 11;
inline constexpr double kFeatureWindow = 1.5;

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

enum class Orientation {
  kUniform,      // theta uniform in [-pi/2, pi/2)
  kAxisAligned,  // theta = 0
};

struct SceneConfig {
  double extent = 256.0;  // square image side
  int min_objects = 6;
  int max_objects = 12;
  Range width{24.0, 48.0};  // long side
  Range height{6.0, 12.0};  // short side
  Orientation orientation = Orientation::kUniform;
  // Probability that an object is placed over an earlier one; otherwise
  // placement is rejection-sampled to be disjoint from all others.
  double occlusion_rate = 0.1;
  double feature_noise = 0.02;  // std-dev added to features 1..10
  double jitter = 0.08;         // relative centre / log-scale jitter of anchors
  int proposals_per_object = 4;
  int background_proposals = 16;
  bool symmetric_features = false;

  void validate() const;  // throws Error(kInvalidArgument)
};

struct Scene {
  std::vector<geometry::RotatedBox> objects;
  std::vector<geometry::AABox> axis_aligned;  // project_rotated of objects
  std::vector<geometry::AABox> anchors;
  std::vector<double> features;  // anchors x kFeatureCount, row-major
};

// Deterministic in (cfg, seed).
Scene generate_scene(const SceneConfig& cfg, std::uint64_t seed);

// Noise-free features of one anchor.
std::vector<double> anchor_features(const geometry::AABox& anchor,
                                    const std::vector<geometry::RotatedBox>& objects,
                                    bool symmetric);

// Mixes a base seed with a purpose tag and an index (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t index);

enum class Mode { kAxisOnly, kKcrProjection, kKcrHeuristic, kFullySupervised };

std::string mode_name(Mode m);
Mode parse_mode(const std::string& name);  // throws Error(kInvalidArgument)

struct ExperimentSpec {
  Mode mode = Mode::kKcrProjection;
  int epochs = 300;
  double learning_rate = 0.05;
  double lr_decay = 1.0;  // multiplied into the rate after every epoch
  int source_per_batch = 2;
  int target_per_batch = 2;
  int source_scenes = 48;
  int target_scenes = 48;
  int test_scenes = 128;
  double gamma = 1.0;
  double nms_threshold = 0.5;
  losses::RegressionKind regression = losses::RegressionKind::kL1;
  double regression_weight = 1.0;
  assignment::HeuristicConfig heuristic;
  SceneConfig source;
  SceneConfig target;
  std::uint64_t seed = 7;

  void validate() const;  // throws Error(kInvalidArgument / kInvalidGamma)
};

// Domain gap defaults: the target domain has larger, noisier objects.
SceneConfig default_source_domain();
SceneConfig default_target_domain();
ExperimentSpec default_experiment();

struct EpochTrace {
  int epoch = 0;
  double learning_rate = 0.0;
  double L_S = 0.0;
  double L_T = 0.0;
  double L_S_star = 0.0;
  double L_T_star = 0.0;
  double total = 0.0;
};

struct TrainResult {
  losses::AffinePredictor model;
  std::vector<EpochTrace> trace;
};

// Training data of one experiment, built from the experiment seeds.
losses::TrainingBatch build_training_set(const ExperimentSpec& spec);
std::vector<Scene> build_test_set(const ExperimentSpec& spec);

// Plain gradient descent over 2 + 2 image batches; the trace holds epoch
// means. Throws Error(kDivergedLoss) on a non-finite loss.
TrainResult train(const ExperimentSpec& spec);
TrainResult train(const ExperimentSpec& spec, const losses::TrainingBatch& data);

// Rotated detections for one scene: stage one, decode, stage two, NMS.
// The score is the second-stage probability.
std::vector<evaluation::Detection> predict(const losses::AffinePredictor& model,
                                           const Scene& scene, double nms_threshold);

evaluation::EvalReport evaluate(const losses::AffinePredictor& model,
                                const std::vector<Scene>& scenes, double nms_threshold);

// --- benchmark suite --------------------------------------------------------

struct SuiteSpec {
  ExperimentSpec base;
  std::vector<Mode> modes{Mode::kAxisOnly, Mode::kKcrProjection, Mode::kKcrHeuristic,
                          Mode::kFullySupervised};
  std::vector<double> gamma_sweep;  // kcr_projection runs, one per gamma
  bool symmetric_ablation = false;  // kcr_projection with symmetric features
};

// All four modes, the gamma sweep {1.0, 1.05, 1.1, 1.2} and the symmetric
// feature ablation on the default experiment.
SuiteSpec default_suite();

struct RunResult {
  std::string label;
  ExperimentSpec spec;
  double ap50 = 0.0;
  double precision_at_recall_50 = 0.0;
  std::vector<EpochTrace> trace;
  std::vector<evaluation::PrPoint> curve;
};

struct SuiteResult {
  std::vector<RunResult> runs;

  const RunResult* find(const std::string& label) const;
};

// Runs are independent and may execute in parallel; results do not depend
// on the thread count.
SuiteResult run_benchmark_suite(const SuiteSpec& suite);

// Experiment config file, schema "kcr.experiment" version 1. Missing keys
// take their defaults; unknown keys are errors.
SuiteSpec parse_suite_spec(const std::string& json_text);
std::string suite_spec_to_json(const SuiteSpec& suite);

struct Artifact {
  std::string name;
  std::string contents;
};

// table.csv, table.json, trace_<label>.json and pr_<label>.csv per run. No
// timestamps, so identical specs give identical bytes.
std::vector<Artifact> suite_artifacts(const SuiteResult& result);

}  // namespace kcr::simulator

#endif  // KCR_SIMULATOR_HPP_
