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
#include "kcr/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "kcr/error.hpp"
#include "kcr/runtime.hpp"

namespace kcr::simulator {

using assignment::SourceGroundTruth;
using assignment::TargetGroundTruth;
using geometry::AABox;
using geometry::kPi;
using geometry::Quad;
using geometry::RotatedBox;

namespace {

// Portable draws: the standard distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = uniform();
    while (u <= 0.0) u = uniform();
    const double v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    spare_ = r * std::sin(2.0 * kPi * v);
    has_spare_ = true;
    return r * std::cos(2.0 * kPi * v);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
}

bool valid_range(const Range& r) {
  return std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo > 0.0 && r.hi >= r.lo;
}

Quad aabox_quad(const AABox& b) {
  return Quad{{{{b.xmin, b.ymin}, {b.xmax, b.ymin}, {b.xmax, b.ymax}, {b.xmin, b.ymax}}}};
}

bool disjoint(const AABox& a, const AABox& b) {
  return a.xmax <= b.xmin || b.xmax <= a.xmin || a.ymax <= b.ymin || b.ymax <= a.ymin;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t index) {
  Rng r(base ^ (tag * 0xD1B54A32D192ED03ull));
  r.next();
  Rng s(r.next() ^ (index * 0x8CB92BA72F3D8DD7ull));
  return s.next();
}

void SceneConfig::validate() const {
  require(std::isfinite(extent) && extent > 0.0, "scene extent must be positive");
  require(min_objects >= 0 && max_objects >= min_objects, "object count range is invalid");
  require(valid_range(width) && valid_range(height), "width and height ranges must be positive");
  require(occlusion_rate >= 0.0 && occlusion_rate <= 1.0, "occlusion rate must be in [0, 1]");
  require(std::isfinite(feature_noise) && feature_noise >= 0.0,
          "feature noise must be non-negative");
  require(std::isfinite(jitter) && jitter >= 0.0, "jitter must be non-negative");
  require(proposals_per_object >= 0 && background_proposals >= 0,
          "proposal counts must be non-negative");
  require(width.hi < extent && height.hi < extent, "objects must fit in the scene");
}

std::vector<double> anchor_features(const AABox& anchor, const std::vector<RotatedBox>& objects,
                                    bool symmetric) {
  const double aw = anchor.width();
  const double ah = anchor.height();
  const AABox window = geometry::enlarge_aabox(anchor, kFeatureWindow);
  const geometry::ConvexPolygon wpoly = geometry::to_polygon(aabox_quad(window));
  // Support region: the object covering most of the window.
  geometry::AreaMoments m;
  for (const RotatedBox& o : objects) {
    if (disjoint(geometry::project_rotated(o), window)) continue;
    const Quad q = geometry::normalize_winding(geometry::rotated_to_quad(o));
    const geometry::AreaMoments part = geometry::polygon_moments(geometry::clip_polygon(wpoly, q));
    if (part.m00 > m.m00) m = part;
  }

  constexpr double kLogClamp = 2.0;
  std::vector<double> f(kFeatureCount, 0.0);
  f[0] = 1.0;
  auto finish = [&] {
    f[10] = f[2] * f[2] + f[3] * f[3] + f[4] * f[4] + f[5] * f[5];
    if (symmetric) {
      f[6] = std::abs(f[6]);
      f[7] = std::abs(f[7]);
      f[9] = std::abs(f[9]);
    }
    return f;
  };
  if (!(m.m00 > 1e-9 * aw * ah)) {
    f[4] = f[5] = -kLogClamp;
    return finish();
  }
  const double x = m.m10 / m.m00;
  const double y = m.m01 / m.m00;
  const double mu20 = std::max(0.0, m.m20 / m.m00 - x * x);
  const double mu02 = std::max(0.0, m.m02 / m.m00 - y * y);
  const double mu11 = m.m11 / m.m00 - x * y;
  const double mean = 0.5 * (mu20 + mu02);
  const double rad = std::hypot(0.5 * (mu20 - mu02), mu11);
  const double l1 = mean + rad;
  const double l2 = std::max(0.0, mean - rad);
  const double phi = 0.5 * std::atan2(2.0 * mu11, mu20 - mu02);
  const double a = std::sqrt(12.0 * l1);
  const double b = std::max(std::sqrt(12.0 * l2), 1e-6 * a);

  f[1] = m.m00 / (aw * ah);
  f[2] = (x - anchor.cx()) / aw;
  f[3] = (y - anchor.cy()) / ah;
  if (!(a > 0.0)) {
    f[4] = f[5] = -kLogClamp;
    return finish();
  }
  const double c = std::abs(std::cos(phi));
  const double s = std::abs(std::sin(phi));
  const double ext_w = a * c + b * s;
  const double ext_h = a * s + b * c;
  f[4] = std::clamp(std::log(ext_w / aw), -kLogClamp, kLogClamp);
  f[5] = std::clamp(std::log(ext_h / ah), -kLogClamp, kLogClamp);
  const geometry::MidpointOffsetProposal mo =
      geometry::theta_to_midpoint_offset(RotatedBox{x, y, a, b, phi});
  f[6] = mo.alpha / mo.w;
  f[7] = mo.beta / mo.h;
  const double e = (l1 + l2) > 0.0 ? (l1 - l2) / (l1 + l2) : 0.0;
  f[8] = e * std::cos(2.0 * phi);
  f[9] = e * std::sin(2.0 * phi);
  return finish();
}

Scene generate_scene(const SceneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Scene scene;
  const int n = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  for (int k = 0; k < n; ++k) {
    RotatedBox b;
    b.w = rng.uniform(cfg.width.lo, cfg.width.hi);
    b.h = std::min(rng.uniform(cfg.height.lo, cfg.height.hi), b.w);
    b.theta = cfg.orientation == Orientation::kUniform ? rng.uniform(-kPi / 2, kPi / 2) : 0.0;
    const double r = 0.5 * std::hypot(b.w, b.h);
    const bool overlap = !scene.objects.empty() && rng.uniform() < cfg.occlusion_rate;
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      if (overlap) {
        const RotatedBox& host = scene.objects[rng.next() % scene.objects.size()];
        b.cx = host.cx + rng.uniform(-0.5, 0.5) * host.w * std::cos(host.theta);
        b.cy = host.cy + rng.uniform(-0.5, 0.5) * host.w * std::sin(host.theta);
        placed = b.cx > r && b.cx < cfg.extent - r && b.cy > r && b.cy < cfg.extent - r;
        continue;
      }
      b.cx = rng.uniform(r, cfg.extent - r);
      b.cy = rng.uniform(r, cfg.extent - r);
      placed = true;
      const Quad q = geometry::rotated_to_quad(b);
      for (const RotatedBox& o : scene.objects) {
        if (geometry::polygon_intersection_area(q, geometry::rotated_to_quad(o)) > 0.0) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) continue;
    scene.objects.push_back(b);
    scene.axis_aligned.push_back(geometry::project_rotated(b));
  }

  for (const AABox& ext : scene.axis_aligned) {
    for (int p = 0; p < cfg.proposals_per_object; ++p) {
      if (cfg.jitter == 0.0) {
        scene.anchors.push_back(ext);
        continue;
      }
      const double w = ext.width() * std::exp(cfg.jitter * rng.normal());
      const double h = ext.height() * std::exp(cfg.jitter * rng.normal());
      const double cx = ext.cx() + cfg.jitter * ext.width() * rng.normal();
      const double cy = ext.cy() + cfg.jitter * ext.height() * rng.normal();
      scene.anchors.push_back(geometry::to_aabox_from_center(cx, cy, w, h));
    }
  }
  for (int p = 0; p < cfg.background_proposals; ++p) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double w = rng.uniform(cfg.height.lo, cfg.width.hi);
      const double h = rng.uniform(cfg.height.lo, cfg.width.hi);
      const AABox a = geometry::to_aabox_from_center(
          rng.uniform(0.5 * w, cfg.extent - 0.5 * w), rng.uniform(0.5 * h, cfg.extent - 0.5 * h),
          w, h);
      bool clear = true;
      for (const AABox& g : scene.axis_aligned) {
        if (geometry::iou_aabb(a, g) >= 0.3) {
          clear = false;
          break;
        }
      }
      if (clear) {
        scene.anchors.push_back(a);
        break;
      }
    }
  }

  scene.features.reserve(scene.anchors.size() * kFeatureCount);
  for (const AABox& a : scene.anchors) {
    std::vector<double> f = anchor_features(a, scene.objects, cfg.symmetric_features);
    for (std::size_t k = 1; k < kFeatureCount; ++k) f[k] += cfg.feature_noise * rng.normal();
    if (cfg.symmetric_features) {
      f[6] = std::abs(f[6]);
      f[7] = std::abs(f[7]);
      f[9] = std::abs(f[9]);
    }
    scene.features.insert(scene.features.end(), f.begin(), f.end());
  }
  return scene;
}

// --- experiments ------------------------------------------------------------

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::kAxisOnly: return "axis_only";
    case Mode::kKcrProjection: return "kcr_projection";
    case Mode::kKcrHeuristic: return "kcr_heuristic";
    case Mode::kFullySupervised: return "fully_supervised";
  }
  return "unknown";
}

Mode parse_mode(const std::string& name) {
  for (Mode m : {Mode::kAxisOnly, Mode::kKcrProjection, Mode::kKcrHeuristic,
                 Mode::kFullySupervised})
    if (mode_name(m) == name) return m;
  throw Error(ErrorCode::kInvalidArgument, "unknown mode '" + name + "'");
}

void ExperimentSpec::validate() const {
  require(epochs >= 0, "epochs must be non-negative");
  require(std::isfinite(learning_rate) && learning_rate > 0.0, "learning rate must be positive");
  require(std::isfinite(lr_decay) && lr_decay > 0.0 && lr_decay <= 1.0,
          "lr decay must be in (0, 1]");
  require(source_per_batch > 0 && target_per_batch > 0, "batch sizes must be positive");
  require(source_scenes > 0 && target_scenes > 0 && test_scenes > 0,
          "scene counts must be positive");
  require(nms_threshold > 0.0 && nms_threshold <= 1.0, "NMS threshold must be in (0, 1]");
  require(std::isfinite(regression_weight) && regression_weight >= 0.0,
          "regression weight must be non-negative");
  if (!(gamma >= 1.0) || !std::isfinite(gamma))
    throw Error(ErrorCode::kInvalidGamma, "gamma must be >= 1");
  heuristic.validate();
  source.validate();
  target.validate();
}

SceneConfig default_source_domain() { return SceneConfig{}; }

SceneConfig default_target_domain() {
  SceneConfig c;
  c.width = {28.0, 56.0};
  c.height = {7.0, 14.0};
  c.feature_noise = 0.04;
  return c;
}

ExperimentSpec default_experiment() {
  ExperimentSpec s;
  s.source = default_source_domain();
  s.target = default_target_domain();
  return s;
}

SuiteSpec default_suite() {
  SuiteSpec s;
  s.base = default_experiment();
  s.gamma_sweep = {1.0, 1.05, 1.1, 1.2};
  s.symmetric_ablation = true;
  return s;
}

namespace {

constexpr std::uint64_t kSourceTag = 1;
constexpr std::uint64_t kTargetTag = 2;
constexpr std::uint64_t kTestTag = 3;

losses::TrainingImage image_from(const Scene& s, assignment::GroundTruthSet gt) {
  losses::TrainingImage img;
  img.anchors = s.anchors;
  img.features = s.features;
  img.gt = std::move(gt);
  return img;
}

losses::ObjectiveConfig objective(const ExperimentSpec& spec) {
  losses::ObjectiveConfig cfg;
  cfg.gamma = spec.gamma;
  cfg.strategy = spec.mode == Mode::kKcrHeuristic ? losses::TargetStrategy::kHeuristic
                                                  : losses::TargetStrategy::kProjection;
  cfg.heuristic = spec.heuristic;
  cfg.loss.regression = spec.regression;
  cfg.loss.regression_weight = spec.regression_weight;
  return cfg;
}

}  // namespace

losses::TrainingBatch build_training_set(const ExperimentSpec& spec) {
  spec.validate();
  losses::TrainingBatch data;
  const bool with_source = spec.mode == Mode::kKcrProjection || spec.mode == Mode::kKcrHeuristic;
  if (with_source) {
    data.source.resize(static_cast<std::size_t>(spec.source_scenes));
    parallel_for(data.source.size(), [&](std::size_t k) {
      const Scene s = generate_scene(spec.source, derive_seed(spec.seed, kSourceTag, k));
      data.source[k] = image_from(s, SourceGroundTruth{s.objects, {}});
    }, 4);
  }
  data.target.resize(static_cast<std::size_t>(spec.target_scenes));
  parallel_for(data.target.size(), [&](std::size_t k) {
    const Scene s = generate_scene(spec.target, derive_seed(spec.seed, kTargetTag, k));
    switch (spec.mode) {
      case Mode::kAxisOnly: {
        SourceGroundTruth gt;
        for (const AABox& b : s.axis_aligned) gt.boxes.push_back(geometry::to_rotated(b));
        data.target[k] = image_from(s, gt);
        break;
      }
      case Mode::kFullySupervised:
        data.target[k] = image_from(s, SourceGroundTruth{s.objects, {}});
        break;
      default:
        data.target[k] = image_from(s, TargetGroundTruth{s.axis_aligned, {}});
    }
  }, 4);
  return data;
}

std::vector<Scene> build_test_set(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<Scene> out(static_cast<std::size_t>(spec.test_scenes));
  parallel_for(out.size(), [&](std::size_t k) {
    out[k] = generate_scene(spec.target, derive_seed(spec.seed, kTestTag, k));
  }, 4);
  return out;
}

TrainResult train(const ExperimentSpec& spec) { return train(spec, build_training_set(spec)); }

TrainResult train(const ExperimentSpec& spec, const losses::TrainingBatch& data) {
  spec.validate();
  const losses::ObjectiveConfig cfg = objective(spec);
  const std::size_t ns = data.source.size();
  const std::size_t nt = data.target.size();
  const std::size_t sp = static_cast<std::size_t>(spec.source_per_batch);
  const std::size_t tp = static_cast<std::size_t>(spec.target_per_batch);
  std::size_t steps = 0;
  if (ns > 0) steps = std::max(steps, (ns + sp - 1) / sp);
  if (nt > 0) steps = std::max(steps, (nt + tp - 1) / tp);

  std::vector<losses::TrainingBatch> batches(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t i = 0; i < sp && ns > 0; ++i)
      batches[s].source.push_back(data.source[(s * sp + i) % ns]);
    for (std::size_t i = 0; i < tp && nt > 0; ++i)
      batches[s].target.push_back(data.target[(s * tp + i) % nt]);
  }

  TrainResult out;
  out.model = losses::AffinePredictor(kFeatureCount);
  double lr = spec.learning_rate;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    EpochTrace t;
    t.epoch = epoch + 1;
    t.learning_rate = lr;
    for (const losses::TrainingBatch& b : batches) {
      losses::LossBreakdown lb;
      try {
        lb = losses::loss_gradient(out.model, b, cfg);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNonFiniteLoss) throw;
        throw Error(ErrorCode::kDivergedLoss,
                    "training diverged in epoch " + std::to_string(epoch + 1) + ": " + e.what());
      }
      if (!std::isfinite(lb.total()))
        throw Error(ErrorCode::kDivergedLoss,
                    "training diverged in epoch " + std::to_string(epoch + 1));
      for (std::size_t k = 0; k < out.model.params.size(); ++k)
        out.model.params[k] -= lr * lb.gradient[k];
      t.L_S += lb.L_S;
      t.L_T += lb.L_T;
      t.L_S_star += lb.L_S_star;
      t.L_T_star += lb.L_T_star;
    }
    const double inv = steps > 0 ? 1.0 / static_cast<double>(steps) : 0.0;
    t.L_S *= inv;
    t.L_T *= inv;
    t.L_S_star *= inv;
    t.L_T_star *= inv;
    t.total = t.L_S + t.L_T + t.L_S_star + t.L_T_star;
    out.trace.push_back(t);
    lr *= spec.lr_decay;
  }
  return out;
}

std::vector<evaluation::Detection> predict(const losses::AffinePredictor& model,
                                           const Scene& scene, double nms_threshold) {
  if (model.features != kFeatureCount)
    throw Error(ErrorCode::kInvalidArgument, "predictor feature count mismatch");
  std::vector<evaluation::Detection> dets;
  dets.reserve(scene.anchors.size());
  for (std::size_t i = 0; i < scene.anchors.size(); ++i) {
    const std::span<const double> x(scene.features.data() + i * kFeatureCount, kFeatureCount);
    const losses::FirstStageOutput o1 = model.first_stage(x);
    const losses::SecondStageOutput o2 = model.second_stage(x);
    const RotatedBox proposal = losses::decode_rotated_proposal(
        scene.anchors[i], o1, losses::DeltaNormalization::kRelative);
    const RotatedBox refined =
        losses::decode_second_stage(proposal, o2, losses::DeltaNormalization::kRelative);
    const double score = losses::sigmoid(o2[losses::kSecondStageOutputs - 1]);
    if (!geometry::is_valid(refined) || !std::isfinite(score))
      throw Error(ErrorCode::kNonFiniteLoss, "prediction is not finite");
    dets.push_back({geometry::canonicalize(refined), score, 0});
  }
  return evaluation::rotated_nms(dets, nms_threshold);
}

evaluation::EvalReport evaluate(const losses::AffinePredictor& model,
                                const std::vector<Scene>& scenes, double nms_threshold) {
  std::vector<evaluation::ImageEvaluation> ims(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t k) {
    char id[32];
    std::snprintf(id, sizeof id, "test_%04zu", k);
    ims[k].image_id = id;
    ims[k].detections = predict(model, scenes[k], nms_threshold);
    ims[k].ground_truth = scenes[k].objects;
  }, 4);
  return evaluation::evaluate_dataset(ims);
}

// --- suite ------------------------------------------------------------------

const RunResult* SuiteResult::find(const std::string& label) const {
  for (const RunResult& r : runs)
    if (r.label == label) return &r;
  return nullptr;
}

SuiteResult run_benchmark_suite(const SuiteSpec& suite) {
  suite.base.validate();
  SuiteResult result;
  for (Mode m : suite.modes) {
    RunResult r;
    r.label = mode_name(m);
    r.spec = suite.base;
    r.spec.mode = m;
    if (result.find(r.label) == nullptr) result.runs.push_back(r);
  }
  for (double g : suite.gamma_sweep) {
    RunResult r;
    r.label = "gamma_" + fmt("%g", g);
    r.spec = suite.base;
    r.spec.mode = Mode::kKcrProjection;
    r.spec.gamma = g;
    if (result.find(r.label) == nullptr) result.runs.push_back(r);
  }
  if (suite.symmetric_ablation) {
    RunResult r;
    r.label = "symmetric_features";
    r.spec = suite.base;
    r.spec.mode = Mode::kKcrProjection;
    r.spec.source.symmetric_features = true;
    r.spec.target.symmetric_features = true;
    result.runs.push_back(r);
  }
  for (RunResult& r : result.runs) r.spec.validate();

  // A sweep point equal to an earlier run (gamma_1 vs kcr_projection) reuses it.
  auto same = [](const ExperimentSpec& a, const ExperimentSpec& b) {
    return a.mode == b.mode && a.gamma == b.gamma &&
           a.source.symmetric_features == b.source.symmetric_features &&
           a.target.symmetric_features == b.target.symmetric_features;
  };
  std::vector<std::size_t> origin(result.runs.size());
  for (std::size_t k = 0; k < result.runs.size(); ++k) {
    origin[k] = k;
    for (std::size_t j = 0; j < k; ++j)
      if (same(result.runs[j].spec, result.runs[k].spec)) {
        origin[k] = j;
        break;
      }
  }

  parallel_for(result.runs.size(), [&](std::size_t k) {
    if (origin[k] != k) return;
    RunResult& r = result.runs[k];
    TrainResult t = train(r.spec);
    const evaluation::EvalReport rep =
        evaluate(t.model, build_test_set(r.spec), r.spec.nms_threshold);
    r.ap50 = rep.ap50;
    r.precision_at_recall_50 = evaluation::precision_at_recall(rep.curve, 0.5);
    r.trace = std::move(t.trace);
    r.curve = rep.curve;
  }, 1);
  for (std::size_t k = 0; k < result.runs.size(); ++k) {
    if (origin[k] == k) continue;
    const RunResult& o = result.runs[origin[k]];
    RunResult& r = result.runs[k];
    r.ap50 = o.ap50;
    r.precision_at_recall_50 = o.precision_at_recall_50;
    r.trace = o.trace;
    r.curve = o.curve;
  }
  return result;
}

}  // namespace kcr::simulator
