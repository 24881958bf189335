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
// Acceptance checks. Prints one PASS/FAIL line per criterion.
//
// Exit status is 0 when every criterion outside KNOWN_FAIL_CRITERIA passes.
// With --strict every criterion must pass. --only=N runs a single criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fuzz.hpp"
#include "gradcheck.hpp"
#include "kcr/assignment.hpp"
#include "kcr/dataio.hpp"
#include "kcr/evaluation.hpp"
#include "kcr/geometry.hpp"
#include "kcr/losses.hpp"
#include "kcr/runtime.hpp"
#include "kcr/simulator.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace kcr;
using namespace kcr::geometry;

namespace {

// Criteria that are expected to fail; see the README.
const std::set<int> KNOWN_FAIL_CRITERIA = {6};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- 1: rotated IoU against Monte-Carlo -------------------------------------

Outcome geometry_oracle() {
  constexpr int kPairs = 1000;
  constexpr int kGrid = 1000;  // 10^6 samples per pair
  constexpr double kTol = 3e-3;
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<RotatedBox> a(kPairs), b(kPairs);
  std::mt19937_64 rng(20261014);
  for (int k = 0; k < kPairs; ++k) {
    a[k] = testing::random_box(rng, 100, 1, 50);
    // Three in four pairs overlap; the rest are independent boxes.
    b[k] = k % 4 == 3 ? testing::random_box(rng, 100, 1, 50)
                      : testing::random_neighbour(a[k], rng);
  }
  std::vector<double> err(kPairs);
  parallel_for(
      kPairs,
      [&](std::size_t k) {
        std::mt19937_64 local(1000003ULL * (k + 1));
        err[k] = std::abs(iou_rotated(a[k], b[k]) -
                          testing::monte_carlo_iou(a[k], b[k], kGrid, local));
      },
      1);
  const double worst = *std::max_element(err.begin(), err.end());
  const double secs = seconds_since(t0);

  const double analytic =
      iou_rotated({0, 0, 1, 1, 0}, {0, 0, 1, 1, kPi / 4});
  const double analytic_err = std::abs(analytic - 1 / std::sqrt(2.0));

  Outcome o;
  o.pass = worst < kTol && secs < 60 && analytic_err <= 1e-9;
  o.detail = "max |iou - mc| = " + fmt("%.3e", worst) + " (< 3e-3) over 1000 pairs, " +
             fmt("%.1f", secs) + " s (< 60 s); unit squares 0/45 deg error " +
             fmt("%.1e", analytic_err) + " (<= 1e-9)";
  return o;
}

// --- 2: round trips ----------------------------------------------------------

Outcome round_trips() {
  constexpr int kN = 10000;
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> u(0, 1);

  // rotated -> quad -> rotated, compared as corner sets so that the choice
  // of (w, h, theta) labelling does not matter.
  double quad_err = 0;
  int quad_fail = 0;
  for (int k = 0; k < kN; ++k) {
    const RotatedBox b = testing::random_box(rng, 1000, 0.5, 200);
    try {
      const RotatedBox back = quad_to_rotated(rotated_to_quad(b));
      quad_err = std::max(quad_err, testing::corner_set_distance(b, back));
    } catch (const std::exception&) {
      ++quad_fail;
    }
  }

  // rotated -> midpoint offset -> rotated, against the long-edge form.
  double mo_err = 0;
  int mo_fail = 0;
  for (int k = 0; k < kN; ++k) {
    const RotatedBox b = canonicalize(testing::random_box(rng, 1000, 0.5, 200));
    try {
      const RotatedBox back = midpoint_offset_to_rotated(theta_to_midpoint_offset(b));
      mo_err = std::max(mo_err, testing::corner_set_distance(b, back));
    } catch (const std::exception&) {
      ++mo_fail;
    }
  }

  // DOTA write -> read. Corners lie on a 0.01 grid below 10^4, the range the
  // six-significant-digit writer represents exactly.
  double dota_err = 0;
  int dota_fail = 0;
  auto grid = [](double v) { return std::round(v * 100.0) / 100.0; };
  for (int k = 0; k < kN; ++k) {
    dataio::AnnotationRecord r;
    r.image_id = "img";
    const int n = 1 + static_cast<int>(u(rng) * 4);
    for (int j = 0; j < n; ++j) {
      const RotatedBox b{100 + u(rng) * 9800, 100 + u(rng) * 9800, 5 + u(rng) * 80,
                         5 + u(rng) * 80, (u(rng) - 0.5) * kPi};
      Quad q = rotated_to_quad(b);
      for (auto& p : q.v) p = {grid(p.x), grid(p.y)};
      dataio::Annotation a;
      a.shape = normalize_winding(q);
      a.label = "cls" + std::to_string(j % 3);
      a.difficult = u(rng) < 0.3;
      r.objects.push_back(a);
    }
    try {
      const auto back = dataio::parse_dota(dataio::write_dota(r), "img");
      if (back.objects.size() != r.objects.size()) {
        ++dota_fail;
        continue;
      }
      for (std::size_t j = 0; j < r.objects.size(); ++j) {
        const auto& x = r.objects[j];
        const auto& y = back.objects[j];
        if (x.label != y.label || x.difficult != y.difficult ||
            !std::holds_alternative<Quad>(y.shape)) {
          ++dota_fail;
          continue;
        }
        const Quad& p = std::get<Quad>(x.shape);
        const Quad& q = std::get<Quad>(y.shape);
        for (int i = 0; i < 4; ++i)
          dota_err = std::max({dota_err, std::abs(p.v[i].x - q.v[i].x),
                               std::abs(p.v[i].y - q.v[i].y)});
      }
    } catch (const std::exception&) {
      ++dota_fail;
    }
  }

  Outcome o;
  o.pass = quad_fail == 0 && mo_fail == 0 && dota_fail == 0 && quad_err <= 1e-9 &&
           mo_err <= 1e-9 && dota_err <= 1e-6;
  o.detail = "10000 each: quad max " + fmt("%.2e", quad_err) + " (<= 1e-9) failures " +
             std::to_string(quad_fail) + "; midpoint-offset max " + fmt("%.2e", mo_err) +
             " (<= 1e-9) failures " + std::to_string(mo_fail) + "; dota max " +
             fmt("%.2e", dota_err) + " (<= 1e-6) failures " + std::to_string(dota_fail);
  return o;
}

// --- 3: gradients ------------------------------------------------------------

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  int points = 0, rejected = 0;
  // Four objective configurations, 25 points each.
  for (int mode = 0; mode < 4; ++mode) {
    losses::ObjectiveConfig cfg;
    cfg.gamma = mode == 1 ? 1.1 : 1.0;
    cfg.strategy = mode == 2 ? losses::TargetStrategy::kHeuristic
                             : losses::TargetStrategy::kProjection;
    cfg.heuristic.area_threshold = 150;
    if (mode == 3) cfg.loss.regression = losses::RegressionKind::kSmoothL1;
    if (mode == 1) cfg.weights = {2.0, 0.5};
    const auto r = testing::gradient_check(cfg, 25, 5000 + mode);
    worst = std::max(worst, r.max_relative_error);
    points += r.points;
    rejected += r.rejected;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = points == 100 && worst < 1e-5 && secs < 30;
  o.detail = std::to_string(points) + " points (" + std::to_string(rejected) +
             " resampled near l1 kinks), max relative error " + fmt("%.2e", worst) +
             " (< 1e-5), " + fmt("%.1f", secs) + " s (< 30 s)";
  return o;
}

// --- 4: assignment properties -----------------------------------------------

bool same_assignment(const assignment::AssignmentResult& a,
                     const assignment::AssignmentResult& b) {
  return a.sigma == b.sigma && a.tau == b.tau && a.positive == b.positive &&
         a.reliable == b.reliable;
}

Outcome assignment_properties() {
  using namespace kcr::assignment;

  // (a) Dense synthetic scenes. Proposals are jittered rotated copies of each
  // object; a proposal is relevant when its rotated IoU with that object is
  // at least 0.5.
  simulator::SceneConfig dense = simulator::default_target_domain();
  dense.min_objects = 16;
  dense.max_objects = 28;
  dense.occlusion_rate = 0.4;
  int not_worse = 0, strictly_better = 0;
  double mean_proj = 0, mean_plain = 0;
  for (int s = 0; s < 100; ++s) {
    const simulator::Scene scene = simulator::generate_scene(dense, 9000 + s);
    std::mt19937_64 rng(77 + s);
    std::uniform_real_distribution<double> off(-0.1, 0.1), ang(-0.15, 0.15);
    std::vector<RotatedBox> props;
    std::vector<RotatedBox> owner;
    for (const RotatedBox& g : scene.objects) {
      for (int q = 0; q < 8; ++q) {
        const RotatedBox p{g.cx + off(rng) * g.w, g.cy + off(rng) * g.h,
                           g.w * (1 + off(rng)), g.h * (1 + off(rng)),
                           canonical_angle(g.theta + ang(rng))};
        props.push_back(p);
        owner.push_back(g);
      }
    }
    std::unique_ptr<bool[]> relevant(new bool[props.size()]);
    for (std::size_t i = 0; i < props.size(); ++i)
      relevant[i] = iou_rotated(props[i], owner[i]) >= 0.5;
    const TargetGroundTruth gt{scene.axis_aligned, {}};
    const auto proj = assign_second_stage_projection(props, gt, 1.0);
    const auto plain = assign_second_stage_target_plain(props, gt);
    const std::span<const bool> rs(relevant.get(), props.size());
    const double rp = positive_recall(proj, rs);
    const double rq = positive_recall(plain, rs);
    mean_proj += rp / 100;
    mean_plain += rq / 100;
    not_worse += rp >= rq;
    strictly_better += rp > rq;
  }
  const bool a_ok = not_worse == 100 && strictly_better >= 50;

  // (b) theta -> pi - theta and theta -> -theta leave projection assignment
  // unchanged. theta in [pi/2, pi) keeps kPi - theta exact.
  int pairs = 0, mismatches = 0;
  {
    std::mt19937_64 rng(31337);
    std::uniform_real_distribution<double> upper(kPi / 2, kPi);
    for (int k = 0; k < 1000; ++k) {
      TargetGroundTruth gt;
      for (int j = 0; j < 6; ++j)
        gt.boxes.push_back(project_rotated(testing::random_box(rng, 40, 2, 40)));
      std::vector<RotatedBox> props, mirror, neg;
      for (int i = 0; i < 16; ++i) {
        RotatedBox p = testing::random_box(rng, 40, 2, 40);
        p.theta = upper(rng);
        props.push_back(p);
        mirror.push_back({p.cx, p.cy, p.w, p.h, kPi - p.theta});
        neg.push_back({p.cx, p.cy, p.w, p.h, -p.theta});
      }
      for (double gamma : {1.0, 1.05, 1.1, 1.2}) {
        const auto x = assign_second_stage_projection(props, gt, gamma);
        const auto y = assign_second_stage_projection(mirror, gt, gamma);
        const auto z = assign_second_stage_projection(neg, gt, gamma);
        for (std::size_t i = 0; i < x.size(); ++i) {
          pairs += 2;
          mismatches += !same_assignment(x[i], y[i]);
          mismatches += !same_assignment(x[i], z[i]);
        }
      }
    }
  }
  const bool b_ok = mismatches == 0;

  // (c) The mirror of a rotated object: rotated matching rejects it, the
  // projection rule cannot tell it from the object.
  const double m = kPi - 0.5;
  const RotatedBox object{0, 0, 4, 1, kPi - m};
  const std::vector<RotatedBox> mirror{{0, 0, 4, 1, m}};
  const auto src = assign_second_stage_source(mirror, SourceGroundTruth{{object}, {}});
  const auto prj = assign_second_stage_projection(
      mirror, TargetGroundTruth{{project_rotated(object)}, {}}, 1.0);
  const bool c_ok = !src[0].positive && src[0].sigma == 0u && prj[0].positive &&
                    prj[0].tau == 1.0 && prj[0].sigma == 0u;

  Outcome o;
  o.pass = a_ok && b_ok && c_ok;
  o.detail = "(a) projection >= plain on " + std::to_string(not_worse) +
             "/100 scenes, strictly better on " + std::to_string(strictly_better) +
             " (>= 50), mean positive recall " + fmt("%.3f", mean_proj) + " vs " +
             fmt("%.3f", mean_plain) + "; (b) " + std::to_string(mismatches) +
             " mismatches in " + std::to_string(pairs) + " mirrored pairs; (c) source tau " +
             fmt("%.6f", src[0].tau) + (src[0].positive ? " positive" : " negative") +
             ", projection tau " + fmt("%.17g", prj[0].tau) +
             (prj[0].positive ? " positive" : " negative");
  return o;
}

// --- 5 and 6: simulator -------------------------------------------------------

struct SuiteRun {
  simulator::SuiteResult result;
  double seconds = 0;
  std::string error;
};

const SuiteRun& default_suite_run() {
  static const SuiteRun run = [] {
    SuiteRun r;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r.result = simulator::run_benchmark_suite(simulator::default_suite());
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

double ap_of(const simulator::SuiteResult& r, const std::string& label) {
  const simulator::RunResult* run = r.find(label);
  return run ? run->ap50 : std::nan("");
}

Outcome simulator_directions() {
  const SuiteRun& run = default_suite_run();
  Outcome o;
  if (!run.error.empty()) {
    o.detail = "suite failed: " + run.error;
    return o;
  }
  const double axis = ap_of(run.result, "axis_only");
  const double proj = ap_of(run.result, "kcr_projection");
  const double heur = ap_of(run.result, "kcr_heuristic");
  const double full = ap_of(run.result, "fully_supervised");
  o.pass = axis + 0.15 <= proj && proj >= 0.9 * full && std::abs(proj - heur) <= 0.05 &&
           run.seconds < 300;
  o.detail = "AP50 axis_only " + fmt("%.4f", axis) + ", kcr_projection " +
             fmt("%.4f", proj) + ", kcr_heuristic " + fmt("%.4f", heur) +
             ", fully_supervised " + fmt("%.4f", full) + "; need axis + 0.15 <= proj, proj >= " +
             fmt("%.4f", 0.9 * full) + ", |proj - heur| = " +
             fmt("%.4f", std::abs(proj - heur)) + " <= 0.05; suite " +
             fmt("%.1f", run.seconds) + " s (< 300 s)";
  return o;
}

Outcome gamma_sweep() {
  const SuiteRun& run = default_suite_run();
  Outcome o;
  if (!run.error.empty()) {
    o.detail = "suite failed: " + run.error;
    return o;
  }
  const std::vector<std::pair<double, std::string>> sweep = {
      {1.0, "gamma_1"}, {1.05, "gamma_1.05"}, {1.1, "gamma_1.1"}, {1.2, "gamma_1.2"}};
  std::vector<double> ap;
  std::string listing;
  for (const auto& [g, label] : sweep) {
    ap.push_back(ap_of(run.result, label));
    listing += (listing.empty() ? "" : ", ") + fmt("%g", g) + " -> " + fmt("%.4f", ap.back());
  }
  bool maximal = true;
  for (double v : ap) maximal = maximal && ap[0] >= v;
  int inversions = 0;
  bool small = true;
  for (std::size_t k = 1; k < ap.size(); ++k) {
    if (ap[k] > ap[k - 1]) {
      ++inversions;
      small = small && ap[k] - ap[k - 1] <= 0.01;
    }
  }
  o.pass = maximal && inversions <= 1 && small;
  o.detail = "AP50 by gamma " + listing + "; maximal at 1.0: " + (maximal ? "yes" : "no") +
             ", inversions " + std::to_string(inversions) + " (<= 1 of <= 0.01)";
  return o;
}

// --- 7: evaluation goldens ----------------------------------------------------

Outcome evaluation_goldens() {
  using namespace kcr::evaluation;
  int failed = 0;
  std::string which;
  auto check = [&](bool ok, const char* name) {
    if (!ok) {
      ++failed;
      which += std::string(which.empty() ? "" : ", ") + name;
    }
  };
  const double ap1 = average_precision({true}, 1);
  const double ap2 = average_precision({false, true}, 1);
  const double ap3 = average_precision({true, false, true}, 2);
  check(std::abs(ap1 - 1.0) <= 1e-12, "ap 1");
  check(std::abs(ap2 - 0.5) <= 1e-12, "ap 0.5");
  check(std::abs(ap3 - 5.0 / 6.0) <= 1e-12, "ap 5/6");

  {
    const RotatedBox b{0, 0, 4, 2, 0.3};
    const auto kept = rotated_nms_indices(std::vector<Detection>{{b, 0.8}, {b, 0.9}}, 0.5);
    check(kept == std::vector<std::size_t>{1}, "nms identical");
  }
  {
    const std::vector<Detection> d{
        {{0, 0, 2, 2, 0}, 0.2}, {{10, 0, 2, 2, 0.4}, 0.7}, {{20, 0, 2, 2, -0.4}, 0.5}};
    check(rotated_nms_indices(d, 0.5) == std::vector<std::size_t>{1, 2, 0}, "nms disjoint");
  }
  {
    // A-B and B-C overlap at IoU 0.6, A-C at 1/3.
    const Detection a{{2, 0.5, 4, 1, 0}, 0.9};
    const Detection b{{3, 0.5, 4, 1, 0}, 0.8};
    const Detection c{{4, 0.5, 4, 1, 0}, 0.7};
    check(std::abs(iou_rotated(a.box, b.box) - 0.6) <= 1e-12 &&
              std::abs(iou_rotated(a.box, c.box) - 1.0 / 3.0) <= 1e-12,
          "nms chain overlaps");
    check(rotated_nms_indices(std::vector<Detection>{c, a, b}, 0.5) ==
              std::vector<std::size_t>{1, 0},
          "nms chain");
  }
  {
    const RotatedBox b{0, 0, 4, 2, 0};
    check(rotated_nms_indices(std::vector<Detection>{{b, 0.5}, {b, 0.5}, {b, 0.5}}, 0.5) ==
              std::vector<std::size_t>{0},
          "nms equal scores");
  }
  Outcome o;
  o.pass = failed == 0;
  o.detail = "AP " + fmt("%.17g", ap1) + ", " + fmt("%.17g", ap2) + ", " + fmt("%.17g", ap3) +
             " (exact to 1e-12); 4 NMS golden cases; " +
             (failed ? "failed: " + which : std::string("all match"));
  return o;
}

// --- 8: determinism of the sim command ---------------------------------------

std::map<std::string, std::string> read_dir(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[e.path().filename().string()] = ss.str();
  }
  return out;
}

Outcome determinism() {
  const fs::path base = fs::temp_directory_path() / ("kcr_acceptance_" + std::to_string(
                                                         static_cast<long>(::getpid())));
  fs::remove_all(base);
  fs::create_directories(base);
  const std::string spec = std::string(KCR_SOURCE_DIR) + "/configs/default_experiment.json";
  int status[2];
  for (int k = 0; k < 2; ++k) {
    const std::string cmd = std::string("\"") + KCR_CLI + "\" sim --spec \"" + spec +
                            "\" --out-dir \"" + (base / ("run" + std::to_string(k))).string() +
                            "\" > /dev/null";
    status[k] = std::system(cmd.c_str());
  }
  const auto a = read_dir(base / "run0");
  const auto b = read_dir(base / "run1");
  fs::remove_all(base);
  Outcome o;
  o.pass = status[0] == 0 && status[1] == 0 && !a.empty() && a == b;
  std::size_t bytes = 0;
  for (const auto& [name, data] : a) bytes += data.size();
  o.detail = "two `kcr sim` runs on configs/default_experiment.json: exit " +
             std::to_string(status[0]) + "/" + std::to_string(status[1]) + ", " +
             std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " files, " +
             std::to_string(bytes) + " bytes, " + (a == b ? "identical" : "different");
  return o;
}

// --- 9: parser fuzzing ---------------------------------------------------------

Outcome fuzzing() {
  const auto tallies = testing::fuzz_parsers(99, 100000);
  Outcome o;
  o.pass = true;
  for (const auto& t : tallies) {
    o.pass = o.pass && t.bad == 0 && t.runs == 100000;
    o.detail += (o.detail.empty() ? "" : "; ") + t.parser + " " + std::to_string(t.runs) +
                " runs, " + std::to_string(t.accepted) + " accepted, " +
                std::to_string(t.located) + " located errors, " + std::to_string(t.bad) + " bad";
    if (t.bad) o.detail += " (first: " + t.first_bad + ")";
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--strict") {
      strict = true;
    } else if (a.rfind("--only=", 0) == 0) {
      only = std::atoi(a.c_str() + 7);
    } else {
      std::fprintf(stderr, "usage: %s [--strict] [--only=N]\n", argv[0]);
      return 2;
    }
  }

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"geometry oracle", geometry_oracle},
      {"round trips", round_trips},
      {"gradient check", gradients},
      {"assignment properties", assignment_properties},
      {"simulator directions", simulator_directions},
      {"gamma sweep", gamma_sweep},
      {"evaluation goldens", evaluation_goldens},
      {"determinism", determinism},
      {"parser fuzzing", fuzzing},
  };

  int unexpected = 0, known = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (only && id != only) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s  %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first,
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) {
      if (!strict && KNOWN_FAIL_CRITERIA.count(id)) {
        ++known;
      } else {
        ++unexpected;
      }
    }
  }
  if (known) std::printf("note: %d known failure(s) in KNOWN_FAIL_CRITERIA, see README\n", known);
  return unexpected == 0 ? 0 : 1;
}
