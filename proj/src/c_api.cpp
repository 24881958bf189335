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
#include "kcr.h"

#include <cstdio>
#include <optional>
#include <new>
#include <string>
#include <vector>

#include "kcr/commands.hpp"
#include "kcr/error.hpp"
#include "kcr/evaluation.hpp"
#include "kcr/geometry.hpp"
#include "kcr/runtime.hpp"
#include "kcr/simulator.hpp"

struct kcr_buffer {
  std::string text;
};

struct kcr_artifacts {
  std::vector<kcr::simulator::Artifact> files;
};

namespace {

thread_local std::string g_last_error;

kcr_status fail(kcr_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Runs f, translating exceptions into status codes.
template <typename F>
kcr_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return KCR_OK;
  } catch (const kcr::Error& e) {
    return fail(static_cast<kcr_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(KCR_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(KCR_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(KCR_ERR_INTERNAL, "unknown failure");
  }
}

kcr_status null_arg(const char* name) {
  return fail(KCR_ERR_NULL, std::string("argument '") + name + "' is NULL");
}

#define KCR_REQUIRE(p) \
  do {                   \
    if (!(p)) return null_arg(#p); \
  } while (0)

kcr::geometry::RotatedBox from_c(const kcr_rotated_box& b) {
  return {b.cx, b.cy, b.w, b.h, b.theta};
}
kcr::geometry::AABox from_c(const kcr_aabox& b) { return {b.xmin, b.ymin, b.xmax, b.ymax}; }
kcr_aabox to_c(const kcr::geometry::AABox& b) { return {b.xmin, b.ymin, b.xmax, b.ymax}; }
kcr_rotated_box to_c(const kcr::geometry::RotatedBox& b) { return {b.cx, b.cy, b.w, b.h, b.theta}; }

std::string_view view(const char* p, std::size_t n) { return p ? std::string_view(p, n) : std::string_view(); }

kcr_buffer* make_buffer(std::string s) { return new kcr_buffer{std::move(s)}; }

}  // namespace

extern "C" {

const char* kcr_version(void) { return "1.0.0"; }

const char* kcr_status_name(kcr_status s) {
  switch (s) {
    case KCR_OK: return "ok";
    case KCR_ERR_NULL: return "null_argument";
    case KCR_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case KCR_ERR_INVALID_BOX: return "invalid_box";
    case KCR_ERR_INVALID_GAMMA: return "invalid_gamma";
    case KCR_ERR_DEGENERATE_QUAD: return "degenerate_quad";
    case KCR_ERR_PARSE: return "parse_error";
    case KCR_ERR_SCHEMA: return "schema_error";
    case KCR_ERR_ZERO_GROUND_TRUTH: return "zero_ground_truth";
    case KCR_ERR_DIVERGED_LOSS: return "diverged_loss";
    case KCR_ERR_NON_FINITE_LOSS: return "non_finite_loss";
    case KCR_ERR_IO: return "io_error";
    case KCR_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

const char* kcr_last_error(void) { return g_last_error.c_str(); }

kcr_status kcr_set_max_threads(unsigned n) {
  kcr::set_max_threads(n);
  return KCR_OK;
}

const char* kcr_buffer_data(const kcr_buffer* b) { return b ? b->text.c_str() : ""; }
size_t kcr_buffer_size(const kcr_buffer* b) { return b ? b->text.size() : 0; }
void kcr_buffer_free(kcr_buffer* b) { delete b; }

size_t kcr_artifacts_count(const kcr_artifacts* a) { return a ? a->files.size() : 0; }
const char* kcr_artifacts_name(const kcr_artifacts* a, size_t i) {
  return a && i < a->files.size() ? a->files[i].name.c_str() : nullptr;
}
const char* kcr_artifacts_data(const kcr_artifacts* a, size_t i) {
  return a && i < a->files.size() ? a->files[i].contents.c_str() : nullptr;
}
size_t kcr_artifacts_size(const kcr_artifacts* a, size_t i) {
  return a && i < a->files.size() ? a->files[i].contents.size() : 0;
}
kcr_status kcr_artifacts_summary(const kcr_artifacts* a, kcr_buffer** out) {
  KCR_REQUIRE(a);
  KCR_REQUIRE(out);
  return guarded([&] {
    std::string csv;
    for (const auto& f : a->files)
      if (f.name == "table.csv") csv = f.contents;
    *out = make_buffer(kcr::commands::pretty_table(csv));
  });
}
void kcr_artifacts_free(kcr_artifacts* a) { delete a; }

kcr_status kcr_iou_rotated(const kcr_rotated_box* a, const kcr_rotated_box* b, double* out) {
  KCR_REQUIRE(a);
  KCR_REQUIRE(b);
  KCR_REQUIRE(out);
  return guarded([&] { *out = kcr::geometry::iou_rotated(from_c(*a), from_c(*b)); });
}

kcr_status kcr_iou_aabb(const kcr_aabox* a, const kcr_aabox* b, double* out) {
  KCR_REQUIRE(a);
  KCR_REQUIRE(b);
  KCR_REQUIRE(out);
  return guarded([&] { *out = kcr::geometry::iou_aabb(from_c(*a), from_c(*b)); });
}

kcr_status kcr_project_rotated(const kcr_rotated_box* b, kcr_aabox* out) {
  KCR_REQUIRE(b);
  KCR_REQUIRE(out);
  return guarded([&] { *out = to_c(kcr::geometry::project_rotated(from_c(*b))); });
}

kcr_status kcr_enlarge_aabox(const kcr_aabox* b, double gamma, kcr_aabox* out) {
  KCR_REQUIRE(b);
  KCR_REQUIRE(out);
  return guarded([&] { *out = to_c(kcr::geometry::enlarge_aabox(from_c(*b), gamma)); });
}

kcr_status kcr_rotated_to_quad(const kcr_rotated_box* b, double out[8]) {
  KCR_REQUIRE(b);
  KCR_REQUIRE(out);
  return guarded([&] {
    const auto q = kcr::geometry::rotated_to_quad(from_c(*b));
    for (int k = 0; k < 4; ++k) {
      out[2 * k] = q.v[k].x;
      out[2 * k + 1] = q.v[k].y;
    }
  });
}

kcr_status kcr_quad_to_rotated(const double quad[8], kcr_rotated_box* out) {
  KCR_REQUIRE(quad);
  KCR_REQUIRE(out);
  return guarded([&] {
    kcr::geometry::Quad q;
    for (int k = 0; k < 4; ++k) q.v[k] = {quad[2 * k], quad[2 * k + 1]};
    *out = to_c(kcr::geometry::quad_to_rotated(q));
  });
}

kcr_status kcr_rotated_nms(const kcr_rotated_box* boxes, const double* scores, size_t n,
                           double iou_threshold, size_t* keep, size_t* n_keep) {
  KCR_REQUIRE(n_keep);
  if (n > 0) {
    KCR_REQUIRE(boxes);
    KCR_REQUIRE(scores);
    KCR_REQUIRE(keep);
  }
  return guarded([&] {
    std::vector<kcr::evaluation::Detection> dets(n);
    for (size_t k = 0; k < n; ++k) dets[k] = {from_c(boxes[k]), scores[k], 0};
    const auto idx = kcr::evaluation::rotated_nms_indices(dets, iou_threshold);
    for (size_t k = 0; k < idx.size(); ++k) keep[k] = idx[k];
    *n_keep = idx.size();
  });
}

kcr_status kcr_average_precision(const int* ranked_tp, size_t n, size_t n_gt, double* out) {
  KCR_REQUIRE(out);
  if (n > 0) KCR_REQUIRE(ranked_tp);
  return guarded([&] {
    std::vector<bool> tp(n);
    for (size_t k = 0; k < n; ++k) tp[k] = ranked_tp[k] != 0;
    *out = kcr::evaluation::average_precision(tp, n_gt);
  });
}

kcr_status kcr_convert(const char* input, size_t len, const char* from, const char* to,
                       const char* image_id, int pretty, kcr_buffer** out) {
  KCR_REQUIRE(input || len == 0);
  KCR_REQUIRE(from);
  KCR_REQUIRE(to);
  KCR_REQUIRE(out);
  return guarded([&] {
    *out = make_buffer(kcr::commands::convert(view(input, len), from, to,
                                              image_id ? image_id : "", pretty != 0));
  });
}

kcr_status kcr_iou_table(const char* a, size_t a_len, const char* b, size_t b_len, int pretty,
                         kcr_buffer** out) {
  KCR_REQUIRE(a || a_len == 0);
  KCR_REQUIRE(out);
  return guarded([&] {
    std::optional<std::string_view> other;
    if (b) other = view(b, b_len);
    *out = make_buffer(kcr::commands::iou_table(view(a, a_len), other, pretty != 0));
  });
}

kcr_status kcr_assign_options_init(kcr_assign_options* opt) {
  KCR_REQUIRE(opt);
  const kcr::assignment::HeuristicConfig h;
  *opt = {"projection", "axis_csv", 1.0, 0.5, 0, h.aspect_ratio_min, h.area_threshold,
          "keep_small"};
  return KCR_OK;
}

kcr_status kcr_assign(const char* proposals, size_t p_len, const char* gt, size_t gt_len,
                      const kcr_assign_options* opt, int pretty, kcr_buffer** out) {
  KCR_REQUIRE(proposals || p_len == 0);
  KCR_REQUIRE(gt || gt_len == 0);
  KCR_REQUIRE(opt);
  KCR_REQUIRE(out);
  return guarded([&] {
    kcr::commands::AssignOptions o;
    if (opt->strategy) o.strategy = opt->strategy;
    if (opt->gt_format) o.gt_format = opt->gt_format;
    o.gamma = opt->gamma;
    o.assigner.positive_threshold = opt->positive_threshold;
    o.assigner.enlargement = opt->literal_enlargement ? kcr::geometry::EnlargementMode::kLiteral
                                                      : kcr::geometry::EnlargementMode::kScale;
    o.heuristic.aspect_ratio_min = opt->aspect_ratio_min;
    o.heuristic.area_threshold = opt->area_threshold;
    const std::string rule = opt->area_rule ? opt->area_rule : "keep_small";
    if (rule == "keep_small") {
      o.heuristic.area_rule = kcr::assignment::AreaRule::kKeepSmall;
    } else if (rule == "mask_small") {
      o.heuristic.area_rule = kcr::assignment::AreaRule::kMaskSmall;
    } else {
      throw kcr::Error(kcr::ErrorCode::kInvalidArgument, "unknown area rule '" + rule + "'");
    }
    *out = make_buffer(kcr::commands::assign(view(proposals, p_len), view(gt, gt_len), o,
                                             pretty != 0));
  });
}

kcr_status kcr_eval_options_init(kcr_eval_options* opt) {
  KCR_REQUIRE(opt);
  *opt = {"rotated", "image", 0.5, 0};
  return KCR_OK;
}

kcr_status kcr_evaluate(const char* detections, size_t d_len, const char* gt, size_t gt_len,
                        const kcr_eval_options* opt, int pretty, kcr_buffer** report,
                        kcr_buffer** curve) {
  KCR_REQUIRE(detections || d_len == 0);
  KCR_REQUIRE(gt || gt_len == 0);
  KCR_REQUIRE(opt);
  KCR_REQUIRE(report);
  return guarded([&] {
    kcr::commands::EvalOptions o;
    if (opt->gt_format) o.gt_format = opt->gt_format;
    if (opt->image_id) o.image_id = opt->image_id;
    o.iou_threshold = opt->iou_threshold;
    o.skip_difficult = opt->skip_difficult != 0;
    auto r = kcr::commands::evaluate(view(detections, d_len), view(gt, gt_len), o, pretty != 0);
    kcr_buffer* rep = make_buffer(std::move(r.report));
    if (curve) *curve = make_buffer(std::move(r.curve));
    *report = rep;
  });
}

kcr_status kcr_simulate(const char* spec, size_t len, kcr_progress_fn progress, void* user,
                        kcr_artifacts** out) {
  KCR_REQUIRE(out);
  return guarded([&] {
    using namespace kcr::simulator;
    const SuiteSpec s = spec ? parse_suite_spec(std::string(spec, len)) : default_suite();
    const SuiteResult r = run_benchmark_suite(s);
    if (progress) {
      for (const RunResult& run : r.runs) {
        char line[256];
        std::snprintf(line, sizeof line, "%s: ap50=%.4f precision@0.5=%.4f", run.label.c_str(),
                      run.ap50, run.precision_at_recall_50);
        progress(line, user);
      }
    }
    *out = new kcr_artifacts{suite_artifacts(r)};
  });
}

kcr_status kcr_default_experiment(kcr_buffer** out) {
  KCR_REQUIRE(out);
  return guarded([&] {
    *out = make_buffer(kcr::simulator::suite_spec_to_json(kcr::simulator::default_suite()));
  });
}

kcr_status kcr_bench(uint64_t n, uint64_t seed, int pretty, kcr_buffer** out) {
  KCR_REQUIRE(out);
  return guarded([&] { *out = make_buffer(kcr::commands::bench(n, seed, pretty != 0)); });
}

}  // extern "C"
