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
#ifndef KCR_H_
#define KCR_H_

/* C interface to the rotated-box library.
 *
 * Every function returns a kcr_status. On failure the thread's last error
 * message is set (kcr_last_error) and output arguments are untouched.
 * Text inputs are (pointer, length) pairs and need not be NUL-terminated.
 * Returned text lives in a kcr_buffer owned by the caller. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(KCR_BUILDING)
#    define KCR_API __declspec(dllexport)
#  else
#    define KCR_API __declspec(dllimport)
#  endif
#else
#  define KCR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum kcr_status {
  KCR_OK = 0,
  KCR_ERR_NULL = 1, /* a required pointer argument was NULL */
  KCR_ERR_INVALID_ARGUMENT = 2,
  KCR_ERR_INVALID_BOX = 3,
  KCR_ERR_INVALID_GAMMA = 4,
  KCR_ERR_DEGENERATE_QUAD = 5,
  KCR_ERR_PARSE = 6,
  KCR_ERR_SCHEMA = 7,
  KCR_ERR_ZERO_GROUND_TRUTH = 8,
  KCR_ERR_DIVERGED_LOSS = 9,
  KCR_ERR_NON_FINITE_LOSS = 10,
  KCR_ERR_IO = 11,
  KCR_ERR_INTERNAL = 12
} kcr_status;

typedef struct kcr_rotated_box {
  double cx, cy, w, h, theta;
} kcr_rotated_box;

typedef struct kcr_aabox {
  double xmin, ymin, xmax, ymax;
} kcr_aabox;

typedef struct kcr_buffer kcr_buffer;       /* owned text */
typedef struct kcr_artifacts kcr_artifacts; /* named output files */

KCR_API const char* kcr_version(void);
KCR_API const char* kcr_status_name(kcr_status s);
/* Message of the last failure on this thread; "" when none. */
KCR_API const char* kcr_last_error(void);
/* Caps worker threads; 0 restores the default. */
KCR_API kcr_status kcr_set_max_threads(unsigned n);

KCR_API const char* kcr_buffer_data(const kcr_buffer* b);
KCR_API size_t kcr_buffer_size(const kcr_buffer* b);
KCR_API void kcr_buffer_free(kcr_buffer* b);

KCR_API size_t kcr_artifacts_count(const kcr_artifacts* a);
KCR_API const char* kcr_artifacts_name(const kcr_artifacts* a, size_t i);
KCR_API const char* kcr_artifacts_data(const kcr_artifacts* a, size_t i);
KCR_API size_t kcr_artifacts_size(const kcr_artifacts* a, size_t i);
/* Aligned summary of table.csv. */
KCR_API kcr_status kcr_artifacts_summary(const kcr_artifacts* a, kcr_buffer** out);
KCR_API void kcr_artifacts_free(kcr_artifacts* a);

/* --- geometry ------------------------------------------------------------ */

KCR_API kcr_status kcr_iou_rotated(const kcr_rotated_box* a, const kcr_rotated_box* b,
                                   double* out);
KCR_API kcr_status kcr_iou_aabb(const kcr_aabox* a, const kcr_aabox* b, double* out);
/* External rectangle of a rotated box. */
KCR_API kcr_status kcr_project_rotated(const kcr_rotated_box* b, kcr_aabox* out);
/* Enlarges about the centre by gamma >= 1. */
KCR_API kcr_status kcr_enlarge_aabox(const kcr_aabox* b, double gamma, kcr_aabox* out);
/* Corners as x0 y0 x1 y1 x2 y2 x3 y3. */
KCR_API kcr_status kcr_rotated_to_quad(const kcr_rotated_box* b, double out[8]);
KCR_API kcr_status kcr_quad_to_rotated(const double quad[8], kcr_rotated_box* out);

/* --- evaluation ---------------------------------------------------------- */

/* Greedy rotated NMS. `keep` has room for n indices; *n_keep receives the
 * number written, in output order. */
KCR_API kcr_status kcr_rotated_nms(const kcr_rotated_box* boxes, const double* scores,
                                   size_t n, double iou_threshold, size_t* keep,
                                   size_t* n_keep);
/* All-point AP of a ranked list of true-positive flags (nonzero = TP). */
KCR_API kcr_status kcr_average_precision(const int* ranked_tp, size_t n, size_t n_gt,
                                         double* out);

/* --- commands ------------------------------------------------------------ */

/* Formats: "dota", "rotated", "axis_csv", "axis_json". */
KCR_API kcr_status kcr_convert(const char* input, size_t len, const char* from,
                               const char* to, const char* image_id, int pretty,
                               kcr_buffer** out);

/* `b` may be NULL to compare `a` with itself. */
KCR_API kcr_status kcr_iou_table(const char* a, size_t a_len, const char* b, size_t b_len,
                                 int pretty, kcr_buffer** out);

typedef struct kcr_assign_options {
  const char* strategy;  /* first_stage, source, plain, projection, heuristic */
  const char* gt_format; /* rotated, axis_csv, axis_json */
  double gamma;
  double positive_threshold;
  int literal_enlargement; /* add gamma * side to each side instead of scaling */
  double aspect_ratio_min;
  double area_threshold;
  const char* area_rule; /* keep_small, mask_small */
} kcr_assign_options;

KCR_API kcr_status kcr_assign_options_init(kcr_assign_options* opt);
KCR_API kcr_status kcr_assign(const char* proposals, size_t p_len, const char* gt,
                              size_t gt_len, const kcr_assign_options* opt, int pretty,
                              kcr_buffer** out);

typedef struct kcr_eval_options {
  const char* gt_format; /* rotated, dota, axis_csv, axis_json */
  const char* image_id;  /* image id of DOTA ground truth */
  double iou_threshold;
  int skip_difficult;
} kcr_eval_options;

KCR_API kcr_status kcr_eval_options_init(kcr_eval_options* opt);
/* `curve` may be NULL. */
KCR_API kcr_status kcr_evaluate(const char* detections, size_t d_len, const char* gt,
                                size_t gt_len, const kcr_eval_options* opt, int pretty,
                                kcr_buffer** report, kcr_buffer** curve);

/* Runs an experiment suite. A NULL spec runs the default suite. When
 * `progress` is non-NULL it receives one summary line per run. */
typedef void (*kcr_progress_fn)(const char* line, void* user);
KCR_API kcr_status kcr_simulate(const char* spec, size_t len, kcr_progress_fn progress,
                                void* user, kcr_artifacts** out);
KCR_API kcr_status kcr_default_experiment(kcr_buffer** out);

KCR_API kcr_status kcr_bench(uint64_t n, uint64_t seed, int pretty, kcr_buffer** out);

#ifdef __cplusplus
}
#endif

#endif /* KCR_H_ */
