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
#ifndef KCR_COMMANDS_HPP_
#define KCR_COMMANDS_HPP_

// Text-in, text-out operations behind the command-line subcommands.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "kcr/assignment.hpp"
#include "kcr/geometry.hpp"

namespace kcr::commands {

// Annotation formats: "dota", "rotated" (kcr.boxes JSON), "axis_csv",
// "axis_json". DOTA text holds one image, named by `image_id`. Unlabelled
// rotated boxes get the label "object" in DOTA and axis-aligned output.
std::string convert(std::string_view input, const std::string& from, const std::string& to,
                    const std::string& image_id, bool pretty);

// Rotated IoU of every box in `a` against every box in `b` (both kcr.boxes
// JSON, images concatenated in file order); without `b`, `a` against
// itself. Long form "a,b,iou"; `pretty` gives an aligned matrix instead.
std::string iou_table(std::string_view a, std::optional<std::string_view> b, bool pretty);

struct AssignOptions {
  // first_stage, source, plain, projection or heuristic.
  std::string strategy = "projection";
  std::string gt_format = "axis_csv";  // rotated, axis_csv, axis_json
  double gamma = 1.0;
  assignment::AssignerConfig assigner;
  assignment::HeuristicConfig heuristic;
};

// Proposals are kcr.boxes JSON; ground truth is matched by image id. The
// target strategies read rotated ground truth through its external box.
std::string assign(std::string_view proposals, std::string_view ground_truth,
                   const AssignOptions& opt, bool pretty);

struct EvalOptions {
  std::string gt_format = "rotated";  // rotated, dota, axis_csv, axis_json
  std::string image_id = "image";     // for DOTA ground truth
  double iou_threshold = 0.5;
  bool skip_difficult = false;
};

struct EvalOutput {
  std::string report;  // kcr.eval_report JSON
  std::string curve;   // rank,score,precision,recall CSV
};

EvalOutput evaluate(std::string_view detections, std::string_view ground_truth,
                    const EvalOptions& opt, bool pretty);

// Kernel throughput on a seeded workload of n boxes. The checksum field
// depends only on (n, seed); the timings are machine dependent.
std::string bench(std::uint64_t n, std::uint64_t seed, bool pretty);

// Aligned human table of a benchmark table.csv.
std::string pretty_table(std::string_view csv);

}  // namespace kcr::commands

#endif  // KCR_COMMANDS_HPP_
