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
// kcr: command-line front end over the C interface.
//
// Exit codes: 0 success, 1 runtime error, 2 input or usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "kcr.h"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitInput = 2;

struct Failure {
  int exit_code;
  std::string message;
};

int exit_code_for(kcr_status s) {
  switch (s) {
    case KCR_ERR_INVALID_ARGUMENT:
    case KCR_ERR_INVALID_BOX:
    case KCR_ERR_INVALID_GAMMA:
    case KCR_ERR_DEGENERATE_QUAD:
    case KCR_ERR_PARSE:
    case KCR_ERR_SCHEMA:
    case KCR_ERR_ZERO_GROUND_TRUTH:
      return kExitInput;
    default:
      return kExitRuntime;
  }
}

void check(kcr_status s, const std::string& what) {
  if (s != KCR_OK)
    throw Failure{exit_code_for(s), what + ": " + kcr_status_name(s) + ": " + kcr_last_error()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kExitInput, "cannot open '" + path + "'"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit(const std::string& path, const char* data, std::size_t size) {
  if (path.empty() || path == "-") {
    std::fwrite(data, 1, size, stdout);
    std::fflush(stdout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{kExitRuntime, "cannot write '" + path + "'"};
  out.write(data, static_cast<std::streamsize>(size));
  if (!out) throw Failure{kExitRuntime, "write failed for '" + path + "'"};
}

// Owns a kcr_buffer.
class Buffer {
 public:
  Buffer() = default;
  Buffer(const Buffer&) = delete;
  Buffer& operator=(const Buffer&) = delete;
  ~Buffer() { kcr_buffer_free(b_); }
  kcr_buffer** out() { return &b_; }
  bool empty() const { return b_ == nullptr; }
  void write_to(const std::string& path) const {
    emit(path, kcr_buffer_data(b_), kcr_buffer_size(b_));
  }

 private:
  kcr_buffer* b_ = nullptr;
};

int verbosity = 0;

void log(const std::string& msg) {
  if (verbosity > 0) std::cerr << "kcr: " << msg << "\n";
}

const std::vector<std::string> kAnnotationFormats = {"dota", "rotated", "axis_csv", "axis_json"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rotated-box detection from axis-aligned labels: conversion, geometry, "
               "assignment, evaluation and simulation."};
  app.require_subcommand(1, 1);
  app.allow_extras(false);

  bool pretty = false;
  unsigned threads = 0;
  app.add_flag("--pretty", pretty, "Human-readable tables instead of CSV / compact JSON");
  app.add_option("--threads", threads, "Worker thread cap (0 = hardware concurrency)")
      ->check(CLI::Range(0u, 4096u));
  app.add_flag("-v,--verbose", verbosity, "Progress messages on stderr (repeatable)");

  // convert
  std::string conv_in, conv_out, conv_from, conv_to, conv_id = "image";
  auto* convert = app.add_subcommand("convert", "Convert between annotation formats");
  convert->add_option("-i,--input", conv_in, "Input file")->required()->check(CLI::ExistingFile);
  convert->add_option("-o,--output", conv_out, "Output file (default stdout)");
  convert->add_option("--from", conv_from, "Input format")
      ->required()
      ->check(CLI::IsMember(kAnnotationFormats));
  convert->add_option("--to", conv_to, "Output format")
      ->required()
      ->check(CLI::IsMember(kAnnotationFormats));
  convert->add_option("--image-id", conv_id, "Image id for DOTA input")->capture_default_str();

  // iou
  std::string iou_a, iou_b, iou_out;
  auto* iou = app.add_subcommand("iou", "Rotated IoU table of two box files");
  iou->add_option("boxes_a", iou_a, "Rotated boxes JSON")->required()->check(CLI::ExistingFile);
  iou->add_option("boxes_b", iou_b, "Rotated boxes JSON (default: boxes_a)")
      ->check(CLI::ExistingFile);
  iou->add_option("-o,--output", iou_out, "Output file (default stdout)");

  // assign
  kcr_assign_options aopt;
  kcr_assign_options_init(&aopt);
  std::string as_props, as_gt, as_out, as_strategy = aopt.strategy, as_gt_format = aopt.gt_format,
                                       as_rule = aopt.area_rule;
  bool as_literal = false;
  auto* assign = app.add_subcommand("assign", "Dump proposal-to-ground-truth assignments");
  assign->add_option("--proposals", as_props, "Proposals as rotated boxes JSON")
      ->required()
      ->check(CLI::ExistingFile);
  assign->add_option("--gt", as_gt, "Ground-truth file")->required()->check(CLI::ExistingFile);
  assign->add_option("--gt-format", as_gt_format, "Ground-truth format")->capture_default_str()
      ->check(CLI::IsMember({"rotated", "axis_csv", "axis_json"}));
  assign->add_option("--strategy", as_strategy, "Assignment rule")->capture_default_str()
      ->check(CLI::IsMember({"first_stage", "source", "plain", "projection", "heuristic"}));
  assign->add_option("--gamma", aopt.gamma, "Enlargement factor (>= 1)")->capture_default_str()
      ->check(CLI::Range(1.0, 1e6));
  assign->add_option("--positive-threshold", aopt.positive_threshold, "Positive IoU threshold")->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  assign->add_flag("--literal-enlargement", as_literal,
                   "Push each side out by gamma * extent instead of scaling");
  assign->add_option("--aspect-ratio-min", aopt.aspect_ratio_min,
                     "Heuristic: minimum reliable aspect ratio")->capture_default_str()
      ->check(CLI::Range(1.0, 1e9));
  assign->add_option("--area-threshold", aopt.area_threshold, "Heuristic: area threshold")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  assign->add_option("--area-rule", as_rule, "Heuristic: area rule")->capture_default_str()
      ->check(CLI::IsMember({"keep_small", "mask_small"}));
  assign->add_option("-o,--output", as_out, "Output file (default stdout)");

  // eval
  kcr_eval_options eopt;
  kcr_eval_options_init(&eopt);
  std::string ev_dets, ev_gt, ev_out, ev_curve, ev_gt_format = eopt.gt_format,
                                                ev_id = eopt.image_id;
  bool ev_skip = false;
  auto* eval = app.add_subcommand("eval", "AP50 of detections against ground truth");
  eval->add_option("--detections", ev_dets, "Detections JSON")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--gt", ev_gt, "Ground-truth file")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt-format", ev_gt_format, "Ground-truth format")->capture_default_str()
      ->check(CLI::IsMember(kAnnotationFormats));
  eval->add_option("--image-id", ev_id, "Image id for DOTA ground truth")->capture_default_str();
  eval->add_option("--iou-threshold", eopt.iou_threshold, "Match IoU threshold")->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  eval->add_flag("--skip-difficult", ev_skip, "Ignore hits on difficult ground truth");
  eval->add_option("-o,--output", ev_out, "Report file (default stdout)");
  eval->add_option("--curve", ev_curve, "Also write the PR curve CSV here");

  // sim
  std::string sim_spec, sim_dir = "sim_out";
  bool sim_print_default = false;
  auto* sim = app.add_subcommand("sim", "Run the synthetic co-training experiment suite");
  sim->add_option("--spec", sim_spec, "Experiment config JSON (default: built-in suite)")
      ->check(CLI::ExistingFile);
  sim->add_option("--out-dir", sim_dir, "Artifact directory")->capture_default_str();
  sim->add_flag("--print-default", sim_print_default,
                "Print the built-in experiment config and exit");

  // bench
  std::uint64_t bench_n = 10000, bench_seed = 0;
  std::string bench_out;
  auto* bench = app.add_subcommand("bench", "Rotated IoU and NMS throughput");
  bench->add_option("-n,--n", bench_n, "Workload size")->capture_default_str()
      ->check(CLI::Range(std::uint64_t{0}, std::uint64_t{100000000}));
  bench->add_option("--seed", bench_seed, "Workload seed")->capture_default_str();
  bench->add_option("-o,--output", bench_out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    check(kcr_set_max_threads(threads), "threads");
    if (*convert) {
      const std::string text = slurp(conv_in);
      Buffer out;
      check(kcr_convert(text.data(), text.size(), conv_from.c_str(), conv_to.c_str(),
                        conv_id.c_str(), pretty, out.out()),
            conv_in);
      out.write_to(conv_out);
    } else if (*iou) {
      const std::string a = slurp(iou_a);
      const std::string b = iou_b.empty() ? std::string() : slurp(iou_b);
      Buffer out;
      check(kcr_iou_table(a.data(), a.size(), iou_b.empty() ? nullptr : b.data(), b.size(),
                          pretty, out.out()),
            "iou");
      out.write_to(iou_out);
    } else if (*assign) {
      const std::string props = slurp(as_props), gt = slurp(as_gt);
      aopt.strategy = as_strategy.c_str();
      aopt.gt_format = as_gt_format.c_str();
      aopt.area_rule = as_rule.c_str();
      aopt.literal_enlargement = as_literal;
      Buffer out;
      check(kcr_assign(props.data(), props.size(), gt.data(), gt.size(), &aopt, pretty,
                       out.out()),
            "assign");
      out.write_to(as_out);
    } else if (*eval) {
      const std::string dets = slurp(ev_dets), gt = slurp(ev_gt);
      eopt.gt_format = ev_gt_format.c_str();
      eopt.image_id = ev_id.c_str();
      eopt.skip_difficult = ev_skip;
      Buffer report, curve;
      check(kcr_evaluate(dets.data(), dets.size(), gt.data(), gt.size(), &eopt, pretty,
                         report.out(), curve.out()),
            "eval");
      report.write_to(ev_out);
      if (!ev_curve.empty()) curve.write_to(ev_curve);
    } else if (*sim) {
      if (sim_print_default) {
        Buffer spec;
        check(kcr_default_experiment(spec.out()), "sim");
        spec.write_to("");
        return 0;
      }
      const std::string spec = sim_spec.empty() ? std::string() : slurp(sim_spec);
      log("running experiment suite");
      kcr_artifacts* arts = nullptr;
      const kcr_progress_fn progress = [](const char* line, void*) { log(line); };
      check(kcr_simulate(sim_spec.empty() ? nullptr : spec.data(), spec.size(), progress,
                         nullptr, &arts),
            sim_spec.empty() ? "sim" : sim_spec);
      std::unique_ptr<kcr_artifacts, void (*)(kcr_artifacts*)> hold(arts, kcr_artifacts_free);
      std::error_code ec;
      std::filesystem::create_directories(sim_dir, ec);
      if (ec) throw Failure{kExitRuntime, "cannot create '" + sim_dir + "': " + ec.message()};
      const std::size_t n = kcr_artifacts_count(arts);
      for (std::size_t k = 0; k < n; ++k) {
        const std::string path = (std::filesystem::path(sim_dir) / kcr_artifacts_name(arts, k)).string();
        emit(path, kcr_artifacts_data(arts, k), kcr_artifacts_size(arts, k));
        log("wrote " + path);
      }
      if (pretty) {
        Buffer table;
        check(kcr_artifacts_summary(arts, table.out()), "sim");
        table.write_to("");
      } else {
        for (std::size_t k = 0; k < n; ++k)
          if (std::string(kcr_artifacts_name(arts, k)) == "table.csv")
            emit("", kcr_artifacts_data(arts, k), kcr_artifacts_size(arts, k));
      }
    } else if (*bench) {
      Buffer out;
      check(kcr_bench(bench_n, bench_seed, pretty, out.out()), "bench");
      out.write_to(bench_out);
    }
  } catch (const Failure& f) {
    std::cerr << "kcr: error: " << f.message << "\n";
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "kcr: error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
