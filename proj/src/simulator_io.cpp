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
// Experiment config files and benchmark artifacts.

#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <set>

#include "json.hpp"
#include "kcr/error.hpp"
#include "kcr/simulator.hpp"

namespace kcr::simulator {

using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kSpecSchema = "kcr.experiment";

class Reader {
 public:
  Reader(const Json& obj, std::string path, std::initializer_list<const char*> keys)
      : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ParseError(at(), "expected an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!allowed.count(it.key())) throw ParseError(at(it.key()), "unknown key");
  }

  bool has(const char* key) const { return obj_.contains(key); }
  const Json& raw(const char* key) const { return obj_.at(key); }
  std::string at(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "/" : path_;
    return path_ + "/" + key;
  }

  void number(const char* key, double& out) const {
    if (!has(key)) return;
    const Json& v = obj_.at(key);
    if (!v.is_number()) throw ParseError(at(key), "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) throw ParseError(at(key), "number is not finite");
  }
  void integer(const char* key, int& out) const {
    if (!has(key)) return;
    const Json& v = obj_.at(key);
    if (!v.is_number_integer()) throw ParseError(at(key), "expected an integer");
    const long long x = v.get<long long>();
    if (x < -(1LL << 30) || x > (1LL << 30)) throw ParseError(at(key), "integer out of range");
    out = static_cast<int>(x);
  }
  void seed(const char* key, std::uint64_t& out) const {
    if (!has(key)) return;
    const Json& v = obj_.at(key);
    if (!v.is_number_unsigned()) throw ParseError(at(key), "expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  void boolean(const char* key, bool& out) const {
    if (!has(key)) return;
    const Json& v = obj_.at(key);
    if (!v.is_boolean()) throw ParseError(at(key), "expected a boolean");
    out = v.get<bool>();
  }
  std::string string(const char* key) const {
    const Json& v = obj_.at(key);
    if (!v.is_string()) throw ParseError(at(key), "expected a string");
    return v.get<std::string>();
  }
  void range(const char* key, Range& out) const {
    if (!has(key)) return;
    const Json& v = obj_.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      throw ParseError(at(key), "expected [lo, hi]");
    out = {v[0].get<double>(), v[1].get<double>()};
  }

 private:
  const Json& obj_;
  std::string path_;
};

SceneConfig read_domain(const Json& j, const std::string& path, SceneConfig c) {
  const Reader r(j, path,
                 {"extent", "objects", "width", "height", "orientation", "occlusion_rate",
                  "feature_noise", "jitter", "proposals_per_object", "background_proposals",
                  "symmetric_features"});
  r.number("extent", c.extent);
  if (r.has("objects")) {
    const Json& v = r.raw("objects");
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() ||
        !v[1].is_number_integer())
      throw ParseError(r.at("objects"), "expected [min, max] integers");
    c.min_objects = static_cast<int>(std::clamp<long long>(v[0].get<long long>(), -1, 1 << 20));
    c.max_objects = static_cast<int>(std::clamp<long long>(v[1].get<long long>(), -1, 1 << 20));
  }
  r.range("width", c.width);
  r.range("height", c.height);
  if (r.has("orientation")) {
    const std::string o = r.string("orientation");
    if (o == "uniform") {
      c.orientation = Orientation::kUniform;
    } else if (o == "axis_aligned") {
      c.orientation = Orientation::kAxisAligned;
    } else {
      throw ParseError(r.at("orientation"), "expected 'uniform' or 'axis_aligned'");
    }
  }
  r.number("occlusion_rate", c.occlusion_rate);
  r.number("feature_noise", c.feature_noise);
  r.number("jitter", c.jitter);
  r.integer("proposals_per_object", c.proposals_per_object);
  r.integer("background_proposals", c.background_proposals);
  r.boolean("symmetric_features", c.symmetric_features);
  return c;
}

Json domain_json(const SceneConfig& c) {
  Json j;
  j["extent"] = c.extent;
  j["objects"] = {c.min_objects, c.max_objects};
  j["width"] = {c.width.lo, c.width.hi};
  j["height"] = {c.height.lo, c.height.hi};
  j["orientation"] = c.orientation == Orientation::kUniform ? "uniform" : "axis_aligned";
  j["occlusion_rate"] = c.occlusion_rate;
  j["feature_noise"] = c.feature_noise;
  j["jitter"] = c.jitter;
  j["proposals_per_object"] = c.proposals_per_object;
  j["background_proposals"] = c.background_proposals;
  j["symmetric_features"] = c.symmetric_features;
  return j;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string fixed6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

SuiteSpec parse_suite_spec(const std::string& json_text) {
  Json doc;
  try {
    doc = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    throw ParseError(0, e.byte == 0 ? 1 : e.byte, "malformed JSON");
  } catch (const Json::exception& e) {
    throw ParseError(0, 1, std::string("malformed JSON: ") + e.what());
  }
  const Reader r(doc, "",
                 {"schema", "version", "seed", "epochs", "learning_rate", "lr_decay",
                  "source_per_batch", "target_per_batch", "source_scenes", "target_scenes",
                  "test_scenes", "gamma", "nms_threshold", "regression", "regression_weight",
                  "heuristic", "source_domain", "target_domain", "modes", "gamma_sweep",
                  "symmetric_ablation"});
  if (!r.has("schema") || r.string("schema") != kSpecSchema)
    throw ParseError("/schema", std::string("expected schema '") + kSpecSchema + "'");
  if (!r.has("version") || !r.raw("version").is_number_integer() ||
      r.raw("version").get<long long>() != 1)
    throw ParseError("/version", "unsupported schema version");

  SuiteSpec suite = default_suite();
  ExperimentSpec& b = suite.base;
  r.seed("seed", b.seed);
  r.integer("epochs", b.epochs);
  r.number("learning_rate", b.learning_rate);
  r.number("lr_decay", b.lr_decay);
  r.integer("source_per_batch", b.source_per_batch);
  r.integer("target_per_batch", b.target_per_batch);
  r.integer("source_scenes", b.source_scenes);
  r.integer("target_scenes", b.target_scenes);
  r.integer("test_scenes", b.test_scenes);
  r.number("gamma", b.gamma);
  r.number("nms_threshold", b.nms_threshold);
  r.number("regression_weight", b.regression_weight);
  if (r.has("regression")) {
    const std::string k = r.string("regression");
    if (k == "l1") {
      b.regression = losses::RegressionKind::kL1;
    } else if (k == "smooth_l1") {
      b.regression = losses::RegressionKind::kSmoothL1;
    } else {
      throw ParseError("/regression", "expected 'l1' or 'smooth_l1'");
    }
  }
  if (r.has("heuristic")) {
    const Reader h(r.raw("heuristic"), "/heuristic",
                   {"aspect_ratio_min", "area_threshold", "area_rule"});
    h.number("aspect_ratio_min", b.heuristic.aspect_ratio_min);
    h.number("area_threshold", b.heuristic.area_threshold);
    if (h.has("area_rule")) {
      const std::string rule = h.string("area_rule");
      if (rule == "keep_small") {
        b.heuristic.area_rule = assignment::AreaRule::kKeepSmall;
      } else if (rule == "mask_small") {
        b.heuristic.area_rule = assignment::AreaRule::kMaskSmall;
      } else {
        throw ParseError("/heuristic/area_rule", "expected 'keep_small' or 'mask_small'");
      }
    }
  }
  if (r.has("source_domain")) b.source = read_domain(r.raw("source_domain"), "/source_domain", b.source);
  if (r.has("target_domain")) b.target = read_domain(r.raw("target_domain"), "/target_domain", b.target);
  if (r.has("modes")) {
    const Json& m = r.raw("modes");
    if (!m.is_array()) throw ParseError("/modes", "expected an array");
    suite.modes.clear();
    for (std::size_t k = 0; k < m.size(); ++k) {
      const std::string p = "/modes/" + std::to_string(k);
      if (!m[k].is_string()) throw ParseError(p, "expected a string");
      try {
        suite.modes.push_back(parse_mode(m[k].get<std::string>()));
      } catch (const Error& e) {
        throw ParseError(p, e.what());
      }
    }
  }
  if (r.has("gamma_sweep")) {
    const Json& g = r.raw("gamma_sweep");
    if (!g.is_array()) throw ParseError("/gamma_sweep", "expected an array");
    suite.gamma_sweep.clear();
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!g[k].is_number())
        throw ParseError("/gamma_sweep/" + std::to_string(k), "expected a number");
      suite.gamma_sweep.push_back(g[k].get<double>());
    }
  }
  r.boolean("symmetric_ablation", suite.symmetric_ablation);

  b.validate();
  for (double g : suite.gamma_sweep)
    if (!(g >= 1.0) || !std::isfinite(g))
      throw Error(ErrorCode::kInvalidGamma, "gamma sweep values must be >= 1");
  return suite;
}

std::string suite_spec_to_json(const SuiteSpec& suite) {
  const ExperimentSpec& b = suite.base;
  Json j;
  j["schema"] = kSpecSchema;
  j["version"] = 1;
  j["seed"] = b.seed;
  j["epochs"] = b.epochs;
  j["learning_rate"] = b.learning_rate;
  j["lr_decay"] = b.lr_decay;
  j["source_per_batch"] = b.source_per_batch;
  j["target_per_batch"] = b.target_per_batch;
  j["source_scenes"] = b.source_scenes;
  j["target_scenes"] = b.target_scenes;
  j["test_scenes"] = b.test_scenes;
  j["gamma"] = b.gamma;
  j["nms_threshold"] = b.nms_threshold;
  j["regression"] = b.regression == losses::RegressionKind::kL1 ? "l1" : "smooth_l1";
  j["regression_weight"] = b.regression_weight;
  j["heuristic"] = {
      {"aspect_ratio_min", b.heuristic.aspect_ratio_min},
      {"area_threshold", b.heuristic.area_threshold},
      {"area_rule",
       b.heuristic.area_rule == assignment::AreaRule::kKeepSmall ? "keep_small" : "mask_small"}};
  j["source_domain"] = domain_json(b.source);
  j["target_domain"] = domain_json(b.target);
  Json modes = Json::array();
  for (Mode m : suite.modes) modes.push_back(mode_name(m));
  j["modes"] = std::move(modes);
  j["gamma_sweep"] = suite.gamma_sweep;
  j["symmetric_ablation"] = suite.symmetric_ablation;
  return j.dump(2) + "\n";
}

std::vector<Artifact> suite_artifacts(const SuiteResult& result) {
  std::vector<Artifact> out;
  std::string csv =
      "label,mode,gamma,symmetric_features,ap50,precision_at_recall_50,final_loss\n";
  Json table;
  table["schema"] = "kcr.benchmark";
  table["version"] = 1;
  Json rows = Json::array();
  for (const RunResult& r : result.runs) {
    const double final_loss = r.trace.empty() ? 0.0 : r.trace.back().total;
    const bool sym = r.spec.source.symmetric_features || r.spec.target.symmetric_features;
    csv += r.label + "," + mode_name(r.spec.mode) + "," + num(r.spec.gamma) + "," +
           (sym ? "true" : "false") + "," + fixed6(r.ap50) + "," +
           fixed6(r.precision_at_recall_50) + "," + fixed6(final_loss) + "\n";
    rows.push_back({{"label", r.label},
                    {"mode", mode_name(r.spec.mode)},
                    {"gamma", r.spec.gamma},
                    {"symmetric_features", sym},
                    {"ap50", r.ap50},
                    {"precision_at_recall_50", r.precision_at_recall_50},
                    {"epochs", r.spec.epochs},
                    {"final_loss", final_loss}});

    Json trace;
    trace["schema"] = "kcr.trace";
    trace["version"] = 1;
    trace["label"] = r.label;
    Json epochs = Json::array();
    for (const EpochTrace& t : r.trace)
      epochs.push_back({{"epoch", t.epoch},
                        {"learning_rate", t.learning_rate},
                        {"L_S", t.L_S},
                        {"L_T", t.L_T},
                        {"L_S_star", t.L_S_star},
                        {"L_T_star", t.L_T_star},
                        {"total", t.total}});
    trace["epochs"] = std::move(epochs);
    out.push_back({"trace_" + r.label + ".json", trace.dump(2) + "\n"});
    out.push_back({"pr_" + r.label + ".csv", evaluation::curve_to_csv(r.curve)});
  }
  table["runs"] = std::move(rows);
  out.insert(out.begin(), {"table.json", table.dump(2) + "\n"});
  out.insert(out.begin(), {"table.csv", csv});
  return out;
}

}  // namespace kcr::simulator
