// Copyright 2026 The detcal Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// detcal: calibration metrics, diagram tables, toy-detector training and
// temperature scaling from the command line.
//
// Exit codes: 0 success, 1 usage or input error, 2 nothing to evaluate.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "detcal/core.hpp"
#include "detcal/io.hpp"
#include "detcal/metrics.hpp"
#include "detcal/posthoc.hpp"
#include "detcal/toydet.hpp"
#include "json.hpp"

namespace {

using namespace detcal;

constexpr int kExitError = 1;
constexpr int kExitEmpty = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NothingToEvaluate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::fwrite(text.data(), 1, text.size(), stdout);
  } else {
    io::write_text_atomic(path, text);
  }
}

std::vector<Dim> parse_dims(const std::string& list) {
  std::vector<Dim> dims;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      dims.push_back(parse_dim(item));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (dims.empty()) throw UsageError("--dims needs at least one dimension");
  return dims;
}

Dim parse_property(const std::string& name) {
  Dim d;
  try {
    d = parse_dim(name);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (d == Dim::kConf) throw UsageError("expected a box property (cx, cy, w or h), got conf");
  return d;
}

struct MatchInputs {
  std::string detections;
  std::string ground_truth;
  double iou = 0.5;
  double min_score = 0.0;
};

void add_match_options(CLI::App* cmd, MatchInputs& in) {
  cmd->add_option("--detections", in.detections, "detections JSON (COCO results style)")
      ->required();
  cmd->add_option("--ground-truth", in.ground_truth, "ground-truth JSON")->required();
  cmd->add_option("--iou", in.iou, "IoU threshold for a correct detection")->capture_default_str();
  cmd->add_option("--min-score", in.min_score, "drop detections scoring below this")
      ->capture_default_str();
}

std::vector<MatchedDetection> load_and_match(const MatchInputs& in) {
  const io::GroundTruthFile gt = io::load_ground_truth(in.ground_truth);
  const auto records = io::load_detections(in.detections);
  const auto dets = io::to_detections(records, gt, in.detections);
  MatchOptions opt;
  opt.iou_threshold = in.iou;
  opt.min_score = in.min_score;
  opt.num_classes = gt.num_classes();
  auto matched = match_detections(dets, gt.objects, opt);
  if (matched.empty()) throw NothingToEvaluate("no detections to evaluate");
  return matched;
}

void warn_clamped(std::size_t n) {
  if (n > 0) {
    std::fprintf(stderr, "warning: %zu box value(s) outside [0,1] clamped into edge bins\n", n);
  }
}

int run_eval(const MatchInputs& in, const std::string& dims, int conf_bins, int property_bins,
             const std::string& out) {
  const auto matched = load_and_match(in);
  BinGrid grid = BinGrid::confidence(1);
  try {
    grid = BinGrid::with_dims(parse_dims(dims), conf_bins, property_bins);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const CalibrationReport report = compute_dece(matched, grid, in.iou);
  warn_clamped(report.n_clamped);
  emit(out, io::report_json(report));
  return 0;
}

struct DiagramArgs {
  std::string kind;
  std::string dim;
  std::string dims = "cx,cy";
  int bins = 0;
  std::vector<int> grid{5, 5};
  std::string out;
};

int run_diagram(const MatchInputs& in, const DiagramArgs& a) {
  if (a.kind != "reliability" && a.kind != "histogram" && a.kind != "curve" &&
      a.kind != "heatmap") {
    throw UsageError("unknown diagram kind '" + a.kind +
                     "' (expected reliability, histogram, curve or heatmap)");
  }
  if (a.bins < 0) throw UsageError("--bins must be positive");
  if (a.kind == "curve" && a.dim.empty()) throw UsageError("--kind curve needs --dim");
  std::vector<Dim> hm;
  if (a.kind == "heatmap") {
    hm = parse_dims(a.dims);
    if (hm.size() != 2) throw UsageError("--kind heatmap needs exactly two --dims");
    if (a.grid.size() != 2 || a.grid[0] < 1 || a.grid[1] < 1) {
      throw UsageError("--grid needs two positive bin counts");
    }
  }
  const Dim curve_dim = a.kind == "curve" ? parse_property(a.dim) : Dim::kConf;

  const auto matched = load_and_match(in);
  std::string csv;
  if (a.kind == "reliability") {
    csv = io::reliability_csv(reliability_table(matched, a.bins > 0 ? a.bins : 10));
  } else if (a.kind == "histogram") {
    csv = io::histogram_csv(confidence_histogram(matched, a.bins > 0 ? a.bins : 10));
  } else if (a.kind == "curve") {
    csv = io::curve_csv(property_curve(matched, curve_dim, a.bins > 0 ? a.bins : 5));
  } else {
    csv = io::heatmap_csv(heatmap_2d(matched, hm[0], hm[1], a.grid[0], a.grid[1]));
  }
  emit(a.out, csv);
  return 0;
}

struct TrainArgs {
  TrainConfig config;
  double shift_level = 0.0;
  int train_scenes = 384;
  int val_scenes = 512;
  int classes = 3;
  std::string out_model;
  std::string out_log;
  std::string export_dir;
};

nlohmann::json evaluation_json(const Evaluation& ev) {
  auto num = [](double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  };
  return {{"dece", num(ev.dece)},
          {"ece", num(ev.ece)},
          {"ap50", ev.ap50},
          {"n_detections", ev.n_detections}};
}

void export_split(const std::filesystem::path& dir, const std::string& name,
                  const ToyDetector& model, const std::vector<SyntheticScene>& scenes,
                  const TrainConfig& config) {
  const io::GroundTruthFile gt = io::scenes_ground_truth(scenes, model.config().num_classes);
  std::vector<Detection> dets;
  nlohmann::json logits = nlohmann::json::array();
  nlohmann::json labels = nlohmann::json::array();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    InferOptions opt;
    opt.score_threshold = config.score_threshold;
    opt.keep_logits = true;
    opt.image_id = static_cast<ImageId>(i);
    auto d = infer(model, scenes[i], opt);
    dets.insert(dets.end(), d.begin(), d.end());
    const CellTargets targets = assign_positives(scenes[i], model.config().num_classes);
    const SceneForward<double> fwd = forward(model, scenes[i], targets, nullptr);
    for (int c : fwd.positive_cells) {
      const auto row = fwd.logits.row(c);
      logits.push_back(std::vector<double>(row.data(), row.data() + row.size()));
      labels.push_back(targets.cls[static_cast<std::size_t>(c)]);
    }
  }
  io::write_text_atomic(dir / (name + "_ground_truth.json"), io::dump_ground_truth(gt));
  io::write_text_atomic(dir / (name + "_detections.json"), io::dump_detections(dets, gt));
  io::write_text_atomic(dir / (name + "_logits.json"), logits.dump() + "\n");
  io::write_text_atomic(dir / (name + "_labels.json"), labels.dump() + "\n");
}

int run_train(TrainArgs& a) {
  TrainConfig& c = a.config;
  if (c.mode == TrainMode::kBaseline) c.dropout = 0.0;
  c.model.num_classes = a.classes;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.train_scenes < 1 || a.val_scenes < 1) throw UsageError("scene counts must be positive");
  if (!(a.shift_level >= 0.0)) throw UsageError("--shift-level must be >= 0");

  const auto train_set = generate_dataset(a.train_scenes, a.classes, 0.0, c.seed * 3 + 1);
  const auto val_set = generate_dataset(a.val_scenes, a.classes, 0.0, c.seed * 3 + 2);
  const TrainResult result = train(c, train_set, val_set);

  nlohmann::json summary{{"mode", to_string(c.mode)},
                         {"seed", c.seed},
                         {"epochs", c.epochs},
                         {"in_domain", evaluation_json(evaluate(result.model, val_set, c))}};
  std::vector<SyntheticScene> shifted;
  if (a.shift_level > 0.0) {
    shifted = generate_dataset(a.val_scenes, a.classes, a.shift_level, c.seed * 3 + 2);
    summary["shifted"] = evaluation_json(evaluate(result.model, shifted, c));
    summary["shifted"]["shift_level"] = a.shift_level;
  }
  if (!a.out_model.empty())
    io::write_text_atomic(a.out_model, io::checkpoint_json(result.model, c));
  if (!a.out_log.empty()) io::write_text_atomic(a.out_log, io::train_log_csv(result.log));
  if (!a.export_dir.empty()) {
    std::filesystem::create_directories(a.export_dir);
    export_split(a.export_dir, "val", result.model, val_set, c);
    if (!shifted.empty()) export_split(a.export_dir, "shifted", result.model, shifted, c);
  }
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int run_ts(const std::string& logits_path, const std::string& labels_path, const std::string& out) {
  const Eigen::MatrixXd z = io::parse_logits(io::read_text(logits_path), logits_path);
  const std::vector<int> y = io::parse_labels(io::read_text(labels_path), labels_path);
  TemperatureModel model;
  try {
    model = fit_temperature(z, y);
  } catch (const std::invalid_argument& e) {
    throw io::FormatError(logits_path + ": " + e.what());
  }
  emit(out, io::temperature_json(model.temperature()));
  return 0;
}

int run_apply_ts(const std::string& temperature_path, const std::string& detections_path,
                 const std::string& gt_path, const std::string& out) {
  const TemperatureModel model(
      io::parse_temperature(io::read_text(temperature_path), temperature_path));
  const io::GroundTruthFile gt = io::load_ground_truth(gt_path);
  const auto dets = io::to_detections(io::load_detections(detections_path), gt, detections_path);
  std::vector<Detection> scaled;
  try {
    scaled = apply_temperature(model, dets);
  } catch (const std::invalid_argument& e) {
    throw io::FormatError(detections_path + ": " + e.what());
  }
  emit(out, io::dump_detections(scaled, gt));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detection calibration toolkit"};
  app.require_subcommand(1);

  MatchInputs eval_in;
  std::string eval_dims = "conf,cx,cy,w,h";
  int conf_bins = 10;
  int property_bins = 5;
  std::string eval_out;
  auto* eval = app.add_subcommand("eval", "calibration report (D-ECE and ECE) as JSON");
  add_match_options(eval, eval_in);
  eval->add_option("--dims", eval_dims, "binning dimensions, conf first")->capture_default_str();
  eval->add_option("--conf-bins", conf_bins, "confidence bins")->capture_default_str();
  eval->add_option("--property-bins", property_bins, "bins per box property")
      ->capture_default_str();
  eval->add_option("--out", eval_out, "output path (stdout if omitted)");

  MatchInputs diag_in;
  DiagramArgs diag;
  auto* diagram = app.add_subcommand("diagram", "diagram table as CSV");
  add_match_options(diagram, diag_in);
  diagram->add_option("--kind", diag.kind, "reliability, histogram, curve or heatmap")->required();
  diagram->add_option("--dim", diag.dim, "box property for --kind curve");
  diagram->add_option("--dims", diag.dims, "two box properties for --kind heatmap")
      ->capture_default_str();
  diagram->add_option("--bins", diag.bins, "bins (10 for confidence tables, 5 for curves)");
  diagram->add_option("--grid", diag.grid, "heatmap bins per axis")->expected(2);
  diagram->add_option("--out", diag.out, "output path (stdout if omitted)");

  TrainArgs tr;
  std::string mode = "baseline";
  auto* train_cmd = app.add_subcommand("train", "train the toy detector on synthetic scenes");
  train_cmd->add_option("--mode", mode, "baseline or mccl")->capture_default_str();
  train_cmd->add_option("--beta", tr.config.beta, "weight of the localization term")
      ->capture_default_str();
  train_cmd->add_option("--mc-passes", tr.config.mc_passes, "MC-dropout passes")
      ->capture_default_str();
  train_cmd->add_option("--dropout", tr.config.dropout, "dropout rate before the heads (mccl)")
      ->capture_default_str();
  train_cmd->add_option("--epochs", tr.config.epochs)->capture_default_str();
  train_cmd->add_option("--seed", tr.config.seed)->capture_default_str();
  train_cmd
      ->add_option("--shift-level", tr.shift_level,
                   "level of the shifted validation split (0 = none)")
      ->capture_default_str();
  train_cmd->add_option("--batch-size", tr.config.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", tr.config.learning_rate)->capture_default_str();
  train_cmd->add_option("--train-scenes", tr.train_scenes)->capture_default_str();
  train_cmd->add_option("--val-scenes", tr.val_scenes)->capture_default_str();
  train_cmd->add_option("--classes", tr.classes)->capture_default_str();
  train_cmd->add_option("--out-model", tr.out_model, "checkpoint JSON");
  train_cmd->add_option("--out-log", tr.out_log, "per-epoch log CSV");
  train_cmd->add_option("--export-dir", tr.export_dir,
                        "write validation detections, ground truth, logits and labels here");

  std::string ts_logits, ts_labels, ts_out;
  auto* ts = app.add_subcommand("ts", "fit a temperature on held-out logits");
  ts->add_option("--logits", ts_logits, "JSON array of logit vectors")->required();
  ts->add_option("--labels", ts_labels, "JSON array of class indices")->required();
  ts->add_option("--out", ts_out, "temperature JSON (stdout if omitted)");

  std::string ap_temp, ap_dets, ap_gt, ap_out;
  auto* apply_ts = app.add_subcommand("apply-ts", "rescale stored detection logits");
  apply_ts->add_option("--temperature", ap_temp, "temperature JSON")->required();
  apply_ts->add_option("--detections", ap_dets, "detections JSON with logits")->required();
  apply_ts->add_option("--ground-truth", ap_gt, "ground truth (images and categories)")->required();
  apply_ts->add_option("--out", ap_out, "output path (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (*eval) return run_eval(eval_in, eval_dims, conf_bins, property_bins, eval_out);
    if (*diagram) return run_diagram(diag_in, diag);
    if (*train_cmd) {
      try {
        tr.config.mode = parse_train_mode(mode);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      return run_train(tr);
    }
    if (*ts) return run_ts(ts_logits, ts_labels, ts_out);
    if (*apply_ts) return run_apply_ts(ap_temp, ap_dets, ap_gt, ap_out);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitError;
  } catch (const NothingToEvaluate& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitEmpty;
  } catch (const io::FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
