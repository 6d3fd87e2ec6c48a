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

// Desk-scale dense detector on synthetic scenes, trained either with a plain
// task loss or with the task loss plus the MC-dropout calibration loss.
//
// Every grid cell sees a square patch of the feature map through a shared
// one-layer trunk. A dropout layer sits in front of both the classification
// head (K foreground logits + background) and the box head (4 offsets).
// Stochastic passes reuse the trunk activations and only resample the
// dropout masks on the head inputs.

#ifndef DETCAL_TOYDET_HPP_
#define DETCAL_TOYDET_HPP_

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "detcal/autodiff.hpp"
#include "detcal/core.hpp"
#include "detcal/losses.hpp"
#include "detcal/metrics.hpp"
#include "detcal/uncertainty.hpp"

namespace detcal {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SceneConfig {
  int grid = 16;
  int channels = 3;
  int num_classes = 3;
  double noise = 0.3;     // per-cell feature noise at shift level 0
  double contrast = 1.0;  // prototype amplitude at shift level 0
  double min_size = 2.0;  // object side, in cells
  double max_size = 4.5;
  int max_objects = 3;
};

struct SyntheticScene {
  int grid = 16;
  int channels = 3;
  RowMatrix<double> features;  // (grid*grid) x channels, row = y * grid + x
  std::vector<GroundTruthObject> objects;
  std::uint64_t seed = 0;
  double shift_level = 0.0;
};

// Noise grows as (1 + shift) and contrast shrinks as 1 / (1 + shift / 2).
// image_id of every object is the index of its scene in the returned list;
// num_classes overrides config.num_classes.
std::vector<SyntheticScene> generate_dataset(int n_scenes, int num_classes, double shift_level,
                                             std::uint64_t seed, SceneConfig config = {});

// Per-cell training targets. Background cells carry class K.
struct CellTargets {
  std::vector<bool> positive;
  std::vector<int> cls;
  std::vector<NormBox> box;

  std::vector<int> positive_cells() const;
};

// A cell is positive iff its center lies inside a ground-truth box; the
// smallest box wins where boxes overlap.
CellTargets assign_positives(const SyntheticScene& scene, int num_classes);

struct ModelConfig {
  int grid = 16;
  int channels = 3;
  int num_classes = 3;
  int patch_radius = 2;  // patch side = 2 * radius + 1
  int hidden = 16;
  double max_box_side = 0.5;
  double offset_range = 1.5;  // cells
};

template <typename Scalar>
struct DetectorParams {
  RowMatrix<Scalar> trunk_w;  // hidden x patch inputs
  Vector<Scalar> trunk_b;
  RowMatrix<Scalar> cls_w;  // (K + 1) x hidden
  Vector<Scalar> cls_b;
  RowMatrix<Scalar> box_w;  // 4 x hidden
  Vector<Scalar> box_b;
};

class ToyDetector {
 public:
  ToyDetector() = default;
  ToyDetector(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  DetectorParams<double>& params() { return params_; }
  const DetectorParams<double>& params() const { return params_; }

  std::size_t parameter_count() const;
  // Flat copy in the order trunk_w, trunk_b, cls_w, cls_b, box_w, box_b.
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);

  // Patch inputs of every cell, (grid*grid) x inputs, zero padded.
  RowMatrix<double> patches(const SyntheticScene& scene) const;

 private:
  ModelConfig config_;
  DetectorParams<double> params_;
};

enum class TrainMode { kBaseline, kMccl };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::kBaseline;
  int epochs = 40;
  int batch_size = 8;
  double learning_rate = 0.5;
  double beta = 1.0;
  int mc_passes = 5;
  double dropout = 0.1;
  double lambda_reg = 1.0;
  std::uint64_t seed = 0;
  double score_threshold = 0.3;
  int conf_bins = 10;
  int property_bins = 5;
  ModelConfig model;

  void validate() const;
};

// Dropout masks for one scene: `passes` masks per head, each
// (grid*grid) x hidden, already divided by the keep probability.
struct DropoutMasks {
  std::vector<RowMatrix<double>> cls;
  std::vector<RowMatrix<double>> box;
  RowMatrix<double> cls_mean;
  RowMatrix<double> box_mean;
};

DropoutMasks sample_masks(int cells, int hidden, int passes, double rate, std::mt19937_64& rng);

// Forward pass of one scene on a given scalar. With masks == nullptr the
// heads see the raw trunk activations (deterministic pass).
template <typename Scalar>
struct SceneForward {
  RowMatrix<Scalar> logits;  // cells x (K + 1); mean over passes
  std::vector<int> positive_cells;
  std::vector<McSamples<Scalar>> samples;    // per positive cell; K logit cols
  std::vector<BasicBox<Scalar>> mean_boxes;  // per positive cell
};

SceneForward<double> forward(const ToyDetector& model, const SyntheticScene& scene,
                             const CellTargets& targets, const DropoutMasks* masks);

// ReLU trunk activations of every cell, (grid*grid) x hidden.
RowMatrix<double> trunk_forward(const DetectorParams<double>& params,
                                const RowMatrix<double>& patches);

// N stochastic passes over the positive cells of a scene.
std::vector<McSamples<double>> mc_forward(const ToyDetector& model, const SyntheticScene& scene,
                                          int passes, double dropout, std::uint64_t seed);

// Cross-entropy over K + 1 classes at every cell plus
// lambda_reg * mean over positives of (1 - IoU(box, gt)).
template <typename Scalar>
Scalar task_loss(const SceneForward<Scalar>& fwd, const CellTargets& targets, double lambda_reg);

struct InferOptions {
  double score_threshold = 0.3;
  double nms_iou = 0.5;
  bool keep_logits = false;
  ImageId image_id = 0;
};

// Deterministic pass; per-cell argmax, background and low scores dropped,
// greedy per-class NMS.
std::vector<Detection> infer(const ToyDetector& model, const SyntheticScene& scene,
                             const InferOptions& options = {});

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold);

struct Evaluation {
  double dece = 0.0;
  double ece = 0.0;
  double ap50 = 0.0;
  std::size_t n_detections = 0;
};

Evaluation evaluate(const ToyDetector& model, std::span<const SyntheticScene> scenes,
                    const TrainConfig& config);

struct EpochLog {
  int epoch = 0;
  double task_loss = 0.0;
  double l_mcc = 0.0;  // NaN in baseline mode
  double l_lc = 0.0;   // NaN in baseline mode
  double dece = 0.0;
  double ap50 = 0.0;
};

struct StepStats {
  double task_loss = 0.0;
  double l_mcc = 0.0;
  double l_lc = 0.0;
};

// Per-scene dropout masks for one minibatch; empty in baseline mode.
std::vector<DropoutMasks> sample_batch_masks(const ToyDetector& model, std::size_t scenes,
                                             const TrainConfig& config, std::mt19937_64& rng);

struct BatchLoss {
  double total = 0.0;  // task loss, plus the auxiliary loss in mccl mode
  StepStats stats;
  std::vector<double> gradient;  // flatten() order; empty without a tape
};

// Minibatch objective under fixed masks. With a tape the gradient with
// respect to every parameter is filled in as well.
BatchLoss batch_loss(const ToyDetector& model, std::span<const SyntheticScene* const> batch,
                     const TrainConfig& config, std::span<const DropoutMasks> masks,
                     ad::Tape* tape = nullptr);

// One gradient step on a minibatch of scenes.
StepStats train_step(ToyDetector& model, std::span<const SyntheticScene* const> batch,
                     const TrainConfig& config, std::mt19937_64& rng, ad::Tape& tape);

struct TrainResult {
  ToyDetector model;
  std::vector<EpochLog> log;
};

TrainResult train(const TrainConfig& config, std::span<const SyntheticScene> train_set,
                  std::span<const SyntheticScene> val_set);

}  // namespace detcal

#endif  // DETCAL_TOYDET_HPP_
