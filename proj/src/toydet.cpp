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

#include "detcal/toydet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace detcal {
namespace {

// Class prototypes in feature space; classes beyond the table cycle with a
// sign flip.
Eigen::VectorXd prototype(int k, int channels) {
  static const double kTable[][3] = {
      {1.0, 0.25, -0.25}, {-0.25, 1.0, 0.25}, {0.25, -0.25, 1.0},
      {1.0, 1.0, -0.5},   {-0.5, 1.0, 1.0},   {1.0, -0.5, 1.0},
  };
  constexpr int kRows = 6;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(channels);
  const double sign = (k / kRows) % 2 == 0 ? 1.0 : -1.0;
  for (int c = 0; c < channels; ++c) p(c) = sign * kTable[k % kRows][c % 3];
  return p;
}

// Area of [a0, a1] x [b0, b1] covered by the box, as a fraction of the cell.
double coverage(const NormBox& box, double x0, double x1, double y0, double y1) {
  const double iw = std::max(0.0, std::min(x1, box.x2()) - std::max(x0, box.x1()));
  const double ih = std::max(0.0, std::min(y1, box.y2()) - std::max(y0, box.y1()));
  return iw * ih / ((x1 - x0) * (y1 - y0));
}

template <typename Scalar>
std::span<const Scalar> row_span(const RowMatrix<Scalar>& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

template <typename Scalar>
BasicBox<Scalar> decode_box(const Scalar* t, int cell, const ModelConfig& cfg) {
  using std::tanh;
  const double g = cfg.grid;
  const double col = cell % cfg.grid;
  const double row = cell / cfg.grid;
  BasicBox<Scalar> b;
  b.cx = (tanh(t[0]) * cfg.offset_range + (col + 0.5)) / g;
  b.cy = (tanh(t[1]) * cfg.offset_range + (row + 0.5)) / g;
  b.w = sigmoid(t[2]) * cfg.max_box_side;
  b.h = sigmoid(t[3]) * cfg.max_box_side;
  return b;
}

template <typename Scalar>
struct HeadParams {
  RowMatrix<Scalar> cls_w;
  Vector<Scalar> cls_b;
  RowMatrix<Scalar> box_w;
  Vector<Scalar> box_b;
};

HeadParams<double> head_params(const DetectorParams<double>& p) {
  return {p.cls_w, p.cls_b, p.box_w, p.box_b};
}

template <typename Scalar>
SceneForward<Scalar> heads_forward(const HeadParams<Scalar>& p, const ModelConfig& cfg,
                                   const RowMatrix<Scalar>& h, const CellTargets& targets,
                                   const DropoutMasks* masks) {
  const int cells = static_cast<int>(h.rows());
  const int k_fg = cfg.num_classes;
  const int k_all = k_fg + 1;

  SceneForward<Scalar> out;
  out.logits.resize(cells, k_all);
  // Row c of the head layer, with the head input optionally masked.
  auto head = [&](const RowMatrix<Scalar>& w, Eigen::Index row, int c,
                  const RowMatrix<double>* mask) -> Scalar {
    if (mask == nullptr) return dot(row_span(w, row), row_span(h, c));
    return dot(row_span(w, row), row_span(h, c), row_span(*mask, c));
  };

  for (int c = 0; c < cells; ++c) {
    for (int k = 0; k < k_all; ++k) {
      out.logits(c, k) = head(p.cls_w, k, c, masks ? &masks->cls_mean : nullptr) + p.cls_b(k);
    }
  }

  out.positive_cells = targets.positive_cells();
  const int passes = masks ? static_cast<int>(masks->cls.size()) : 1;
  Scalar t[kBoxParams];
  for (int c : out.positive_cells) {
    McSamples<Scalar> mc;
    mc.logits.resize(passes, k_fg);
    mc.boxes.resize(passes, kBoxParams);
    for (int s = 0; s < passes; ++s) {
      const RowMatrix<double>* mc_mask = masks ? &masks->cls[s] : nullptr;
      const RowMatrix<double>* mb_mask = masks ? &masks->box[s] : nullptr;
      for (int k = 0; k < k_fg; ++k) mc.logits(s, k) = head(p.cls_w, k, c, mc_mask) + p.cls_b(k);
      for (int j = 0; j < kBoxParams; ++j) t[j] = head(p.box_w, j, c, mb_mask) + p.box_b(j);
      const BasicBox<Scalar> b = decode_box(t, c, cfg);
      mc.boxes(s, 0) = b.cx;
      mc.boxes(s, 1) = b.cy;
      mc.boxes(s, 2) = b.w;
      mc.boxes(s, 3) = b.h;
    }
    const Vector<Scalar> mu = box_mean(mc.boxes);
    out.mean_boxes.push_back({mu(0), mu(1), mu(2), mu(3)});
    out.samples.push_back(std::move(mc));
  }
  return out;
}

template <typename Scalar>
RowMatrix<Scalar> lift(const RowMatrix<double>& m, ad::Tape& tape) {
  RowMatrix<Scalar> out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) out.data()[i] = tape.variable(m.data()[i]);
  return out;
}

template <typename Scalar>
Vector<Scalar> lift(const Eigen::VectorXd& v, ad::Tape& tape) {
  Vector<Scalar> out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = tape.variable(v(i));
  return out;
}

template <typename F>
void for_each_param(DetectorParams<double>& p, F&& fn) {
  auto visit = [&](double* dst, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) fn(dst[i]);
  };
  visit(p.trunk_w.data(), p.trunk_w.size());
  visit(p.trunk_b.data(), p.trunk_b.size());
  visit(p.cls_w.data(), p.cls_w.size());
  visit(p.cls_b.data(), p.cls_b.size());
  visit(p.box_w.data(), p.box_w.size());
  visit(p.box_b.data(), p.box_b.size());
}

template <typename Scalar>
struct BatchTerms {
  Scalar task{0.0};
  std::optional<AuxLossOutput<Scalar>> aux;
};

// Shared by the value-only and the taped evaluation of a minibatch loss.
// `hidden_of(l)` returns the trunk activations of scene l on Scalar.
template <typename Scalar, typename HiddenFn>
BatchTerms<Scalar> batch_terms(const HeadParams<Scalar>& heads, const ModelConfig& cfg,
                               std::span<const SyntheticScene* const> batch,
                               const TrainConfig& config, std::span<const DropoutMasks> masks,
                               HiddenFn&& hidden_of) {
  const bool mccl = config.mode == TrainMode::kMccl;
  BatchTerms<Scalar> out;
  std::vector<PositiveLocation<Scalar>> positives;
  for (std::size_t l = 0; l < batch.size(); ++l) {
    const CellTargets targets = assign_positives(*batch[l], cfg.num_classes);
    const DropoutMasks* m = masks.empty() ? nullptr : &masks[l];
    SceneForward<Scalar> fwd = heads_forward(heads, cfg, hidden_of(l), targets, m);
    out.task += task_loss(fwd, targets, config.lambda_reg);
    if (!mccl) continue;
    for (std::size_t i = 0; i < fwd.positive_cells.size(); ++i) {
      const auto cell = static_cast<std::size_t>(fwd.positive_cells[i]);
      positives.push_back({static_cast<int>(l), fwd.positive_cells[i], std::move(fwd.samples[i]),
                           targets.cls[cell], targets.box[cell]});
    }
  }
  out.task = out.task / static_cast<double>(batch.size());
  if (mccl && !positives.empty()) out.aux = mccl_aux<Scalar>(positives, config.beta);
  return out;
}

template <typename Scalar>
StepStats stats_of(const BatchTerms<Scalar>& t) {
  StepStats s;
  s.task_loss = value_of(t.task);
  s.l_mcc = t.aux ? value_of(t.aux->l_mcc) : std::numeric_limits<double>::quiet_NaN();
  s.l_lc = t.aux ? value_of(t.aux->l_lc) : std::numeric_limits<double>::quiet_NaN();
  return s;
}

}  // namespace

std::vector<SyntheticScene> generate_dataset(int n_scenes, int num_classes, double shift_level,
                                             std::uint64_t seed, SceneConfig config) {
  if (n_scenes <= 0) throw std::invalid_argument("generate_dataset: n_scenes must be positive");
  if (num_classes < 1) throw std::invalid_argument("generate_dataset: need at least one class");
  if (!(shift_level >= 0.0))
    throw std::invalid_argument("generate_dataset: shift_level must be >= 0");
  config.num_classes = num_classes;
  const int g = config.grid;
  const double noise = config.noise * (1.0 + shift_level);
  const double contrast = config.contrast / (1.0 + 0.5 * shift_level);

  std::vector<SyntheticScene> scenes;
  scenes.reserve(static_cast<std::size_t>(n_scenes));
  std::mt19937_64 master(seed);
  for (int i = 0; i < n_scenes; ++i) {
    SyntheticScene s;
    s.grid = g;
    s.channels = config.channels;
    s.seed = master();
    s.shift_level = shift_level;
    std::mt19937_64 rng(s.seed);
    std::uniform_int_distribution<int> count_dist(1, config.max_objects);
    std::uniform_int_distribution<int> class_dist(0, num_classes - 1);
    std::uniform_real_distribution<double> size_dist(config.min_size / g, config.max_size / g);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const int n_obj = count_dist(rng);
    for (int o = 0; o < n_obj; ++o) {
      GroundTruthObject obj;
      obj.image_id = i;
      obj.label = class_dist(rng);
      obj.box.w = size_dist(rng);
      obj.box.h = size_dist(rng);
      obj.box.cx = obj.box.w / 2 + unit(rng) * (1.0 - obj.box.w);
      obj.box.cy = obj.box.h / 2 + unit(rng) * (1.0 - obj.box.h);
      obj.id = static_cast<std::int64_t>(i) * 16 + o;
      s.objects.push_back(obj);
    }

    s.features = RowMatrix<double>::Zero(g * g, config.channels);
    for (int y = 0; y < g; ++y) {
      for (int x = 0; x < g; ++x) {
        const int cell = y * g + x;
        for (const auto& obj : s.objects) {
          const double cov =
              coverage(obj.box, double(x) / g, double(x + 1) / g, double(y) / g, double(y + 1) / g);
          if (cov > 0.0) {
            s.features.row(cell) +=
                (contrast * cov) * prototype(obj.label, config.channels).transpose();
          }
        }
        for (int c = 0; c < config.channels; ++c) s.features(cell, c) += noise * gauss(rng);
      }
    }
    scenes.push_back(std::move(s));
  }
  return scenes;
}

std::vector<int> CellTargets::positive_cells() const {
  std::vector<int> out;
  for (std::size_t c = 0; c < positive.size(); ++c) {
    if (positive[c]) out.push_back(static_cast<int>(c));
  }
  return out;
}

CellTargets assign_positives(const SyntheticScene& scene, int num_classes) {
  const int g = scene.grid;
  const std::size_t cells = static_cast<std::size_t>(g) * g;
  CellTargets t;
  t.positive.assign(cells, false);
  t.cls.assign(cells, num_classes);
  t.box.assign(cells, NormBox{});
  std::vector<double> best_area(cells, std::numeric_limits<double>::infinity());
  for (const auto& obj : scene.objects) {
    for (int y = 0; y < g; ++y) {
      for (int x = 0; x < g; ++x) {
        const double px = (x + 0.5) / g;
        const double py = (y + 0.5) / g;
        const bool inside =
            px >= obj.box.x1() && px <= obj.box.x2() && py >= obj.box.y1() && py <= obj.box.y2();
        const std::size_t cell = static_cast<std::size_t>(y) * g + x;
        if (!inside || obj.box.area() >= best_area[cell]) continue;
        best_area[cell] = obj.box.area();
        t.positive[cell] = true;
        t.cls[cell] = obj.label;
        t.box[cell] = obj.box;
      }
    }
  }
  return t;
}

ToyDetector::ToyDetector(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  if (config.hidden < 1 || config.patch_radius < 0 || config.num_classes < 1 || config.grid < 1) {
    throw std::invalid_argument("invalid model configuration");
  }
  const int side = 2 * config.patch_radius + 1;
  const int inputs = side * side * config.channels;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto fill = [&](auto& m, double scale) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * gauss(rng);
  };
  params_.trunk_w.resize(config.hidden, inputs);
  fill(params_.trunk_w, std::sqrt(2.0 / inputs));
  params_.trunk_b = Eigen::VectorXd::Constant(config.hidden, 0.01);
  params_.cls_w.resize(config.num_classes + 1, config.hidden);
  fill(params_.cls_w, std::sqrt(1.0 / config.hidden));
  params_.cls_b = Eigen::VectorXd::Zero(config.num_classes + 1);
  params_.cls_b(config.num_classes) = 2.0;  // most cells are background
  params_.box_w.resize(kBoxParams, config.hidden);
  fill(params_.box_w, 0.01);
  params_.box_b = Eigen::VectorXd::Zero(kBoxParams);
  const double side_frac = std::clamp(3.0 / config.grid / config.max_box_side, 0.05, 0.95);
  params_.box_b(2) = params_.box_b(3) = std::log(side_frac / (1.0 - side_frac));
}

std::size_t ToyDetector::parameter_count() const {
  return static_cast<std::size_t>(params_.trunk_w.size() + params_.trunk_b.size() +
                                  params_.cls_w.size() + params_.cls_b.size() +
                                  params_.box_w.size() + params_.box_b.size());
}

std::vector<double> ToyDetector::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  auto& self = const_cast<DetectorParams<double>&>(params_);
  for_each_param(self, [&](double& v) { flat.push_back(v); });
  return flat;
}

void ToyDetector::unflatten(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw std::invalid_argument("unflatten: expected " + std::to_string(parameter_count()) +
                                " parameters, got " + std::to_string(flat.size()));
  }
  std::size_t i = 0;
  for_each_param(params_, [&](double& v) { v = flat[i++]; });
}

RowMatrix<double> ToyDetector::patches(const SyntheticScene& scene) const {
  if (scene.grid != config_.grid || scene.channels != config_.channels) {
    throw std::invalid_argument("scene geometry does not match the model");
  }
  const int g = config_.grid;
  const int r = config_.patch_radius;
  const int side = 2 * r + 1;
  const int ch = config_.channels;
  RowMatrix<double> out = RowMatrix<double>::Zero(g * g, side * side * ch);
  for (int y = 0; y < g; ++y) {
    for (int x = 0; x < g; ++x) {
      // Horizontal runs of the patch are contiguous in both matrices.
      const int x0 = std::max(0, x - r);
      const int x1 = std::min(g - 1, x + r);
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= g) continue;
        const int base = ((dy + r) * side + (x0 - x + r)) * ch;
        std::copy_n(scene.features.data() + (yy * g + x0) * ch, (x1 - x0 + 1) * ch,
                    out.data() + (y * g + x) * out.cols() + base);
      }
    }
  }
  return out;
}

std::string to_string(TrainMode mode) { return mode == TrainMode::kMccl ? "mccl" : "baseline"; }

TrainMode parse_train_mode(const std::string& name) {
  if (name == "baseline") return TrainMode::kBaseline;
  if (name == "mccl") return TrainMode::kMccl;
  throw std::invalid_argument("unknown training mode '" + name + "' (expected baseline or mccl)");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (mode == TrainMode::kMccl && mc_passes < 2) {
    throw std::invalid_argument("mccl mode needs at least 2 MC passes");
  }
}

DropoutMasks sample_masks(int cells, int hidden, int passes, double rate, std::mt19937_64& rng) {
  if (passes < 1) throw std::invalid_argument("sample_masks: passes must be >= 1");
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  const double keep_scale = 1.0 / (1.0 - rate);
  // Each 64-bit draw yields two 32-bit uniforms; a unit is dropped when its
  // uniform falls below rate * 2^32.
  const auto threshold = static_cast<std::uint64_t>(std::ldexp(rate, 32));
  DropoutMasks m;
  m.cls_mean = RowMatrix<double>::Zero(cells, hidden);
  m.box_mean = RowMatrix<double>::Zero(cells, hidden);
  auto draw = [&](RowMatrix<double>& mask, RowMatrix<double>& sum) {
    mask.resize(cells, hidden);
    double* out = mask.data();
    const Eigen::Index n = mask.size();
    for (Eigen::Index i = 0; i < n; i += 2) {
      const std::uint64_t bits = rng();
      out[i] = (bits & 0xffffffffULL) >= threshold ? keep_scale : 0.0;
      if (i + 1 < n) out[i + 1] = (bits >> 32) >= threshold ? keep_scale : 0.0;
    }
    sum += mask;
  };
  m.cls.resize(static_cast<std::size_t>(passes));
  m.box.resize(static_cast<std::size_t>(passes));
  for (int p = 0; p < passes; ++p) {
    draw(m.cls[p], m.cls_mean);
    draw(m.box[p], m.box_mean);
  }
  m.cls_mean /= static_cast<double>(passes);
  m.box_mean /= static_cast<double>(passes);
  return m;
}

RowMatrix<double> trunk_forward(const DetectorParams<double>& params,
                                const RowMatrix<double>& patches) {
  RowMatrix<double> h = patches * params.trunk_w.transpose();
  h.rowwise() += params.trunk_b.transpose();
  return h.cwiseMax(0.0);
}

SceneForward<double> forward(const ToyDetector& model, const SyntheticScene& scene,
                             const CellTargets& targets, const DropoutMasks* masks) {
  const RowMatrix<double> h = trunk_forward(model.params(), model.patches(scene));
  return heads_forward(head_params(model.params()), model.config(), h, targets, masks);
}

std::vector<McSamples<double>> mc_forward(const ToyDetector& model, const SyntheticScene& scene,
                                          int passes, double dropout, std::uint64_t seed) {
  if (passes < 2) throw std::invalid_argument("mc_forward: need at least 2 passes");
  const CellTargets targets = assign_positives(scene, model.config().num_classes);
  std::mt19937_64 rng(seed);
  const int cells = scene.grid * scene.grid;
  const DropoutMasks masks = sample_masks(cells, model.config().hidden, passes, dropout, rng);
  return forward(model, scene, targets, &masks).samples;
}

template <typename Scalar>
Scalar task_loss(const SceneForward<Scalar>& fwd, const CellTargets& targets, double lambda_reg) {
  using std::exp;
  using std::log;
  const Eigen::Index cells = fwd.logits.rows();
  Scalar ce(0.0);
  for (Eigen::Index c = 0; c < cells; ++c) {
    double shift = value_of(fwd.logits(c, 0));
    for (Eigen::Index k = 1; k < fwd.logits.cols(); ++k) {
      shift = std::max(shift, value_of(fwd.logits(c, k)));
    }
    Scalar sum(0.0);
    for (Eigen::Index k = 0; k < fwd.logits.cols(); ++k)
      sum += exp(Scalar(fwd.logits(c, k) - shift));
    ce += log(sum) + shift - fwd.logits(c, targets.cls[static_cast<std::size_t>(c)]);
  }
  Scalar loss = ce / static_cast<double>(cells);
  if (!fwd.positive_cells.empty()) {
    Scalar reg(0.0);
    for (std::size_t i = 0; i < fwd.positive_cells.size(); ++i) {
      const NormBox& gt = targets.box[static_cast<std::size_t>(fwd.positive_cells[i])];
      const BasicBox<Scalar> g{Scalar(gt.cx), Scalar(gt.cy), Scalar(gt.w), Scalar(gt.h)};
      reg += Scalar(1.0) - iou(fwd.mean_boxes[i], g);
    }
    loss += reg * (lambda_reg / static_cast<double>(fwd.positive_cells.size()));
  }
  return loss;
}

template double task_loss<double>(const SceneForward<double>&, const CellTargets&, double);
template ad::Value task_loss<ad::Value>(const SceneForward<ad::Value>&, const CellTargets&, double);

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (auto& d : dets) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.label == d.label && iou(k.box, d.box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(std::move(d));
  }
  return kept;
}

std::vector<Detection> infer(const ToyDetector& model, const SyntheticScene& scene,
                             const InferOptions& options) {
  const ModelConfig& cfg = model.config();
  const RowMatrix<double> patches = model.patches(scene);
  const auto& p = model.params();
  const int cells = static_cast<int>(patches.rows());
  const int k_fg = cfg.num_classes;
  std::vector<Detection> dets;
  const RowMatrix<double> hidden = trunk_forward(p, patches);
  RowMatrix<double> logits = hidden * p.cls_w.transpose();
  logits.rowwise() += p.cls_b.transpose();
  RowMatrix<double> offsets = hidden * p.box_w.transpose();
  offsets.rowwise() += p.box_b.transpose();
  for (int c = 0; c < cells; ++c) {
    const Eigen::VectorXd z = logits.row(c).transpose();
    const Eigen::VectorXd prob = softmax(z);
    Eigen::Index best_all = 0;
    prob.maxCoeff(&best_all);
    if (best_all == k_fg) continue;
    const double score = prob(best_all);
    if (score < options.score_threshold) continue;
    const BasicBox<double> b = decode_box(offsets.data() + c * kBoxParams, c, cfg);
    Detection d;
    d.image_id = options.image_id;
    d.label = static_cast<int>(best_all);
    d.score = score;
    d.box.cx = std::clamp(b.cx, 0.0, 1.0);
    d.box.cy = std::clamp(b.cy, 0.0, 1.0);
    d.box.w = std::clamp(b.w, 1e-6, 1.0);
    d.box.h = std::clamp(b.h, 1e-6, 1.0);
    if (options.keep_logits) d.logits = std::vector<double>(z.data(), z.data() + z.size());
    dets.push_back(std::move(d));
  }
  return nms(std::move(dets), options.nms_iou);
}

Evaluation evaluate(const ToyDetector& model, std::span<const SyntheticScene> scenes,
                    const TrainConfig& config) {
  std::vector<Detection> dets;
  std::vector<GroundTruthObject> gts;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    InferOptions opt;
    opt.score_threshold = config.score_threshold;
    opt.image_id = static_cast<ImageId>(i);
    auto d = infer(model, scenes[i], opt);
    dets.insert(dets.end(), d.begin(), d.end());
    for (GroundTruthObject g : scenes[i].objects) {
      g.image_id = static_cast<ImageId>(i);
      gts.push_back(g);
    }
  }
  MatchOptions mo;
  mo.num_classes = model.config().num_classes;
  const auto matched = match_detections(dets, gts, mo);
  Evaluation ev;
  ev.n_detections = matched.size();
  ev.ap50 = mean_average_precision(matched, gts, model.config().num_classes);
  if (matched.empty()) {
    ev.dece = ev.ece = std::numeric_limits<double>::quiet_NaN();
    return ev;
  }
  const BinGrid grid = BinGrid::with_dims({Dim::kConf, Dim::kCx, Dim::kCy, Dim::kW, Dim::kH},
                                          config.conf_bins, config.property_bins);
  const CalibrationReport report = compute_dece(matched, grid);
  ev.dece = report.dece;
  ev.ece = report.ece;
  return ev;
}

std::vector<DropoutMasks> sample_batch_masks(const ToyDetector& model, std::size_t scenes,
                                             const TrainConfig& config, std::mt19937_64& rng) {
  std::vector<DropoutMasks> masks;
  if (config.mode != TrainMode::kMccl) return masks;
  const ModelConfig& cfg = model.config();
  for (std::size_t l = 0; l < scenes; ++l) {
    masks.push_back(
        sample_masks(cfg.grid * cfg.grid, cfg.hidden, config.mc_passes, config.dropout, rng));
  }
  return masks;
}

BatchLoss batch_loss(const ToyDetector& model, std::span<const SyntheticScene* const> batch,
                     const TrainConfig& config, std::span<const DropoutMasks> masks,
                     ad::Tape* tape) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty minibatch");
  if (!masks.empty() && masks.size() != batch.size()) {
    throw std::invalid_argument("batch_loss: one mask set per scene required");
  }
  const ModelConfig& cfg = model.config();
  const DetectorParams<double>& p = model.params();
  std::vector<RowMatrix<double>> patches;
  std::vector<RowMatrix<double>> hidden;
  for (const SyntheticScene* scene : batch) {
    patches.push_back(model.patches(*scene));
    hidden.push_back(trunk_forward(p, patches.back()));
  }

  BatchLoss out;
  if (tape == nullptr) {
    const auto terms =
        batch_terms<double>(head_params(p), cfg, batch, config, masks,
                            [&](std::size_t l) -> const RowMatrix<double>& { return hidden[l]; });
    out.stats = stats_of(terms);
    out.total = terms.task + (terms.aux ? terms.aux->total : 0.0);
    return out;
  }

  // Heads and losses run on the tape; trunk activations enter it as leaves
  // and their adjoints are pulled back through the ReLU layer densely.
  tape->clear();
  const HeadParams<ad::Value> heads{
      lift<ad::Value>(p.cls_w, *tape), lift<ad::Value>(p.cls_b, *tape),
      lift<ad::Value>(p.box_w, *tape), lift<ad::Value>(p.box_b, *tape)};
  std::vector<RowMatrix<ad::Value>> hidden_v(batch.size());
  for (std::size_t l = 0; l < batch.size(); ++l) {
    const RowMatrix<double>& h = hidden[l];
    hidden_v[l].resize(h.rows(), h.cols());
    for (Eigen::Index i = 0; i < h.size(); ++i) {
      const double v = h.data()[i];
      hidden_v[l].data()[i] = v > 0.0 ? tape->variable(v) : ad::Value(0.0);
    }
  }
  const auto terms = batch_terms<ad::Value>(
      heads, cfg, batch, config, masks,
      [&](std::size_t l) -> const RowMatrix<ad::Value>& { return hidden_v[l]; });
  out.stats = stats_of(terms);
  const ad::Value loss = terms.aux ? terms.task + terms.aux->total : terms.task;
  out.total = loss.value();
  out.gradient.assign(model.parameter_count(), 0.0);
  if (!std::isfinite(out.total) || loss.is_constant()) return out;
  tape->backward(loss);

  Eigen::Map<RowMatrix<double>> g_trunk_w(out.gradient.data(), p.trunk_w.rows(), p.trunk_w.cols());
  Eigen::Map<Eigen::VectorXd> g_trunk_b(out.gradient.data() + p.trunk_w.size(), p.trunk_b.size());
  for (std::size_t l = 0; l < batch.size(); ++l) {
    RowMatrix<double> g_hidden(hidden[l].rows(), hidden[l].cols());
    for (Eigen::Index i = 0; i < g_hidden.size(); ++i) {
      const ad::Value& v = hidden_v[l].data()[i];
      g_hidden.data()[i] = v.is_constant() ? 0.0 : v.grad();
    }
    g_trunk_w.noalias() += g_hidden.transpose() * patches[l];
    g_trunk_b += g_hidden.colwise().sum().transpose();
  }
  std::size_t offset = static_cast<std::size_t>(p.trunk_w.size() + p.trunk_b.size());
  auto copy_grads = [&](const auto& values) {
    for (Eigen::Index i = 0; i < values.size(); ++i)
      out.gradient[offset++] = values.data()[i].grad();
  };
  copy_grads(heads.cls_w);
  copy_grads(heads.cls_b);
  copy_grads(heads.box_w);
  copy_grads(heads.box_b);
  return out;
}

StepStats train_step(ToyDetector& model, std::span<const SyntheticScene* const> batch,
                     const TrainConfig& config, std::mt19937_64& rng, ad::Tape& tape) {
  const std::vector<DropoutMasks> masks = sample_batch_masks(model, batch.size(), config, rng);
  BatchLoss loss;
  try {
    loss = batch_loss(model, batch, config, masks, &tape);
  } catch (const std::domain_error& e) {
    throw std::runtime_error(std::string("training diverged: ") + e.what());
  }
  if (!std::isfinite(loss.total)) {
    throw std::runtime_error("training diverged: non-finite loss (task " +
                             std::to_string(loss.stats.task_loss) + ")");
  }
  std::size_t i = 0;
  const double lr = config.learning_rate;
  bool finite = true;
  for_each_param(model.params(), [&](double& v) {
    v -= lr * loss.gradient[i++];
    finite = finite && std::isfinite(v);
  });
  if (!finite) throw std::runtime_error("training diverged: non-finite parameters");
  return loss.stats;
}

TrainResult train(const TrainConfig& config, std::span<const SyntheticScene> train_set,
                  std::span<const SyntheticScene> val_set) {
  config.validate();
  TrainResult result{ToyDetector(config.model, config.seed), {}};
  if (config.epochs == 0) return result;
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  ad::Tape tape;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum_task = 0.0, sum_mcc = 0.0, sum_lc = 0.0;
    int steps = 0;
    std::vector<const SyntheticScene*> batch;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(&train_set[order[i]]);
      StepStats s;
      try {
        s = train_step(result.model, batch, config, rng, tape);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                                 ", step " + std::to_string(steps + 1));
      }
      sum_task += s.task_loss;
      sum_mcc += s.l_mcc;
      sum_lc += s.l_lc;
      ++steps;
    }
    EpochLog row;
    row.epoch = epoch;
    row.task_loss = sum_task / steps;
    row.l_mcc = sum_mcc / steps;
    row.l_lc = sum_lc / steps;
    if (!val_set.empty()) {
      const Evaluation ev = evaluate(result.model, val_set, config);
      row.dece = ev.dece;
      row.ap50 = ev.ap50;
    } else {
      row.dece = row.ap50 = std::numeric_limits<double>::quiet_NaN();
    }
    result.log.push_back(row);
  }
  return result;
}

}  // namespace detcal
