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

#include "detcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace detcal {
namespace {

constexpr std::size_t kMaxBins = std::size_t{1} << 26;

int bin_of(double x, int n, bool* clamped) {
  if (!(x >= 0.0 && x <= 1.0)) {
    if (clamped != nullptr) *clamped = true;
    return (x > 1.0) ? n - 1 : 0;  // NaN also goes to the first bin
  }
  return std::min(static_cast<int>(x * n), n - 1);
}

void require_non_empty(std::span<const MatchedDetection> matched) {
  if (matched.empty()) throw EmptyInputError();
}

}  // namespace

std::string_view to_string(Dim d) {
  switch (d) {
    case Dim::kConf:
      return "conf";
    case Dim::kCx:
      return "cx";
    case Dim::kCy:
      return "cy";
    case Dim::kW:
      return "w";
    case Dim::kH:
      return "h";
  }
  return "?";
}

Dim parse_dim(std::string_view name) {
  for (Dim d : {Dim::kConf, Dim::kCx, Dim::kCy, Dim::kW, Dim::kH}) {
    if (to_string(d) == name) return d;
  }
  throw std::invalid_argument("unknown dimension '" + std::string(name) +
                              "' (expected conf, cx, cy, w or h)");
}

double dim_value(const Detection& d, Dim dim) {
  switch (dim) {
    case Dim::kConf:
      return d.score;
    case Dim::kCx:
      return d.box.cx;
    case Dim::kCy:
      return d.box.cy;
    case Dim::kW:
      return d.box.w;
    case Dim::kH:
      return d.box.h;
  }
  return 0.0;
}

BinGrid::BinGrid(std::vector<Dim> dims, std::vector<int> bins_per_dim)
    : dims_(std::move(dims)), bins_(std::move(bins_per_dim)) {
  if (dims_.empty() || dims_.front() != Dim::kConf) {
    throw std::invalid_argument("bin grid: 'conf' must be present and first");
  }
  if (dims_.size() != bins_.size()) {
    throw std::invalid_argument("bin grid: one bin count per dimension required");
  }
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (std::count(dims_.begin(), dims_.end(), dims_[i]) != 1) {
      throw std::invalid_argument("bin grid: duplicate dimension " +
                                  std::string(to_string(dims_[i])));
    }
    if (bins_[i] < 1) throw std::invalid_argument("bin grid: bin counts must be >= 1");
    total_ *= static_cast<std::size_t>(bins_[i]);
    if (total_ > kMaxBins) throw std::invalid_argument("bin grid: too many bins");
  }
}

BinGrid BinGrid::confidence(int n_bins) { return BinGrid({Dim::kConf}, {n_bins}); }

BinGrid BinGrid::with_dims(const std::vector<Dim>& dims, int conf_bins, int property_bins) {
  std::vector<int> bins;
  for (Dim d : dims) bins.push_back(d == Dim::kConf ? conf_bins : property_bins);
  return BinGrid(dims, bins);
}

std::size_t BinGrid::locate(const Detection& d, bool* clamped) const {
  std::size_t flat = 0;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    flat = flat * static_cast<std::size_t>(bins_[i]) +
           static_cast<std::size_t>(bin_of(dim_value(d, dims_[i]), bins_[i], clamped));
  }
  return flat;
}

std::vector<int> BinGrid::unflatten(std::size_t flat) const {
  std::vector<int> index(dims_.size());
  for (std::size_t i = dims_.size(); i-- > 0;) {
    index[i] = static_cast<int>(flat % static_cast<std::size_t>(bins_[i]));
    flat /= static_cast<std::size_t>(bins_[i]);
  }
  return index;
}

BinAccumulator::BinAccumulator(BinGrid grid)
    : grid_(std::move(grid)),
      count_(grid_.total_bins(), 0),
      sum_conf_(grid_.total_bins(), 0.0L),
      correct_(grid_.total_bins(), 0) {}

void BinAccumulator::add(const MatchedDetection& m) {
  bool clamped = false;
  const std::size_t b = grid_.locate(m.detection, &clamped);
  if (clamped) ++clamped_;
  ++count_[b];
  sum_conf_[b] += m.detection.score;
  if (m.correct) ++correct_[b];
  ++total_;
}

void BinAccumulator::add(std::span<const MatchedDetection> ms) {
  for (const auto& m : ms) add(m);
}

void BinAccumulator::merge(const BinAccumulator& other) {
  if (other.grid_.dims() != grid_.dims() || other.grid_.bins_per_dim() != grid_.bins_per_dim()) {
    throw std::invalid_argument("cannot merge accumulators over different grids");
  }
  for (std::size_t b = 0; b < count_.size(); ++b) {
    count_[b] += other.count_[b];
    sum_conf_[b] += other.sum_conf_[b];
    correct_[b] += other.correct_[b];
  }
  total_ += other.total_;
  clamped_ += other.clamped_;
}

double BinAccumulator::calibration_error() const {
  if (total_ == 0) throw EmptyInputError();
  long double err = 0.0L;
  for (std::size_t b = 0; b < count_.size(); ++b) {
    if (count_[b] == 0) continue;
    err += std::abs(static_cast<long double>(correct_[b]) - sum_conf_[b]);
  }
  return static_cast<double>(err / static_cast<long double>(total_));
}

std::vector<BinStats> BinAccumulator::non_empty_bins() const {
  std::vector<BinStats> out;
  for (std::size_t b = 0; b < count_.size(); ++b) {
    if (count_[b] == 0) continue;
    out.push_back({count_[b], static_cast<double>(sum_conf_[b]), static_cast<double>(correct_[b]),
                   grid_.unflatten(b)});
  }
  return out;
}

double compute_ece(std::span<const MatchedDetection> matched, int n_bins) {
  require_non_empty(matched);
  BinAccumulator acc(BinGrid::confidence(n_bins));
  acc.add(matched);
  return acc.calibration_error();
}

CalibrationReport compute_dece(std::span<const MatchedDetection> matched, const BinGrid& grid,
                               double iou_threshold) {
  require_non_empty(matched);
  BinAccumulator acc(grid);
  acc.add(matched);
  CalibrationReport report;
  report.dece = acc.calibration_error();
  report.ece = compute_ece(matched, grid.bins_per_dim().front());
  report.grid = grid;
  report.bins = acc.non_empty_bins();
  report.n_detections = acc.total();
  report.iou_threshold = iou_threshold;
  report.n_clamped = acc.clamped();
  return report;
}

std::vector<ReliabilityRow> reliability_table(std::span<const MatchedDetection> matched,
                                              int n_bins) {
  require_non_empty(matched);
  BinAccumulator acc(BinGrid::confidence(n_bins));
  acc.add(matched);
  std::vector<ReliabilityRow> rows(static_cast<std::size_t>(n_bins));
  for (int b = 0; b < n_bins; ++b) rows[b].bin_center = (b + 0.5) / n_bins;
  for (const BinStats& s : acc.non_empty_bins()) {
    ReliabilityRow& r = rows[s.index[0]];
    r.count = s.count;
    r.conf = s.conf();
    r.acc = s.prec();
  }
  return rows;
}

ConfidenceHistogram confidence_histogram(std::span<const MatchedDetection> matched, int n_bins) {
  require_non_empty(matched);
  if (n_bins < 1) throw std::invalid_argument("histogram: n_bins must be >= 1");
  ConfidenceHistogram h;
  h.counts.assign(static_cast<std::size_t>(n_bins), 0);
  for (int b = 0; b < n_bins; ++b) h.bin_centers.push_back((b + 0.5) / n_bins);
  double conf = 0.0;
  double prec = 0.0;
  for (const auto& m : matched) {
    ++h.counts[bin_of(m.detection.score, n_bins, nullptr)];
    conf += m.detection.score;
    prec += m.correct ? 1.0 : 0.0;
  }
  h.avg_confidence = conf / static_cast<double>(matched.size());
  h.avg_precision = prec / static_cast<double>(matched.size());
  return h;
}

std::vector<CurveRow> property_curve(std::span<const MatchedDetection> matched, Dim dim,
                                     int n_bins) {
  require_non_empty(matched);
  if (dim == Dim::kConf) throw std::invalid_argument("property curve needs a box property");
  if (n_bins < 1) throw std::invalid_argument("property curve: n_bins must be >= 1");
  const auto n = static_cast<std::size_t>(n_bins);
  std::vector<double> conf(n, 0.0), correct(n, 0.0);
  std::vector<CurveRow> rows(n);
  for (const auto& m : matched) {
    const int b = bin_of(dim_value(m.detection, dim), n_bins, nullptr);
    ++rows[b].count;
    conf[b] += m.detection.score;
    correct[b] += m.correct ? 1.0 : 0.0;
  }
  const double total = static_cast<double>(matched.size());
  for (std::size_t b = 0; b < n; ++b) {
    rows[b].bin_center = (static_cast<double>(b) + 0.5) / n_bins;
    if (rows[b].count == 0) continue;
    const double c = static_cast<double>(rows[b].count);
    rows[b].prec = correct[b] / c;
    rows[b].conf = conf[b] / c;
    rows[b].partial_dece = std::abs(correct[b] - conf[b]) / total;
  }
  return rows;
}

Heatmap heatmap_2d(std::span<const MatchedDetection> matched, Dim dim_a, Dim dim_b, int n_a,
                   int n_b) {
  require_non_empty(matched);
  if (n_a < 1 || n_b < 1) throw std::invalid_argument("heatmap: bin counts must be >= 1");
  if (dim_a == dim_b) throw std::invalid_argument("heatmap: dimensions must differ");
  Eigen::MatrixXd conf = Eigen::MatrixXd::Zero(n_a, n_b);
  Eigen::MatrixXd correct = Eigen::MatrixXd::Zero(n_a, n_b);
  Heatmap h;
  h.count = Eigen::MatrixXi::Zero(n_a, n_b);
  for (const auto& m : matched) {
    const int a = bin_of(dim_value(m.detection, dim_a), n_a, nullptr);
    const int b = bin_of(dim_value(m.detection, dim_b), n_b, nullptr);
    ++h.count(a, b);
    conf(a, b) += m.detection.score;
    correct(a, b) += m.correct ? 1.0 : 0.0;
  }
  h.gap = Eigen::MatrixXd::Constant(n_a, n_b, std::numeric_limits<double>::quiet_NaN());
  for (int a = 0; a < n_a; ++a) {
    for (int b = 0; b < n_b; ++b) {
      if (h.count(a, b) == 0) continue;
      h.gap(a, b) = std::abs(correct(a, b) - conf(a, b)) / h.count(a, b);
    }
  }
  return h;
}

double mean_average_precision(std::span<const MatchedDetection> matched,
                              std::span<const GroundTruthObject> gts, int num_classes) {
  double sum_ap = 0.0;
  int classes = 0;
  for (int k = 0; k < num_classes; ++k) {
    const auto n_gt = std::count_if(gts.begin(), gts.end(),
                                    [k](const GroundTruthObject& g) { return g.label == k; });
    if (n_gt == 0) continue;
    ++classes;
    std::vector<const MatchedDetection*> dets;
    for (const auto& m : matched) {
      if (m.detection.label == k) dets.push_back(&m);
    }
    std::stable_sort(dets.begin(), dets.end(), [](const auto* a, const auto* b) {
      return a->detection.score > b->detection.score;
    });
    std::vector<double> recall, precision;
    double tp = 0.0;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      tp += dets[i]->correct ? 1.0 : 0.0;
      recall.push_back(tp / static_cast<double>(n_gt));
      precision.push_back(tp / static_cast<double>(i + 1));
    }
    // precision envelope
    for (std::size_t i = precision.size(); i-- > 1;) {
      precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    double ap = 0.0;
    for (int r = 0; r <= 100; ++r) {
      const double level = r / 100.0;
      const auto it = std::lower_bound(recall.begin(), recall.end(), level);
      if (it != recall.end()) ap += precision[static_cast<std::size_t>(it - recall.begin())];
    }
    sum_ap += ap / 101.0;
  }
  return classes == 0 ? 0.0 : sum_ap / classes;
}

}  // namespace detcal
