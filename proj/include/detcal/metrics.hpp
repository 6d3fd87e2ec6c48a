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

#ifndef DETCAL_METRICS_HPP_
#define DETCAL_METRICS_HPP_

#include <Eigen/Core>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "detcal/core.hpp"

namespace detcal {

// Raised when a metric is asked to summarize zero detections.
class EmptyInputError : public std::runtime_error {
 public:
  EmptyInputError() : std::runtime_error("no detections to calibrate") {}
};

enum class Dim { kConf, kCx, kCy, kW, kH };

std::string_view to_string(Dim d);
Dim parse_dim(std::string_view name);
// Value of a dimension for a detection: its score or a property of its
// predicted box.
double dim_value(const Detection& d, Dim dim);

// Equal-width bins over [0,1] per dimension. The top bin is right-closed so
// 1.0 is binned; values outside [0,1] land in the nearest edge bin.
class BinGrid {
 public:
  BinGrid(std::vector<Dim> dims, std::vector<int> bins_per_dim);

  // conf only.
  static BinGrid confidence(int n_bins);
  // Defaults: conf_bins for confidence, property_bins for every box property.
  static BinGrid with_dims(const std::vector<Dim>& dims, int conf_bins = 10, int property_bins = 5);

  const std::vector<Dim>& dims() const { return dims_; }
  const std::vector<int>& bins_per_dim() const { return bins_; }
  std::size_t total_bins() const { return total_; }

  // Flat row-major bin of d; `clamped` is set when a value was outside [0,1].
  std::size_t locate(const Detection& d, bool* clamped = nullptr) const;
  std::vector<int> unflatten(std::size_t flat) const;

 private:
  std::vector<Dim> dims_;
  std::vector<int> bins_;
  std::size_t total_ = 1;
};

struct BinStats {
  std::size_t count = 0;
  double sum_conf = 0.0;
  double sum_correct = 0.0;
  std::vector<int> index;

  double conf() const { return sum_conf / static_cast<double>(count); }
  double prec() const { return sum_correct / static_cast<double>(count); }
};

// Per-bin sums over a grid. Accumulators built from disjoint shards can be
// merged; the merged totals equal a single pass over the union.
class BinAccumulator {
 public:
  explicit BinAccumulator(BinGrid grid);

  void add(const MatchedDetection& m);
  void add(std::span<const MatchedDetection> ms);
  void merge(const BinAccumulator& other);

  const BinGrid& grid() const { return grid_; }
  std::size_t total() const { return total_; }
  std::size_t clamped() const { return clamped_; }

  // sum over non-empty bins of (count/|D|) * |prec - conf|
  double calibration_error() const;
  std::vector<BinStats> non_empty_bins() const;

 private:
  BinGrid grid_;
  std::vector<std::size_t> count_;
  std::vector<long double> sum_conf_;  // extended precision keeps hand cases exact
  std::vector<std::size_t> correct_;
  std::size_t total_ = 0;
  std::size_t clamped_ = 0;
};

struct CalibrationReport {
  double dece = 0.0;
  double ece = 0.0;
  BinGrid grid = BinGrid::confidence(10);
  std::vector<BinStats> bins;  // non-empty only
  std::size_t n_detections = 0;
  double iou_threshold = 0.5;
  std::size_t n_clamped = 0;
};

double compute_ece(std::span<const MatchedDetection> matched, int n_bins);

// ece in the report uses the grid's confidence bin count.
CalibrationReport compute_dece(std::span<const MatchedDetection> matched, const BinGrid& grid,
                               double iou_threshold = 0.5);

struct ReliabilityRow {
  double bin_center = 0.0;
  std::optional<double> conf;
  std::optional<double> acc;
  std::size_t count = 0;
};

std::vector<ReliabilityRow> reliability_table(std::span<const MatchedDetection> matched,
                                              int n_bins);

struct ConfidenceHistogram {
  std::vector<double> bin_centers;
  std::vector<std::size_t> counts;
  double avg_confidence = 0.0;
  double avg_precision = 0.0;
};

ConfidenceHistogram confidence_histogram(std::span<const MatchedDetection> matched, int n_bins);

struct CurveRow {
  double bin_center = 0.0;
  std::optional<double> prec;
  std::optional<double> conf;
  std::size_t count = 0;
  double partial_dece = 0.0;  // (count/|D|) * |prec - conf|
};

// Bins along one box property (cx, cy, w or h).
std::vector<CurveRow> property_curve(std::span<const MatchedDetection> matched, Dim dim,
                                     int n_bins);

struct Heatmap {
  Eigen::MatrixXd gap;  // |prec - conf| per cell; NaN where empty
  Eigen::MatrixXi count;
};

Heatmap heatmap_2d(std::span<const MatchedDetection> matched, Dim dim_a, Dim dim_b, int n_a,
                   int n_b);

// Mean over classes (with at least one ground truth) of 101-point
// interpolated average precision at the matching threshold already applied.
double mean_average_precision(std::span<const MatchedDetection> matched,
                              std::span<const GroundTruthObject> gts, int num_classes);

}  // namespace detcal

#endif  // DETCAL_METRICS_HPP_
