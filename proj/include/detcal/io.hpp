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

// File formats: COCO-style detections and ground truth (absolute pixel
// boxes, top-left origin), calibration reports, diagram CSVs, model
// checkpoints, training logs and temperature files.

#ifndef DETCAL_IO_HPP_
#define DETCAL_IO_HPP_

#include <Eigen/Core>
#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "detcal/core.hpp"
#include "detcal/metrics.hpp"
#include "detcal/toydet.hpp"

namespace detcal::io {

// Parse/validation failure; the message reads "file:line: reason".
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DetectionRecord {
  ImageId image_id = 0;
  std::int64_t category_id = 0;
  std::array<double, 4> bbox{};  // x, y, w, h in pixels
  double score = 0.0;
  std::optional<std::vector<double>> logits;
};

struct ImageInfo {
  ImageId id = 0;
  double width = 0.0;
  double height = 0.0;
};

struct Category {
  std::int64_t id = 0;
  std::string name;
};

struct GroundTruthFile {
  std::map<ImageId, ImageInfo> images;
  std::vector<GroundTruthObject> objects;  // boxes already normalized
  std::vector<Category> categories;        // label index = position here

  int num_classes() const { return static_cast<int>(categories.size()); }
  int label_of(std::int64_t category_id) const;  // -1 if unknown
};

std::string read_text(const std::filesystem::path& path);
// Writes through a temporary sibling and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

std::vector<DetectionRecord> parse_detections(const std::string& text, const std::string& origin);
GroundTruthFile parse_ground_truth(const std::string& text, const std::string& origin);

std::vector<DetectionRecord> load_detections(const std::filesystem::path& path);
GroundTruthFile load_ground_truth(const std::filesystem::path& path);

// Absolute (x, y, w, h) to normalized (cx, cy, w, h), clipped to the image.
NormBox normalize_box(const std::array<double, 4>& bbox, double width, double height);
std::array<double, 4> denormalize_box(const NormBox& box, double width, double height);

// Resolves images and categories and normalizes boxes.
std::vector<Detection> to_detections(std::span<const DetectionRecord> records,
                                     const GroundTruthFile& gt, const std::string& origin);

// Detections back to the file format; category ids via gt.categories.
std::string dump_detections(std::span<const Detection> dets, const GroundTruthFile& gt);

std::string report_json(const CalibrationReport& report);

// Shortest round-trip decimal representation.
std::string format_number(double v);

std::string reliability_csv(std::span<const ReliabilityRow> rows);
std::string histogram_csv(const ConfidenceHistogram& h);
std::string curve_csv(std::span<const CurveRow> rows);
std::string heatmap_csv(const Heatmap& h);

std::string checkpoint_json(const ToyDetector& model, const TrainConfig& config);
ToyDetector load_checkpoint(const std::string& text, const std::string& origin,
                            TrainConfig* config = nullptr);

std::string train_log_csv(std::span<const EpochLog> log);

std::string temperature_json(double temperature);
double parse_temperature(const std::string& text, const std::string& origin);

Eigen::MatrixXd parse_logits(const std::string& text, const std::string& origin);
std::vector<int> parse_labels(const std::string& text, const std::string& origin);

// Synthetic scenes rendered as a ground-truth file (pixel size = grid cells
// times `cell_pixels`).
GroundTruthFile scenes_ground_truth(std::span<const SyntheticScene> scenes, int num_classes,
                                    double cell_pixels = 32.0);
std::string dump_ground_truth(const GroundTruthFile& gt);

}  // namespace detcal::io

#endif  // DETCAL_IO_HPP_
