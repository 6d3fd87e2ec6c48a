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

#ifndef DETCAL_CORE_HPP_
#define DETCAL_CORE_HPP_

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace detcal {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Normalized (cx, cy, w, h) box. The scalar parameter lets the same
// geometry run on plain doubles and on autodiff values.
template <typename Scalar>
struct BasicBox {
  Scalar cx{};
  Scalar cy{};
  Scalar w{};
  Scalar h{};

  Scalar x1() const { return cx - w * 0.5; }
  Scalar y1() const { return cy - h * 0.5; }
  Scalar x2() const { return cx + w * 0.5; }
  Scalar y2() const { return cy + h * 0.5; }
  Scalar area() const { return w * h; }
};

using NormBox = BasicBox<double>;

// cx, cy in [0,1]; w, h in (0,1]; all finite.
bool is_valid(const NormBox& b);
// Throws std::invalid_argument when !is_valid(b).
void check_box(const NormBox& b);

using ImageId = std::int64_t;

struct Detection {
  ImageId image_id = 0;
  int label = 0;
  double score = 0.0;
  NormBox box;
  std::optional<std::vector<double>> score_vector;
  // Raw pre-softmax logits when the producer kept them.
  std::optional<std::vector<double>> logits;
};

struct GroundTruthObject {
  ImageId image_id = 0;
  int label = 0;
  NormBox box;
  std::int64_t id = -1;
};

struct MatchedDetection {
  Detection detection;
  bool correct = false;  // m
  std::optional<std::int64_t> matched_gt;
  double iou = 0.0;
};

// Intersection over union via area(a) + area(b) - intersection, with areas
// taken from the corners so that iou(a, a) == 1 exactly.
template <typename Scalar>
Scalar iou(const BasicBox<Scalar>& a, const BasicBox<Scalar>& b) {
  using std::max;
  using std::min;
  const Scalar zero(0.0);
  const Scalar iw = max(zero, Scalar(min(a.x2(), b.x2()) - max(a.x1(), b.x1())));
  const Scalar ih = max(zero, Scalar(min(a.y2(), b.y2()) - max(a.y1(), b.y1())));
  const Scalar inter = iw * ih;
  const Scalar area_a = Scalar(a.x2() - a.x1()) * Scalar(a.y2() - a.y1());
  const Scalar area_b = Scalar(b.x2() - b.x1()) * Scalar(b.y2() - b.y1());
  return inter / (area_a + area_b - inter);
}

struct MatchOptions {
  double iou_threshold = 0.5;  // gamma; m = 1 iff IoU > gamma
  double min_score = 0.0;      // detections below are dropped before matching
  int num_classes = -1;        // labels must be < num_classes when set
};

// Class-aware greedy matching. Within each (image, class), detections are
// visited by descending score (ties: input order) and take the unmatched
// ground truth of highest IoU; m = 1 iff that IoU exceeds the threshold.
// Output order follows input order. Ground truths without an id are
// identified by their position in `gts`.
std::vector<MatchedDetection> match_detections(std::span<const Detection> dets,
                                               std::span<const GroundTruthObject> gts,
                                               const MatchOptions& options = {});

// Worker cap from DETCAL_THREADS (0 or unset = hardware concurrency).
unsigned worker_count();

// Runs fn(i) for i in [0, n) across up to worker_count() threads. Each index
// is processed exactly once; result placement is up to the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace detcal

#endif  // DETCAL_CORE_HPP_
