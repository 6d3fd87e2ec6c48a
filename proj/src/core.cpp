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

#include "detcal/core.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <map>
#include <numeric>
#include <string>
#include <thread>

namespace detcal {

bool is_valid(const NormBox& b) {
  const bool finite =
      std::isfinite(b.cx) && std::isfinite(b.cy) && std::isfinite(b.w) && std::isfinite(b.h);
  return finite && b.cx >= 0.0 && b.cx <= 1.0 && b.cy >= 0.0 && b.cy <= 1.0 && b.w > 0.0 &&
         b.w <= 1.0 && b.h > 0.0 && b.h <= 1.0;
}

void check_box(const NormBox& b) {
  if (!is_valid(b)) {
    throw std::invalid_argument("invalid box (" + std::to_string(b.cx) + ", " +
                                std::to_string(b.cy) + ", " + std::to_string(b.w) + ", " +
                                std::to_string(b.h) + ")");
  }
}

unsigned worker_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DETCAL_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap > 0) return static_cast<unsigned>(cap);
  }
  return hw;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<MatchedDetection> match_detections(std::span<const Detection> dets,
                                               std::span<const GroundTruthObject> gts,
                                               const MatchOptions& options) {
  if (!(options.iou_threshold > 0.0 && options.iou_threshold < 1.0)) {
    throw std::invalid_argument("IoU threshold must lie in (0, 1)");
  }
  auto check_label = [&](int label, const char* what) {
    if (label < 0 || (options.num_classes >= 0 && label >= options.num_classes)) {
      throw std::invalid_argument(std::string(what) + " class index " + std::to_string(label) +
                                  " outside [0, " + std::to_string(options.num_classes) + ")");
    }
  };
  for (const auto& d : dets) check_label(d.label, "detection");
  for (const auto& g : gts) check_label(g.label, "ground truth");

  std::map<ImageId, std::vector<std::size_t>> det_by_image;
  std::map<ImageId, std::vector<std::size_t>> gt_by_image;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].score < options.min_score) continue;
    kept.push_back(i);
    det_by_image[dets[i].image_id].push_back(i);
  }
  for (std::size_t j = 0; j < gts.size(); ++j) gt_by_image[gts[j].image_id].push_back(j);

  std::vector<MatchedDetection> by_input(dets.size());
  std::vector<const std::vector<std::size_t>*> groups;
  std::vector<ImageId> group_ids;
  for (const auto& [id, idx] : det_by_image) {
    groups.push_back(&idx);
    group_ids.push_back(id);
  }

  parallel_for(groups.size(), [&](std::size_t g) {
    std::vector<std::size_t> order = *groups[g];
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
    static const std::vector<std::size_t> kNone;
    const auto it = gt_by_image.find(group_ids[g]);
    const auto& candidates = it == gt_by_image.end() ? kNone : it->second;
    std::vector<bool> used(candidates.size(), false);
    for (std::size_t di : order) {
      const Detection& d = dets[di];
      MatchedDetection& out = by_input[di];
      out.detection = d;
      double best = -1.0;
      std::size_t best_c = candidates.size();
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        const GroundTruthObject& gt = gts[candidates[c]];
        if (used[c] || gt.label != d.label) continue;
        const double o = iou(d.box, gt.box);
        if (o > best) {
          best = o;
          best_c = c;
        }
      }
      if (best_c < candidates.size() && best > options.iou_threshold) {
        used[best_c] = true;
        const GroundTruthObject& gt = gts[candidates[best_c]];
        out.correct = true;
        out.matched_gt = gt.id >= 0 ? gt.id : static_cast<std::int64_t>(candidates[best_c]);
        out.iou = best;
      }
    }
  });

  std::vector<MatchedDetection> result;
  result.reserve(kept.size());
  for (std::size_t i : kept) result.push_back(std::move(by_input[i]));
  return result;
}

}  // namespace detcal
