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


// Reference implementations written directly from the definitions, kept
// deliberately naive: plain loops, no shared helpers with the library.

#ifndef DETCAL_TESTS_ORACLES_HPP_
#define DETCAL_TESTS_ORACLES_HPP_

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "detcal/autodiff.hpp"
#include "detcal/losses.hpp"

namespace detcal::oracle {

inline double mean_of(const Eigen::MatrixXd& m, Eigen::Index col) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) s += m(i, col);
  return s / static_cast<double>(m.rows());
}

inline double variance_of(const Eigen::MatrixXd& m, Eigen::Index col) {
  const double mu = mean_of(m, col);
  double s = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) s += (m(i, col) - mu) * (m(i, col) - mu);
  return s / static_cast<double>(m.rows());
}

inline std::vector<double> mean_confidence(const Eigen::MatrixXd& z) {
  std::vector<double> e(static_cast<std::size_t>(z.cols()));
  double total = 0.0;
  for (Eigen::Index k = 0; k < z.cols(); ++k) {
    e[static_cast<std::size_t>(k)] = std::exp(mean_of(z, k));
    total += e[static_cast<std::size_t>(k)];
  }
  for (auto& v : e) v /= total;
  return e;
}

inline std::vector<double> classwise_certainty(const Eigen::MatrixXd& z) {
  std::vector<double> c;
  for (Eigen::Index k = 0; k < z.cols(); ++k) c.push_back(1.0 - std::tanh(variance_of(z, k)));
  return c;
}

inline double box_certainty(const Eigen::MatrixXd& r) {
  const double j = static_cast<double>(r.cols());
  double mu_com = 0.0;
  for (Eigen::Index c = 0; c < r.cols(); ++c) mu_com += mean_of(r, c) / j;
  double u = 0.0;
  for (Eigen::Index c = 0; c < r.cols(); ++c) {
    const double dev = mean_of(r, c) - mu_com;
    u += (variance_of(r, c) + dev * dev) / j;
  }
  return 1.0 - std::tanh(u);
}

// Corner-form IoU.
inline double iou(double cx1, double cy1, double w1, double h1, double cx2, double cy2,
                  double w2, double h2) {
  const double ax1 = cx1 - w1 / 2, ax2 = cx1 + w1 / 2, ay1 = cy1 - h1 / 2, ay2 = cy1 + h1 / 2;
  const double bx1 = cx2 - w2 / 2, bx2 = cx2 + w2 / 2, by1 = cy2 - h2 / 2, by2 = cy2 + h2 / 2;
  const double iw = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
  const double ih = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
  const double inter = iw * ih;
  return inter / (w1 * h1 + w2 * h2 - inter);
}

inline double mcc_loss(std::span<const PositiveLocation<double>> batch) {
  const auto k = static_cast<std::size_t>(batch.front().mc.logits.cols());
  std::vector<double> v_sum(k, 0.0), q_sum(k, 0.0);
  for (const auto& loc : batch) {
    const auto s = mean_confidence(loc.mc.logits);
    const auto c = classwise_certainty(loc.mc.logits);
    for (std::size_t i = 0; i < k; ++i) {
      v_sum[i] += (s[i] + c[i]) / 2.0;
      q_sum[i] += static_cast<int>(i) == loc.gt_class ? 1.0 : 0.0;
    }
  }
  const double m = static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) total += std::abs(v_sum[i] / m - q_sum[i] / m);
  return total / static_cast<double>(k);
}

inline double lc_gap(const PositiveLocation<double>& loc) {
  const Eigen::MatrixXd& r = loc.mc.boxes;
  const double o = iou(mean_of(r, 0), mean_of(r, 1), mean_of(r, 2), mean_of(r, 3), loc.gt_box.cx,
                       loc.gt_box.cy, loc.gt_box.w, loc.gt_box.h);
  return o - box_certainty(r);
}

inline double lc_loss(std::span<const PositiveLocation<double>> batch) {
  std::map<int, std::vector<double>> per_sample;
  for (const auto& loc : batch) per_sample[loc.sample].push_back(std::abs(lc_gap(loc)));
  double total = 0.0;
  for (const auto& [l, gaps] : per_sample) {
    double s = 0.0;
    for (double g : gaps) s += g;
    total += s / static_cast<double>(gaps.size());
  }
  return total / static_cast<double>(per_sample.size());
}

// Distance of an instance from the nearest non-smooth point of the auxiliary
// loss: |.| arguments, IoU min/max pairs and the zero clamp of the overlap.
inline double aux_kink_margin(std::span<const PositiveLocation<double>> batch) {
  double margin = std::numeric_limits<double>::infinity();
  const auto k = static_cast<std::size_t>(batch.front().mc.logits.cols());
  std::vector<double> v_sum(k, 0.0), q_sum(k, 0.0);
  for (const auto& loc : batch) {
    const auto s = mean_confidence(loc.mc.logits);
    const auto c = classwise_certainty(loc.mc.logits);
    for (std::size_t i = 0; i < k; ++i) {
      v_sum[i] += (s[i] + c[i]) / 2.0;
      q_sum[i] += static_cast<int>(i) == loc.gt_class ? 1.0 : 0.0;
    }
    margin = std::min(margin, std::abs(lc_gap(loc)));
    const Eigen::MatrixXd& r = loc.mc.boxes;
    const double cx = mean_of(r, 0), cy = mean_of(r, 1), w = mean_of(r, 2), h = mean_of(r, 3);
    const NormBox& g = loc.gt_box;
    const double ax1 = cx - w / 2, ax2 = cx + w / 2, ay1 = cy - h / 2, ay2 = cy + h / 2;
    const double bx1 = g.cx - g.w / 2, bx2 = g.cx + g.w / 2, by1 = g.cy - g.h / 2,
                 by2 = g.cy + g.h / 2;
    margin = std::min({margin, std::abs(ax1 - bx1), std::abs(ax2 - bx2), std::abs(ay1 - by1),
                       std::abs(ay2 - by2), std::abs(std::min(ax2, bx2) - std::max(ax1, bx1)),
                       std::abs(std::min(ay2, by2) - std::max(ay1, by1))});
  }
  const double m = static_cast<double>(batch.size());
  for (std::size_t i = 0; i < k; ++i) margin = std::min(margin, std::abs(v_sum[i] / m - q_sum[i] / m));
  return margin;
}

// Flat parameter vector: every logit then every box entry, location by
// location, row-major.
inline std::vector<double> flatten_inputs(std::span<const PositiveLocation<double>> batch) {
  std::vector<double> p;
  for (const auto& loc : batch) {
    for (Eigen::Index i = 0; i < loc.mc.logits.rows(); ++i) {
      for (Eigen::Index j = 0; j < loc.mc.logits.cols(); ++j) p.push_back(loc.mc.logits(i, j));
    }
    for (Eigen::Index i = 0; i < loc.mc.boxes.rows(); ++i) {
      for (Eigen::Index j = 0; j < loc.mc.boxes.cols(); ++j) p.push_back(loc.mc.boxes(i, j));
    }
  }
  return p;
}

// Same batch with its inputs replaced by tape leaves taken from x in
// flatten_inputs order.
inline std::vector<PositiveLocation<ad::Value>> lift(std::span<const PositiveLocation<double>> batch,
                                                     std::span<const ad::Value> x) {
  std::vector<PositiveLocation<ad::Value>> out;
  std::size_t at = 0;
  for (const auto& loc : batch) {
    PositiveLocation<ad::Value> v;
    v.sample = loc.sample;
    v.location = loc.location;
    v.gt_class = loc.gt_class;
    v.gt_box = loc.gt_box;
    v.mc.logits.resize(loc.mc.logits.rows(), loc.mc.logits.cols());
    v.mc.boxes.resize(loc.mc.boxes.rows(), loc.mc.boxes.cols());
    for (Eigen::Index i = 0; i < v.mc.logits.rows(); ++i) {
      for (Eigen::Index j = 0; j < v.mc.logits.cols(); ++j) v.mc.logits(i, j) = x[at++];
    }
    for (Eigen::Index i = 0; i < v.mc.boxes.rows(); ++i) {
      for (Eigen::Index j = 0; j < v.mc.boxes.cols(); ++j) v.mc.boxes(i, j) = x[at++];
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace detcal::oracle

#endif  // DETCAL_TESTS_ORACLES_HPP_
