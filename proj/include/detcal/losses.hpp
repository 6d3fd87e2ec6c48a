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

// Auxiliary train-time calibration losses over the positive locations of a
// minibatch:
//
//   multiclass confidence calibration
//     L_mcc = (1/K) sum_k | mean_{l,n} v[k] - mean_{l,n} q[k] |,
//     v = (mean_conf + class_certainty) / 2,  q = one-hot ground truth;
//
//   localization calibration
//     L_lc = mean_l mean_n | IoU(mean_box, gt_box) - box_certainty |;
//
//   combined: L_aux = L_mcc + beta * L_lc.
//
// L_mcc averages over all M positives of the batch at once; L_lc averages per
// sample first. Samples without positives do not count towards either.

#ifndef DETCAL_LOSSES_HPP_
#define DETCAL_LOSSES_HPP_

#include <map>
#include <span>
#include <stdexcept>
#include <string>

#include "detcal/core.hpp"
#include "detcal/uncertainty.hpp"

namespace detcal {

template <typename Scalar>
struct PositiveLocation {
  int sample = 0;    // l, index of the image within the minibatch
  int location = 0;  // n, cell index within the image
  McSamples<Scalar> mc;
  int gt_class = 0;  // position of the 1 in q
  NormBox gt_box;
};

template <typename Scalar>
struct AuxLossOutput {
  Scalar l_mcc{};
  Scalar l_lc{};
  Scalar total{};
  double beta = 1.0;
};

class EmptyBatchError : public std::invalid_argument {
 public:
  EmptyBatchError() : std::invalid_argument("no positive locations") {}
};

template <typename DerivedA, typename DerivedB>
Vector<typename DerivedA::Scalar> fuse(const Eigen::MatrixBase<DerivedA>& mean_conf,
                                       const Eigen::MatrixBase<DerivedB>& certainty) {
  using Scalar = typename DerivedA::Scalar;
  if (mean_conf.size() != certainty.size()) {
    throw std::invalid_argument("fuse: length mismatch (" + std::to_string(mean_conf.size()) +
                                " vs " + std::to_string(certainty.size()) + ")");
  }
  Vector<Scalar> v(mean_conf.size());
  for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = (mean_conf(k) + certainty(k)) * 0.5;
  return v;
}

template <typename Scalar>
Scalar mcc_loss(std::span<const PositiveLocation<Scalar>> batch) {
  using std::abs;
  if (batch.empty()) throw EmptyBatchError();
  const Eigen::Index k_classes = batch.front().mc.classes();
  Vector<Scalar> sum_v = Vector<Scalar>::Constant(k_classes, Scalar(0.0));
  Eigen::VectorXd sum_q = Eigen::VectorXd::Zero(k_classes);
  for (const auto& loc : batch) {
    if (loc.mc.classes() != k_classes)
      throw std::invalid_argument("mcc_loss: class count mismatch");
    if (loc.gt_class < 0 || loc.gt_class >= k_classes) {
      throw std::invalid_argument("mcc_loss: ground-truth class out of range");
    }
    const Vector<Scalar> v =
        fuse(mean_confidence(loc.mc.logits), classwise_certainty(loc.mc.logits));
    for (Eigen::Index k = 0; k < k_classes; ++k) sum_v(k) += v(k);
    sum_q(loc.gt_class) += 1.0;
  }
  const double m = static_cast<double>(batch.size());
  Scalar total(0.0);
  for (Eigen::Index k = 0; k < k_classes; ++k) {
    total += abs(Scalar(sum_v(k) / m - sum_q(k) / m));
  }
  return total / static_cast<double>(k_classes);
}

template <typename Scalar>
Scalar lc_loss(std::span<const PositiveLocation<Scalar>> batch) {
  using std::abs;
  if (batch.empty()) throw EmptyBatchError();
  struct Acc {
    Scalar sum{0.0};
    int count = 0;
  };
  std::map<int, Acc> per_sample;
  for (const auto& loc : batch) {
    const Vector<Scalar> mu = box_mean(loc.mc.boxes);
    const BasicBox<Scalar> mean_box{mu(0), mu(1), mu(2), mu(3)};
    const BasicBox<Scalar> gt{Scalar(loc.gt_box.cx), Scalar(loc.gt_box.cy), Scalar(loc.gt_box.w),
                              Scalar(loc.gt_box.h)};
    const Scalar gap = abs(Scalar(iou(mean_box, gt) - box_certainty(loc.mc.boxes)));
    Acc& acc = per_sample[loc.sample];
    acc.sum += gap;
    ++acc.count;
  }
  Scalar total(0.0);
  for (const auto& [sample, acc] : per_sample) total += acc.sum / static_cast<double>(acc.count);
  return total / static_cast<double>(per_sample.size());
}

template <typename Scalar>
AuxLossOutput<Scalar> mccl_aux(std::span<const PositiveLocation<Scalar>> batch, double beta) {
  if (!(beta >= 0.0)) throw std::invalid_argument("mccl_aux: beta must be >= 0");
  AuxLossOutput<Scalar> out;
  out.beta = beta;
  out.l_mcc = mcc_loss(batch);
  out.l_lc = lc_loss(batch);
  out.total = out.l_mcc + out.l_lc * beta;
  return out;
}

}  // namespace detcal

#endif  // DETCAL_LOSSES_HPP_
