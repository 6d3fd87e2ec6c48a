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

#ifndef DETCAL_POSTHOC_HPP_
#define DETCAL_POSTHOC_HPP_

#include <Eigen/Core>
#include <span>
#include <vector>

#include "detcal/core.hpp"

namespace detcal {

// Post-hoc temperature scaling: softmax(z / T).
class TemperatureModel {
 public:
  explicit TemperatureModel(double temperature = 1.0);

  double temperature() const { return t_; }
  Eigen::VectorXd probabilities(const Eigen::Ref<const Eigen::VectorXd>& logits) const;

 private:
  double t_;
};

// Mean negative log-likelihood of labels under softmax(logits / T); one row
// of `logits` per example.
double temperature_nll(const Eigen::Ref<const Eigen::MatrixXd>& logits, std::span<const int> labels,
                       double temperature);

// Golden-section search over log T in [-3, 3] to 1e-6.
TemperatureModel fit_temperature(const Eigen::Ref<const Eigen::MatrixXd>& logits,
                                 std::span<const int> labels);

// Rescales the stored logits of each detection; labels are kept.
std::vector<Detection> apply_temperature(const TemperatureModel& model,
                                         std::span<const Detection> detections);

}  // namespace detcal

#endif  // DETCAL_POSTHOC_HPP_
