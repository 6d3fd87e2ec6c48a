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

#include "detcal/posthoc.hpp"

#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

#include "detcal/uncertainty.hpp"

namespace detcal {

TemperatureModel::TemperatureModel(double temperature) : t_(temperature) {
  if (!(std::isfinite(temperature) && temperature > 0.0)) {
    throw std::invalid_argument("temperature must be finite and positive");
  }
}

Eigen::VectorXd TemperatureModel::probabilities(
    const Eigen::Ref<const Eigen::VectorXd>& logits) const {
  return softmax(Eigen::VectorXd(logits / t_));
}

double temperature_nll(const Eigen::Ref<const Eigen::MatrixXd>& logits, std::span<const int> labels,
                       double temperature) {
  double nll = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Eigen::VectorXd z = logits.row(i).transpose() / temperature;
    const double m = z.maxCoeff();
    const double lse = m + std::log((z.array() - m).exp().sum());
    nll += lse - z(labels[static_cast<std::size_t>(i)]);
  }
  return nll / static_cast<double>(logits.rows());
}

TemperatureModel fit_temperature(const Eigen::Ref<const Eigen::MatrixXd>& logits,
                                 std::span<const int> labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw std::invalid_argument("fit_temperature: one label per logit row required");
  }
  std::set<int> distinct;
  for (int y : labels) {
    if (y < 0 || y >= logits.cols()) {
      throw std::invalid_argument("fit_temperature: label " + std::to_string(y) + " out of range");
    }
    distinct.insert(y);
  }
  if (distinct.size() < 2) {
    throw std::invalid_argument("fit_temperature: need at least two distinct labels");
  }

  auto objective = [&](double log_t) { return temperature_nll(logits, labels, std::exp(log_t)); };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = -3.0;
  double hi = 3.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = objective(x1);
  double f2 = objective(x2);
  while (hi - lo > 1e-6) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = objective(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = objective(x2);
    }
  }
  return TemperatureModel(std::exp(0.5 * (lo + hi)));
}

std::vector<Detection> apply_temperature(const TemperatureModel& model,
                                         std::span<const Detection> detections) {
  std::vector<Detection> out;
  out.reserve(detections.size());
  for (const Detection& d : detections) {
    if (!d.logits || d.logits->empty()) {
      throw std::invalid_argument("apply_temperature: detection on image " +
                                  std::to_string(d.image_id) + " carries no logits");
    }
    const Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(
        d.logits->data(), static_cast<Eigen::Index>(d.logits->size()));
    if (d.label < 0 || d.label >= z.size()) {
      throw std::invalid_argument("apply_temperature: label outside logit vector");
    }
    const Eigen::VectorXd p = model.probabilities(z);
    Detection r = d;
    r.score_vector = std::vector<double>(p.data(), p.data() + p.size());
    r.score = p(d.label);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace detcal
