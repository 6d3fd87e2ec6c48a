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

// Monte-Carlo dropout aggregation: mean-logit confidence, class-wise
// certainty, mean box and joint box certainty from N stochastic passes.
//
// Every function is templated on the scalar so the training path runs the
// same code on autodiff values that evaluation runs on doubles.

#ifndef DETCAL_UNCERTAINTY_HPP_
#define DETCAL_UNCERTAINTY_HPP_

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>

#include "detcal/autodiff.hpp"
#include "detcal/core.hpp"

namespace detcal {

inline constexpr int kBoxParams = 4;

// N passes x K class logits, and N passes x 4 decoded (cx, cy, w, h).
template <typename Scalar>
struct McSamples {
  Matrix<Scalar> logits;
  Matrix<Scalar> boxes;

  Eigen::Index passes() const { return logits.rows(); }
  Eigen::Index classes() const { return logits.cols(); }
};

template <typename Scalar>
struct UncertaintySummary {
  Vector<Scalar> mean_conf;        // softmax of the column-mean logits
  Vector<Scalar> class_certainty;  // 1 - tanh(column variance of logits)
  Vector<Scalar> mean_box;         // column means of the box samples
  Scalar box_certainty{};          // 1 - tanh(u)
};

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!std::isfinite(value_of(m(i, j)))) {
        throw std::invalid_argument(std::string(what) + ": non-finite entry");
      }
    }
  }
}

}  // namespace detail

// Column means, accumulated as offsets from the first row. Identical rows
// therefore give back that row bit-for-bit.
template <typename Derived>
Vector<typename Derived::Scalar> column_mean(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() < 1) throw std::invalid_argument("column_mean: need at least one row");
  const Eigen::Index n = m.rows();
  Vector<Scalar> out(m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const Scalar& base = m(0, j);
    Scalar offset(0.0);
    for (Eigen::Index i = 1; i < n; ++i) offset += m(i, j) - base;
    out(j) = n == 1 ? base : Scalar(base + offset / static_cast<double>(n));
  }
  return out;
}

// Population (divide-by-N) column variances.
template <typename Derived>
Vector<typename Derived::Scalar> column_variance(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const Vector<Scalar> mu = column_mean(m);
  Vector<Scalar> out(m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    Scalar acc(0.0);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const Scalar d = m(i, j) - mu(j);
      acc += d * d;
    }
    out(j) = acc / static_cast<double>(m.rows());
  }
  return out;
}

// Max-shifted softmax. The shift is a payload constant, so it carries no
// gradient and leaves the Jacobian unchanged.
template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  using std::exp;
  double shift = value_of(z(0));
  for (Eigen::Index k = 1; k < z.size(); ++k) shift = std::max(shift, value_of(z(k)));
  Vector<Scalar> e(z.size());
  Scalar total(0.0);
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    e(k) = exp(Scalar(z(k) - shift));
    total += e(k);
  }
  for (Eigen::Index k = 0; k < z.size(); ++k) e(k) = e(k) / total;
  return e;
}

template <typename Derived>
Vector<typename Derived::Scalar> mean_confidence(const Eigen::MatrixBase<Derived>& z) {
  detail::require_finite(z, "mean_confidence");
  return softmax(column_mean(z));
}

template <typename Derived>
Vector<typename Derived::Scalar> classwise_certainty(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  if (z.rows() < 2)
    throw std::invalid_argument("classwise_certainty: variance undefined for N < 2");
  detail::require_finite(z, "classwise_certainty");
  const Vector<Scalar> d = column_variance(z);
  Vector<Scalar> c(d.size());
  for (Eigen::Index k = 0; k < d.size(); ++k) c(k) = tanh_complement(d(k));
  return c;
}

template <typename Derived>
Vector<typename Derived::Scalar> box_mean(const Eigen::MatrixBase<Derived>& r) {
  return column_mean(r);
}

// u = (1/J) sum_j [var_j + (mu_j - mu_com)^2],  g = 1 - tanh(u)
template <typename Derived>
typename Derived::Scalar box_uncertainty(const Eigen::MatrixBase<Derived>& r) {
  using Scalar = typename Derived::Scalar;
  if (r.rows() < 2) throw std::invalid_argument("box_certainty: variance undefined for N < 2");
  if (r.cols() != kBoxParams)
    throw std::invalid_argument("box_certainty: expected 4 box parameters");
  detail::require_finite(r, "box_certainty");
  const Vector<Scalar> mu = column_mean(r);
  const Vector<Scalar> var = column_variance(r);
  const double j = static_cast<double>(r.cols());
  Scalar mu_com(0.0);
  for (Eigen::Index c = 0; c < r.cols(); ++c) mu_com += mu(c);
  mu_com = mu_com / j;
  Scalar u(0.0);
  for (Eigen::Index c = 0; c < r.cols(); ++c) {
    const Scalar dev = mu(c) - mu_com;
    u += var(c) + dev * dev;
  }
  return u / j;
}

template <typename Derived>
typename Derived::Scalar box_certainty(const Eigen::MatrixBase<Derived>& r) {
  return tanh_complement(box_uncertainty(r));
}

template <typename Scalar>
UncertaintySummary<Scalar> summarize(const McSamples<Scalar>& mc) {
  return {mean_confidence(mc.logits), classwise_certainty(mc.logits), box_mean(mc.boxes),
          box_certainty(mc.boxes)};
}

}  // namespace detcal

#endif  // DETCAL_UNCERTAINTY_HPP_
