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

#ifndef DETCAL_AUTODIFF_HPP_
#define DETCAL_AUTODIFF_HPP_

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace detcal::ad {

class Tape;

// Scalar node handle. A Value either lives on a tape (index >= 0) or is a
// constant (tape == nullptr). Mixed constant/tape arithmetic records onto
// the operand's tape; constant/constant arithmetic records nothing.
class Value {
 public:
  Value() = default;
  Value(double v) : val_(v) {}  // NOLINT: implicit constants keep Eigen happy

  double value() const { return val_; }
  Tape* tape() const { return tape_; }
  std::int32_t index() const { return idx_; }
  bool is_constant() const { return tape_ == nullptr; }

  // Adjoint accumulated by the last backward pass (0 for constants).
  double grad() const;

  Value& operator+=(const Value& o);
  Value& operator-=(const Value& o);
  Value& operator*=(const Value& o);
  Value& operator/=(const Value& o);

 private:
  friend class Tape;
  Value(double v, Tape* t, std::int32_t i) : val_(v), tape_(t), idx_(i) {}

  double val_ = 0.0;
  Tape* tape_ = nullptr;
  std::int32_t idx_ = -1;
};

// Node arena. Each node stores its forward value and the local partial
// derivative towards each parent; construction order is a topological order.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Creates a leaf node (a parameter or an input we want gradients for).
  Value variable(double v);

  // Records a node with the given parents and local partials.
  Value record(double v, std::span<const Value> parents, std::span<const double> partials);
  Value record1(double v, const Value& a, double da);
  Value record2(double v, const Value& a, double da, const Value& b, double db);

  // sum_i w[i] * x[i]; constant operands contribute no edges.
  Value dot(std::span<const Value> w, std::span<const Value> x);
  // sum_i w[i] * x[i] with constant x.
  Value dot(std::span<const Value> w, std::span<const double> x);
  // sum_i w[i] * x[i] * scale[i] with constant scale (masked inputs).
  Value dot(std::span<const Value> w, std::span<const Value> x, std::span<const double> scale);

  std::size_t size() const { return values_.size(); }
  std::size_t edge_count() const { return parents_.size(); }

  double value(std::int32_t i) const { return values_[i]; }
  double grad(std::int32_t i) const { return grads_[i]; }

  // Reverse sweep from root; adjoints accumulate until zero_grad().
  void backward(const Value& root);
  void zero_grad();
  void clear();

 private:
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<std::size_t> offsets_;  // size() + 1 entries
  std::vector<std::int32_t> parents_;
  std::vector<double> partials_;
  std::vector<double> sweep_;  // adjoints of the current sweep
};

void backward(const Value& root);

// Eigen-shaped roots are accepted but must be 1x1.
template <typename Derived>
void backward(const Eigen::MatrixBase<Derived>& root);

Value operator+(const Value& a, const Value& b);
Value operator-(const Value& a, const Value& b);
Value operator*(const Value& a, const Value& b);
Value operator/(const Value& a, const Value& b);
Value operator-(const Value& a);
inline Value operator+(const Value& a) { return a; }

Value exp(const Value& x);
Value log(const Value& x);
Value tanh(const Value& x);
Value tanh_complement(const Value& x);  // 1 - tanh(x) without cancellation
Value abs(const Value& x);
Value max(const Value& a, const Value& b);
Value min(const Value& a, const Value& b);
Value powi(const Value& x, int n);
Value sigmoid(const Value& x);
Value relu(const Value& x);

// Comparisons look at payloads only.
inline bool operator<(const Value& a, const Value& b) { return a.value() < b.value(); }
inline bool operator>(const Value& a, const Value& b) { return a.value() > b.value(); }
inline bool operator<=(const Value& a, const Value& b) { return a.value() <= b.value(); }
inline bool operator>=(const Value& a, const Value& b) { return a.value() >= b.value(); }
inline bool operator==(const Value& a, const Value& b) { return a.value() == b.value(); }
inline bool operator!=(const Value& a, const Value& b) { return a.value() != b.value(); }

inline bool isfinite(const Value& x) { return std::isfinite(x.value()); }

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

// Central-difference check of f at params. f builds its expression on the
// tape it receives from leaves it is handed.
using ExpressionBuilder = std::function<Value(Tape&, std::span<const Value>)>;
GradCheckReport grad_check(const ExpressionBuilder& f, std::span<const double> params,
                           double h = 1e-5);

// |ad - fd| / max(1e-8, |ad| + |fd|)
double relative_error(double analytic, double numeric);

template <typename Derived>
void backward(const Eigen::MatrixBase<Derived>& root) {
  if (root.size() != 1) throw std::invalid_argument("backward: root must be a scalar");
  backward(Value(root(0, 0)));
}

}  // namespace detcal::ad

// Scalar-generic helpers; overloads for double live here so templated code
// can call them unqualified.
namespace detcal {

inline double value_of(double x) { return x; }
inline double value_of(const ad::Value& x) { return x.value(); }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double tanh_complement(double x) {
  return x > 0.0 ? 2.0 / (1.0 + std::exp(2.0 * x)) : 1.0 - std::tanh(x);
}

using ad::relu;
using ad::sigmoid;
using ad::tanh_complement;

// sum_i w[i] * x[i]
inline double dot(std::span<const double> w, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
  return s;
}
// sum_i w[i] * x[i] * scale[i]
inline double dot(std::span<const double> w, std::span<const double> x,
                  std::span<const double> scale) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * (x[i] * scale[i]);
  return s;
}
ad::Value dot(std::span<const ad::Value> w, std::span<const ad::Value> x);
ad::Value dot(std::span<const ad::Value> w, std::span<const double> x);
ad::Value dot(std::span<const ad::Value> w, std::span<const ad::Value> x,
              std::span<const double> scale);

}  // namespace detcal

namespace Eigen {

template <>
struct NumTraits<detcal::ad::Value> : NumTraits<double> {
  using Real = detcal::ad::Value;
  using NonInteger = detcal::ad::Value;
  using Nested = detcal::ad::Value;
  using Literal = detcal::ad::Value;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 3,
    MulCost = 3
  };
};

template <typename BinaryOp>
struct ScalarBinaryOpTraits<detcal::ad::Value, double, BinaryOp> {
  using ReturnType = detcal::ad::Value;
};
template <typename BinaryOp>
struct ScalarBinaryOpTraits<double, detcal::ad::Value, BinaryOp> {
  using ReturnType = detcal::ad::Value;
};

}  // namespace Eigen

#endif  // DETCAL_AUTODIFF_HPP_
