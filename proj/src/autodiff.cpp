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

#include "detcal/autodiff.hpp"

#include <algorithm>
#include <string>

namespace detcal::ad {
namespace {

Tape* common_tape(const Value& a, const Value& b) {
  Tape* ta = a.tape();
  Tape* tb = b.tape();
  if (ta != nullptr && tb != nullptr && ta != tb) {
    throw std::invalid_argument("autodiff: operands live on different tapes");
  }
  return ta != nullptr ? ta : tb;
}

Value unary(const Value& x, double v, double dx) {
  if (x.is_constant()) return Value(v);
  return x.tape()->record1(v, x, dx);
}

Value binary(const Value& a, const Value& b, double v, double da, double db) {
  Tape* t = common_tape(a, b);
  if (t == nullptr) return Value(v);
  return t->record2(v, a, da, b, db);
}

}  // namespace

double Value::grad() const { return tape_ == nullptr ? 0.0 : tape_->grad(idx_); }

Value& Value::operator+=(const Value& o) { return *this = *this + o; }
Value& Value::operator-=(const Value& o) { return *this = *this - o; }
Value& Value::operator*=(const Value& o) { return *this = *this * o; }
Value& Value::operator/=(const Value& o) { return *this = *this / o; }

Tape::Tape() { offsets_.push_back(0); }

Value Tape::variable(double v) {
  values_.push_back(v);
  grads_.push_back(0.0);
  offsets_.push_back(parents_.size());
  return Value(v, this, static_cast<std::int32_t>(values_.size() - 1));
}

Value Tape::record(double v, std::span<const Value> parents, std::span<const double> partials) {
  for (std::size_t i = 0; i < parents.size(); ++i) {
    const Value& p = parents[i];
    if (p.is_constant()) continue;
    if (p.tape() != this) throw std::invalid_argument("autodiff: operand from another tape");
    parents_.push_back(p.index());
    partials_.push_back(partials[i]);
  }
  values_.push_back(v);
  grads_.push_back(0.0);
  offsets_.push_back(parents_.size());
  return Value(v, this, static_cast<std::int32_t>(values_.size() - 1));
}

Value Tape::record1(double v, const Value& a, double da) {
  const Value p[1] = {a};
  const double d[1] = {da};
  return record(v, p, d);
}

Value Tape::record2(double v, const Value& a, double da, const Value& b, double db) {
  const Value p[2] = {a, b};
  const double d[2] = {da, db};
  return record(v, p, d);
}

Value Tape::dot(std::span<const Value> w, std::span<const Value> x) { return dot(w, x, {}); }

Value Tape::dot(std::span<const Value> w, std::span<const Value> x, std::span<const double> scale) {
  if (w.size() != x.size() || (!scale.empty() && scale.size() != w.size())) {
    throw std::invalid_argument("dot: length mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double k = scale.empty() ? 1.0 : scale[i];
    s += w[i].value() * (x[i].value() * k);
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double k = scale.empty() ? 1.0 : scale[i];
    if (k == 0.0) continue;
    if (!w[i].is_constant()) {
      if (w[i].tape() != this) throw std::invalid_argument("autodiff: operand from another tape");
      parents_.push_back(w[i].index());
      partials_.push_back(x[i].value() * k);
    }
    if (!x[i].is_constant()) {
      if (x[i].tape() != this) throw std::invalid_argument("autodiff: operand from another tape");
      parents_.push_back(x[i].index());
      partials_.push_back(w[i].value() * k);
    }
  }
  values_.push_back(s);
  grads_.push_back(0.0);
  offsets_.push_back(parents_.size());
  return Value(s, this, static_cast<std::int32_t>(values_.size() - 1));
}

Value Tape::dot(std::span<const Value> w, std::span<const double> x) {
  if (w.size() != x.size()) throw std::invalid_argument("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    s += w[i].value() * x[i];
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i].is_constant()) continue;
    if (w[i].tape() != this) throw std::invalid_argument("autodiff: operand from another tape");
    parents_.push_back(w[i].index());
    partials_.push_back(x[i]);
  }
  values_.push_back(s);
  grads_.push_back(0.0);
  offsets_.push_back(parents_.size());
  return Value(s, this, static_cast<std::int32_t>(values_.size() - 1));
}

void Tape::backward(const Value& root) {
  if (root.tape() != this) throw std::invalid_argument("backward: root is not on this tape");
  const std::size_t n = static_cast<std::size_t>(root.index()) + 1;
  sweep_.assign(n, 0.0);
  sweep_[root.index()] = 1.0;
  for (std::int32_t i = root.index(); i >= 0; --i) {
    const double g = sweep_[i];
    if (g == 0.0) continue;
    grads_[i] += g;
    for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e) {
      sweep_[parents_[e]] += g * partials_[e];
    }
  }
}

void Tape::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

void Tape::clear() {
  values_.clear();
  grads_.clear();
  offsets_.assign(1, 0);
  parents_.clear();
  partials_.clear();
  sweep_.clear();
}

void backward(const Value& root) {
  if (root.is_constant())
    throw std::invalid_argument("backward: root is a constant, not a tape node");
  root.tape()->backward(root);
}

Value operator+(const Value& a, const Value& b) {
  return binary(a, b, a.value() + b.value(), 1.0, 1.0);
}

Value operator-(const Value& a, const Value& b) {
  return binary(a, b, a.value() - b.value(), 1.0, -1.0);
}

Value operator*(const Value& a, const Value& b) {
  return binary(a, b, a.value() * b.value(), b.value(), a.value());
}

Value operator/(const Value& a, const Value& b) {
  if (b.value() == 0.0) throw std::domain_error("autodiff: division by zero");
  const double inv = 1.0 / b.value();
  const double q = a.value() * inv;
  return binary(a, b, q, inv, -q * inv);
}

Value operator-(const Value& a) { return unary(a, -a.value(), -1.0); }

Value exp(const Value& x) {
  const double e = std::exp(x.value());
  return unary(x, e, e);
}

Value log(const Value& x) {
  if (!(x.value() > 0.0)) {
    throw std::domain_error("autodiff: log of non-positive value " + std::to_string(x.value()));
  }
  return unary(x, std::log(x.value()), 1.0 / x.value());
}

Value tanh(const Value& x) {
  const double t = std::tanh(x.value());
  return unary(x, t, 1.0 - t * t);
}

Value tanh_complement(const Value& x) {
  const double c = detcal::tanh_complement(x.value());
  return unary(x, c, -c * (2.0 - c));
}

Value abs(const Value& x) {
  const double v = x.value();
  const double d = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  return unary(x, std::abs(v), d);
}

Value max(const Value& a, const Value& b) {
  if (a.value() > b.value()) return binary(a, b, a.value(), 1.0, 0.0);
  if (b.value() > a.value()) return binary(a, b, b.value(), 0.0, 1.0);
  return binary(a, b, a.value(), 0.5, 0.5);
}

Value min(const Value& a, const Value& b) {
  if (a.value() < b.value()) return binary(a, b, a.value(), 1.0, 0.0);
  if (b.value() < a.value()) return binary(a, b, b.value(), 0.0, 1.0);
  return binary(a, b, a.value(), 0.5, 0.5);
}

Value powi(const Value& x, int n) {
  const double v = x.value();
  if (n < 0 && v == 0.0) throw std::domain_error("autodiff: negative power of zero");
  if (n == 0) return Value(1.0);
  const double pn1 = std::pow(v, n - 1);
  return unary(x, pn1 * v, n * pn1);
}

Value sigmoid(const Value& x) {
  const double s = 1.0 / (1.0 + std::exp(-x.value()));
  return unary(x, s, s * (1.0 - s));
}

Value relu(const Value& x) {
  return x.value() > 0.0 ? unary(x, x.value(), 1.0) : unary(x, 0.0, 0.0);
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckReport grad_check(const ExpressionBuilder& f, std::span<const double> params, double h) {
  GradCheckReport report;
  {
    Tape tape;
    std::vector<Value> leaves;
    leaves.reserve(params.size());
    for (double p : params) leaves.push_back(tape.variable(p));
    const Value out = f(tape, leaves);
    if (!out.is_constant()) tape.backward(out);
    for (const Value& l : leaves) report.analytic.push_back(l.grad());
  }
  std::vector<double> probe(params.begin(), params.end());
  auto eval = [&]() {
    std::vector<Value> leaves(probe.begin(), probe.end());
    Tape scratch;
    return f(scratch, leaves).value();
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = eval();
    probe[i] = saved - h;
    const double down = eval();
    probe[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    report.numeric.push_back(fd);
    const double err = relative_error(report.analytic[i], fd);
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
    }
  }
  return report;
}

}  // namespace detcal::ad

namespace detcal {

ad::Value dot(std::span<const ad::Value> w, std::span<const ad::Value> x) {
  for (const auto* span : {&w, &x}) {
    for (const ad::Value& v : *span) {
      if (!v.is_constant()) return v.tape()->dot(w, x);
    }
  }
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i].value() * x[i].value();
  return ad::Value(s);
}

ad::Value dot(std::span<const ad::Value> w, std::span<const ad::Value> x,
              std::span<const double> scale) {
  for (const auto* span : {&w, &x}) {
    for (const ad::Value& v : *span) {
      if (!v.is_constant()) return v.tape()->dot(w, x, scale);
    }
  }
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i].value() * (x[i].value() * scale[i]);
  return ad::Value(s);
}

ad::Value dot(std::span<const ad::Value> w, std::span<const double> x) {
  for (const ad::Value& v : w) {
    if (!v.is_constant()) return v.tape()->dot(w, x);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i].value() * x[i];
  return ad::Value(s);
}

}  // namespace detcal
