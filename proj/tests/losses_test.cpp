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


#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "detcal/losses.hpp"
#include "generators.hpp"
#include "oracles.hpp"

namespace detcal {
namespace {

using testing::Gen;
using Batch = std::vector<PositiveLocation<double>>;

// Two passes with equal column means, so the mean confidence is uniform and
// the certainty of column k is exactly c[k].
Eigen::MatrixXd logits_with_certainty(const std::vector<double>& c) {
  Eigen::MatrixXd z(2, static_cast<Eigen::Index>(c.size()));
  for (std::size_t k = 0; k < c.size(); ++k) {
    const double a = std::sqrt(std::atanh(1.0 - c[k]));
    z(0, static_cast<Eigen::Index>(k)) = 1.0 + a;
    z(1, static_cast<Eigen::Index>(k)) = 1.0 - a;
  }
  return z;
}

// Box samples with mean (0.5, 0.5, 0.5, 0.5) and certainty g.
Eigen::MatrixXd boxes_with_certainty(double g) {
  const double a = 2.0 * std::sqrt(std::atanh(1.0 - g));
  Eigen::MatrixXd r = Eigen::MatrixXd::Constant(2, 4, 0.5);
  r(0, 0) += a;
  r(1, 0) -= a;
  return r;
}

// Ground truth with horizontal overlap giving the requested IoU against the
// centered half-size box.
NormBox gt_for_iou(double target) {
  const double o = 2.0 * 0.5 * target / (1.0 + target);
  return {0.5 + (0.5 - o), 0.5, 0.5, 0.5};
}

PositiveLocation<double> location(int sample, Eigen::MatrixXd z, Eigen::MatrixXd r, int cls,
                                  NormBox gt) {
  PositiveLocation<double> p;
  p.sample = sample;
  p.mc = {std::move(z), std::move(r)};
  p.gt_class = cls;
  p.gt_box = gt;
  return p;
}

TEST(Fuse, Examples) {
  const Eigen::Vector2d s(0.3, 0.7);
  EXPECT_EQ(fuse(s, s), s);
  const Eigen::Vector2d v = fuse(Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 1));
  EXPECT_EQ(v, Eigen::Vector2d(1.0, 0.5));
  EXPECT_THROW(fuse(Eigen::Vector2d(1, 0), Eigen::Vector3d(1, 1, 1)), std::invalid_argument);
}

TEST(Fuse, ElementwiseOracle) {
  Gen g(1);
  for (int t = 0; t < 100; ++t) {
    const Eigen::VectorXd a = Eigen::VectorXd::Random(5), b = Eigen::VectorXd::Random(5);
    const Eigen::VectorXd v = fuse(a, b);
    for (int k = 0; k < 5; ++k) EXPECT_EQ(v(k), (a(k) + b(k)) / 2.0);
  }
}

TEST(MccLoss, HandCase) {
  const Batch batch{
      location(0, logits_with_certainty({0.9, 0.1}), boxes_with_certainty(1.0), 0, gt_for_iou(1)),
      location(1, logits_with_certainty({0.3, 0.7}), boxes_with_certainty(1.0), 1, gt_for_iou(1))};
  EXPECT_NEAR(mcc_loss<double>(batch), 0.05, 1e-12);
}

TEST(MccLoss, CertainUniformPredictions) {
  // Identical passes of equal logits: s = [0.5, 0.5] and c = [1, 1].
  Eigen::MatrixXd z0(3, 2), z1(3, 2);
  z0.rowwise() = Eigen::RowVector2d(0.0, 0.0);
  z1 = z0;
  const Batch batch{location(0, z0, boxes_with_certainty(1.0), 0, gt_for_iou(1)),
                    location(0, z1, boxes_with_certainty(1.0), 1, gt_for_iou(1))};
  // v = [0.75, 0.75] at both against class frequencies [0.5, 0.5].
  EXPECT_NEAR(mcc_loss<double>(batch), 0.25, 1e-15);
}

TEST(MccLoss, EmptyBatchThrows) {
  try {
    mcc_loss<double>({});
    FAIL();
  } catch (const EmptyBatchError& e) {
    EXPECT_STREQ(e.what(), "no positive locations");
  }
  EXPECT_THROW(lc_loss<double>({}), EmptyBatchError);
  EXPECT_THROW(mccl_aux<double>({}, 1.0), EmptyBatchError);
}

TEST(MccLoss, RejectsBadClassIndex) {
  Gen g(2);
  Batch batch = g.positives(1, 1, 3, 3);
  batch[0].gt_class = 3;
  EXPECT_THROW(mcc_loss<double>(batch), std::invalid_argument);
}

TEST(MccLoss, PermutationInvariantAndBounded) {
  Gen g(3);
  for (int t = 0; t < 200; ++t) {
    Batch batch = g.positives(g.integer(1, 4), 6, g.integer(2, 6), g.integer(2, 5));
    const double base = mcc_loss<double>(batch);
    EXPECT_GE(base, 0.0);
    EXPECT_LE(base, 1.0);
    std::shuffle(batch.begin(), batch.end(), g.rng());
    EXPECT_NEAR(mcc_loss<double>(batch), base, 1e-14);
  }
}

TEST(MccLoss, PenalizesOverconfidentClass) {
  // Raising the mean confidence of class 0 above its frequency raises the
  // class-0 term, and with it the loss.
  Eigen::MatrixXd z(2, 2);
  z << 1.0, 0.0, 1.2, 0.0;
  const Batch low{location(0, z, boxes_with_certainty(1.0), 1, gt_for_iou(1)),
                  location(0, z, boxes_with_certainty(1.0), 0, gt_for_iou(1))};
  Batch high = low;
  high[0].mc.logits.col(0).array() += 1.0;
  EXPECT_GT(mcc_loss<double>(high), mcc_loss<double>(low));
}

TEST(LcLoss, HandCase) {
  const Eigen::MatrixXd z = logits_with_certainty({0.5, 0.5});
  const Batch batch{location(0, z, boxes_with_certainty(0.9), 0, gt_for_iou(0.6)),
                    location(0, z, boxes_with_certainty(0.8), 0, gt_for_iou(0.8))};
  EXPECT_NEAR(lc_loss<double>(batch), 0.15, 1e-12);
}

TEST(LcLoss, ZeroWhenIouMatchesCertainty) {
  const Eigen::MatrixXd z = logits_with_certainty({0.5, 0.5});
  const Batch batch{location(0, z, boxes_with_certainty(0.7), 0, gt_for_iou(0.7)),
                    location(3, z, boxes_with_certainty(0.4), 1, gt_for_iou(0.4))};
  EXPECT_NEAR(lc_loss<double>(batch), 0.0, 1e-12);
}

TEST(LcLoss, PerSampleMeanThenMeanOverSamples) {
  const Eigen::MatrixXd z = logits_with_certainty({0.5, 0.5});
  // sample 0: one gap of 0.3; sample 1: three gaps of 0.1
  Batch batch{location(0, z, boxes_with_certainty(0.9), 0, gt_for_iou(0.6))};
  for (int i = 0; i < 3; ++i) {
    batch.push_back(location(1, z, boxes_with_certainty(0.8), 0, gt_for_iou(0.7)));
  }
  EXPECT_NEAR(lc_loss<double>(batch), (0.3 + 0.1) / 2.0, 1e-12);
  // duplicating the locations of a sample leaves its inner mean alone
  Batch doubled = batch;
  doubled.push_back(batch[0]);
  EXPECT_NEAR(lc_loss<double>(doubled), lc_loss<double>(batch), 1e-12);
}

TEST(LcLoss, PermutationInvariantAndBounded) {
  Gen g(4);
  for (int t = 0; t < 200; ++t) {
    Batch batch = g.positives(g.integer(1, 4), 6, g.integer(2, 6), 3);
    const double base = lc_loss<double>(batch);
    EXPECT_GE(base, 0.0);
    EXPECT_LE(base, 1.0);
    std::shuffle(batch.begin(), batch.end(), g.rng());
    EXPECT_NEAR(lc_loss<double>(batch), base, 1e-14);
  }
}

TEST(MccLoss, UsesGlobalPositiveCount) {
  // Unequal positives per sample: the class means pool all locations.
  Gen g(5);
  for (int t = 0; t < 100; ++t) {
    const Batch batch = g.positives(3, 5, 3, 3);
    EXPECT_NEAR(mcc_loss<double>(batch), oracle::mcc_loss(batch), 1e-12);
    EXPECT_NEAR(lc_loss<double>(batch), oracle::lc_loss(batch), 1e-12);
  }
}

TEST(McclAux, Composition) {
  Gen g(6);
  const Batch batch = g.positives(2, 3, 3, 3);
  const auto zero = mccl_aux<double>(batch, 0.0);
  EXPECT_EQ(zero.total, zero.l_mcc);
  for (double beta : {0.01, 1.0, 2.5}) {
    const auto out = mccl_aux<double>(batch, beta);
    EXPECT_EQ(out.total, out.l_mcc + beta * out.l_lc);
    EXPECT_EQ(out.beta, beta);
  }
  EXPECT_THROW(mccl_aux<double>(batch, -0.1), std::invalid_argument);
}

TEST(McclAux, HandComponentsAddUp) {
  const Batch mcc{
      location(0, logits_with_certainty({0.9, 0.1}), boxes_with_certainty(1.0), 0, gt_for_iou(1)),
      location(1, logits_with_certainty({0.3, 0.7}), boxes_with_certainty(1.0), 1, gt_for_iou(1))};
  const Eigen::MatrixXd z = logits_with_certainty({0.5, 0.5});
  const Batch lc{location(0, z, boxes_with_certainty(0.9), 0, gt_for_iou(0.6)),
                 location(0, z, boxes_with_certainty(0.8), 0, gt_for_iou(0.8))};
  const double total = mcc_loss<double>(mcc) + 1.0 * lc_loss<double>(lc);
  EXPECT_NEAR(total, 0.20, 1e-12);
}

TEST(McclAux, GradientMatchesFiniteDifferences) {
  Gen g(7);
  int checked = 0;
  for (int t = 0; t < 30; ++t) {
    const Batch batch = g.positives(g.integer(1, 3), 3, 3, 3);
    if (oracle::aux_kink_margin(batch) < 1e-4) continue;
    const auto params = oracle::flatten_inputs(batch);
    const auto report = ad::grad_check(
        [&](ad::Tape&, std::span<const ad::Value> x) {
          const auto lifted = oracle::lift(batch, x);
          return mccl_aux<ad::Value>(lifted, 0.7).total;
        },
        params);
    EXPECT_LT(report.max_rel_error, 1e-5);
    ++checked;
  }
  EXPECT_GT(checked, 20);
}

}  // namespace
}  // namespace detcal
