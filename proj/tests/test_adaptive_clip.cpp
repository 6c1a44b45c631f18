/*
 * Copyright 2026 The Metaclip Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include "metaclip/adaptive_clip.hpp"
#include "metaclip/errors.hpp"
#include "metaclip/privacy.hpp"
#include "test_util.hpp"

namespace metaclip {
namespace {

using testing::RandomVector;

double SortMedian(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

TEST(InitClipNorm, MedianConventions) {
  const std::vector<double> odd = {5, 1, 4, 2, 3};
  const std::vector<double> even = {4, 1, 3, 2};
  const std::vector<double> one = {5};
  EXPECT_EQ(InitClipNorm(odd, 1e-3, 1e3), 3.0);
  EXPECT_EQ(InitClipNorm(even, 1e-3, 1e3), 2.5);
  EXPECT_EQ(InitClipNorm(one, 1e-3, 1e3), 5.0);
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(1 + rng() % 40);
    for (auto& x : v) x = std::abs(std::normal_distribution<double>(0, 3)(rng));
    EXPECT_EQ(InitClipNorm(v, 0, 1e9), SortMedian(v));
  }
}

TEST(InitClipNorm, ClampsAndRejects) {
  const std::vector<double> big = {1e6};
  EXPECT_EQ(InitClipNorm(big, 1e-3, 1e3), 1e3);
  EXPECT_THROW(InitClipNorm({}, 1e-3, 1e3), ConfigError);
  const std::vector<double> bad = {1.0, std::nan("")};
  EXPECT_THROW(InitClipNorm(bad, 1e-3, 1e3), NumericError);
}

TEST(InitClipNorm, ScaleConsistency) {
  Rng rng(2);
  for (double s : {0.25, 2.0, 1024.0}) {
    std::vector<double> v(1 + rng() % 20);
    for (auto& x : v) x = std::abs(std::normal_distribution<double>(0, 1)(rng));
    std::vector<double> scaled = v;
    for (auto& x : scaled) x *= s;
    EXPECT_EQ(InitClipNorm(scaled, 1e-3 * s, 1e3 * s), s * InitClipNorm(v, 1e-3, 1e3));
  }
  std::uniform_real_distribution<double> sd(0.01, 100.0);
  for (int t = 0; t < 100; ++t) {
    const double s = sd(rng);
    std::vector<double> v(1 + rng() % 20);
    for (auto& x : v) x = std::abs(std::normal_distribution<double>(0, 1)(rng));
    std::vector<double> scaled = v;
    for (auto& x : scaled) x *= s;
    EXPECT_NEAR(InitClipNorm(scaled, 1e-3 * s, 1e3 * s) / (s * InitClipNorm(v, 1e-3, 1e3)),
                1.0, 1e-15);
  }
}

TEST(ClipSensitivity, InactiveAndSingle) {
  std::vector<Eigen::VectorXd> small = {Eigen::Vector2d(0.1, 0.2), Eigen::Vector2d(-0.3, 0)};
  EXPECT_EQ(ClipSensitivityWrtC(small, 1.0), Eigen::VectorXd::Zero(2));
  const Eigen::VectorXd g = Eigen::Vector3d(1, 2, 2);
  std::vector<Eigen::VectorXd> one = {g};
  EXPECT_LE((ClipSensitivityWrtC(one, 1.5) - g / 3).norm(), 1e-15);
}

TEST(ClipSensitivity, MatchesFiniteDifferenceOfNoiselessMean) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    std::vector<Eigen::VectorXd> gs;
    for (int i = 0; i < 6; ++i) gs.push_back(RandomVector(4, rng, 1.0));
    const double C = 1.0 + 0.3 * std::normal_distribution<double>()(rng);
    bool near_kink = false;
    for (const auto& g : gs) near_kink = near_kink || std::abs(g.norm() - C) < 1e-3;
    if (near_kink || C <= 0.1) continue;
    auto mean_at = [&](double c) {
      std::vector<Eigen::VectorXd> clipped;
      for (const auto& g : gs) clipped.push_back(Clip(g, c));
      Rng unused(0);
      return NoisyMean(clipped, c, {0.0}, unused);
    };
    const double h = 1e-6;
    const Eigen::VectorXd fd = (mean_at(C + h) - mean_at(C - h)) / (2 * h);
    EXPECT_LE((fd - ClipSensitivityWrtC(gs, C)).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(UpdateClipNorm, ExamplesPerMode) {
  ClipState s;
  s.C = 1.0;
  s.eta_C = 0.5;
  ClipUpdateContext ctx;
  ctx.inner_lr = 0.1;
  ctx.query_grads = {Eigen::Vector2d(1, 1)};
  ctx.dtheta_dC = {Eigen::Vector2d::Zero()};
  EXPECT_EQ(UpdateClipNorm(s, ctx).C, 1.0);

  s.mode = ClipMode::kQuantileTrack;
  ctx.recent_norms = {2.0, 3.0, 4.0};
  EXPECT_EQ(UpdateClipNorm(s, ctx).C, 2.0);
  ctx.recent_norms.clear();
  EXPECT_EQ(UpdateClipNorm(s, ctx).C, 1.0);
  ctx.recent_norms = {1.0, 1.0, 1.0};
  EXPECT_EQ(UpdateClipNorm(s, ctx).C, 1.0);

  s.mode = ClipMode::kLiteralDelta;
  ctx.mean_param_delta = Eigen::Vector2d(3, 4);
  EXPECT_EQ(UpdateClipNorm(s, ctx).C, 3.5);
}

TEST(UpdateClipNorm, StaysWithinBounds) {
  Rng rng(4);
  for (ClipMode mode : {ClipMode::kGradThroughClip, ClipMode::kQuantileTrack,
                        ClipMode::kLiteralDelta}) {
    ClipState s;
    s.mode = mode;
    s.C_min = 0.5;
    s.C_max = 2.0;
    s.C = 1.0;
    s.eta_C = 0.7;
    std::normal_distribution<double> normal(0, 5);
    for (int t = 0; t < 10000; ++t) {
      ClipUpdateContext ctx;
      ctx.inner_lr = 1.0;
      ctx.query_grads = {RandomVector(3, rng, 5)};
      ctx.dtheta_dC = {RandomVector(3, rng, 5)};
      ctx.recent_norms = {std::abs(normal(rng)), std::abs(normal(rng))};
      ctx.mean_param_delta = RandomVector(3, rng, 0.1);
      s = UpdateClipNorm(s, ctx);
      ASSERT_GE(s.C, s.C_min);
      ASSERT_LE(s.C, s.C_max);
      ASSERT_LE(s.history.size(), s.history_capacity);
    }
  }
}

TEST(UpdateClipNorm, NonFiniteUpdateIsSkipped) {
  ClipState s;
  ClipUpdateContext ctx;
  ctx.inner_lr = 1.0;
  ctx.query_grads = {Eigen::Vector2d(std::nan(""), 0)};
  ctx.dtheta_dC = {Eigen::Vector2d(1, 0)};
  EXPECT_EQ(UpdateClipNorm(s, ctx).C, s.C);
}

// Query loss of a one-step adaptation of a quadratic with clipped support
// gradients; increasing C helps exactly when the update raises C.
TEST(UpdateClipNorm, GradThroughClipFollowsQueryLoss) {
  Rng rng(5);
  int checked = 0;
  for (int t = 0; t < 200; ++t) {
    const int d = 3;
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(d, d);
    const Eigen::VectorXd b = RandomVector(d, rng, 2.0);
    const Eigen::VectorXd theta = RandomVector(d, rng, 2.0);
    std::vector<Eigen::VectorXd> raw;
    for (int i = 0; i < 4; ++i) raw.push_back(A * theta + b + RandomVector(d, rng, 1.0));
    const double C = 0.5;
    const double alpha = 0.3;
    const Eigen::VectorXd qb = b + RandomVector(d, rng, 1.0);
    auto query_loss = [&](double c) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
      for (const auto& g : raw) mean += Clip(g, c);
      mean /= 4.0;
      const Eigen::VectorXd adapted = theta - alpha * mean;
      return 0.5 * adapted.dot(A * adapted) + qb.dot(adapted);
    };
    const double slope = (query_loss(C + 1e-6) - query_loss(C - 1e-6)) / 2e-6;
    if (std::abs(slope) < 1e-6) continue;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (const auto& g : raw) mean += Clip(g, C);
    mean /= 4.0;
    const Eigen::VectorXd adapted = theta - alpha * mean;
    ClipState s;
    s.C = C;
    s.eta_C = 1e-3;
    ClipUpdateContext ctx;
    ctx.inner_lr = alpha;
    ctx.query_grads = {A * adapted + qb};
    ctx.dtheta_dC = {ClipSensitivityWrtC(raw, C)};
    EXPECT_NEAR(ClipHypergradient(ctx), slope, 1e-6);
    const double next = UpdateClipNorm(s, ctx).C;
    if (slope < 0) {
      EXPECT_GT(next, C);
    } else {
      EXPECT_LT(next, C);
    }
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(ClipState, ValidateAndParse) {
  ClipState s;
  EXPECT_NO_THROW(s.Validate());
  s.C = 1e4;
  EXPECT_THROW(s.Validate(), ConfigError);
  EXPECT_EQ(ParseClipMode("quantile_track"), ClipMode::kQuantileTrack);
  EXPECT_EQ(ToString(ClipMode::kLiteralDelta), "literal_delta");
  EXPECT_THROW(ParseClipMode("bogus"), ConfigError);
}

}  // namespace
}  // namespace metaclip
