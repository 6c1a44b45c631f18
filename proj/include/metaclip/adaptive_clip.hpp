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

// Adaptive clipping norm: median initialisation and per-iteration updates.

#ifndef METACLIP_ADAPTIVE_CLIP_HPP_
#define METACLIP_ADAPTIVE_CLIP_HPP_

#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace metaclip {

enum class ClipMode {
  // Differentiate the query loss through the clip scale factor of the
  // inner step (first order, noise held fixed). The default.
  kGradThroughClip,
  // Move C toward the median of recently observed raw gradient norms.
  kQuantileTrack,
  // Add eta_C times the norm of the mean meta-batch parameter delta.
  // Follows the Reptile/Meta-SGD pseudocode read with a vector norm; C only
  // grows, so it is kept for ablation only.
  kLiteralDelta,
};

std::string ToString(ClipMode mode);
ClipMode ParseClipMode(const std::string& name);

struct ClipState {
  static constexpr std::size_t kDefaultHistory = 256;

  double C = 1.0;
  double C_min = 1e-3;
  double C_max = 1e3;
  ClipMode mode = ClipMode::kGradThroughClip;
  double eta_C = 1e-3;
  // Ring buffer of recent raw per-example gradient norms.
  std::deque<double> history;
  std::size_t history_capacity = kDefaultHistory;

  void Validate() const;
  void Observe(std::span<const double> norms);
};

// Median with the even-length convention (mean of the two middle values).
double Median(std::vector<double> values);

// Median of the first-epoch norms, clamped to [C_min, C_max].
double InitClipNorm(std::span<const double> first_epoch_grad_norms,
                    double C_min, double C_max);

// d/dC of (1/n) sum_i clip(g_i, C): (1/n) sum over ||g_i|| > C of
// g_i / ||g_i||.
Eigen::VectorXd ClipSensitivityWrtC(std::span<const Eigen::VectorXd> raw_grads,
                                    double C);

// Signals gathered over one meta-batch. query_grads[i] and dtheta_dC[i]
// belong to task i; dtheta_dC is the clip-sensitivity of the aggregated
// inner gradient, already multiplied elementwise by any per-parameter
// learning rate (then inner_lr is 1).
struct ClipUpdateContext {
  std::vector<Eigen::VectorXd> query_grads;
  std::vector<Eigen::VectorXd> dtheta_dC;
  double inner_lr = 0.0;
  std::vector<double> recent_norms;
  Eigen::VectorXd mean_param_delta;
};

// Mean over tasks of <query_grad, -inner_lr * dtheta_dC>: the derivative of
// the mean query loss w.r.t. C through the inner update.
double ClipHypergradient(const ClipUpdateContext& context);

// Applies the state's update rule, then clamps to [C_min, C_max]. A
// non-finite update, or an empty norm list in quantile mode, leaves C as is.
ClipState UpdateClipNorm(const ClipState& state,
                         const ClipUpdateContext& context);

}  // namespace metaclip

#endif  // METACLIP_ADAPTIVE_CLIP_HPP_
