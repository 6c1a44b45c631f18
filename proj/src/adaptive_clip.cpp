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

#include "metaclip/adaptive_clip.hpp"

#include <algorithm>
#include <cmath>

#include "metaclip/errors.hpp"

namespace metaclip {

std::string ToString(ClipMode mode) {
  switch (mode) {
    case ClipMode::kGradThroughClip:
      return "grad_through_clip";
    case ClipMode::kQuantileTrack:
      return "quantile_track";
    case ClipMode::kLiteralDelta:
      return "literal_delta";
  }
  return "unknown";
}

ClipMode ParseClipMode(const std::string& name) {
  if (name == "grad_through_clip") return ClipMode::kGradThroughClip;
  if (name == "quantile_track") return ClipMode::kQuantileTrack;
  if (name == "literal_delta") return ClipMode::kLiteralDelta;
  throw ConfigError("unknown clip_mode '" + name +
                    "' (expected grad_through_clip, quantile_track or "
                    "literal_delta)");
}

void ClipState::Validate() const {
  if (!(C_min > 0.0) || !(C_max >= C_min) || !std::isfinite(C_max)) {
    throw ConfigError("clip bounds need 0 < C_min <= C_max < inf");
  }
  if (!(C >= C_min && C <= C_max)) {
    throw ConfigError("clip norm outside [C_min, C_max]");
  }
  if (!(eta_C >= 0.0) || !std::isfinite(eta_C)) {
    throw ConfigError("eta_C must be finite and >= 0");
  }
  if (history_capacity < 1) throw ConfigError("clip history needs capacity >= 1");
}

void ClipState::Observe(std::span<const double> norms) {
  for (double n : norms) {
    history.push_back(n);
    if (history.size() > history_capacity) history.pop_front();
  }
}

double Median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty list");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

double InitClipNorm(std::span<const double> first_epoch_grad_norms,
                    double C_min, double C_max) {
  if (first_epoch_grad_norms.empty()) {
    throw ConfigError("clip norm initialisation needs at least one norm");
  }
  for (double n : first_epoch_grad_norms) {
    if (!std::isfinite(n) || n < 0.0) {
      throw NumericError("clip norm initialisation saw a non-finite norm");
    }
  }
  const double m = Median({first_epoch_grad_norms.begin(),
                           first_epoch_grad_norms.end()});
  return std::clamp(m, C_min, C_max);
}

Eigen::VectorXd ClipSensitivityWrtC(std::span<const Eigen::VectorXd> raw_grads,
                                    double C) {
  if (!(C > 0.0)) throw DomainError("clip norm must be > 0");
  if (raw_grads.empty()) return {};
  Eigen::VectorXd out = Eigen::VectorXd::Zero(raw_grads.front().size());
  for (const auto& g : raw_grads) {
    const double norm = g.norm();
    if (norm > C) out += g / norm;
  }
  return out / static_cast<double>(raw_grads.size());
}

double ClipHypergradient(const ClipUpdateContext& context) {
  const std::size_t n = context.query_grads.size();
  if (n == 0 || context.dtheta_dC.size() != n) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (context.dtheta_dC[i].size() == 0) continue;
    acc += context.query_grads[i].dot(-context.inner_lr * context.dtheta_dC[i]);
  }
  return acc / static_cast<double>(n);
}

ClipState UpdateClipNorm(const ClipState& state,
                         const ClipUpdateContext& context) {
  ClipState next = state;
  double proposed = state.C;
  switch (state.mode) {
    case ClipMode::kGradThroughClip:
      proposed = state.C - state.eta_C * ClipHypergradient(context);
      break;
    case ClipMode::kQuantileTrack:
      if (!context.recent_norms.empty()) {
        proposed = state.C + state.eta_C * (Median(context.recent_norms) - state.C);
      }
      break;
    case ClipMode::kLiteralDelta:
      if (context.mean_param_delta.size() > 0) {
        proposed = state.C + state.eta_C * context.mean_param_delta.norm();
      }
      break;
  }
  if (std::isfinite(proposed)) {
    next.C = std::clamp(proposed, state.C_min, state.C_max);
  }
  next.Observe(context.recent_norms);
  return next;
}

}  // namespace metaclip
