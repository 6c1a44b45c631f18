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

// Gaussian mechanism primitives and a Renyi-DP accountant.

#ifndef METACLIP_PRIVACY_HPP_
#define METACLIP_PRIVACY_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metaclip/errors.hpp"
#include "metaclip/random.hpp"

namespace metaclip {

// g / max(1, ||g||_2 / C). The result's norm never exceeds C, including
// after rounding, and clipping a clipped vector returns it unchanged.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> Clip(
    const Eigen::MatrixBase<Derived>& g, typename Derived::Scalar C) {
  using Scalar = typename Derived::Scalar;
  if (!(C > Scalar(0))) throw DomainError("clip norm must be > 0");
  if (!g.allFinite()) throw NumericError("cannot clip a non-finite gradient");
  const Scalar norm = g.norm();
  const Scalar factor = std::max(Scalar(1), norm / C);
  if (factor == Scalar(1)) return g;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out = g / factor;
  Scalar f = factor;
  while (out.norm() > C) {
    f = std::nextafter(f, std::numeric_limits<Scalar>::infinity());
    out = g / f;
  }
  return out;
}

struct NoiseConfig {
  double sigma = 0.0;  // noise multiplier, in units of C
};

// Slack allowed on the input norms of NoisyMean.
inline constexpr double kClipSlack = 1e-9;

// (1/n) (sum_i g_i + z) with z ~ N(0, (sigma C)^2 I). Coordinate j of z is
// sigma * C * xi_j where xi_j are consecutive draws of a fresh
// std::normal_distribution<double>(0, 1) on `rng`.
Eigen::VectorXd NoisyMean(std::span<const Eigen::VectorXd> clipped, double C,
                          const NoiseConfig& noise, Rng& rng);

// Renyi divergence of order zeta for the (optionally Poisson-subsampled)
// Gaussian mechanism with sensitivity 1 and noise multiplier sigma.
//   q == 1: zeta / (2 sigma^2).
//   q <  1: min(zeta / (2 sigma^2), A(ceil(zeta))), where A(m) is the
//           integer-order subsampled-Gaussian bound
//           log(sum_k C(m,k) (1-q)^(m-k) q^k exp((k^2 - k) / (2 sigma^2)))
//           / (m - 1). RDP is non-decreasing in the order, so rounding up
//           keeps it an upper bound.
double RdpGaussian(double sigma, double q, double zeta);

struct NoiseEvent {
  double sigma = 0.0;
  double sampling_rate = 1.0;
  std::int64_t steps = 1;

  bool operator==(const NoiseEvent&) const = default;
};

std::vector<double> DefaultOrderGrid();

// Append-only record of noise events. Consecutive events with the same
// (sigma, q) are merged.
class PrivacyLedger {
 public:
  PrivacyLedger() : PrivacyLedger(DefaultOrderGrid()) {}
  explicit PrivacyLedger(std::vector<double> order_grid);

  void Record(double sigma, double sampling_rate, std::int64_t steps = 1);

  const std::vector<NoiseEvent>& events() const { return events_; }
  const std::vector<double>& order_grid() const { return order_grid_; }
  std::int64_t total_steps() const;
  bool empty() const { return events_.empty(); }

 private:
  std::vector<NoiseEvent> events_;
  std::vector<double> order_grid_;
};

// Sum over events of steps * RdpGaussian(sigma, q, zeta).
double Compose(const PrivacyLedger& ledger, double zeta);

struct EpsilonResult {
  double epsilon = 0.0;
  // Minimising Renyi order; NaN for an empty ledger.
  double order = std::numeric_limits<double>::quiet_NaN();
};

// epsilon = min over the grid of Compose(zeta) + log(1/delta) / (zeta - 1).
// An empty ledger (nothing released) costs epsilon = 0.
EpsilonResult ToEpsDelta(const PrivacyLedger& ledger, double delta);

struct CalibrationResult {
  double sigma = 0.0;
  EpsilonResult achieved;
};

inline constexpr double kMinCalibratedSigma = 0.1;
inline constexpr double kMaxCalibratedSigma = 1e4;

// Smallest sigma in [0.1, 1e4] (to bisection precision) whose epsilon is
// <= target_eps. Throws CalibrationError if the target lies outside what
// that sigma range can reach.
CalibrationResult CalibrateSigma(double target_eps, double delta, double q,
                                 std::int64_t steps,
                                 const std::vector<double>& order_grid =
                                     DefaultOrderGrid());

}  // namespace metaclip

#endif  // METACLIP_PRIVACY_HPP_
