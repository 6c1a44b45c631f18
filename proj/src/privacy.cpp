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

#include "metaclip/privacy.hpp"

#include <algorithm>
#include <random>
#include <sstream>

namespace metaclip {

Eigen::VectorXd NoisyMean(std::span<const Eigen::VectorXd> clipped, double C,
                          const NoiseConfig& noise, Rng& rng) {
  if (clipped.empty()) throw ConfigError("noisy mean needs at least one input");
  if (!(C > 0.0)) throw DomainError("clip norm must be > 0");
  if (!(noise.sigma >= 0.0) || !std::isfinite(noise.sigma)) {
    throw DomainError("noise multiplier must be finite and >= 0");
  }
  const Eigen::Index d = clipped.front().size();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < clipped.size(); ++i) {
    const auto& g = clipped[i];
    if (g.size() != d) throw ConfigError("noisy mean inputs differ in length");
    const double norm = g.norm();
    if (norm > C + kClipSlack) {
      std::ostringstream msg;
      msg << "noisy mean input " << i << " has norm " << norm
          << " above clip bound " << C;
      throw ContractError(msg.str());
    }
    sum += g;
  }
  if (noise.sigma > 0.0) {
    const double scale = noise.sigma * C;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index j = 0; j < d; ++j) sum(j) += scale * normal(rng);
  }
  return sum / static_cast<double>(clipped.size());
}

namespace {

double LogSumExp(const std::vector<double>& xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

// Integer-order RDP of the Poisson-subsampled Gaussian mechanism.
double SubsampledIntegerRdp(double sigma, double q, int order) {
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(order) + 1);
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const double m = order;
  for (int k = 0; k <= order; ++k) {
    const double log_binom = std::lgamma(m + 1) - std::lgamma(k + 1.0) -
                             std::lgamma(m - k + 1);
    terms.push_back(log_binom + (m - k) * log_1mq + k * log_q +
                    (double(k) * k - k) / (2.0 * sigma * sigma));
  }
  return std::max(0.0, LogSumExp(terms) / (m - 1.0));
}

void CheckOrderGrid(const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("order grid must be nonempty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 1.0) || !std::isfinite(grid[i])) {
      throw ConfigError("Renyi orders must be finite and > 1");
    }
    if (i > 0 && !(grid[i] > grid[i - 1])) {
      throw ConfigError("order grid must be strictly increasing");
    }
  }
}

}  // namespace

double RdpGaussian(double sigma, double q, double zeta) {
  if (!(zeta > 1.0) || !std::isfinite(zeta)) {
    throw DomainError("Renyi order must be finite and > 1");
  }
  if (!(q > 0.0 && q <= 1.0)) throw DomainError("sampling rate must be in (0, 1]");
  if (!(sigma >= 0.0) || std::isnan(sigma)) {
    throw DomainError("noise multiplier must be >= 0");
  }
  if (sigma == 0.0) return std::numeric_limits<double>::infinity();
  const double full = zeta / (2.0 * sigma * sigma);
  if (q == 1.0) return full;
  const int order = std::max(2, static_cast<int>(std::ceil(zeta)));
  return std::min(full, SubsampledIntegerRdp(sigma, q, order));
}

std::vector<double> DefaultOrderGrid() {
  return {1.25, 1.5, 2, 3, 4, 6, 8, 16, 32, 64};
}

PrivacyLedger::PrivacyLedger(std::vector<double> order_grid)
    : order_grid_(std::move(order_grid)) {
  CheckOrderGrid(order_grid_);
}

void PrivacyLedger::Record(double sigma, double sampling_rate,
                           std::int64_t steps) {
  if (steps < 1) throw ConfigError("ledger events need steps >= 1");
  if (!(sampling_rate > 0.0 && sampling_rate <= 1.0)) {
    throw DomainError("sampling rate must be in (0, 1]");
  }
  if (!(sigma >= 0.0) || std::isnan(sigma)) {
    throw DomainError("noise multiplier must be >= 0");
  }
  if (!events_.empty() && events_.back().sigma == sigma &&
      events_.back().sampling_rate == sampling_rate) {
    events_.back().steps += steps;
    return;
  }
  events_.push_back({sigma, sampling_rate, steps});
}

std::int64_t PrivacyLedger::total_steps() const {
  std::int64_t n = 0;
  for (const auto& e : events_) n += e.steps;
  return n;
}

double Compose(const PrivacyLedger& ledger, double zeta) {
  double total = 0.0;
  for (const auto& e : ledger.events()) {
    total += static_cast<double>(e.steps) *
             RdpGaussian(e.sigma, e.sampling_rate, zeta);
  }
  return total;
}

EpsilonResult ToEpsDelta(const PrivacyLedger& ledger, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must be in (0, 1)");
  EpsilonResult best;
  if (ledger.empty()) return best;
  best.epsilon = std::numeric_limits<double>::infinity();
  const double log_inv_delta = std::log(1.0 / delta);
  for (double zeta : ledger.order_grid()) {
    const double eps = Compose(ledger, zeta) + log_inv_delta / (zeta - 1.0);
    if (eps < best.epsilon) {
      best.epsilon = eps;
      best.order = zeta;
    }
  }
  return best;
}

CalibrationResult CalibrateSigma(double target_eps, double delta, double q,
                                 std::int64_t steps,
                                 const std::vector<double>& order_grid) {
  if (!(target_eps > 0.0) || !std::isfinite(target_eps)) {
    throw DomainError("target epsilon must be finite and > 0");
  }
  if (steps < 1) throw ConfigError("calibration needs steps >= 1");
  auto eps_at = [&](double sigma) {
    PrivacyLedger ledger(order_grid);
    ledger.Record(sigma, q, steps);
    return ToEpsDelta(ledger, delta);
  };
  const auto at_max = eps_at(kMaxCalibratedSigma);
  if (at_max.epsilon > target_eps) {
    std::ostringstream msg;
    msg << "target epsilon " << target_eps << " is unattainable: even sigma = "
        << kMaxCalibratedSigma << " gives epsilon " << at_max.epsilon
        << " (the log(1/delta) term over the largest order bounds epsilon "
           "from below; extend the order grid or relax the target)";
    throw CalibrationError(msg.str());
  }
  const auto at_min = eps_at(kMinCalibratedSigma);
  if (at_min.epsilon <= target_eps) {
    std::ostringstream msg;
    msg << "target epsilon " << target_eps << " is looser than sigma = "
        << kMinCalibratedSigma << " already achieves (epsilon "
        << at_min.epsilon << "); the calibrated sigma would fall below the "
        << "search range";
    throw CalibrationError(msg.str());
  }
  // Invariant: eps(lo) > target >= eps(hi). Bisect in log-space.
  double lo = kMinCalibratedSigma;
  double hi = kMaxCalibratedSigma;
  for (int it = 0; it < 200 && hi / lo - 1.0 > 1e-12; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (eps_at(mid).epsilon <= target_eps) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return {hi, eps_at(hi)};
}

}  // namespace metaclip
