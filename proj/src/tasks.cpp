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

#include "metaclip/tasks.hpp"

#include <numbers>
#include <random>

namespace metaclip {

SinusoidTaskParams SinusoidDistribution::SampleParams(Rng& rng) {
  std::uniform_real_distribution<double> amp(kMinAmplitude, kMaxAmplitude);
  std::uniform_real_distribution<double> phase(0.0, std::numbers::pi);
  SinusoidTaskParams p;
  p.amplitude = amp(rng);
  p.phase = phase(rng);
  return p;
}

Episode SinusoidDistribution::MakeEpisode(const SinusoidTaskParams& task,
                                          int shot, int query_size,
                                          Rng& rng) {
  if (shot < 1 || query_size < 1) {
    throw DataError("sinusoid episodes need shot >= 1 and query >= 1");
  }
  std::uniform_real_distribution<double> xs(-kInputRange, kInputRange);
  auto fill = [&](int n) {
    LabeledBatch batch;
    batch.inputs.resize(n, 1);
    batch.targets.resize(n);
    for (int i = 0; i < n; ++i) {
      const double x = xs(rng);
      batch.inputs(i, 0) = x;
      batch.targets(i) = task.amplitude * std::sin(x + task.phase);
    }
    return batch;
  };
  Episode ep;
  ep.support = fill(shot);
  ep.query = fill(query_size);
  ep.way = 1;
  ep.shot = shot;
  ep.task_id = static_cast<std::uint64_t>(task.amplitude * 1e6) * 4099u +
               static_cast<std::uint64_t>(task.phase * 1e6);
  return ep;
}

Episode SinusoidDistribution::SampleEpisode(int way, int shot,
                                            int query_per_class,
                                            Rng& rng) const {
  if (way != 1) {
    throw ConfigError("sinusoid regression tasks have way = 1, got " +
                      std::to_string(way));
  }
  const auto params = SampleParams(rng);
  return MakeEpisode(params, shot, query_per_class, rng);
}

QuadraticTaskFamily GenerateQuadraticFamily(const QuadraticFamilyOptions& opts,
                                            Rng& rng) {
  if (opts.dim < 1 || opts.num_tasks < 1) {
    throw ConfigError("quadratic family needs dim >= 1 and num_tasks >= 1");
  }
  if (!(opts.lambda_min >= 0.0) || !(opts.lambda_max >= opts.lambda_min) ||
      !(opts.lambda_max > 0.0)) {
    throw ConfigError("quadratic family needs 0 <= lambda_min <= lambda_max");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> eig(opts.lambda_min, opts.lambda_max);
  auto random_orthogonal = [&] {
    Eigen::MatrixXd g(opts.dim, opts.dim);
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = normal(rng);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    return q;
  };
  auto curvature = [&] {
    const Eigen::MatrixXd q = random_orthogonal();
    Eigen::VectorXd lam(opts.dim);
    for (int i = 0; i < opts.dim; ++i) lam(i) = eig(rng);
    // Pin the top eigenvalue so the family's lambda is the configured one.
    lam(0) = opts.lambda_max;
    Eigen::MatrixXd a = q * lam.asDiagonal() * q.transpose();
    return Eigen::MatrixXd(0.5 * (a + a.transpose()));
  };

  std::vector<Eigen::MatrixXd> as;
  std::vector<Eigen::VectorXd> bs;
  const Eigen::MatrixXd shared =
      opts.shared_curvature ? curvature() : Eigen::MatrixXd();
  for (int k = 0; k < opts.num_tasks; ++k) {
    as.push_back(opts.shared_curvature ? shared : curvature());
    Eigen::VectorXd b(opts.dim);
    for (int i = 0; i < opts.dim; ++i) b(i) = opts.b_scale * normal(rng);
    bs.push_back(std::move(b));
  }
  return QuadraticTaskFamily::FromTasks(std::move(as), std::move(bs));
}

QuadraticTaskDistribution::QuadraticTaskDistribution(
    std::shared_ptr<const QuadraticTaskFamily> family, double phi_hat)
    : family_(std::move(family)), phi_hat_(phi_hat) {
  if (!family_) throw ConfigError("quadratic distribution needs a family");
  if (!(phi_hat_ >= 0.0) || !std::isfinite(phi_hat_)) {
    throw ConfigError("phi_hat must be finite and >= 0");
  }
}

LabeledBatch QuadraticTaskDistribution::Perturbations(int n, Rng& rng) const {
  const int d = family_->dim;
  LabeledBatch batch;
  batch.inputs.setZero(n, d);
  if (phi_hat_ > 0.0) {
    std::normal_distribution<double> normal(0.0,
                                            phi_hat_ / std::sqrt(double(d)));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) batch.inputs(i, j) = normal(rng);
    }
  }
  return batch;
}

Episode QuadraticTaskDistribution::EpisodeForTask(std::size_t k,
                                                  int support_size,
                                                  int query_size,
                                                  Rng& rng) const {
  if (k >= family_->num_tasks()) {
    throw DataError("quadratic task " + std::to_string(k) + " out of range");
  }
  if (support_size < 1 || query_size < 1) {
    throw DataError("quadratic episodes need support >= 1 and query >= 1");
  }
  Episode ep;
  ep.support = Perturbations(support_size, rng);
  ep.query = Perturbations(query_size, rng);
  ep.way = 1;
  ep.shot = support_size;
  ep.task_id = k;
  return ep;
}

Episode QuadraticTaskDistribution::SampleEpisode(int way, int shot,
                                                 int query_per_class,
                                                 Rng& rng) const {
  if (way != 1) {
    throw ConfigError("quadratic tasks have way = 1, got " +
                      std::to_string(way));
  }
  std::uniform_int_distribution<std::size_t> pick(0, family_->num_tasks() - 1);
  return EpisodeForTask(pick(rng), shot, query_per_class, rng);
}

}  // namespace metaclip
