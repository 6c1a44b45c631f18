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

#ifndef METACLIP_TASKS_HPP_
#define METACLIP_TASKS_HPP_

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metaclip/errors.hpp"
#include "metaclip/nn.hpp"
#include "metaclip/random.hpp"

namespace metaclip {

// One sampled task: a support set for adaptation and a disjoint query set.
struct Episode {
  LabeledBatch support;
  LabeledBatch query;
  int way = 1;
  int shot = 1;
  std::uint64_t task_id = 0;
};

class TaskDistribution {
 public:
  virtual ~TaskDistribution() = default;

  // For regression families `way` must be 1; `shot` and `query_per_class`
  // are then the support and query sizes.
  virtual Episode SampleEpisode(int way, int shot, int query_per_class,
                                Rng& rng) const = 0;
  virtual int input_dim() const = 0;
  virtual bool is_classification() const = 0;
  // Number of distinct tasks the sampler draws from, if finite.
  virtual std::int64_t task_pool_size() const { return 0; }
};

struct SinusoidTaskParams {
  double amplitude = 1.0;  // [0.1, 5.0]
  double phase = 0.0;      // [0, pi]
};

// y = A sin(x + phase), x ~ U[-5, 5].
class SinusoidDistribution final : public TaskDistribution {
 public:
  static constexpr double kMinAmplitude = 0.1;
  static constexpr double kMaxAmplitude = 5.0;
  static constexpr double kInputRange = 5.0;

  Episode SampleEpisode(int way, int shot, int query_per_class,
                        Rng& rng) const override;
  int input_dim() const override { return 1; }
  bool is_classification() const override { return false; }

  static SinusoidTaskParams SampleParams(Rng& rng);
  static Episode MakeEpisode(const SinusoidTaskParams& task, int shot,
                             int query_size, Rng& rng);
};

// ---------------------------------------------------------------------------
// Quadratic task families l_k(theta) = 1/2 theta' A_k theta + b_k' theta.
// Gradients and Hessians are exact, so the smoothness constants are known:
// lambda = max_k ||A_k||_2 and the Hessian-Lipschitz constant is zero.

template <typename Scalar>
struct QuadraticTaskFamilyT {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  int dim = 0;
  std::vector<Matrix> A;
  std::vector<Vector> b;
  Scalar lambda_max = 0;
  Scalar tau = 0;
  // All tasks share one curvature matrix; the task-gradient spread is then
  // independent of theta.
  bool shared_curvature = false;

  std::size_t num_tasks() const { return A.size(); }

  static QuadraticTaskFamilyT FromTasks(std::vector<Matrix> as,
                                        std::vector<Vector> bs) {
    if (as.empty() || as.size() != bs.size()) {
      throw ConfigError("quadratic family needs matching nonempty A/b lists");
    }
    QuadraticTaskFamilyT f;
    f.dim = static_cast<int>(as.front().rows());
    f.A = std::move(as);
    f.b = std::move(bs);
    f.lambda_max = 0;
    for (const auto& a : f.A) {
      f.lambda_max = std::max(f.lambda_max, SpectralNorm(a));
    }
    f.shared_curvature = true;
    for (const auto& a : f.A) {
      if (a != f.A.front()) f.shared_curvature = false;
    }
    f.Validate();
    return f;
  }

  static Scalar SpectralNorm(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }

  void Validate() const {
    if (A.size() != b.size() || A.empty()) {
      throw ConfigError("quadratic family needs matching nonempty A/b lists");
    }
    Scalar lam = 0;
    for (std::size_t k = 0; k < A.size(); ++k) {
      if (A[k].rows() != dim || A[k].cols() != dim || b[k].size() != dim) {
        throw ConfigError("quadratic task " + std::to_string(k) +
                          " has mismatched dimensions");
      }
      const Scalar asym = (A[k] - A[k].transpose()).cwiseAbs().maxCoeff();
      if (asym > Scalar(1e-12) * (Scalar(1) + A[k].cwiseAbs().maxCoeff())) {
        throw ConfigError("quadratic task " + std::to_string(k) +
                          " has a non-symmetric A");
      }
      Eigen::SelfAdjointEigenSolver<Matrix> es(A[k], Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -Scalar(1e-10)) {
        throw ConfigError("quadratic task " + std::to_string(k) +
                          " has an indefinite A");
      }
      lam = std::max(lam, es.eigenvalues().cwiseAbs().maxCoeff());
    }
    if (std::abs(lam - lambda_max) > Scalar(1e-8)) {
      throw ConfigError("stated lambda_max does not match the task spectra");
    }
    if (tau != Scalar(0)) throw ConfigError("quadratic families have tau = 0");
  }
};

template <typename Scalar>
struct QuadraticEvalT {
  Scalar loss{};
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> grad;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> hessian;
};

using QuadraticTaskFamily = QuadraticTaskFamilyT<double>;
using QuadraticEval = QuadraticEvalT<double>;

template <typename Scalar, typename Derived>
QuadraticEvalT<Scalar> QuadLossGradHess(
    const QuadraticTaskFamilyT<Scalar>& family, std::size_t k,
    const Eigen::MatrixBase<Derived>& theta) {
  if (k >= family.num_tasks()) throw ConfigError("quadratic task index out of range");
  if (theta.size() != family.dim) {
    throw ConfigError("theta has dimension " + std::to_string(theta.size()) +
                      ", family has " + std::to_string(family.dim));
  }
  QuadraticEvalT<Scalar> out;
  const auto& a = family.A[k];
  const auto& b = family.b[k];
  out.grad = a * theta + b;
  out.loss = Scalar(0.5) * theta.dot(a * theta) + b.dot(theta);
  out.hessian = a;
  return out;
}

// Gradient of task k only (cheaper than the full evaluation).
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> QuadGrad(
    const QuadraticTaskFamilyT<Scalar>& family, std::size_t k,
    const Eigen::MatrixBase<Derived>& theta) {
  return family.A[k] * theta + family.b[k];
}

// sqrt(E_k ||grad l_k(theta) - grad l(theta)||^2): the smallest variance
// bound that holds at theta.
template <typename Scalar, typename Derived>
Scalar TaskGradientSpread(const QuadraticTaskFamilyT<Scalar>& family,
                          const Eigen::MatrixBase<Derived>& theta) {
  const auto n = static_cast<Scalar>(family.num_tasks());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean =
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(family.dim);
  std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> grads;
  for (std::size_t k = 0; k < family.num_tasks(); ++k) {
    grads.push_back(QuadGrad(family, k, theta));
    mean += grads.back();
  }
  mean /= n;
  Scalar acc = 0;
  for (const auto& g : grads) acc += (g - mean).squaredNorm();
  return std::sqrt(acc / n);
}

struct QuadraticFamilyOptions {
  int dim = 2;
  int num_tasks = 2;
  double lambda_min = 0.1;
  double lambda_max = 1.0;
  double b_scale = 1.0;
  bool shared_curvature = false;
};

// A_k = Q diag(U[lambda_min, lambda_max]) Q' with Q random orthogonal, and
// b_k ~ N(0, b_scale^2 I).
QuadraticTaskFamily GenerateQuadraticFamily(const QuadraticFamilyOptions& opts,
                                            Rng& rng);

// Episodes over a quadratic family. Each example row is a gradient
// perturbation xi with per-coordinate std phi_hat / sqrt(dim), so a batch
// of n examples has E||mean xi||^2 = phi_hat^2 / n.
class QuadraticTaskDistribution final : public TaskDistribution {
 public:
  QuadraticTaskDistribution(std::shared_ptr<const QuadraticTaskFamily> family,
                            double phi_hat);

  Episode SampleEpisode(int way, int shot, int query_per_class,
                        Rng& rng) const override;
  int input_dim() const override { return family_->dim; }
  bool is_classification() const override { return false; }
  std::int64_t task_pool_size() const override {
    return static_cast<std::int64_t>(family_->num_tasks());
  }

  Episode EpisodeForTask(std::size_t k, int support_size, int query_size,
                         Rng& rng) const;

  const QuadraticTaskFamily& family() const { return *family_; }
  std::shared_ptr<const QuadraticTaskFamily> family_ptr() const {
    return family_;
  }
  double phi_hat() const { return phi_hat_; }

 private:
  LabeledBatch Perturbations(int n, Rng& rng) const;

  std::shared_ptr<const QuadraticTaskFamily> family_;
  double phi_hat_;
};

}  // namespace metaclip

#endif  // METACLIP_TASKS_HPP_
