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

#include "metaclip/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "metaclip/algorithms.hpp"
#include "metaclip/errors.hpp"

namespace metaclip {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd GaussianVector(int dim, double sd, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = sd * normal(rng);
  return v;
}

void CheckTheta(const QuadraticTaskFamily& family, const Eigen::VectorXd& theta) {
  if (theta.size() != family.dim) {
    throw ConfigError("theta has dimension " + std::to_string(theta.size()) +
                      ", family has " + std::to_string(family.dim));
  }
}

double SafeDiv(double num, double den) { return den == 0.0 ? kInf : num / den; }

// Mean and standard error of a scalar sample.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe Summarize(const std::vector<double>& xs) {
  const auto n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= (n - 1.0);
  return {mean, std::sqrt(var / n)};
}

void CheckMonteCarlo(double phi_hat, int support_size, int query_size,
                     int trials) {
  if (trials < 1000) {
    throw ConfigError("Monte-Carlo checks need trials >= 1000, got " +
                      std::to_string(trials));
  }
  if (support_size < 1 || query_size < 1) {
    throw ConfigError("support and query sizes must be >= 1");
  }
  if (!(phi_hat >= 0.0)) throw DomainError("phi_hat must be >= 0");
}

// One draw of grad^ l_k(theta - alpha grad^ l_k(theta, D_s), D_q).
Eigen::VectorXd OneStepEstimate(const QuadraticTaskFamily& family,
                                std::size_t k, const Eigen::VectorXd& theta,
                                const Eigen::VectorXd& grad, double alpha,
                                double sd_s, double sd_q, Rng& rng) {
  const Eigen::VectorXd xi_s = GaussianVector(family.dim, sd_s, rng);
  const Eigen::VectorXd adapted = theta - alpha * (grad + xi_s);
  return QuadGrad(family, k, adapted) + GaussianVector(family.dim, sd_q, rng);
}

}  // namespace

void LemmaReport::Add(double l, double r) {
  lhs.push_back(l);
  rhs.push_back(r);
  max_violation = std::max(max_violation, l - r - kRelSlack * std::abs(r));
}

SmoothnessParams SmoothnessFromFamily(const QuadraticTaskFamily& family,
                                      double alpha, double phi_hat) {
  SmoothnessParams p;
  p.lambda = family.lambda_max;
  p.tau = family.tau;
  p.alpha = alpha;
  p.phi_hat = phi_hat;
  p.phi = family.shared_curvature
              ? TaskGradientSpread(family, Eigen::VectorXd::Zero(family.dim))
              : kInf;
  Eigen::MatrixXd mean_a = Eigen::MatrixXd::Zero(family.dim, family.dim);
  for (const auto& a : family.A) mean_a += a;
  mean_a /= static_cast<double>(family.num_tasks());
  double acc = 0.0;
  for (const auto& a : family.A) {
    const double s = QuadraticTaskFamily::SpectralNorm(a - mean_a);
    acc += s * s;
  }
  p.phi_H = std::sqrt(acc / static_cast<double>(family.num_tasks()));
  return p;
}

MetaObjective MetaObjectiveExact(const QuadraticTaskFamily& family,
                                 const Eigen::VectorXd& theta, double alpha) {
  CheckTheta(family, theta);
  if (!(alpha >= 0.0) || alpha * family.lambda_max > 1.0) {
    throw DomainError("meta-objective needs 0 <= alpha lambda <= 1");
  }
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(family.dim, family.dim);
  MetaObjective out;
  out.grad = Eigen::VectorXd::Zero(family.dim);
  for (std::size_t k = 0; k < family.num_tasks(); ++k) {
    const auto& a = family.A[k];
    const auto& b = family.b[k];
    const Eigen::MatrixXd m = eye - alpha * a;
    const Eigen::VectorXd inner = m * theta - alpha * b;
    out.value += 0.5 * inner.dot(a * inner) + b.dot(inner);
    out.grad += m * (a * inner + b);
  }
  const auto n = static_cast<double>(family.num_tasks());
  out.value /= n;
  out.grad /= n;
  return out;
}

Eigen::VectorXd FirstOrderMetaGradient(const QuadraticTaskFamily& family,
                                       const Eigen::VectorXd& theta,
                                       double alpha) {
  CheckTheta(family, theta);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(family.dim);
  for (std::size_t k = 0; k < family.num_tasks(); ++k) {
    g += QuadGrad(family, k, theta - alpha * QuadGrad(family, k, theta));
  }
  return g / static_cast<double>(family.num_tasks());
}

Eigen::VectorXd MetaObjectiveMinimizer(const QuadraticTaskFamily& family,
                                       double alpha) {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(family.dim, family.dim);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(family.dim, family.dim);
  for (const auto& a : family.A) {
    const Eigen::MatrixXd m = eye - alpha * a;
    h += m * a * m;
  }
  h /= static_cast<double>(family.num_tasks());
  const Eigen::VectorXd g0 =
      MetaObjectiveExact(family, Eigen::VectorXd::Zero(family.dim), alpha).grad;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw NumericError("meta-objective Hessian is not positive definite");
  }
  return ldlt.solve(-g0);
}

double LocalSmoothness(const QuadraticTaskFamily& family,
                       const SmoothnessParams& params,
                       const Eigen::VectorXd& theta) {
  double mean_norm = 0.0;
  if (params.tau != 0.0) {
    for (std::size_t k = 0; k < family.num_tasks(); ++k) {
      mean_norm += QuadGrad(family, k, theta).norm();
    }
    mean_norm /= static_cast<double>(family.num_tasks());
  }
  return 4.0 * params.lambda + 2.0 * params.tau * params.alpha * mean_norm;
}

std::pair<double, double> Lemma1Sides(const QuadraticTaskFamily& family,
                                      const SmoothnessParams& params,
                                      const Eigen::VectorXd& theta,
                                      const Eigen::VectorXd& theta_prime) {
  const auto g1 = MetaObjectiveExact(family, theta, params.alpha).grad;
  const auto g2 = MetaObjectiveExact(family, theta_prime, params.alpha).grad;
  const double lam = std::min(LocalSmoothness(family, params, theta),
                              LocalSmoothness(family, params, theta_prime));
  return {(g1 - g2).norm(), lam * (theta - theta_prime).norm()};
}

LemmaReport CheckLemma1(const QuadraticTaskFamily& family,
                        const SmoothnessParams& params, int n_pairs, Rng& rng,
                        double scale) {
  if (!(params.alpha >= 0.0) || params.alpha * params.lambda > 1.0) {
    throw DomainError("gradient-Lipschitz check needs alpha in [0, 1/lambda]");
  }
  LemmaReport report;
  report.lemma_id = "lemma1";
  for (int i = 0; i < n_pairs; ++i) {
    const Eigen::VectorXd t1 = GaussianVector(family.dim, scale, rng);
    const Eigen::VectorXd t2 = GaussianVector(family.dim, scale, rng);
    const auto [l, r] = Lemma1Sides(family, params, t1, t2);
    report.Add(l, r);
  }
  report.points_checked = n_pairs;
  return report;
}

LemmaReport CheckLemma2Bias(const QuadraticTaskFamily& family,
                            const Eigen::VectorXd& theta, double alpha,
                            double phi_hat, int support_size, int query_size,
                            int trials, Rng& rng) {
  CheckTheta(family, theta);
  CheckMonteCarlo(phi_hat, support_size, query_size, trials);
  if (!(alpha >= 0.0) || alpha * family.lambda_max >= 1.0) {
    throw DomainError("bias check needs alpha in [0, 1/lambda)");
  }
  const double sd_s = phi_hat / std::sqrt(double(support_size) * family.dim);
  const double sd_q = phi_hat / std::sqrt(double(query_size) * family.dim);
  const double bound =
      alpha * family.lambda_max * phi_hat / std::sqrt(double(support_size));
  LemmaReport report;
  report.lemma_id = "lemma2_bias";
  for (std::size_t k = 0; k < family.num_tasks(); ++k) {
    const Eigen::VectorXd grad = QuadGrad(family, k, theta);
    const Eigen::VectorXd exact = QuadGrad(family, k, theta - alpha * grad);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(family.dim);
    double sum_sq = 0.0;
    for (int t = 0; t < trials; ++t) {
      const Eigen::VectorXd e =
          OneStepEstimate(family, k, theta, grad, alpha, sd_s, sd_q, rng) - exact;
      sum += e;
      sum_sq += e.squaredNorm();
    }
    const auto n = static_cast<double>(trials);
    const Eigen::VectorXd mean = sum / n;
    const double trace_cov =
        std::max(0.0, (sum_sq - n * mean.squaredNorm()) / (n - 1.0));
    report.Add(mean.norm(), bound + 3.0 * std::sqrt(trace_cov / n));
  }
  report.points_checked = static_cast<int>(family.num_tasks());
  return report;
}

LemmaReport CheckLemma2SecondMoment(const QuadraticTaskFamily& family,
                                    const Eigen::VectorXd& theta, double alpha,
                                    double phi_hat, int support_size,
                                    int query_size, int trials, Rng& rng) {
  CheckTheta(family, theta);
  CheckMonteCarlo(phi_hat, support_size, query_size, trials);
  if (!(alpha >= 0.0) || alpha * family.lambda_max >= 1.0) {
    throw DomainError("second-moment check needs alpha in [0, 1/lambda)");
  }
  const double sd_s = phi_hat / std::sqrt(double(support_size) * family.dim);
  const double sd_q = phi_hat / std::sqrt(double(query_size) * family.dim);
  const double lam = family.lambda_max;
  const double phi2 = phi_hat * phi_hat;
  LemmaReport report;
  report.lemma_id = "lemma2_second_moment";
  std::vector<double> sq(static_cast<std::size_t>(trials));
  for (std::size_t k = 0; k < family.num_tasks(); ++k) {
    const Eigen::VectorXd grad = QuadGrad(family, k, theta);
    const Eigen::VectorXd m = QuadGrad(family, k, theta - alpha * grad);
    for (auto& s : sq) {
      s = OneStepEstimate(family, k, theta, grad, alpha, sd_s, sd_q, rng)
              .squaredNorm();
    }
    const auto stats = Summarize(sq);
    const double bound = 2.0 * m.squaredNorm() +
                         2.0 * alpha * alpha * lam * lam * phi2 / support_size +
                         phi2 / query_size;
    report.Add(stats.mean, bound + 3.0 * stats.se);
  }
  report.points_checked = static_cast<int>(family.num_tasks());
  return report;
}

Lemma3Coefficients ComputeLemma3Coefficients(double alpha, double lambda) {
  const double a = alpha * lambda;
  if (!(a >= 0.0) || !(a < std::sqrt(2.0) - 1.0)) {
    throw DomainError("norm-inequality check needs alpha in [0, (sqrt(2)-1)/lambda)");
  }
  const double den = 1.0 - 2.0 * a - a * a;
  return {1.0 / den, (2.0 * a + a * a) / den};
}

LemmaReport CheckLemma3(const QuadraticTaskFamily& family,
                        const SmoothnessParams& params, int n_points, Rng& rng,
                        double scale) {
  const auto [o1, o2] = ComputeLemma3Coefficients(params.alpha, params.lambda);
  const double a = params.alpha * params.lambda;
  const double c = (1.0 + a) * (1.0 + a);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(family.dim, family.dim);
  const auto n_tasks = static_cast<double>(family.num_tasks());
  LemmaReport report;
  report.lemma_id = "lemma3";
  for (int i = 0; i < n_points; ++i) {
    const Eigen::VectorXd theta = GaussianVector(family.dim, scale, rng);
    Eigen::VectorXd grad_l = Eigen::VectorXd::Zero(family.dim);
    for (std::size_t k = 0; k < family.num_tasks(); ++k) {
      grad_l += QuadGrad(family, k, theta);
    }
    grad_l /= n_tasks;
    const double phi = TaskGradientSpread(family, theta);
    const auto meta = MetaObjectiveExact(family, theta, params.alpha);
    const double gL = meta.grad.norm();
    report.Add(grad_l.norm(), o1 * gL + o2 * phi);

    double second = 0.0;
    for (std::size_t k = 0; k < family.num_tasks(); ++k) {
      const Eigen::MatrixXd m = eye - params.alpha * family.A[k];
      const Eigen::VectorXd inner = m * theta - params.alpha * family.b[k];
      second += (m * (family.A[k] * inner + family.b[k])).squaredNorm();
    }
    second /= n_tasks;
    report.Add(second,
               2.0 * c * o1 * o1 * gL * gL + c * (2.0 * o2 * o2 + 1.0) * phi * phi);
  }
  report.points_checked = n_points;
  return report;
}

namespace {

void CheckFospDomain(const SmoothnessParams& p, int support_size,
                     int query_size, int task_batch) {
  if (!(p.lambda > 0.0)) throw DomainError("lambda must be > 0");
  if (!(p.alpha > 0.0) || p.alpha * p.lambda > 0.1 + 1e-15) {
    throw DomainError("convergence bound needs alpha in (0, 1/(10 lambda)]");
  }
  if (!(p.tau >= 0.0) || !(p.phi >= 0.0) || !(p.phi_hat >= 0.0)) {
    throw DomainError("tau, phi and phi_hat must be >= 0");
  }
  if (support_size < 1 || query_size < 1 || task_batch < 1) {
    throw ConfigError("support, query and task batch sizes must be >= 1");
  }
}

}  // namespace

double FospFloor(const SmoothnessParams& p, int support_size, int query_size,
                 int task_batch) {
  CheckFospDomain(p, support_size, query_size, task_batch);
  if (!(p.mu >= 0.0)) throw DomainError("mu must be >= 0");
  const double T = task_batch;
  const double Ds = support_size;
  const double Dq = query_size;
  const double a2 = p.alpha * p.alpha * p.lambda * p.lambda;
  const double task_var = p.phi * p.phi * (1.0 / T + 20.0 * a2);
  const double ph2 = p.phi_hat * p.phi_hat;
  const double v = task_var + ph2 / (T * Dq) + ph2 / Ds;
  const double term1 =
      std::sqrt(14.0 * (1.0 + p.tau * p.alpha * p.phi / p.lambda) * v);
  const double term2 = (14.0 * p.tau * p.alpha / p.lambda) *
                       (task_var + ph2 / (T * Dq) + ph2 / (T * Ds));
  return std::max({term1, term2, p.mu});
}

double FospIterationBudget(const SmoothnessParams& p, int support_size,
                           int query_size, int task_batch, double mu) {
  CheckFospDomain(p, support_size, query_size, task_batch);
  if (!(mu > 0.0)) throw DomainError("mu must be > 0");
  const double T = task_batch;
  const double Ds = support_size;
  const double Dq = query_size;
  const double a2 = p.alpha * p.alpha * p.lambda * p.lambda;
  const double first = (p.lambda + p.tau * p.alpha * (p.phi + mu)) / (mu * mu);
  const double second =
      SafeDiv(p.lambda, p.phi * p.phi * (1.0 / T + 20.0 * a2)) +
      SafeDiv(p.lambda * (T * Dq + Ds), p.phi_hat * p.phi_hat);
  return kFospBudgetConstant * p.Delta * std::min(first, second);
}

Lemma4Result RunLemma4Experiment(const Lemma4Setup& setup) {
  Rng family_rng = DeriveStream(setup.seed, StreamPurpose::kAnalysis);
  QuadraticFamilyOptions opts;
  opts.dim = setup.dim;
  opts.num_tasks = setup.num_tasks;
  opts.lambda_min = setup.lambda_min;
  opts.lambda_max = setup.lambda;
  opts.b_scale = setup.b_scale;
  opts.shared_curvature = true;
  auto family = std::make_shared<const QuadraticTaskFamily>(
      GenerateQuadraticFamily(opts, family_rng));

  const Eigen::VectorXd theta_star = MetaObjectiveMinimizer(*family, setup.alpha);
  Eigen::VectorXd offset = GaussianVector(setup.dim, 1.0, family_rng);
  offset *= setup.init_distance / offset.norm();
  const Eigen::VectorXd theta0 = theta_star + offset;

  // Inner noise sigma C / n per coordinate adds d sigma^2 C^2 / n to the
  // per-example variance phi_hat^2.
  const double noise_var = setup.dim * setup.sigma * setup.sigma * setup.clip *
                           setup.clip / setup.support_size;
  Lemma4Result result;
  result.params = SmoothnessFromFamily(
      *family, setup.alpha,
      std::sqrt(setup.phi_hat * setup.phi_hat + noise_var));
  result.params.Delta = MetaObjectiveExact(*family, theta0, setup.alpha).value -
                        MetaObjectiveExact(*family, theta_star, setup.alpha).value;
  result.params.mu = 0.0;
  result.params.mu = FospFloor(result.params, setup.support_size,
                               setup.query_size, setup.task_batch);
  result.floor = result.params.mu;
  result.budget = FospIterationBudget(result.params, setup.support_size,
                                      setup.query_size, setup.task_batch,
                                      result.params.mu);
  result.initial_grad_norm =
      MetaObjectiveExact(*family, theta0, setup.alpha).grad.norm();
  result.step_size =
      1.0 / (18.0 * LocalSmoothness(*family, result.params, theta0));
  result.iterations = std::min<std::int64_t>(
      setup.max_iterations,
      static_cast<std::int64_t>(std::ceil(5.0 * result.budget)));
  result.iterations = std::max<std::int64_t>(result.iterations, 10);

  QuadraticTaskDistribution tasks(family, setup.phi_hat);
  QuadraticObjective objective(family, theta0);
  TrainConfig cfg;
  cfg.algorithm = Algorithm::kMaml;
  cfg.privacy = PrivacyMode::kVanillaFixedClip;
  cfg.inner_lr = setup.alpha;
  cfg.meta_lr = result.step_size;
  cfg.meta_iterations = static_cast<int>(result.iterations);
  cfg.meta_batch = setup.task_batch;
  cfg.sigma = setup.sigma;
  cfg.fixed_C = setup.clip;
  cfg.shot = setup.support_size;
  cfg.query_per_class = setup.query_size;
  cfg.Validate();

  const std::int64_t K = result.iterations;
  const std::int64_t tail_start = K - std::max<std::int64_t>(1, K / 10);
  double final_sum = 0.0;
  for (int s = 0; s < setup.seeds; ++s) {
    cfg.seed = setup.seed + 1000 + static_cast<std::uint64_t>(s);
    MetaModel model = InitModel(objective, tasks, cfg);
    PrivacyLedger ledger(cfg.order_grid);
    std::int64_t hit = -1;
    double tail = 0.0;
    for (std::int64_t k = 0; k < K; ++k) {
      const double gnorm =
          MetaObjectiveExact(*family, model.theta.values, setup.alpha).grad.norm();
      if (hit < 0 && gnorm <= 10.0 * result.floor) hit = k;
      if (k >= tail_start) tail += gnorm;
      const auto batch = SampleMetaBatch(tasks, cfg, k);
      model = DpMamlStep(objective, model, batch, cfg, ledger, {k, 1.0}).model;
    }
    final_sum += tail / static_cast<double>(K - tail_start);
    if (hit < 0) {
      result.converged_at = -1;
    } else if (s == 0 || result.converged_at >= 0) {
      result.converged_at = std::max(result.converged_at, hit);
    }
  }
  result.final_grad_norm = final_sum / setup.seeds;
  return result;
}

}  // namespace metaclip
