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

// Numerical checks of the smoothness, bias and convergence bounds for the
// one-step meta-objective L(theta) = E_k l_k(theta - alpha grad l_k(theta)),
// evaluated exactly on quadratic task families.

#ifndef METACLIP_ANALYSIS_HPP_
#define METACLIP_ANALYSIS_HPP_

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "metaclip/random.hpp"
#include "metaclip/tasks.hpp"

namespace metaclip {

struct SmoothnessParams {
  double lambda = 1.0;
  double tau = 0.0;
  double phi = 0.0;       // task-gradient spread
  double phi_hat = 0.0;   // per-example gradient noise
  double phi_H = 0.0;     // Hessian spread
  double alpha = 0.0;
  double mu = 1.0;
  double Delta = 0.0;
};

// Exact constants of a quadratic family. phi is the task-gradient spread,
// which is constant in theta only for shared curvature; otherwise it is
// +inf (use the pointwise TaskGradientSpread instead).
SmoothnessParams SmoothnessFromFamily(const QuadraticTaskFamily& family,
                                      double alpha, double phi_hat);

struct LemmaReport {
  std::string lemma_id;
  int points_checked = 0;
  // max over samples of lhs - rhs - 1e-6 |rhs|.
  double max_violation = -std::numeric_limits<double>::infinity();
  std::vector<double> lhs;
  std::vector<double> rhs;

  static constexpr double kAbsSlack = 1e-8;
  static constexpr double kRelSlack = 1e-6;

  void Add(double l, double r);
  bool passed() const { return max_violation <= kAbsSlack; }
};

struct MetaObjective {
  double value = 0.0;
  Eigen::VectorXd grad;
};

// L(theta) and its exact gradient: with M_k = I - alpha A_k,
// L_k = l_k(M_k theta - alpha b_k), grad L_k = M_k (A_k (M_k theta -
// alpha b_k) + b_k). Requires 0 <= alpha lambda < 1.
MetaObjective MetaObjectiveExact(const QuadraticTaskFamily& family,
                                 const Eigen::VectorXd& theta, double alpha);

// E_k grad l_k(theta - alpha grad l_k(theta)): the first-order
// meta-gradient, E_k M_k (A_k theta + b_k).
Eigen::VectorXd FirstOrderMetaGradient(const QuadraticTaskFamily& family,
                                       const Eigen::VectorXd& theta,
                                       double alpha);

// argmin of L; it is a quadratic with Hessian E_k M_k A_k M_k.
Eigen::VectorXd MetaObjectiveMinimizer(const QuadraticTaskFamily& family,
                                       double alpha);

// lambda(theta) = 4 lambda + 2 tau alpha E_k ||grad l_k(theta)||.
double LocalSmoothness(const QuadraticTaskFamily& family,
                       const SmoothnessParams& params,
                       const Eigen::VectorXd& theta);

// (lhs, rhs) of the gradient-Lipschitz bound at one pair of points.
std::pair<double, double> Lemma1Sides(const QuadraticTaskFamily& family,
                                      const SmoothnessParams& params,
                                      const Eigen::VectorXd& theta,
                                      const Eigen::VectorXd& theta_prime);

// Points are drawn as N(0, scale^2 I).
LemmaReport CheckLemma1(const QuadraticTaskFamily& family,
                        const SmoothnessParams& params, int n_pairs, Rng& rng,
                        double scale = 3.0);

// Stochastic gradients are grad l_k + xi with xi ~ N(0, phi_hat^2 /
// (|D| dim) I), so E||xi||^2 = phi_hat^2 / |D|. For each task, the
// Monte-Carlo bias of the one-step estimator is compared with
// alpha lambda phi_hat / sqrt(|D_s|) + 3 SE.
LemmaReport CheckLemma2Bias(const QuadraticTaskFamily& family,
                            const Eigen::VectorXd& theta, double alpha,
                            double phi_hat, int support_size, int query_size,
                            int trials, Rng& rng);

// Second-moment bound at phi = 1: E||estimate||^2 <= 2 ||m||^2 +
// 2 alpha^2 lambda^2 phi_hat^2 / |D_s| + phi_hat^2 / |D_q| (+ 3 SE), with m
// the noiseless one-step gradient.
LemmaReport CheckLemma2SecondMoment(const QuadraticTaskFamily& family,
                                    const Eigen::VectorXd& theta, double alpha,
                                    double phi_hat, int support_size,
                                    int query_size, int trials, Rng& rng);

struct Lemma3Coefficients {
  double O1 = 1.0;
  double O2 = 0.0;
};

// O1 = 1 / (1 - 2 a - a^2), O2 = (2 a + a^2) / (1 - 2 a - a^2), a = alpha
// lambda. Requires 0 <= a < sqrt(2) - 1.
Lemma3Coefficients ComputeLemma3Coefficients(double alpha, double lambda);

// Both inequalities at n_points random theta, with phi the exact spread
// E_k ||grad l_k(theta) - grad l(theta)||^2 at each point. Samples
// alternate: (||grad l||, O1 ||grad L|| + O2 phi), then
// (E_k ||grad L_k||^2, 2 (1 + a)^2 O1^2 ||grad L||^2 +
//  (1 + a)^2 (2 O2^2 + 1) phi^2).
LemmaReport CheckLemma3(const QuadraticTaskFamily& family,
                        const SmoothnessParams& params, int n_points, Rng& rng,
                        double scale = 3.0);

// Lower end of the attainable expected meta-gradient norm:
// max{ sqrt(14 (1 + tau alpha phi / lambda) V),
//      (14 tau alpha / lambda) (phi^2 (1/T + 20 a^2) + phi_hat^2 / (T D_q)
//                               + phi_hat^2 / (T D_s)),
//      mu }
// with V = phi^2 (1/T + 20 a^2) + phi_hat^2 / (T D_q) + phi_hat^2 / D_s and
// a = alpha lambda. Requires 0 < alpha <= 1 / (10 lambda).
double FospFloor(const SmoothnessParams& params, int support_size,
                 int query_size, int task_batch);

// 1600 Delta min{ (lambda + tau alpha (phi + mu)) / mu^2,
//                 lambda / (phi^2 (1/T + 20 a^2)) +
//                 lambda (T D_q + D_s) / phi_hat^2 }.
// Zero denominators give +inf for that branch.
double FospIterationBudget(const SmoothnessParams& params, int support_size,
                           int query_size, int task_batch, double mu);

inline constexpr double kFospBudgetConstant = 1600.0;

struct Lemma4Setup {
  int dim = 5;
  int num_tasks = 40;
  double lambda = 1.0;
  double lambda_min = 0.5;
  double b_scale = 0.2;
  double alpha = 0.1;
  double phi_hat = 0.5;
  double sigma = 0.05;
  double clip = 10.0;
  int support_size = 10;
  int query_size = 10;
  int task_batch = 20;
  // Runs start this far from the minimiser of L.
  double init_distance = 100.0;
  int seeds = 3;
  std::uint64_t seed = 0;
  // Hard cap on iterations per run.
  std::int64_t max_iterations = 50000;
};

struct Lemma4Result {
  SmoothnessParams params;
  double floor = 0.0;
  double budget = 0.0;
  double step_size = 0.0;
  std::int64_t iterations = 0;
  double initial_grad_norm = 0.0;
  // Mean over seeds of ||grad L|| averaged over the last tenth of each run.
  double final_grad_norm = 0.0;
  // Largest, over seeds, first iteration with ||grad L|| <= 10 floor (-1 if
  // never reached).
  std::int64_t converged_at = -1;
};

// Trains DP first-order MAML (vanilla clipping, noise folded into phi_hat)
// on a shared-curvature quadratic family with step 1 / (18 lambda(theta))
// and records the exact meta-gradient norm.
Lemma4Result RunLemma4Experiment(const Lemma4Setup& setup);

}  // namespace metaclip

#endif  // METACLIP_ANALYSIS_HPP_
