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

// Differentially private first-order MAML, Reptile and Meta-SGD with an
// adaptive clipping norm, plus non-private evaluation.
//
// Noise enters only through the inner (support-set) gradient. Each inner
// step clips per-example support gradients at C and releases one noisy mean;
// the query-side meta-gradient is not privatized.

#ifndef METACLIP_ALGORITHMS_HPP_
#define METACLIP_ALGORITHMS_HPP_

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metaclip/adaptive_clip.hpp"
#include "metaclip/nn.hpp"
#include "metaclip/privacy.hpp"
#include "metaclip/random.hpp"
#include "metaclip/tasks.hpp"

namespace metaclip {

enum class Algorithm { kMaml, kReptile, kMetaSgd };
enum class PrivacyMode { kNone, kVanillaFixedClip, kMetaClip };

std::string ToString(Algorithm a);
std::string ToString(PrivacyMode p);
Algorithm ParseAlgorithm(const std::string& name);
PrivacyMode ParsePrivacyMode(const std::string& name);

// Smallest learnable rate kept by Meta-SGD.
inline constexpr double kMinAlpha = 1e-6;

struct TrainConfig {
  Algorithm algorithm = Algorithm::kMaml;
  PrivacyMode privacy = PrivacyMode::kNone;
  double inner_lr = 0.01;  // alpha; initial per-parameter rate for metasgd
  double meta_lr = 0.001;  // beta
  int meta_iterations = 1000;
  int meta_batch = 4;
  int inner_steps = 1;
  double sigma = 0.0;
  double fixed_C = 1.0;
  double delta = 1e-5;
  std::uint64_t seed = 0;
  int eval_every = 100;

  int way = 1;
  int shot = 10;
  int query_per_class = 10;

  ClipMode clip_mode = ClipMode::kGradThroughClip;
  // Unset means "same as meta_lr".
  std::optional<double> eta_C;
  double C_min = 1e-3;
  double C_max = 1e3;
  // Episodes drawn (at the initial parameters, without noise) to set the
  // median starting clip norm.
  int clip_init_episodes = 16;

  std::vector<double> order_grid = DefaultOrderGrid();
  // Charge every iteration at sampling rate 1 instead of B / pool size.
  bool conservative_subsampling = true;

  // Keep Meta-SGD's per-parameter rates fixed at their initial value.
  bool freeze_alpha = false;
  int threads = 1;

  double resolved_eta_C() const { return eta_C.value_or(meta_lr); }
  bool is_private() const { return privacy != PrivacyMode::kNone; }
  void Validate() const;

  bool operator==(const TrainConfig&) const = default;
};

// A differentiable per-task loss over a flat parameter vector.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual ParamVector Init(Rng& rng) const = 0;
  virtual LossAndGrad Loss(const ParamVector& theta, const LabeledBatch& batch,
                           std::uint64_t task_id) const = 0;
  virtual std::vector<Eigen::VectorXd> PerExampleGrads(
      const ParamVector& theta, const LabeledBatch& batch,
      std::uint64_t task_id) const = 0;
  // Accuracy for classification, mean squared error for regression.
  virtual double Metric(const ParamVector& theta, const LabeledBatch& batch,
                        std::uint64_t task_id) const = 0;
  virtual bool is_classification() const = 0;
};

class NetworkObjective final : public Objective {
 public:
  explicit NetworkObjective(NetworkSpec spec);
  NetworkObjective(NetworkSpec spec, LossKind loss);

  ParamVector Init(Rng& rng) const override;
  LossAndGrad Loss(const ParamVector& theta, const LabeledBatch& batch,
                   std::uint64_t task_id) const override;
  std::vector<Eigen::VectorXd> PerExampleGrads(
      const ParamVector& theta, const LabeledBatch& batch,
      std::uint64_t task_id) const override;
  double Metric(const ParamVector& theta, const LabeledBatch& batch,
                std::uint64_t task_id) const override;
  bool is_classification() const override {
    return spec_.head.kind == Head::Kind::kLogits;
  }

  const NetworkSpec& spec() const { return spec_; }

 private:
  NetworkSpec spec_;
  LossKind loss_;
};

// Task k is the quadratic l_k of the family; batch rows are the gradient
// perturbations xi_j, so example j has gradient A_k theta + b_k + xi_j and
// the batch loss is l_k(theta) + mean_j xi_j' theta.
class QuadraticObjective final : public Objective {
 public:
  explicit QuadraticObjective(std::shared_ptr<const QuadraticTaskFamily> family,
                              Eigen::VectorXd init = {});

  ParamVector Init(Rng& rng) const override;
  LossAndGrad Loss(const ParamVector& theta, const LabeledBatch& batch,
                   std::uint64_t task_id) const override;
  std::vector<Eigen::VectorXd> PerExampleGrads(
      const ParamVector& theta, const LabeledBatch& batch,
      std::uint64_t task_id) const override;
  double Metric(const ParamVector& theta, const LabeledBatch& batch,
                std::uint64_t task_id) const override;
  bool is_classification() const override { return false; }

 private:
  std::size_t TaskIndex(std::uint64_t task_id) const;

  std::shared_ptr<const QuadraticTaskFamily> family_;
  Eigen::VectorXd init_;
};

struct MetaModel {
  ParamVector theta;
  std::optional<ParamVector> alpha_vec;
  std::optional<ClipState> clip_state;
};

struct StepReport {
  std::int64_t iteration = 0;
  double mean_query_loss = 0.0;
  std::optional<double> mean_query_accuracy;
  std::optional<double> current_C;
  double grad_norm_meta = 0.0;
  double eps_so_far = 0.0;

  bool operator==(const StepReport&) const = default;
};

struct InnerResult {
  ParamVector adapted;
  // Raw per-example support gradients of every inner step, in order.
  std::vector<Eigen::VectorXd> raw_grads;
  int clip_active_count = 0;
  // Sum over inner steps of rate (.) d(noisy mean)/dC, noise held fixed;
  // the adapted parameters move by minus this per unit of C.
  Eigen::VectorXd clip_sensitivity;
  // Sum over inner steps of the released (clipped, noised) gradient.
  Eigen::VectorXd ghat_sum;
};

// Adapts on the episode's support set. `clip_norm` is ignored when the
// configuration is non-private. Noise is drawn from `rng`.
InnerResult InnerAdapt(const Objective& objective, const MetaModel& model,
                       const Episode& episode, const TrainConfig& cfg,
                       double clip_norm, Rng& rng);

// Position of a step within a run: the iteration index keys the noise
// streams, sampling_rate is what the ledger is charged at.
struct StepContext {
  std::int64_t iteration = 0;
  double sampling_rate = 1.0;
};

struct StepOutput {
  MetaModel model;
  StepReport report;
  // Adapted parameters per task, in episode order.
  std::vector<Eigen::VectorXd> adapted;
  // Direction the meta step moved theta against (for Reptile, minus the
  // mean task delta).
  Eigen::VectorXd meta_grad;
  // Meta-SGD only: gradient of the mean query loss w.r.t. the rates.
  Eigen::VectorXd alpha_grad;
};

// Noise for task i at iteration k comes from
// DeriveStream(seed, kInnerNoise, k, i).
StepOutput DpMamlStep(const Objective& objective, const MetaModel& model,
                      std::span<const Episode> episodes, const TrainConfig& cfg,
                      PrivacyLedger& ledger, const StepContext& ctx);
StepOutput DpReptileStep(const Objective& objective, const MetaModel& model,
                         std::span<const Episode> episodes,
                         const TrainConfig& cfg, PrivacyLedger& ledger,
                         const StepContext& ctx);
StepOutput DpMetaSgdStep(const Objective& objective, const MetaModel& model,
                         std::span<const Episode> episodes,
                         const TrainConfig& cfg, PrivacyLedger& ledger,
                         const StepContext& ctx);
// Dispatches on cfg.algorithm.
StepOutput MetaStep(const Objective& objective, const MetaModel& model,
                    std::span<const Episode> episodes, const TrainConfig& cfg,
                    PrivacyLedger& ledger, const StepContext& ctx);

// Median raw support-gradient norm at theta over cfg.clip_init_episodes
// episodes drawn from the kClipInit stream, clamped to [C_min, C_max].
double MedianInitClipNorm(const Objective& objective, const ParamVector& theta,
                          const TaskDistribution& tasks,
                          const TrainConfig& cfg);

// Sampling rate the ledger is charged at for this configuration.
double LedgerSamplingRate(const TrainConfig& cfg, const TaskDistribution& tasks);

MetaModel InitModel(const Objective& objective, const TaskDistribution& tasks,
                    const TrainConfig& cfg);

// Episode i of iteration k is drawn from DeriveStream(seed, kEpisode, k, i).
std::vector<Episode> SampleMetaBatch(const TaskDistribution& tasks,
                                     const TrainConfig& cfg,
                                     std::int64_t iteration);

struct TrainResult {
  MetaModel model;
  std::vector<StepReport> reports;
  PrivacyLedger ledger;
  EpsilonResult privacy;
};

// Runs cfg.meta_iterations steps. A report is emitted after iteration k
// (0-based) when (k + 1) % eval_every == 0 and after the last iteration.
TrainResult Train(const TrainConfig& cfg, const Objective& objective,
                  const TaskDistribution& tasks,
                  const std::function<void(const StepReport&)>& on_report = {});

struct EvalResult {
  double mean_metric = 0.0;
  std::vector<double> per_task;
};

// Adapts each episode's support set for adapt_steps plain gradient steps
// (no clipping, no noise) and measures the query metric.
EvalResult Evaluate(const Objective& objective, const MetaModel& model,
                    std::span<const Episode> episodes, const TrainConfig& cfg,
                    int adapt_steps);

}  // namespace metaclip

#endif  // METACLIP_ALGORITHMS_HPP_
