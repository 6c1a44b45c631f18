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

#include "metaclip/algorithms.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "metaclip/errors.hpp"

namespace metaclip {

std::string ToString(Algorithm a) {
  switch (a) {
    case Algorithm::kMaml:
      return "maml";
    case Algorithm::kReptile:
      return "reptile";
    case Algorithm::kMetaSgd:
      return "metasgd";
  }
  return "unknown";
}

std::string ToString(PrivacyMode p) {
  switch (p) {
    case PrivacyMode::kNone:
      return "none";
    case PrivacyMode::kVanillaFixedClip:
      return "vanilla_fixed_clip";
    case PrivacyMode::kMetaClip:
      return "metaclip";
  }
  return "unknown";
}

Algorithm ParseAlgorithm(const std::string& name) {
  if (name == "maml") return Algorithm::kMaml;
  if (name == "reptile") return Algorithm::kReptile;
  if (name == "metasgd") return Algorithm::kMetaSgd;
  throw ConfigError("unknown algorithm '" + name +
                    "' (expected maml, reptile or metasgd)");
}

PrivacyMode ParsePrivacyMode(const std::string& name) {
  if (name == "none") return PrivacyMode::kNone;
  if (name == "vanilla_fixed_clip") return PrivacyMode::kVanillaFixedClip;
  if (name == "metaclip") return PrivacyMode::kMetaClip;
  throw ConfigError("unknown privacy mode '" + name +
                    "' (expected none, vanilla_fixed_clip or metaclip)");
}

namespace {

void Require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

bool Finite(double x) { return std::isfinite(x); }

}  // namespace

void TrainConfig::Validate() const {
  Require(inner_lr > 0.0 && Finite(inner_lr), "inner_lr must be finite and > 0");
  Require(meta_lr >= 0.0 && Finite(meta_lr), "meta_lr must be finite and >= 0");
  Require(meta_iterations >= 1, "meta_iterations must be >= 1");
  Require(meta_batch >= 1, "meta_batch must be >= 1");
  Require(inner_steps >= 1, "inner_steps must be >= 1");
  Require(eval_every >= 1, "eval_every must be >= 1");
  Require(way >= 1 && shot >= 1 && query_per_class >= 1,
          "way, shot and query_per_class must be >= 1");
  Require(threads >= 1, "threads must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw DomainError("delta must be in (0, 1)");
  }
  if (privacy == PrivacyMode::kNone) return;
  Require(sigma >= 0.0 && Finite(sigma), "sigma must be finite and >= 0");
  Require(fixed_C > 0.0 && Finite(fixed_C), "fixed_C must be finite and > 0");
  Require(C_min > 0.0 && C_max >= C_min && Finite(C_max),
          "clip bounds need 0 < C_min <= C_max < inf");
  Require(resolved_eta_C() >= 0.0 && Finite(resolved_eta_C()),
          "eta_C must be finite and >= 0");
  Require(clip_init_episodes >= 1, "clip_init_episodes must be >= 1");
  PrivacyLedger check(order_grid);
}

// ---------------------------------------------------------------------------
// Objectives.

NetworkObjective::NetworkObjective(NetworkSpec spec)
    : NetworkObjective(spec, spec.head.default_loss()) {}

NetworkObjective::NetworkObjective(NetworkSpec spec, LossKind loss)
    : spec_(std::move(spec)), loss_(loss) {
  spec_.Validate();
}

ParamVector NetworkObjective::Init(Rng& rng) const {
  return InitParams<double>(spec_, rng);
}

LossAndGrad NetworkObjective::Loss(const ParamVector& theta,
                                   const LabeledBatch& batch,
                                   std::uint64_t) const {
  return ComputeLossAndGrad(spec_, theta, batch, loss_);
}

std::vector<Eigen::VectorXd> NetworkObjective::PerExampleGrads(
    const ParamVector& theta, const LabeledBatch& batch, std::uint64_t) const {
  auto grads = metaclip::PerExampleGrads(spec_, theta, batch, loss_);
  std::vector<Eigen::VectorXd> out;
  out.reserve(grads.size());
  for (auto& g : grads) out.push_back(std::move(g.values));
  return out;
}

double NetworkObjective::Metric(const ParamVector& theta,
                                const LabeledBatch& batch,
                                std::uint64_t) const {
  const Eigen::MatrixXd out = Forward(spec_, theta, batch.inputs);
  const auto n = static_cast<double>(batch.size());
  if (batch.is_classification()) {
    int correct = 0;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      Eigen::Index arg = 0;
      out.row(i).maxCoeff(&arg);
      if (arg == batch.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return correct / n;
  }
  return (out.col(0) - batch.targets).squaredNorm() / n;
}

QuadraticObjective::QuadraticObjective(
    std::shared_ptr<const QuadraticTaskFamily> family, Eigen::VectorXd init)
    : family_(std::move(family)), init_(std::move(init)) {
  if (!family_) throw ConfigError("quadratic objective needs a family");
  if (init_.size() == 0) init_ = Eigen::VectorXd::Zero(family_->dim);
  if (init_.size() != family_->dim) {
    throw ConfigError("initial theta does not match the family dimension");
  }
}

ParamVector QuadraticObjective::Init(Rng&) const {
  return ParamVector::Flat(init_);
}

std::size_t QuadraticObjective::TaskIndex(std::uint64_t task_id) const {
  if (task_id >= family_->num_tasks()) {
    throw ConfigError("quadratic task id " + std::to_string(task_id) +
                      " out of range");
  }
  return static_cast<std::size_t>(task_id);
}

LossAndGrad QuadraticObjective::Loss(const ParamVector& theta,
                                     const LabeledBatch& batch,
                                     std::uint64_t task_id) const {
  const auto eval = QuadLossGradHess(*family_, TaskIndex(task_id), theta.values);
  Eigen::VectorXd xi_mean = Eigen::VectorXd::Zero(family_->dim);
  if (batch.size() > 0) xi_mean = batch.inputs.colwise().mean().transpose();
  LossAndGrad out;
  out.loss = eval.loss + xi_mean.dot(theta.values);
  out.grad = ParamVector::Flat(eval.grad + xi_mean);
  out.grad.shape_map = theta.shape_map;
  return out;
}

std::vector<Eigen::VectorXd> QuadraticObjective::PerExampleGrads(
    const ParamVector& theta, const LabeledBatch& batch,
    std::uint64_t task_id) const {
  if (batch.inputs.cols() != family_->dim) {
    throw ConfigError("quadratic batch rows must have the family dimension");
  }
  const Eigen::VectorXd g = QuadGrad(*family_, TaskIndex(task_id), theta.values);
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(batch.size()));
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    out.push_back(g + batch.inputs.row(j).transpose());
  }
  return out;
}

double QuadraticObjective::Metric(const ParamVector& theta,
                                  const LabeledBatch& batch,
                                  std::uint64_t task_id) const {
  return Loss(theta, batch, task_id).loss;
}

// ---------------------------------------------------------------------------
// Inner adaptation and meta steps.

namespace {

template <typename F>
void ParallelFor(int n, int threads, F&& body) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  const int count = std::min(threads, n);
  for (int t = 0; t < count; ++t) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

std::optional<double> CurrentClip(const MetaModel& model,
                                  const TrainConfig& cfg) {
  switch (cfg.privacy) {
    case PrivacyMode::kNone:
      return std::nullopt;
    case PrivacyMode::kVanillaFixedClip:
      return cfg.fixed_C;
    case PrivacyMode::kMetaClip:
      if (!model.clip_state) {
        throw ConfigError("metaclip mode needs a model with a clip state");
      }
      return model.clip_state->C;
  }
  return std::nullopt;
}

struct TaskOutcome {
  InnerResult inner;
  LossAndGrad query;
  std::optional<double> accuracy;
};

std::vector<TaskOutcome> RunTasks(const Objective& objective,
                                  const MetaModel& model,
                                  std::span<const Episode> episodes,
                                  const TrainConfig& cfg,
                                  const StepContext& ctx) {
  if (episodes.empty()) throw ConfigError("meta-batch must be nonempty");
  const double clip = CurrentClip(model, cfg).value_or(0.0);
  std::vector<TaskOutcome> outcomes(episodes.size());
  ParallelFor(static_cast<int>(episodes.size()), cfg.threads, [&](int i) {
    const Episode& ep = episodes[static_cast<std::size_t>(i)];
    Rng rng = DeriveStream(cfg.seed, StreamPurpose::kInnerNoise,
                           static_cast<std::uint64_t>(ctx.iteration),
                           static_cast<std::uint64_t>(i));
    auto& out = outcomes[static_cast<std::size_t>(i)];
    out.inner = InnerAdapt(objective, model, ep, cfg, clip, rng);
    out.query = objective.Loss(out.inner.adapted, ep.query, ep.task_id);
    if (objective.is_classification()) {
      out.accuracy = objective.Metric(out.inner.adapted, ep.query, ep.task_id);
    }
  });
  return outcomes;
}

Eigen::VectorXd MeanQueryGrad(const std::vector<TaskOutcome>& outcomes) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(outcomes.front().query.grad.size());
  for (const auto& o : outcomes) g += o.query.grad.values;
  return g / static_cast<double>(outcomes.size());
}

Eigen::VectorXd MeanDelta(const std::vector<TaskOutcome>& outcomes,
                          const Eigen::VectorXd& theta) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(theta.size());
  for (const auto& o : outcomes) d += o.inner.adapted.values - theta;
  return d / static_cast<double>(outcomes.size());
}

// Clip-norm update, ledger charge and report shared by all algorithms.
void FinishStep(const MetaModel& before, const std::vector<TaskOutcome>& outcomes,
                const TrainConfig& cfg, PrivacyLedger& ledger,
                const StepContext& ctx, double grad_norm, StepOutput& out) {
  if (cfg.privacy == PrivacyMode::kMetaClip) {
    ClipUpdateContext update;
    update.inner_lr = 1.0;
    for (const auto& o : outcomes) {
      update.query_grads.push_back(o.query.grad.values);
      update.dtheta_dC.push_back(o.inner.clip_sensitivity);
      for (const auto& g : o.inner.raw_grads) update.recent_norms.push_back(g.norm());
    }
    update.mean_param_delta = MeanDelta(outcomes, before.theta.values);
    out.model.clip_state = UpdateClipNorm(*before.clip_state, update);
  }
  if (cfg.is_private()) {
    ledger.Record(cfg.sigma, ctx.sampling_rate, cfg.inner_steps);
  }

  StepReport& r = out.report;
  r.iteration = ctx.iteration;
  double loss = 0.0;
  double acc = 0.0;
  for (const auto& o : outcomes) {
    loss += o.query.loss;
    if (o.accuracy) acc += *o.accuracy;
  }
  const auto n = static_cast<double>(outcomes.size());
  r.mean_query_loss = loss / n;
  if (outcomes.front().accuracy) r.mean_query_accuracy = acc / n;
  r.current_C = CurrentClip(out.model, cfg);
  r.grad_norm_meta = grad_norm;
  r.eps_so_far = cfg.is_private() ? ToEpsDelta(ledger, cfg.delta).epsilon : 0.0;

  out.adapted.reserve(outcomes.size());
  for (const auto& o : outcomes) out.adapted.push_back(o.inner.adapted.values);
}

}  // namespace

InnerResult InnerAdapt(const Objective& objective, const MetaModel& model,
                       const Episode& episode, const TrainConfig& cfg,
                       double clip_norm, Rng& rng) {
  const bool per_param = cfg.algorithm == Algorithm::kMetaSgd;
  if (per_param && !model.alpha_vec) {
    throw ConfigError("metasgd needs a model with per-parameter rates");
  }
  const Eigen::Index d = model.theta.size();
  InnerResult res;
  res.adapted = model.theta;
  res.clip_sensitivity = Eigen::VectorXd::Zero(d);
  res.ghat_sum = Eigen::VectorXd::Zero(d);
  const NoiseConfig noise{cfg.sigma};

  for (int s = 0; s < cfg.inner_steps; ++s) {
    auto raw = objective.PerExampleGrads(res.adapted, episode.support,
                                         episode.task_id);
    if (raw.empty()) throw ConfigError("support set must be nonempty");
    Eigen::VectorXd ghat;
    Eigen::VectorXd sens;
    if (cfg.is_private()) {
      std::vector<Eigen::VectorXd> clipped;
      clipped.reserve(raw.size());
      for (const auto& g : raw) {
        if (g.norm() > clip_norm) ++res.clip_active_count;
        clipped.push_back(Clip(g, clip_norm));
      }
      ghat = NoisyMean(clipped, clip_norm, noise, rng);
      sens = ClipSensitivityWrtC(raw, clip_norm);
    } else {
      ghat = Eigen::VectorXd::Zero(d);
      for (const auto& g : raw) ghat += g;
      ghat /= static_cast<double>(raw.size());
    }
    if (!ghat.allFinite()) {
      throw NumericError("non-finite inner gradient at inner step " +
                         std::to_string(s));
    }
    if (per_param) {
      const auto& alpha = model.alpha_vec->values;
      res.adapted.values -= alpha.cwiseProduct(ghat);
      if (sens.size() > 0) res.clip_sensitivity += alpha.cwiseProduct(sens);
    } else {
      res.adapted.values -= cfg.inner_lr * ghat;
      if (sens.size() > 0) res.clip_sensitivity += cfg.inner_lr * sens;
    }
    res.ghat_sum += ghat;
    for (auto& g : raw) res.raw_grads.push_back(std::move(g));
  }
  return res;
}

StepOutput DpMamlStep(const Objective& objective, const MetaModel& model,
                      std::span<const Episode> episodes, const TrainConfig& cfg,
                      PrivacyLedger& ledger, const StepContext& ctx) {
  const auto outcomes = RunTasks(objective, model, episodes, cfg, ctx);
  const Eigen::VectorXd meta_grad = MeanQueryGrad(outcomes);
  StepOutput out;
  out.model = model;
  out.model.theta.values -= cfg.meta_lr * meta_grad;
  out.meta_grad = meta_grad;
  FinishStep(model, outcomes, cfg, ledger, ctx, meta_grad.norm(), out);
  return out;
}

StepOutput DpReptileStep(const Objective& objective, const MetaModel& model,
                         std::span<const Episode> episodes,
                         const TrainConfig& cfg, PrivacyLedger& ledger,
                         const StepContext& ctx) {
  const auto outcomes = RunTasks(objective, model, episodes, cfg, ctx);
  const Eigen::VectorXd delta = MeanDelta(outcomes, model.theta.values);
  StepOutput out;
  out.model = model;
  out.model.theta.values += cfg.meta_lr * delta;
  out.meta_grad = -delta;
  FinishStep(model, outcomes, cfg, ledger, ctx, delta.norm(), out);
  return out;
}

StepOutput DpMetaSgdStep(const Objective& objective, const MetaModel& model,
                         std::span<const Episode> episodes,
                         const TrainConfig& cfg, PrivacyLedger& ledger,
                         const StepContext& ctx) {
  if (!model.alpha_vec) {
    throw ConfigError("metasgd needs a model with per-parameter rates");
  }
  const auto outcomes = RunTasks(objective, model, episodes, cfg, ctx);
  const Eigen::VectorXd meta_grad = MeanQueryGrad(outcomes);
  StepOutput out;
  out.model = model;
  out.model.theta.values -= cfg.meta_lr * meta_grad;
  out.meta_grad = meta_grad;
  // dL_q/d alpha = -grad L_q(theta') (.) sum of released inner gradients.
  out.alpha_grad = Eigen::VectorXd::Zero(meta_grad.size());
  for (const auto& o : outcomes) {
    out.alpha_grad -= o.query.grad.values.cwiseProduct(o.inner.ghat_sum);
  }
  out.alpha_grad /= static_cast<double>(outcomes.size());
  if (!cfg.freeze_alpha) {
    auto& alpha = out.model.alpha_vec->values;
    alpha = (alpha - cfg.meta_lr * out.alpha_grad).cwiseMax(kMinAlpha);
  }
  FinishStep(model, outcomes, cfg, ledger, ctx, meta_grad.norm(), out);
  return out;
}

StepOutput MetaStep(const Objective& objective, const MetaModel& model,
                    std::span<const Episode> episodes, const TrainConfig& cfg,
                    PrivacyLedger& ledger, const StepContext& ctx) {
  switch (cfg.algorithm) {
    case Algorithm::kMaml:
      return DpMamlStep(objective, model, episodes, cfg, ledger, ctx);
    case Algorithm::kReptile:
      return DpReptileStep(objective, model, episodes, cfg, ledger, ctx);
    case Algorithm::kMetaSgd:
      return DpMetaSgdStep(objective, model, episodes, cfg, ledger, ctx);
  }
  throw ConfigError("unknown algorithm");
}

double MedianInitClipNorm(const Objective& objective, const ParamVector& theta,
                          const TaskDistribution& tasks,
                          const TrainConfig& cfg) {
  std::vector<double> norms;
  for (int e = 0; e < cfg.clip_init_episodes; ++e) {
    Rng rng = DeriveStream(cfg.seed, StreamPurpose::kClipInit,
                           static_cast<std::uint64_t>(e));
    const Episode ep =
        tasks.SampleEpisode(cfg.way, cfg.shot, cfg.query_per_class, rng);
    for (const auto& g : objective.PerExampleGrads(theta, ep.support, ep.task_id)) {
      norms.push_back(g.norm());
    }
  }
  return InitClipNorm(norms, cfg.C_min, cfg.C_max);
}

double LedgerSamplingRate(const TrainConfig& cfg, const TaskDistribution& tasks) {
  const std::int64_t pool = tasks.task_pool_size();
  if (cfg.conservative_subsampling || pool <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(cfg.meta_batch) /
                           static_cast<double>(pool));
}

MetaModel InitModel(const Objective& objective, const TaskDistribution& tasks,
                    const TrainConfig& cfg) {
  MetaModel model;
  Rng init_rng = DeriveStream(cfg.seed, StreamPurpose::kInit);
  model.theta = objective.Init(init_rng);
  if (cfg.algorithm == Algorithm::kMetaSgd) {
    ParamVector alpha = model.theta;
    alpha.values.setConstant(cfg.inner_lr);
    model.alpha_vec = std::move(alpha);
  }
  if (cfg.privacy == PrivacyMode::kMetaClip) {
    ClipState state;
    state.C_min = cfg.C_min;
    state.C_max = cfg.C_max;
    state.mode = cfg.clip_mode;
    state.eta_C = cfg.resolved_eta_C();
    state.C = MedianInitClipNorm(objective, model.theta, tasks, cfg);
    state.Validate();
    model.clip_state = std::move(state);
  }
  return model;
}

std::vector<Episode> SampleMetaBatch(const TaskDistribution& tasks,
                                     const TrainConfig& cfg,
                                     std::int64_t iteration) {
  std::vector<Episode> batch;
  batch.reserve(static_cast<std::size_t>(cfg.meta_batch));
  for (int i = 0; i < cfg.meta_batch; ++i) {
    Rng rng = DeriveStream(cfg.seed, StreamPurpose::kEpisode,
                           static_cast<std::uint64_t>(iteration),
                           static_cast<std::uint64_t>(i));
    batch.push_back(
        tasks.SampleEpisode(cfg.way, cfg.shot, cfg.query_per_class, rng));
  }
  return batch;
}

TrainResult Train(const TrainConfig& cfg, const Objective& objective,
                  const TaskDistribution& tasks,
                  const std::function<void(const StepReport&)>& on_report) {
  cfg.Validate();
  {
    // Surface episode-shape errors before any training.
    Rng probe = DeriveStream(cfg.seed, StreamPurpose::kTest);
    tasks.SampleEpisode(cfg.way, cfg.shot, cfg.query_per_class, probe);
  }
  TrainResult result{InitModel(objective, tasks, cfg), {},
                     PrivacyLedger(cfg.order_grid), {}};
  const double q = LedgerSamplingRate(cfg, tasks);
  const std::int64_t K = cfg.meta_iterations;
  for (std::int64_t k = 0; k < K; ++k) {
    const auto batch = SampleMetaBatch(tasks, cfg, k);
    auto out = MetaStep(objective, result.model, batch, cfg, result.ledger,
                        {k, q});
    if (!out.model.theta.AllFinite()) {
      throw NumericError("meta parameters became non-finite at iteration " +
                         std::to_string(k));
    }
    result.model = std::move(out.model);
    if ((k + 1) % cfg.eval_every == 0 || k + 1 == K) {
      result.reports.push_back(out.report);
      if (on_report) on_report(out.report);
    }
  }
  if (cfg.is_private()) result.privacy = ToEpsDelta(result.ledger, cfg.delta);
  return result;
}

EvalResult Evaluate(const Objective& objective, const MetaModel& model,
                    std::span<const Episode> episodes, const TrainConfig& cfg,
                    int adapt_steps) {
  if (episodes.empty()) throw ConfigError("evaluation needs episodes");
  if (adapt_steps < 0) throw ConfigError("adapt_steps must be >= 0");
  EvalResult res;
  res.per_task.resize(episodes.size());
  ParallelFor(static_cast<int>(episodes.size()), cfg.threads, [&](int i) {
    const Episode& ep = episodes[static_cast<std::size_t>(i)];
    ParamVector theta = model.theta;
    for (int s = 0; s < adapt_steps; ++s) {
      const auto g = objective.Loss(theta, ep.support, ep.task_id).grad.values;
      if (model.alpha_vec) {
        theta.values -= model.alpha_vec->values.cwiseProduct(g);
      } else {
        theta.values -= cfg.inner_lr * g;
      }
    }
    res.per_task[static_cast<std::size_t>(i)] =
        objective.Metric(theta, ep.query, ep.task_id);
  });
  double sum = 0.0;
  for (double v : res.per_task) sum += v;
  res.mean_metric = sum / static_cast<double>(res.per_task.size());
  return res;
}

}  // namespace metaclip
