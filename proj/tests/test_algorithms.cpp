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

#include <gtest/gtest.h>

#include <cstdio>

#include "metaclip/algorithms.hpp"
#include "metaclip/analysis.hpp"
#include "metaclip/errors.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace metaclip {
namespace {

using testing::RandomVector;

NetworkSpec SmallSine() {
  return {{1, 16, 16, 1}, Activation::kTanh, Head::Regression()};
}

TrainConfig BaseConfig(Algorithm a, PrivacyMode p) {
  TrainConfig cfg;
  cfg.algorithm = a;
  cfg.privacy = p;
  cfg.inner_lr = 0.02;
  cfg.meta_lr = 0.01;
  cfg.meta_iterations = 20;
  cfg.meta_batch = 3;
  cfg.eval_every = 7;
  cfg.sigma = 0.8;
  cfg.fixed_C = 1.5;
  cfg.seed = 42;
  return cfg;
}

MetaModel ModelFor(const Objective& obj, const TrainConfig& cfg,
                   const TaskDistribution& tasks) {
  return InitModel(obj, tasks, cfg);
}

struct QuadFixture {
  std::shared_ptr<const QuadraticTaskFamily> family;
  std::shared_ptr<QuadraticTaskDistribution> tasks;
  std::unique_ptr<QuadraticObjective> objective;

  QuadFixture(int dim, int n, double phi_hat, std::uint64_t seed) {
    Rng rng(seed);
    family = std::make_shared<const QuadraticTaskFamily>(
        GenerateQuadraticFamily({dim, n, 0.1, 1.0, 1.0, false}, rng));
    tasks = std::make_shared<QuadraticTaskDistribution>(family, phi_hat);
    objective = std::make_unique<QuadraticObjective>(family, RandomVector(dim, rng));
  }
};

TEST(InnerAdapt, MechanismOffReduction) {
  NetworkObjective obj(SmallSine());
  SinusoidDistribution tasks;
  auto cfg = BaseConfig(Algorithm::kMaml, PrivacyMode::kVanillaFixedClip);
  cfg.sigma = 0.0;
  cfg.fixed_C = 1e300;
  const auto model = ModelFor(obj, cfg, tasks);
  Rng erng(1);
  const auto ep = tasks.SampleEpisode(1, 10, 10, erng);
  Rng rng(2);
  const auto priv = InnerAdapt(obj, model, ep, cfg, cfg.fixed_C, rng);
  const auto plain_grad = obj.Loss(model.theta, ep.support, ep.task_id).grad.values;
  EXPECT_LE((priv.adapted.values - (model.theta.values - cfg.inner_lr * plain_grad))
                .cwiseAbs().maxCoeff(), 1e-15);
  auto none = cfg;
  none.privacy = PrivacyMode::kNone;
  Rng rng2(2);
  EXPECT_EQ(InnerAdapt(obj, model, ep, none, 0.0, rng2).adapted.values,
            priv.adapted.values);
  EXPECT_EQ(priv.clip_active_count, 0);
}

TEST(InnerAdapt, ZeroGradientLeavesThetaWithoutNoise) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
  auto fam = std::make_shared<const QuadraticTaskFamily>(
      QuadraticTaskFamily::FromTasks({a}, {Eigen::Vector2d(1, -2)}));
  QuadraticObjective obj(fam, Eigen::Vector2d(-1, 2));
  QuadraticTaskDistribution tasks(fam, 0.0);
  auto cfg = BaseConfig(Algorithm::kMaml, PrivacyMode::kVanillaFixedClip);
  cfg.sigma = 0.0;
  const auto model = ModelFor(obj, cfg, tasks);
  Rng rng(3);
  const auto ep = tasks.SampleEpisode(1, 5, 5, rng);
  EXPECT_EQ(InnerAdapt(obj, model, ep, cfg, 1.0, rng).adapted.values, model.theta.values);
  cfg.sigma = 1.0;
  const auto noisy = InnerAdapt(obj, model, ep, cfg, 1.0, rng);
  EXPECT_NE(noisy.adapted.values, model.theta.values);
}

TEST(InnerAdapt, MetaSgdUniformRatesMatchMaml) {
  NetworkObjective obj(SmallSine());
  SinusoidDistribution tasks;
  auto maml = BaseConfig(Algorithm::kMaml, PrivacyMode::kVanillaFixedClip);
  maml.inner_steps = 3;
  auto msgd = maml;
  msgd.algorithm = Algorithm::kMetaSgd;
  const auto m1 = ModelFor(obj, maml, tasks);
  const auto m2 = ModelFor(obj, msgd, tasks);
  ASSERT_TRUE(m2.alpha_vec);
  Rng erng(4);
  const auto ep = tasks.SampleEpisode(1, 10, 10, erng);
  for (double sigma : {0.0, 1.0}) {
    maml.sigma = msgd.sigma = sigma;
    Rng r1(5);
    Rng r2(5);
    EXPECT_EQ(InnerAdapt(obj, m1, ep, maml, 0.5, r1).adapted.values,
              InnerAdapt(obj, m2, ep, msgd, 0.5, r2).adapted.values);
  }
}

TEST(DpMamlStep, ReducesToDpSgd) {
  NetworkObjective obj(SmallSine());
  SinusoidDistribution tasks;
  auto cfg = BaseConfig(Algorithm::kMaml, PrivacyMode::kVanillaFixedClip);
  cfg.meta_batch = 1;
  cfg.inner_steps = 1;
  cfg.fixed_C = 0.5;
  cfg.sigma = 1.1;
  cfg.inner_lr = 0.05;
  MetaModel model = ModelFor(obj, cfg, tasks);
  Eigen::VectorXd oracle = model.theta.values;
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    Rng erng = DeriveStream(cfg.seed, StreamPurpose::kEpisode, k);
    Episode ep = tasks.SampleEpisode(1, 10, 10, erng);
    ep.query = ep.support;
    PrivacyLedger ledger;
    const auto out = DpMamlStep(obj, model, std::span(&ep, 1), cfg, ledger, {k, 1.0});
    auto theta = model.theta;
    theta.values = oracle;
    Rng nrng = DeriveStream(cfg.seed, StreamPurpose::kInnerNoise, k, 0);
    oracle = testing::DpSgdStep(oracle, obj.PerExampleGrads(theta, ep.support, 0),
                                cfg.fixed_C, cfg.sigma, cfg.inner_lr, nrng);
    model.theta.values = out.adapted[0];
    worst = std::max(worst, (model.theta.values - oracle).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(DpMamlStep, QuadraticFirstOrderClosedForm) {
  QuadFixture q(4, 5, 0.0, 6);
  auto cfg = BaseConfig(Algorithm::kMaml, PrivacyMode::kNone);
  cfg.inner_lr = 0.3;
  const auto model = ModelFor(*q.objective, cfg, *q.tasks);
  std::vector<Episode> eps;
  Rng rng(7);
  for (std::size_t k = 0; k < q.family->num_tasks(); ++k) {
    eps.push_back(q.tasks->EpisodeForTask(k, 3, 3, rng));
  }
  PrivacyLedger ledger;
  const auto out = DpMamlStep(*q.objective, model, eps, cfg, ledger, {0, 1.0});
  const auto expected = FirstOrderMetaGradient(*q.family, model.theta.values, cfg.inner_lr);
  EXPECT_LE(testing::RelativeError(out.meta_grad, expected), 1e-6);
  EXPECT_TRUE(ledger.empty());
  EXPECT_EQ(out.report.eps_so_far, 0.0);
  EXPECT_FALSE(out.report.current_C.has_value());
}

TEST(MetaSteps, ZeroMetaRateLeavesModel) {
  NetworkObjective obj(SmallSine());
  SinusoidDistribution tasks;
  for (Algorithm a : {Algorithm::kMaml, Algorithm::kReptile, Algorithm::kMetaSgd}) {
    auto cfg = BaseConfig(a, PrivacyMode::kMetaClip);
    cfg.meta_lr = 0.0;
    cfg.eta_C = 0.0;
    const auto model = ModelFor(obj, cfg, tasks);
    const auto batch = SampleMetaBatch(tasks, cfg, 0);
    PrivacyLedger ledger;
    const auto out = MetaStep(obj, model, batch, cfg, ledger, {0, 1.0});
    EXPECT_EQ(out.model.theta.values, model.theta.values);
    EXPECT_EQ(out.model.clip_state->C, model.clip_state->C);
    if (a == Algorithm::kMetaSgd) {
      EXPECT_EQ(out.model.alpha_vec->values, model.alpha_vec->values);
    }
    EXPECT_EQ(ledger.total_steps(), 1);
  }
}

TEST(DpReptileStep, UnitRateLandsOnAdaptedParams) {
  NetworkObjective obj(SmallSine());
  SinusoidDistribution tasks;
  auto cfg = BaseConfig(Algorithm::kReptile, PrivacyMode::kNone);
  cfg.meta_batch = 1;
  cfg.meta_lr = 1.0;
  cfg.inner_steps = 4;
  const auto model = ModelFor(obj, cfg, tasks);
  const auto batch = SampleMetaBatch(tasks, cfg, 0);
  PrivacyLedger ledger;
  const auto out = DpReptileStep(obj, model, batch, cfg, ledger, {0, 1.0});
  EXPECT_LE((out.model.theta.values - out.adapted[0]).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(DpReptileStep, FixedPointAndSymmetry) {
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 2);
  const Eigen::Vector2d v(0.5, -1.0);
  auto fam = std::make_shared<const QuadraticTaskFamily>(
      QuadraticTaskFamily::FromTasks({zero, zero, zero}, {v, -v, Eigen::Vector2d::Zero()}));
  QuadraticObjective obj(fam, Eigen::Vector2d(0.3, 0.7));
  QuadraticTaskDistribution tasks(fam, 0.0);
  auto cfg = BaseConfig(Algorithm::kReptile, PrivacyMode::kNone);
  cfg.meta_lr = 0.7;
  const auto model = ModelFor(obj, cfg, tasks);
  Rng rng(8);
  std::vector<Episode> sym = {tasks.EpisodeForTask(0, 2, 2, rng),
                              tasks.EpisodeForTask(1, 2, 2, rng)};
  PrivacyLedger ledger;
  EXPECT_EQ(DpReptileStep(obj, model, sym, cfg, ledger, {0, 1.0}).model.theta.values,
            model.theta.values);
  std::vector<Episode> still = {tasks.EpisodeForTask(2, 2, 2, rng)};
  EXPECT_EQ(DpReptileStep(obj, model, still, cfg, ledger, {0, 1.0}).model.theta.values,
            model.theta.values);
}

TEST(DpReptileStep, DiffersFromMaml) {
  NetworkObjective obj(SmallSine());
  SinusoidDistribution tasks;
  auto cfg = BaseConfig(Algorithm::kMaml, PrivacyMode::kNone);
  cfg.inner_steps = 2;
  const auto model = ModelFor(obj, cfg, tasks);
  const auto batch = SampleMetaBatch(tasks, cfg, 0);
  PrivacyLedger ledger;
  const auto maml = DpMamlStep(obj, model, batch, cfg, ledger, {0, 1.0});
  const auto rep = DpReptileStep(obj, model, batch, cfg, ledger, {0, 1.0});
  EXPECT_GT((maml.model.theta.values - rep.model.theta.values).norm(), 1e-8);
}

TEST(DpMetaSgdStep, ZeroInnerGradientKeepsRates) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
  auto fam = std::make_shared<const QuadraticTaskFamily>(
      QuadraticTaskFamily::FromTasks({a}, {Eigen::Vector2d(1, -2)}));
  QuadraticObjective obj(fam, Eigen::Vector2d(-1, 2));
  QuadraticTaskDistribution tasks(fam, 0.0);
  auto cfg = BaseConfig(Algorithm::kMetaSgd, PrivacyMode::kNone);
  cfg.meta_lr = 0.5;
  const auto model = ModelFor(obj, cfg, tasks);
  const auto batch = SampleMetaBatch(tasks, cfg, 0);
  PrivacyLedger ledger;
  const auto out = DpMetaSgdStep(obj, model, batch, cfg, ledger, {0, 1.0});
  EXPECT_EQ(out.model.alpha_vec->values, model.alpha_vec->values);
  EXPECT_THROW(DpMetaSgdStep(obj, MetaModel{model.theta, {}, {}}, batch, cfg, ledger, {0, 1.0}),
               ConfigError);
}

TEST(DpMetaSgdStep, AlphaGradientMatchesFiniteDifferences) {
  NetworkObjective obj(SmallSine());
  SinusoidDistribution tasks;
  auto cfg = BaseConfig(Algorithm::kMetaSgd, PrivacyMode::kNone);
  cfg.meta_batch = 1;
  Rng rng(9);
  int checked = 0;
  for (int t = 0; t < 100; ++t) {
    auto model = ModelFor(obj, cfg, tasks);
    model.theta.values += RandomVector(model.theta.size(), rng, 0.2);
    model.alpha_vec->values =
        (0.02 + 0.01 * RandomVector(model.theta.size(), rng).array().abs()).matrix();
    const auto batch = SampleMetaBatch(tasks, cfg, t);
    PrivacyLedger ledger;
    const auto out = DpMetaSgdStep(obj, model, batch, cfg, ledger, {t, 1.0});
    const Eigen::Index j = Eigen::Index(rng() % std::uint64_t(model.theta.size()));
    auto query_loss = [&](double aj) {
      auto m = model;
      m.alpha_vec->values(j) = aj;
      Rng unused(0);
      const auto inner = InnerAdapt(obj, m, batch[0], cfg, 0.0, unused);
      return obj.Loss(inner.adapted, batch[0].query, 0).loss;
    };
    const double a0 = model.alpha_vec->values(j);
    const double h = 1e-5;
    const double fd = (query_loss(a0 + h) - query_loss(a0 - h)) / (2 * h);
    const double an = out.alpha_grad(j);
    if (std::abs(fd) < 1e-9 && std::abs(an) < 1e-9) continue;
    EXPECT_LE(std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)), 1e-4)
        << "point " << t << " coordinate " << j;
    ++checked;
  }
  EXPECT_GT(checked, 50);
}

TEST(Train, SingleZeroRateIterationKeepsInit) {
  NetworkObjective obj(SmallSine());
  SinusoidDistribution tasks;
  auto cfg = BaseConfig(Algorithm::kMaml, PrivacyMode::kNone);
  cfg.meta_iterations = 1;
  cfg.meta_lr = 0.0;
  const auto res = Train(cfg, obj, tasks);
  EXPECT_EQ(res.model.theta.values, ModelFor(obj, cfg, tasks).theta.values);
  EXPECT_EQ(res.reports.size(), 1u);
}

TEST(Train, DeterministicReportsAndLedger) {
  NetworkObjective obj(SmallSine());
  SinusoidDistribution tasks;
  for (Algorithm a : {Algorithm::kMaml, Algorithm::kReptile, Algorithm::kMetaSgd}) {
    auto cfg = BaseConfig(a, PrivacyMode::kMetaClip);
    cfg.inner_steps = 2;
    const auto r1 = Train(cfg, obj, tasks);
    const auto r2 = Train(cfg, obj, tasks);
    EXPECT_EQ(r1.reports, r2.reports);
    EXPECT_EQ(r1.model.theta.values, r2.model.theta.values);
    EXPECT_EQ(r1.reports.size(), 3u);  // ceil(20 / 7)
    EXPECT_EQ(r1.ledger.total_steps(), cfg.meta_iterations * cfg.inner_steps);
    for (std::size_t i = 1; i < r1.reports.size(); ++i) {
      EXPECT_GE(r1.reports[i].eps_so_far, r1.reports[i - 1].eps_so_far);
    }
    EXPECT_DOUBLE_EQ(r1.reports.back().eps_so_far, r1.privacy.epsilon);
  }
}

TEST(Train, NonPrivateIgnoresSigmaAndClip) {
  NetworkObjective obj(SmallSine());
  SinusoidDistribution tasks;
  auto a = BaseConfig(Algorithm::kMaml, PrivacyMode::kNone);
  auto b = a;
  b.sigma = 5.0;
  b.fixed_C = 0.01;
  const auto ra = Train(a, obj, tasks);
  const auto rb = Train(b, obj, tasks);
  EXPECT_EQ(ra.model.theta.values, rb.model.theta.values);
  EXPECT_EQ(ra.reports, rb.reports);
  EXPECT_EQ(ra.privacy.epsilon, 0.0);
}

TEST(Train, FrozenMetaClipEqualsVanillaAtMedian) {
  NetworkObjective obj(SmallSine());
  SinusoidDistribution tasks;
  auto mc = BaseConfig(Algorithm::kMaml, PrivacyMode::kMetaClip);
  mc.eta_C = 0.0;
  const double median = ModelFor(obj, mc, tasks).clip_state->C;
  auto van = mc;
  van.privacy = PrivacyMode::kVanillaFixedClip;
  van.fixed_C = median;
  const auto r1 = Train(mc, obj, tasks);
  const auto r2 = Train(van, obj, tasks);
  EXPECT_EQ(r1.model.theta.values, r2.model.theta.values);
  EXPECT_EQ(r1.reports, r2.reports);
}

TEST(Train, MetaSgdFrozenMatchesMamlBitwise) {
  NetworkObjective obj(SmallSine());
  SinusoidDistribution tasks;
  auto maml = BaseConfig(Algorithm::kMaml, PrivacyMode::kMetaClip);
  maml.eta_C = 0.0;
  maml.inner_steps = 2;
  auto msgd = maml;
  msgd.algorithm = Algorithm::kMetaSgd;
  msgd.freeze_alpha = true;
  const auto r1 = Train(maml, obj, tasks);
  const auto r2 = Train(msgd, obj, tasks);
  EXPECT_EQ(r1.model.theta.values, r2.model.theta.values);
  EXPECT_EQ(r1.reports, r2.reports);
}

TEST(Train, ThreadedMatchesSerialWithinTolerance) {
  NetworkObjective obj(SmallSine());
  SinusoidDistribution tasks;
  auto cfg = BaseConfig(Algorithm::kMaml, PrivacyMode::kMetaClip);
  cfg.meta_batch = 6;
  const auto serial = Train(cfg, obj, tasks);
  cfg.threads = 3;
  const auto threaded = Train(cfg, obj, tasks);
  EXPECT_LE((serial.model.theta.values - threaded.model.theta.values).cwiseAbs().maxCoeff(),
            1e-10);
}

TEST(Train, SubsampledRateFromPool) {
  QuadFixture q(3, 10, 0.1, 10);
  auto cfg = BaseConfig(Algorithm::kMaml, PrivacyMode::kVanillaFixedClip);
  cfg.meta_batch = 2;
  EXPECT_EQ(LedgerSamplingRate(cfg, *q.tasks), 1.0);
  cfg.conservative_subsampling = false;
  EXPECT_DOUBLE_EQ(LedgerSamplingRate(cfg, *q.tasks), 0.2);
  SinusoidDistribution sine;
  EXPECT_EQ(LedgerSamplingRate(cfg, sine), 1.0);
  const auto res = Train(cfg, *q.objective, *q.tasks);
  EXPECT_EQ(res.ledger.events().front().sampling_rate, 0.2);
}

TEST(Train, ConfigErrorsBeforeTraining) {
  NetworkObjective obj(SmallSine());
  SinusoidDistribution tasks;
  auto cfg = BaseConfig(Algorithm::kMaml, PrivacyMode::kNone);
  cfg.way = 2;
  EXPECT_THROW(Train(cfg, obj, tasks), ConfigError);
  cfg.way = 1;
  cfg.meta_iterations = 0;
  EXPECT_THROW(Train(cfg, obj, tasks), ConfigError);
  cfg.meta_iterations = 1;
  cfg.delta = 1.5;
  EXPECT_THROW(Train(cfg, obj, tasks), DomainError);
}

TEST(Evaluate, ClassificationAccuracyCases) {
  NetworkSpec spec{{3, 5}, Activation::kRelu, Head::Logits(5)};
  NetworkObjective obj(spec);
  MetaModel model{ParamVector::Zeros(spec), {}, {}};
  model.theta.bias(0)(2) = 10.0;
  Episode ep;
  ep.support.inputs = Eigen::MatrixXd::Random(5, 3);
  ep.support.labels = {2, 2, 2, 2, 2};
  ep.query = ep.support;
  TrainConfig cfg;
  std::vector<Episode> eps = {ep};
  EXPECT_EQ(Evaluate(obj, model, eps, cfg, 0).mean_metric, 1.0);

  Rng rng(11);
  std::vector<Episode> random_eps;
  for (int e = 0; e < 40; ++e) {
    Episode r;
    r.support.inputs = Eigen::MatrixXd::Zero(1, 3);
    r.support.labels = {0};
    r.query.inputs.resize(25, 3);
    for (int i = 0; i < 25; ++i) {
      r.query.inputs.row(i) = RandomVector(3, rng).transpose();
      r.query.labels.push_back(int(rng() % 5));
    }
    random_eps.push_back(std::move(r));
  }
  model.theta.values = RandomVector(model.theta.size(), rng);
  EXPECT_NEAR(Evaluate(obj, model, random_eps, cfg, 0).mean_metric, 0.2, 0.03);
}

TEST(Evaluate, ZeroStepsMeasuresInitialisation) {
  NetworkObjective obj(SmallSine());
  SinusoidDistribution tasks;
  TrainConfig cfg;
  const auto model = ModelFor(obj, cfg, tasks);
  Rng rng(12);
  std::vector<Episode> eps = {tasks.SampleEpisode(1, 5, 5, rng)};
  EXPECT_DOUBLE_EQ(Evaluate(obj, model, eps, cfg, 0).mean_metric,
                   obj.Metric(model.theta, eps[0].query, 0));
  EXPECT_THROW(Evaluate(obj, model, {}, cfg, 0), ConfigError);
}

// With episodes shared across sigma, the final parameters drift further
// from the noiseless run as sigma grows.
TEST(Train, NoiseDriftGrowsWithSigma) {
  NetworkObjective obj({{1, 16, 16, 1}, Activation::kRelu, Head::Regression()});
  SinusoidDistribution tasks;
  double prev = 0.0;
  std::vector<ParamVector> baseline;
  for (double sigma : {0.0, 0.25, 1.0, 4.0}) {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto cfg = BaseConfig(Algorithm::kMaml, PrivacyMode::kVanillaFixedClip);
      cfg.sigma = sigma;
      cfg.seed = seed;
      cfg.meta_iterations = 100;
      cfg.eval_every = 100;
      const auto res = Train(cfg, obj, tasks);
      if (sigma == 0.0) {
        baseline.push_back(res.model.theta);
      } else {
        total += (res.model.theta.values - baseline[seed].values).norm();
      }
    }
    EXPECT_GE(total / 5, prev) << "sigma " << sigma;
    prev = total / 5;
  }
  EXPECT_GT(prev, 0.0);
}

}  // namespace
}  // namespace metaclip
