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

#include "metaclip/cli/commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "metaclip/analysis.hpp"
#include "metaclip/cli/metrics.hpp"
#include "metaclip/cli/plot.hpp"
#include "metaclip/errors.hpp"
#include "metaclip/omniglot.hpp"

namespace metaclip::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

ordered_json Number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

NetworkSpec BuildSpec(const RunConfig& cfg, int input_dim, Head head) {
  NetworkSpec spec;
  spec.layer_widths.push_back(input_dim);
  for (int w : cfg.hidden) spec.layer_widths.push_back(w);
  spec.layer_widths.push_back(head.output_dim());
  spec.activation = cfg.activation;
  spec.head = head;
  return spec;
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

void PrepareOutputDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigError("cannot create output directory " + dir.string());
  }
  const std::set<std::string> allowed = {kResolvedConfigFile, kMetricsFile,
                                         kPrivacyFile, kModelFile};
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!allowed.contains(entry.path().filename().string())) {
      throw ConfigError("output directory " + dir.string() +
                        " holds unrelated file " +
                        entry.path().filename().string());
    }
  }
}

}  // namespace

Problem MakeProblem(const RunConfig& cfg) {
  Problem p;
  switch (cfg.task) {
    case TaskKind::kSinusoid: {
      auto dist = std::make_shared<const SinusoidDistribution>();
      p.objective = std::make_unique<NetworkObjective>(
          BuildSpec(cfg, 1, Head::Regression()));
      p.train_tasks = dist;
      p.test_tasks = dist;
      p.head = HeadTag::kRegression;
      break;
    }
    case TaskKind::kQuadratic: {
      QuadraticFamilyOptions opts;
      opts.dim = cfg.quadratic_dim;
      opts.num_tasks = cfg.quadratic_tasks;
      opts.lambda_min = cfg.quadratic_lambda_min;
      opts.lambda_max = cfg.quadratic_lambda_max;
      opts.b_scale = cfg.quadratic_b_scale;
      opts.shared_curvature = cfg.quadratic_shared_curvature;
      Rng rng = DeriveStream(cfg.train.seed, StreamPurpose::kDataSplit);
      auto family = std::make_shared<const QuadraticTaskFamily>(
          GenerateQuadraticFamily(opts, rng));
      auto dist =
          std::make_shared<const QuadraticTaskDistribution>(family, cfg.phi_hat);
      p.objective = std::make_unique<QuadraticObjective>(family);
      p.train_tasks = dist;
      p.test_tasks = dist;
      p.head = HeadTag::kVector;
      break;
    }
    case TaskKind::kOmniglot: {
      if (!cfg.omniglot_root) throw ConfigError("omniglot task needs omniglot_root");
      auto store = std::make_shared<const OmniglotStore>(
          OmniglotStore::Load(*cfg.omniglot_root, cfg.image_side));
      const auto split = SplitCharacters(*store, cfg.train_fraction,
                                         cfg.train.seed, cfg.train_characters);
      p.train_tasks =
          std::make_shared<const OmniglotTaskDistribution>(store, split.train);
      p.test_tasks =
          std::make_shared<const OmniglotTaskDistribution>(store, split.test);
      p.objective = std::make_unique<NetworkObjective>(BuildSpec(
          cfg, cfg.image_side * cfg.image_side, Head::Logits(cfg.train.way)));
      p.head = HeadTag::kLogits;
      break;
    }
  }
  p.activation = cfg.activation;
  return p;
}

int RunTrain(const RunConfig& cfg, std::ostream& log) {
  cfg.train.Validate();
  const fs::path dir = cfg.output_dir;
  Problem problem = MakeProblem(cfg);
  PrepareOutputDir(dir);
  WriteFile(dir / kResolvedConfigFile, EmitConfig(cfg));

  std::ofstream metrics(dir / kMetricsFile, std::ios::binary);
  if (!metrics) throw DataError("cannot write metrics to " + dir.string());
  const auto start = std::chrono::steady_clock::now();
  auto on_report = [&](const StepReport& report) {
    std::optional<double> wall;
    if (cfg.wall_clock) {
      wall = std::chrono::duration<double, std::milli>(
                 std::chrono::steady_clock::now() - start)
                 .count();
    }
    metrics << ToJsonLine(FromReport(report, wall)) << '\n';
    metrics.flush();
  };
  const TrainResult result =
      Train(cfg.train, *problem.objective, *problem.train_tasks, on_report);
  metrics.close();
  if (!metrics) throw DataError("cannot write metrics to " + dir.string());

  WriteFile(dir / kPrivacyFile, PrivacyJson(result.ledger, result.privacy,
                                            cfg.train.delta,
                                            cfg.train.is_private()));
  SaveModel(dir / kModelFile, {problem.activation, problem.head, result.model});
  log << "trained " << cfg.train.meta_iterations << " iterations; epsilon "
      << (cfg.train.is_private() ? result.privacy.epsilon : 0.0) << " at delta "
      << cfg.train.delta << "; outputs in " << dir.string() << "\n";
  return static_cast<int>(ExitCode::kOk);
}

int RunEval(const RunConfig& cfg, const fs::path& model_path,
            std::ostream& out) {
  const ModelBlob blob = LoadModel(model_path);
  Problem problem = MakeProblem(cfg);
  Rng probe = DeriveStream(cfg.train.seed, StreamPurpose::kInit);
  const ParamVector expected = problem.objective->Init(probe);
  if (expected.shape_map != blob.model.theta.shape_map ||
      blob.activation != problem.activation || blob.head != problem.head) {
    throw ConfigError("model " + model_path.string() +
                      " does not match the configured network");
  }
  std::vector<Episode> episodes;
  for (int i = 0; i < cfg.eval_episodes; ++i) {
    Rng rng = DeriveStream(cfg.train.seed, StreamPurpose::kEvaluation,
                           static_cast<std::uint64_t>(i));
    episodes.push_back(problem.test_tasks->SampleEpisode(
        cfg.train.way, cfg.train.shot, cfg.train.query_per_class, rng));
  }
  const auto res = Evaluate(*problem.objective, blob.model, episodes, cfg.train,
                            cfg.eval_adapt_steps);
  ordered_json j;
  j["metric"] = problem.objective->is_classification()
                    ? "accuracy"
                    : (cfg.task == TaskKind::kQuadratic ? "loss" : "mse");
  j["mean"] = Number(res.mean_metric);
  j["episodes"] = cfg.eval_episodes;
  j["adapt_steps"] = cfg.eval_adapt_steps;
  out << j.dump() << "\n";
  return static_cast<int>(ExitCode::kOk);
}

int RunAccount(const AccountOptions& opts, std::ostream& out) {
  if (opts.sigma.has_value() == opts.epsilon.has_value()) {
    throw ConfigError("give exactly one of --sigma and --eps");
  }
  if (opts.steps < 0) throw ConfigError("steps must be >= 0");
  ordered_json j;
  if (opts.sigma) {
    PrivacyLedger ledger(opts.order_grid);
    if (opts.steps > 0) ledger.Record(*opts.sigma, opts.sampling_rate, opts.steps);
    if (!(opts.delta > 0.0 && opts.delta < 1.0)) {
      throw DomainError("delta must be in (0, 1)");
    }
    const auto eps = ToEpsDelta(ledger, opts.delta);
    j["mode"] = "forward";
    j["sigma"] = *opts.sigma;
    j["epsilon"] = Number(eps.epsilon);
    j["order"] = Number(eps.order);
  } else {
    const auto cal = CalibrateSigma(*opts.epsilon, opts.delta,
                                    opts.sampling_rate, opts.steps,
                                    opts.order_grid);
    j["mode"] = "inverse";
    j["target_epsilon"] = *opts.epsilon;
    j["sigma"] = cal.sigma;
    j["epsilon"] = Number(cal.achieved.epsilon);
    j["order"] = Number(cal.achieved.order);
  }
  j["delta"] = opts.delta;
  j["sampling_rate"] = opts.sampling_rate;
  j["steps"] = opts.steps;
  out << j.dump() << "\n";
  return static_cast<int>(ExitCode::kOk);
}

int RunLemmas(const LemmaOptions& opts, std::ostream& out) {
  bool all_passed = true;
  int checks = 0;
  auto emit = [&](const LemmaReport& r, std::uint64_t seed, int dim,
                  double alpha_lambda) {
    ordered_json j;
    j["lemma_id"] = r.lemma_id;
    j["seed"] = seed;
    j["dim"] = dim;
    j["alpha_lambda"] = alpha_lambda;
    j["points_checked"] = r.points_checked;
    j["max_violation"] = Number(r.max_violation);
    j["passed"] = r.passed();
    out << j.dump() << "\n";
    all_passed = all_passed && r.passed();
    ++checks;
  };
  for (int s = 0; s < opts.seeds; ++s) {
    const std::uint64_t seed = opts.seed + static_cast<std::uint64_t>(s);
    for (int dim : opts.dims) {
      for (std::size_t a = 0; a < opts.alpha_lambdas.size(); ++a) {
        Rng rng = DeriveStream(seed, StreamPurpose::kAnalysis,
                               static_cast<std::uint64_t>(dim), a);
        QuadraticFamilyOptions fo;
        fo.dim = dim;
        fo.num_tasks = opts.num_tasks;
        const auto family = GenerateQuadraticFamily(fo, rng);
        const double al = opts.alpha_lambdas[a];
        const double alpha = al / family.lambda_max;
        const auto params = SmoothnessFromFamily(family, alpha, opts.phi_hat);
        emit(CheckLemma1(family, params, opts.pairs, rng), seed, dim, al);
        Eigen::VectorXd theta(dim);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int i = 0; i < dim; ++i) theta(i) = normal(rng);
        emit(CheckLemma2Bias(family, theta, alpha, opts.phi_hat,
                             opts.support_size, opts.query_size, opts.trials,
                             rng),
             seed, dim, al);
        emit(CheckLemma2SecondMoment(family, theta, alpha, opts.phi_hat,
                                     opts.support_size, opts.query_size,
                                     opts.trials, rng),
             seed, dim, al);
        emit(CheckLemma3(family, params, opts.points, rng), seed, dim, al);
      }
    }
  }
  if (opts.with_convergence_run) {
    Lemma4Setup setup;
    setup.seed = opts.seed;
    const auto r = RunLemma4Experiment(setup);
    const bool ok = r.final_grad_norm <= 10.0 * r.floor && r.converged_at >= 0 &&
                    static_cast<double>(r.converged_at) <= 5.0 * r.budget;
    ordered_json j;
    j["lemma_id"] = "lemma4";
    j["floor"] = Number(r.floor);
    j["budget"] = Number(r.budget);
    j["iterations"] = r.iterations;
    j["final_grad_norm"] = Number(r.final_grad_norm);
    j["converged_at"] = r.converged_at;
    j["passed"] = ok;
    out << j.dump() << "\n";
    all_passed = all_passed && ok;
    ++checks;
  }
  ordered_json summary;
  summary["summary"] = true;
  summary["checks"] = checks;
  summary["all_passed"] = all_passed;
  out << summary.dump() << "\n";
  return static_cast<int>(ExitCode::kOk);
}

int RunPlot(const std::vector<fs::path>& metrics_files, const fs::path& out) {
  if (metrics_files.empty()) throw ConfigError("plot needs at least one metrics file");
  std::vector<Series> series;
  for (const auto& f : metrics_files) {
    series.push_back({f.stem().string(), ReadMetricsFile(f)});
  }
  WriteFile(out, RenderSvg(series));
  return static_cast<int>(ExitCode::kOk);
}

}  // namespace metaclip::cli
