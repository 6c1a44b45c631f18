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

#include <cmath>
#include <cstdlib>
#include <algorithm>
#include <fstream>
#include <set>
#include <sys/wait.h>
#include <sstream>
#include <string>

#include "metaclip/cli/commands.hpp"
#include "metaclip/cli/config.hpp"
#include "metaclip/cli/metrics.hpp"
#include "metaclip/cli/model_io.hpp"
#include "metaclip/cli/plot.hpp"
#include "metaclip/errors.hpp"
#include "test_util.hpp"
#include "json.hpp"

namespace metaclip::cli {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void Spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string ErrorText(const std::string& config) {
  try {
    ParseConfigText(config);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, EmptyGivesDefaults) {
  const RunConfig cfg = ParseConfigText("");
  EXPECT_EQ(cfg.train.algorithm, Algorithm::kMaml);
  EXPECT_EQ(cfg.train.privacy, PrivacyMode::kNone);
  EXPECT_EQ(cfg.train.delta, 1e-5);
  EXPECT_EQ(cfg.hidden, (std::vector<int>{64, 64}));
  ASSERT_TRUE(cfg.train.eta_C.has_value());
  EXPECT_EQ(*cfg.train.eta_C, cfg.train.meta_lr);
}

TEST(Config, ErrorsNameTheKey) {
  const std::string delta = ErrorText("delta: 1.5\n");
  EXPECT_NE(delta.find("delta"), std::string::npos);
  EXPECT_NE(delta.find("(0, 1)"), std::string::npos);
  EXPECT_NE(ErrorText("learning_rate: 0.1\n").find("learning_rate"), std::string::npos);
  EXPECT_NE(ErrorText("meta_batch: two\n").find("meta_batch"), std::string::npos);
  EXPECT_NE(ErrorText("accountant: {orders: [2]}\n").find("accountant.orders"),
            std::string::npos);
  EXPECT_FALSE(ErrorText("task: omniglot\n").empty());
  EXPECT_FALSE(ErrorText("- 1\n- 2\n").empty());
  EXPECT_FALSE(ErrorText("sigma:\n").empty());
}

TEST(Config, EmitParseRoundTrip) {
  const std::string text =
      "algorithm: metasgd\nprivacy: metaclip\nsigma: 1.3\nfixed_C: 0.7\n"
      "clip_mode: quantile_track\nmeta_iterations: 37\nseed: 9\nhidden: [8, 4]\n"
      "activation: tanh\naccountant: {order_grid: [2, 3.5, 8]}\n";
  const RunConfig a = ParseConfigText(text);
  const RunConfig b = ParseConfigText(EmitConfig(a));
  EXPECT_EQ(a, b);
  EXPECT_EQ(EmitConfig(a), EmitConfig(b));
}

TEST(Config, TargetEpsilonCalibratesSigma) {
  const RunConfig cfg = ParseConfigText(
      "privacy: vanilla_fixed_clip\ntarget_epsilon: 2\nmeta_iterations: 100\n");
  PrivacyLedger ledger(cfg.train.order_grid);
  ledger.Record(cfg.train.sigma, 1.0, 100);
  const auto eps = ToEpsDelta(ledger, cfg.train.delta);
  EXPECT_NEAR(eps.epsilon, 2.0, 1e-6);
}

TEST(Metrics, JsonLineRoundTrip) {
  TempDir dir("cli");
  MetricsRecord a;
  a.iter = 10;
  a.loss = 0.125;
  a.accuracy = 0.5;
  a.C = 2.0;
  a.eps = 1.5;
  a.grad_norm = 3.0;
  MetricsRecord b = a;
  b.iter = 20;
  b.accuracy.reset();
  b.C.reset();
  b.eps = std::numeric_limits<double>::infinity();
  Spit(dir / "m.jsonl", ToJsonLine(a) + "\n" + ToJsonLine(b) + "\n");
  const auto back = ReadMetricsFile(dir / "m.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], a);
  EXPECT_EQ(back[1], b);
  EXPECT_NE(ToJsonLine(b).find("\"eps\":null"), std::string::npos);
}

TEST(Metrics, ReaderNamesTheLine) {
  TempDir dir("cli");
  MetricsRecord a;
  Spit(dir / "bad.jsonl", ToJsonLine(a) + "\n{\"iter\": \n");
  try {
    ReadMetricsFile(dir / "bad.jsonl");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  Spit(dir / "empty.jsonl", "");
  EXPECT_THROW(ReadMetricsFile(dir / "empty.jsonl"), DataError);
}

TEST(Plot, PolylinePerSeriesAndDeterministic) {
  TempDir dir("cli");
  MetricsRecord a;
  a.iter = 1;
  a.loss = 2.0;
  MetricsRecord b = a;
  b.iter = 2;
  b.loss = 1.0;
  Spit(dir / "run.jsonl", ToJsonLine(a) + "\n" + ToJsonLine(b) + "\n");
  ASSERT_EQ(RunPlot({dir / "run.jsonl"}, dir / "a.svg"), 0);
  ASSERT_EQ(RunPlot({dir / "run.jsonl"}, dir / "b.svg"), 0);
  const std::string svg = Slurp(dir / "a.svg");
  EXPECT_EQ(svg, Slurp(dir / "b.svg"));
  const auto pos = svg.find("<polyline");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_EQ(svg.find("<polyline", pos + 1), std::string::npos);
  const auto pts = svg.find("points=\"", pos) + 8;
  const std::string points = svg.substr(pts, svg.find('"', pts) - pts);
  EXPECT_EQ(std::count(points.begin(), points.end(), ','), 2);
  EXPECT_NE(svg.find(">run<"), std::string::npos);
  Spit(dir / "empty.jsonl", "");
  EXPECT_THROW(RunPlot({dir / "empty.jsonl"}, dir / "c.svg"), DataError);
}

ModelBlob SampleBlob() {
  const NetworkSpec spec{{2, 3, 1}, Activation::kTanh, Head::Regression()};
  Rng rng(1);
  ModelBlob blob;
  blob.activation = Activation::kTanh;
  blob.model.theta = InitParams<double>(spec, rng);
  ParamVector alpha = blob.model.theta;
  alpha.values.setConstant(0.01);
  blob.model.alpha_vec = alpha;
  ClipState clip;
  clip.C = 0.75;
  blob.model.clip_state = clip;
  return blob;
}

TEST(ModelIo, RoundTripIsExact) {
  TempDir dir("cli");
  const ModelBlob blob = SampleBlob();
  SaveModel(dir / "m", blob);
  const ModelBlob back = LoadModel(dir / "m");
  EXPECT_EQ(back.activation, blob.activation);
  EXPECT_EQ(back.head, blob.head);
  EXPECT_EQ(back.model.theta.values, blob.model.theta.values);
  EXPECT_EQ(back.model.theta.shape_map.size(), 2u);
  ASSERT_TRUE(back.model.alpha_vec);
  EXPECT_EQ(back.model.alpha_vec->values, blob.model.alpha_vec->values);
  ASSERT_TRUE(back.model.clip_state);
  EXPECT_EQ(back.model.clip_state->C, 0.75);
  EXPECT_EQ(EncodeModel(back), EncodeModel(blob));
}

TEST(ModelIo, CorruptBlobsAreDataErrors) {
  const std::string bytes = EncodeModel(SampleBlob());
  EXPECT_THROW(DecodeModel(""), DataError);
  EXPECT_THROW(DecodeModel("XXXXX" + bytes.substr(5)), DataError);
  EXPECT_THROW(DecodeModel(bytes.substr(0, bytes.size() - 3)), DataError);
  EXPECT_THROW(DecodeModel(bytes + "x"), DataError);
  std::string bad_act = bytes;
  bad_act[5] = 7;
  EXPECT_THROW(DecodeModel(bad_act), DataError);
  TempDir dir("cli");
  EXPECT_THROW(LoadModel(dir / "missing"), DataError);
}

RunConfig SmallRun(const fs::path& out, const std::string& extra = "") {
  RunConfig cfg = ParseConfigText(
      "privacy: metaclip\nsigma: 1.0\nmeta_iterations: 25\neval_every: 10\n"
      "meta_batch: 2\nhidden: [8]\nshot: 5\nquery_per_class: 5\n"
      "eval_episodes: 5\n" + extra);
  cfg.output_dir = out.string();
  return cfg;
}

TEST(Train, WritesExactlyTheRunFiles) {
  TempDir dir("cli");
  std::ostringstream log;
  ASSERT_EQ(RunTrain(SmallRun(dir / "run"), log), 0);
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(dir / "run")) {
    names.insert(e.path().filename().string());
  }
  EXPECT_EQ(names, (std::set<std::string>{kResolvedConfigFile, kMetricsFile,
                                          kPrivacyFile, kModelFile}));
  const auto records = ReadMetricsFile(dir / "run" / kMetricsFile);
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records.back().iter, 25);
  const auto privacy = nlohmann::json::parse(Slurp(dir / "run" / kPrivacyFile));
  EXPECT_NEAR(records.back().eps, privacy["epsilon"].get<double>(), 1e-9);
  EXPECT_EQ(ParseConfigText(Slurp(dir / "run" / kResolvedConfigFile)).train,
            SmallRun(dir / "run").train);
}

TEST(Train, ByteIdenticalReruns) {
  TempDir dir("cli");
  std::ostringstream log;
  ASSERT_EQ(RunTrain(SmallRun(dir / "a"), log), 0);
  ASSERT_EQ(RunTrain(SmallRun(dir / "b"), log), 0);
  for (const char* f : {kMetricsFile, kPrivacyFile, kModelFile}) {
    EXPECT_EQ(Slurp(dir / "a" / f), Slurp(dir / "b" / f)) << f;
  }
}

TEST(Train, RefusesForeignFilesInOutputDir) {
  TempDir dir("cli");
  fs::create_directories(dir / "run");
  Spit(dir / "run" / "notes.txt", "keep me");
  std::ostringstream log;
  EXPECT_THROW(RunTrain(SmallRun(dir / "run"), log), ConfigError);
  EXPECT_EQ(Slurp(dir / "run" / "notes.txt"), "keep me");
}

TEST(Eval, ScoresSavedModel) {
  TempDir dir("cli");
  std::ostringstream log;
  const RunConfig cfg = SmallRun(dir / "run");
  ASSERT_EQ(RunTrain(cfg, log), 0);
  std::ostringstream out;
  ASSERT_EQ(RunEval(cfg, dir / "run" / kModelFile, out), 0);
  const auto j = nlohmann::json::parse(out.str());
  EXPECT_EQ(j["metric"], "mse");
  EXPECT_EQ(j["episodes"], 5);
  EXPECT_TRUE(std::isfinite(j["mean"].get<double>()));
  RunConfig other = cfg;
  other.hidden = {4};
  EXPECT_THROW(RunEval(other, dir / "run" / kModelFile, out), ConfigError);
}

TEST(Account, ForwardInverseRoundTrip) {
  AccountOptions fwd;
  fwd.sigma = 1.1;
  fwd.sampling_rate = 0.01;
  fwd.steps = 1000;
  std::ostringstream a;
  ASSERT_EQ(RunAccount(fwd, a), 0);
  const double eps = nlohmann::json::parse(a.str())["epsilon"].get<double>();
  AccountOptions inv = fwd;
  inv.sigma.reset();
  inv.epsilon = eps;
  std::ostringstream b;
  ASSERT_EQ(RunAccount(inv, b), 0);
  EXPECT_NEAR(nlohmann::json::parse(b.str())["sigma"].get<double>(), 1.1, 1e-6);

  double last = std::numeric_limits<double>::infinity();
  for (double delta : {1e-7, 1e-6, 1e-5, 1e-4}) {
    fwd.delta = delta;
    std::ostringstream s;
    RunAccount(fwd, s);
    const double e = nlohmann::json::parse(s.str())["epsilon"].get<double>();
    EXPECT_LT(e, last);
    last = e;
  }
  fwd.steps = 0;
  std::ostringstream z;
  RunAccount(fwd, z);
  EXPECT_EQ(nlohmann::json::parse(z.str())["epsilon"].get<double>(), 0.0);
}

TEST(Lemmas, SummaryRecord) {
  LemmaOptions opts;
  opts.seeds = 1;
  opts.dims = {2};
  opts.alpha_lambdas = {0.05};
  opts.pairs = opts.points = 100;
  opts.trials = 2000;
  std::ostringstream out;
  ASSERT_EQ(RunLemmas(opts, out), 0);
  std::istringstream lines(out.str());
  std::string line, last;
  int n = 0;
  while (std::getline(lines, line)) {
    last = line;
    ++n;
  }
  const auto summary = nlohmann::json::parse(last);
  EXPECT_TRUE(summary["summary"].get<bool>());
  EXPECT_TRUE(summary["all_passed"].get<bool>());
  EXPECT_EQ(summary["checks"].get<int>(), n - 1);
}

int RunBinary(const std::string& args) {
  const std::string cmd =
      std::string(METACLIP_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

TEST(Binary, ExitCodes) {
  TempDir dir("cli");
  Spit(dir / "bad.yaml", "delta: 1.5\n");
  Spit(dir / "unknown.yaml", "foo: 1\n");
  Spit(dir / "empty.jsonl", "");
  Spit(dir / "ok.yaml", "meta_iterations: 3\neval_every: 1\nhidden: [4]\n"
                        "eval_episodes: 2\noutput_dir: " + (dir / "run").string() + "\n");
  EXPECT_EQ(RunBinary("--help"), 0);
  EXPECT_EQ(RunBinary("train " + (dir / "bad.yaml").string()), 2);
  EXPECT_EQ(RunBinary("train " + (dir / "unknown.yaml").string()), 2);
  EXPECT_EQ(RunBinary("account --sigma 1 --eps 1 --steps 5"), 2);
  EXPECT_EQ(RunBinary("account --eps 1e-9 --steps 1000"), 4);
  EXPECT_EQ(RunBinary("plot " + (dir / "empty.jsonl").string() + " -o " +
                (dir / "p.svg").string()),
            3);
  EXPECT_EQ(RunBinary("train " + (dir / "ok.yaml").string()), 0);
  EXPECT_EQ(RunBinary("eval " + (dir / "ok.yaml").string()), 0);
  EXPECT_EQ(RunBinary("eval " + (dir / "ok.yaml").string() + " --model " +
                (dir / "nope").string()),
            3);
}

}  // namespace
}  // namespace metaclip::cli
