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

// The train, eval, account, lemmas and plot operations behind the command
// line tool. Each returns a process exit code and throws metaclip::Error on
// failure.

#ifndef METACLIP_CLI_COMMANDS_HPP_
#define METACLIP_CLI_COMMANDS_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "metaclip/algorithms.hpp"
#include "metaclip/cli/config.hpp"
#include "metaclip/cli/model_io.hpp"

namespace metaclip::cli {

struct Problem {
  std::unique_ptr<Objective> objective;
  std::shared_ptr<const TaskDistribution> train_tasks;
  std::shared_ptr<const TaskDistribution> test_tasks;
  Activation activation = Activation::kRelu;
  HeadTag head = HeadTag::kRegression;
};

Problem MakeProblem(const RunConfig& cfg);

// Names of the files a successful run leaves in output_dir.
inline constexpr const char* kResolvedConfigFile = "config.resolved";
inline constexpr const char* kMetricsFile = "metrics.jsonl";
inline constexpr const char* kPrivacyFile = "privacy.json";
inline constexpr const char* kModelFile = "final_model";

// Trains and writes the run directory. The directory may exist but must
// not hold files other than the four run outputs.
int RunTrain(const RunConfig& cfg, std::ostream& log);

// Evaluates a saved model on cfg.eval_episodes held-out episodes and prints
// one JSON object.
int RunEval(const RunConfig& cfg, const std::filesystem::path& model_path,
            std::ostream& out);

struct AccountOptions {
  std::optional<double> sigma;
  std::optional<double> epsilon;
  double delta = 1e-5;
  double sampling_rate = 1.0;
  std::int64_t steps = 0;
  std::vector<double> order_grid = DefaultOrderGrid();
};

// Forward mode (sigma given) prints epsilon; inverse mode (epsilon given)
// prints the calibrated sigma. Both print the minimising order.
int RunAccount(const AccountOptions& opts, std::ostream& out);

struct LemmaOptions {
  std::uint64_t seed = 0;
  int seeds = 5;
  std::vector<int> dims = {2, 5, 10};
  std::vector<double> alpha_lambdas = {0.01, 0.05, 0.09};
  int num_tasks = 4;
  int pairs = 1000;
  int points = 1000;
  int trials = 10000;
  int support_size = 25;
  int query_size = 25;
  double phi_hat = 1.0;
  bool with_convergence_run = false;
};

// Prints one JSON record per check and a final summary record.
int RunLemmas(const LemmaOptions& opts, std::ostream& out);

// Renders the metrics files to an SVG at `out`; legend labels are the file
// stems.
int RunPlot(const std::vector<std::filesystem::path>& metrics_files,
            const std::filesystem::path& out);

}  // namespace metaclip::cli

#endif  // METACLIP_CLI_COMMANDS_HPP_
