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

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metaclip/cli/commands.hpp"
#include "metaclip/errors.hpp"

namespace {

namespace fs = std::filesystem;
using namespace metaclip;

int Dispatch(int argc, char** argv) {
  CLI::App app{"Differentially private meta-learning with adaptive clipping"};
  app.require_subcommand(1);

  std::string train_config;
  auto* train = app.add_subcommand("train", "run meta-training from a config");
  train->add_option("config", train_config, "YAML config file")->required();

  std::string eval_config;
  std::string eval_model;
  auto* eval = app.add_subcommand("eval", "evaluate a saved model");
  eval->add_option("config", eval_config, "YAML config file")->required();
  eval->add_option("--model", eval_model, "model blob (default: <output_dir>/final_model)");

  cli::AccountOptions account_opts;
  double sigma = 0.0;
  double eps = 0.0;
  auto* account = app.add_subcommand("account", "privacy accounting");
  auto* sigma_opt = account->add_option("--sigma", sigma, "noise multiplier");
  auto* eps_opt = account->add_option("--eps", eps, "target epsilon");
  sigma_opt->excludes(eps_opt);
  account->add_option("--delta", account_opts.delta, "target delta")
      ->capture_default_str();
  account->add_option("--q", account_opts.sampling_rate, "sampling rate")
      ->capture_default_str();
  account->add_option("--steps", account_opts.steps, "number of noisy steps")
      ->capture_default_str();
  account->add_option("--orders", account_opts.order_grid, "Renyi order grid");

  cli::LemmaOptions lemma_opts;
  auto* lemmas = app.add_subcommand("lemmas", "numerical checks of the smoothness and variance bounds");
  lemmas->add_option("--seed", lemma_opts.seed)->capture_default_str();
  lemmas->add_option("--seeds", lemma_opts.seeds)->capture_default_str();
  lemmas->add_option("--dims", lemma_opts.dims);
  lemmas->add_option("--alpha-lambda", lemma_opts.alpha_lambdas);
  lemmas->add_option("--tasks", lemma_opts.num_tasks)->capture_default_str();
  lemmas->add_option("--trials", lemma_opts.trials)->capture_default_str();
  lemmas->add_flag("--convergence", lemma_opts.with_convergence_run,
                   "also run the stationary-point convergence experiment");

  std::vector<std::string> plot_inputs;
  std::string plot_out;
  auto* plot = app.add_subcommand("plot", "render metrics files to SVG");
  plot->add_option("metrics", plot_inputs, "metrics.jsonl files")->required();
  plot->add_option("-o,--out", plot_out, "output SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  if (train->parsed()) {
    return cli::RunTrain(cli::ParseAndValidate(train_config), std::cerr);
  }
  if (eval->parsed()) {
    const auto cfg = cli::ParseAndValidate(eval_config);
    const fs::path model =
        eval_model.empty() ? fs::path(cfg.output_dir) / cli::kModelFile
                           : fs::path(eval_model);
    return cli::RunEval(cfg, model, std::cout);
  }
  if (account->parsed()) {
    if (*sigma_opt) account_opts.sigma = sigma;
    if (*eps_opt) account_opts.epsilon = eps;
    return cli::RunAccount(account_opts, std::cout);
  }
  if (lemmas->parsed()) return cli::RunLemmas(lemma_opts, std::cout);
  std::vector<fs::path> files(plot_inputs.begin(), plot_inputs.end());
  return cli::RunPlot(files, plot_out);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return Dispatch(argc, argv);
  } catch (const Error& e) {
    std::cerr << "metaclip: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "metaclip: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    std::cerr << "metaclip: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kNumeric);
  }
}
