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

// Run configuration: a flat YAML mapping (plus an optional `accountant`
// sub-mapping). Every key is optional; see README for the grammar.

#ifndef METACLIP_CLI_CONFIG_HPP_
#define METACLIP_CLI_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "metaclip/algorithms.hpp"
#include "metaclip/nn.hpp"

namespace metaclip::cli {

enum class TaskKind { kSinusoid, kQuadratic, kOmniglot };

std::string ToString(TaskKind t);
TaskKind ParseTaskKind(const std::string& name);

inline constexpr const char* kOutputDirEnv = "METACLIP_OUTPUT_DIR";

struct RunConfig {
  TrainConfig train;
  TaskKind task = TaskKind::kSinusoid;
  std::optional<std::string> omniglot_root;
  std::string output_dir = "runs/latest";
  // When set (private runs only), sigma is calibrated to reach it.
  std::optional<double> target_epsilon;

  // Empty resolves to two layers of 64 (regression) or 128 (omniglot).
  std::vector<int> hidden;
  Activation activation = Activation::kRelu;

  int image_side = 28;
  int train_characters = 100;
  double train_fraction = 0.8;

  int quadratic_dim = 5;
  int quadratic_tasks = 20;
  double quadratic_lambda_min = 0.1;
  double quadratic_lambda_max = 1.0;
  double quadratic_b_scale = 1.0;
  bool quadratic_shared_curvature = false;
  double phi_hat = 0.5;

  int eval_episodes = 200;
  int eval_adapt_steps = 1;
  // Record wall-clock time in metrics (breaks byte-identical reruns).
  bool wall_clock = false;

  bool operator==(const RunConfig&) const = default;
};

// Number of distinct training tasks implied by the configuration, 0 when
// unbounded or unknown.
std::int64_t TaskPoolSize(const RunConfig& cfg);

// Parses YAML text. Unknown keys and out-of-domain values throw
// ConfigError naming the key. Defaults are resolved (eta_C, calibrated
// sigma) so that ParseConfigText(EmitConfig(c)) == c. The output directory
// environment override is not applied here.
RunConfig ParseConfigText(const std::string& text);

// Reads the file, parses it, applies METACLIP_OUTPUT_DIR and validates
// referenced paths.
RunConfig ParseAndValidate(const std::filesystem::path& config_file);

// Canonical YAML for a resolved configuration.
std::string EmitConfig(const RunConfig& cfg);

}  // namespace metaclip::cli

#endif  // METACLIP_CLI_CONFIG_HPP_
