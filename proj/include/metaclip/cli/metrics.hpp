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

#ifndef METACLIP_CLI_METRICS_HPP_
#define METACLIP_CLI_METRICS_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "metaclip/algorithms.hpp"
#include "metaclip/privacy.hpp"

namespace metaclip::cli {

// One line of metrics.jsonl. iter counts completed meta-iterations.
struct MetricsRecord {
  std::int64_t iter = 0;
  std::optional<double> wall_ms;
  double loss = 0.0;
  std::optional<double> accuracy;
  std::optional<double> C;
  // Infinite epsilon (sigma = 0 with clipping) is written as null and read
  // back as +inf.
  double eps = 0.0;
  double grad_norm = 0.0;

  bool operator==(const MetricsRecord&) const = default;
};

MetricsRecord FromReport(const StepReport& report,
                         std::optional<double> wall_ms);

// Compact single-line JSON, keys in a fixed order.
std::string ToJsonLine(const MetricsRecord& record);

// Throws DataError naming the 1-based line for malformed records, and for
// a file with no records.
std::vector<MetricsRecord> ReadMetricsFile(const std::filesystem::path& path);

// privacy.json body. Non-private runs report epsilon 0 with
// "mechanism": "non-private".
std::string PrivacyJson(const PrivacyLedger& ledger, const EpsilonResult& eps,
                        double delta, bool is_private);

}  // namespace metaclip::cli

#endif  // METACLIP_CLI_METRICS_HPP_
