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

#ifndef METACLIP_CLI_PLOT_HPP_
#define METACLIP_CLI_PLOT_HPP_

#include <string>
#include <vector>

#include "metaclip/cli/metrics.hpp"

namespace metaclip::cli {

struct Series {
  std::string label;
  std::vector<MetricsRecord> records;
};

// Standalone SVG line chart of iteration against accuracy (when every
// series has it) or loss, one polyline per series. Output depends only on
// the inputs.
std::string RenderSvg(const std::vector<Series>& series);

}  // namespace metaclip::cli

#endif  // METACLIP_CLI_PLOT_HPP_
