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

#include "metaclip/cli/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "metaclip/errors.hpp"

namespace metaclip::cli {

using nlohmann::ordered_json;

namespace {

ordered_json Number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

double ReadNumber(const ordered_json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) {
    throw DataError("metrics line " + std::to_string(line) + ": missing '" +
                    key + "'");
  }
  const auto& v = j.at(key);
  if (v.is_null()) return std::numeric_limits<double>::infinity();
  if (!v.is_number()) {
    throw DataError("metrics line " + std::to_string(line) + ": '" + key +
                    "' is not a number");
  }
  return v.get<double>();
}

std::optional<double> ReadOptional(const ordered_json& j, const char* key,
                                   std::size_t line) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return ReadNumber(j, key, line);
}

}  // namespace

MetricsRecord FromReport(const StepReport& report,
                         std::optional<double> wall_ms) {
  MetricsRecord r;
  r.iter = report.iteration + 1;
  r.wall_ms = wall_ms;
  r.loss = report.mean_query_loss;
  r.accuracy = report.mean_query_accuracy;
  r.C = report.current_C;
  r.eps = report.eps_so_far;
  r.grad_norm = report.grad_norm_meta;
  return r;
}

std::string ToJsonLine(const MetricsRecord& r) {
  ordered_json j;
  j["iter"] = r.iter;
  j["wall_ms"] = r.wall_ms ? Number(*r.wall_ms) : ordered_json(nullptr);
  j["loss"] = Number(r.loss);
  if (r.accuracy) j["accuracy"] = Number(*r.accuracy);
  if (r.C) j["C"] = Number(*r.C);
  j["eps"] = Number(r.eps);
  j["grad_norm"] = Number(r.grad_norm);
  return j.dump();
}

std::vector<MetricsRecord> ReadMetricsFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read metrics file " + path.string());
  std::vector<MetricsRecord> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(text);
    } catch (const ordered_json::parse_error&) {
      throw DataError(path.string() + ": metrics line " + std::to_string(line) +
                      " is not valid JSON");
    }
    if (!j.is_object()) {
      throw DataError(path.string() + ": metrics line " + std::to_string(line) +
                      " is not an object");
    }
    try {
      MetricsRecord r;
      if (!j.contains("iter") || !j.at("iter").is_number_integer()) {
        throw DataError("metrics line " + std::to_string(line) +
                        ": 'iter' must be an integer");
      }
      r.iter = j.at("iter").get<std::int64_t>();
      r.wall_ms = ReadOptional(j, "wall_ms", line);
      r.loss = ReadNumber(j, "loss", line);
      r.accuracy = ReadOptional(j, "accuracy", line);
      r.C = ReadOptional(j, "C", line);
      r.eps = ReadNumber(j, "eps", line);
      r.grad_norm = ReadNumber(j, "grad_norm", line);
      out.push_back(r);
    } catch (const DataError& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  if (out.empty()) {
    throw DataError(path.string() + ": metrics file has no records");
  }
  return out;
}

std::string PrivacyJson(const PrivacyLedger& ledger, const EpsilonResult& eps,
                        double delta, bool is_private) {
  ordered_json j;
  if (!is_private) {
    j["epsilon"] = 0.0;
    j["delta"] = delta;
    j["mechanism"] = "non-private";
    j["ledger"] = ordered_json::array();
    return j.dump(2) + "\n";
  }
  j["epsilon"] = Number(eps.epsilon);
  j["delta"] = delta;
  j["mechanism"] = "gaussian";
  j["renyi_order"] = Number(eps.order);
  j["order_grid"] = ledger.order_grid();
  ordered_json events = ordered_json::array();
  for (const auto& e : ledger.events()) {
    events.push_back({{"sigma", e.sigma},
                      {"sampling_rate", e.sampling_rate},
                      {"steps", e.steps}});
  }
  j["ledger"] = std::move(events);
  return j.dump(2) + "\n";
}

}  // namespace metaclip::cli
