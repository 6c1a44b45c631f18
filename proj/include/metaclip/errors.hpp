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

#ifndef METACLIP_ERRORS_HPP_
#define METACLIP_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace metaclip {

// Process exit codes used by the command-line tool. Stable contract.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept = 0;
};

// Invalid configuration, shape mismatch, or a value outside its domain.
class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kConfig; }
};

class DomainError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// A caller broke an operation's precondition (e.g. unclipped input).
class ContractError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Missing or corrupt input data, or a sampler that cannot be satisfied.
class DataError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kData; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kNumeric; }
};

// No noise multiplier in the search range meets the requested budget.
class CalibrationError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace metaclip

#endif  // METACLIP_ERRORS_HPP_
