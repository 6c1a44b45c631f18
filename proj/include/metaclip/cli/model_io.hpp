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

// final_model layout, all integers and doubles little-endian:
//
//   char[5]  "MCLP1"
//   u8       activation (0 relu, 1 tanh)
//   u8       head (0 scalar regression, 1 logits, 2 plain vector)
//   u32      layer count L
//   L x (u32 rows, u32 cols, u32 bias_len)
//   u64      N, the parameter count
//   N x f64  theta
//   u8       has_alpha, then N x f64 per-parameter rates if 1
//   u8       has_clip, then f64 clip norm if 1

#ifndef METACLIP_CLI_MODEL_IO_HPP_
#define METACLIP_CLI_MODEL_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <string>

#include "metaclip/algorithms.hpp"

namespace metaclip::cli {

enum class HeadTag : std::uint8_t { kRegression = 0, kLogits = 1, kVector = 2 };

struct ModelBlob {
  Activation activation = Activation::kRelu;
  HeadTag head = HeadTag::kRegression;
  MetaModel model;
};

std::string EncodeModel(const ModelBlob& blob);
ModelBlob DecodeModel(const std::string& bytes);

void SaveModel(const std::filesystem::path& path, const ModelBlob& blob);
ModelBlob LoadModel(const std::filesystem::path& path);

}  // namespace metaclip::cli

#endif  // METACLIP_CLI_MODEL_IO_HPP_
