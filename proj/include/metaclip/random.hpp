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

#ifndef METACLIP_RANDOM_HPP_
#define METACLIP_RANDOM_HPP_

#include <cstdint>
#include <random>

namespace metaclip {

using Rng = std::mt19937_64;

// Independent stream identifiers. Every random draw in training comes from a
// stream keyed by (global seed, purpose, counter, sub-counter), so results
// do not depend on the order in which workers run.
enum class StreamPurpose : std::uint64_t {
  kInit = 1,
  kEpisode = 2,
  kInnerNoise = 3,
  kClipInit = 4,
  kEvaluation = 5,
  kAnalysis = 6,
  kDataSplit = 7,
  kTest = 99,
};

namespace detail {
constexpr std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

inline Rng DeriveStream(std::uint64_t seed, StreamPurpose purpose,
                        std::uint64_t counter = 0,
                        std::uint64_t sub_counter = 0) {
  std::uint64_t h = detail::SplitMix64(seed);
  h = detail::SplitMix64(h ^ static_cast<std::uint64_t>(purpose));
  h = detail::SplitMix64(h ^ counter);
  h = detail::SplitMix64(h ^ (sub_counter + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(h),
                    static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32)};
  return Rng(seq);
}

}  // namespace metaclip

#endif  // METACLIP_RANDOM_HPP_
