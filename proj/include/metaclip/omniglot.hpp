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

// Omniglot ingestion. Expected layout: root/<alphabet>/<character>/<img>.png.
// Images are decoded on demand to grayscale in [0, 1] and box-filtered down
// to image_side x image_side.

#ifndef METACLIP_OMNIGLOT_HPP_
#define METACLIP_OMNIGLOT_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metaclip/tasks.hpp"

namespace metaclip {

struct OmniglotCharacter {
  std::string alphabet;
  std::string character;
  std::vector<std::filesystem::path> images;
  // Fewer than kExpectedImages images on disk.
  bool flagged = false;
};

class OmniglotStore {
 public:
  static constexpr int kExpectedImages = 20;

  static OmniglotStore Load(const std::filesystem::path& root,
                            int image_side);

  const std::filesystem::path& root() const { return root_; }
  int image_side() const { return image_side_; }
  const std::vector<OmniglotCharacter>& characters() const {
    return characters_;
  }
  std::size_t num_alphabets() const { return num_alphabets_; }

  // Row-major flattened image, length image_side^2.
  Eigen::VectorXd Image(const std::filesystem::path& path) const;

 private:
  std::filesystem::path root_;
  int image_side_ = 28;
  std::vector<OmniglotCharacter> characters_;
  std::size_t num_alphabets_ = 0;
};

// Grayscale decode in [0, 1]; throws DataError on unreadable files.
Eigen::MatrixXd ReadGrayPng(const std::filesystem::path& path);
void WriteGrayPng(const std::filesystem::path& path,
                  const Eigen::MatrixXd& pixels);
// Area-weighted resampling to (rows x cols).
Eigen::MatrixXd BoxResample(const Eigen::MatrixXd& image, int rows, int cols);

// N-way K-shot episodes over a subset of characters. Classes are sampled
// uniformly without replacement among characters holding enough images;
// images within a class are sampled without replacement.
class OmniglotTaskDistribution final : public TaskDistribution {
 public:
  OmniglotTaskDistribution(std::shared_ptr<const OmniglotStore> store,
                           std::vector<std::size_t> character_ids);

  Episode SampleEpisode(int way, int shot, int query_per_class,
                        Rng& rng) const override;
  int input_dim() const override {
    return store_->image_side() * store_->image_side();
  }
  bool is_classification() const override { return true; }
  std::int64_t task_pool_size() const override {
    return static_cast<std::int64_t>(character_ids_.size());
  }

  const std::vector<std::size_t>& character_ids() const {
    return character_ids_;
  }

 private:
  std::shared_ptr<const OmniglotStore> store_;
  std::vector<std::size_t> character_ids_;
};

struct OmniglotSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Character-level split: a seeded shuffle, the first train_fraction of
// characters train. max_train_characters > 0 truncates the training side.
OmniglotSplit SplitCharacters(const OmniglotStore& store,
                              double train_fraction, std::uint64_t seed,
                              int max_train_characters = 0);

}  // namespace metaclip

#endif  // METACLIP_OMNIGLOT_HPP_
