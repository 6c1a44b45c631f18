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

#include "metaclip/omniglot.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace metaclip {

namespace fs = std::filesystem;

namespace {

bool HasPngSignature(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::array<unsigned char, 8> sig{};
  if (!in.read(reinterpret_cast<char*>(sig.data()), sig.size())) return false;
  return png_sig_cmp(sig.data(), 0, sig.size()) == 0;
}

std::vector<fs::path> SortedEntries(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (directories ? entry.is_directory() : entry.is_regular_file()) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Resampling matrix R (out x in) with area-overlap weights; each row sums
// to one.
Eigen::MatrixXd AreaWeights(int out, int in) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(out, in);
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    const double lo = i * scale;
    const double hi = (i + 1) * scale;
    for (int j = static_cast<int>(lo); j < in && j < hi; ++j) {
      const double overlap = std::min<double>(hi, j + 1) - std::max<double>(lo, j);
      if (overlap > 0) r(i, j) = overlap / scale;
    }
  }
  return r;
}

}  // namespace

Eigen::MatrixXd ReadGrayPng(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw DataError("cannot decode image " + path.string() + ": " +
                    image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw DataError("cannot decode image " + path.string() + ": " + msg);
  }
  Eigen::MatrixXd out(image.height, image.width);
  for (png_uint_32 r = 0; r < image.height; ++r) {
    for (png_uint_32 c = 0; c < image.width; ++c) {
      out(r, c) = buffer[r * image.width + c] / 255.0;
    }
  }
  return out;
}

void WriteGrayPng(const fs::path& path, const Eigen::MatrixXd& pixels) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(pixels.cols());
  image.height = static_cast<png_uint_32>(pixels.rows());
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  for (Eigen::Index r = 0; r < pixels.rows(); ++r) {
    for (Eigen::Index c = 0; c < pixels.cols(); ++c) {
      const double v = std::clamp(pixels(r, c), 0.0, 1.0);
      buffer[r * pixels.cols() + c] = static_cast<png_byte>(std::lround(v * 255));
    }
  }
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0,
                               nullptr)) {
    throw DataError("cannot write image " + path.string() + ": " +
                    image.message);
  }
}

Eigen::MatrixXd BoxResample(const Eigen::MatrixXd& image, int rows, int cols) {
  if (rows < 1 || cols < 1) throw ConfigError("resample target must be >= 1");
  const Eigen::MatrixXd rh = AreaWeights(rows, static_cast<int>(image.rows()));
  const Eigen::MatrixXd rw = AreaWeights(cols, static_cast<int>(image.cols()));
  return rh * image * rw.transpose();
}

OmniglotStore OmniglotStore::Load(const fs::path& root, int image_side) {
  if (image_side < 1) throw ConfigError("image_side must be >= 1");
  if (!fs::is_directory(root)) {
    throw DataError("omniglot root " + root.string() + " is not a directory");
  }
  OmniglotStore store;
  store.root_ = root;
  store.image_side_ = image_side;
  std::vector<std::string> bad;
  std::set<std::string> alphabets;
  for (const auto& alphabet : SortedEntries(root, true)) {
    for (const auto& character : SortedEntries(alphabet, true)) {
      OmniglotCharacter ch;
      ch.alphabet = alphabet.filename().string();
      ch.character = character.filename().string();
      for (const auto& file : SortedEntries(character, false)) {
        if (file.extension() != ".png") continue;
        if (!HasPngSignature(file)) {
          bad.push_back(file.string());
          continue;
        }
        ch.images.push_back(file);
      }
      if (ch.images.empty()) continue;
      ch.flagged = ch.images.size() < kExpectedImages;
      alphabets.insert(ch.alphabet);
      store.characters_.push_back(std::move(ch));
    }
  }
  if (!bad.empty()) {
    std::string msg = "corrupt image files:";
    for (const auto& p : bad) msg += "\n  " + p;
    throw DataError(msg);
  }
  if (store.characters_.empty()) {
    throw DataError("no character images found under " + root.string());
  }
  store.num_alphabets_ = alphabets.size();
  return store;
}

Eigen::VectorXd OmniglotStore::Image(const fs::path& path) const {
  const Eigen::MatrixXd full = ReadGrayPng(path);
  const Eigen::MatrixXd small = BoxResample(full, image_side_, image_side_);
  // Row-major flatten.
  Eigen::VectorXd flat(small.size());
  for (Eigen::Index r = 0; r < small.rows(); ++r) {
    flat.segment(r * small.cols(), small.cols()) = small.row(r).transpose();
  }
  return flat;
}

OmniglotTaskDistribution::OmniglotTaskDistribution(
    std::shared_ptr<const OmniglotStore> store,
    std::vector<std::size_t> character_ids)
    : store_(std::move(store)), character_ids_(std::move(character_ids)) {
  if (!store_) throw ConfigError("omniglot distribution needs a store");
  for (auto id : character_ids_) {
    if (id >= store_->characters().size()) {
      throw ConfigError("character id out of range");
    }
  }
}

Episode OmniglotTaskDistribution::SampleEpisode(int way, int shot,
                                                int query_per_class,
                                                Rng& rng) const {
  if (way < 1 || shot < 1 || query_per_class < 1) {
    throw ConfigError("way, shot and query_per_class must be >= 1");
  }
  const std::size_t need = static_cast<std::size_t>(shot + query_per_class);
  std::vector<std::size_t> eligible;
  for (auto id : character_ids_) {
    if (store_->characters()[id].images.size() >= need) eligible.push_back(id);
  }
  if (eligible.size() < static_cast<std::size_t>(way)) {
    throw DataError("episode needs " + std::to_string(way) +
                    " classes with >= " + std::to_string(need) +
                    " images; only " + std::to_string(eligible.size()) +
                    " available");
  }
  std::vector<std::size_t> classes;
  std::sample(eligible.begin(), eligible.end(), std::back_inserter(classes),
              way, rng);
  std::shuffle(classes.begin(), classes.end(), rng);

  const int dim = input_dim();
  Episode ep;
  ep.way = way;
  ep.shot = shot;
  ep.support.inputs.resize(way * shot, dim);
  ep.query.inputs.resize(way * query_per_class, dim);
  std::uint64_t id_hash = 1469598103934665603ULL;
  for (int c = 0; c < way; ++c) {
    const auto& images = store_->characters()[classes[c]].images;
    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int s = 0; s < shot; ++s) {
      ep.support.inputs.row(c * shot + s) =
          store_->Image(images[order[s]]).transpose();
      ep.support.labels.push_back(c);
    }
    for (int q = 0; q < query_per_class; ++q) {
      ep.query.inputs.row(c * query_per_class + q) =
          store_->Image(images[order[shot + q]]).transpose();
      ep.query.labels.push_back(c);
    }
    id_hash = (id_hash ^ classes[c]) * 1099511628211ULL;
  }
  ep.task_id = id_hash;
  return ep;
}

OmniglotSplit SplitCharacters(const OmniglotStore& store,
                              double train_fraction, std::uint64_t seed,
                              int max_train_characters) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must be in (0, 1)");
  }
  std::vector<std::size_t> ids(store.characters().size());
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng = DeriveStream(seed, StreamPurpose::kDataSplit);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::lround(train_fraction * static_cast<double>(ids.size())));
  OmniglotSplit split;
  split.train.assign(ids.begin(), ids.begin() + n_train);
  split.test.assign(ids.begin() + n_train, ids.end());
  if (max_train_characters > 0 &&
      split.train.size() > static_cast<std::size_t>(max_train_characters)) {
    split.train.resize(static_cast<std::size_t>(max_train_characters));
  }
  return split;
}

}  // namespace metaclip
