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

#ifndef METACLIP_TESTS_TEST_UTIL_HPP_
#define METACLIP_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "metaclip/omniglot.hpp"
#include "metaclip/random.hpp"

namespace metaclip::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("metaclip_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

// Central differences of a scalar function.
inline Eigen::VectorXd CentralDifference(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x;
    Eigen::VectorXd xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||, floor).
inline double RelativeError(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                            double floor = 1e-8) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

inline Eigen::VectorXd RandomVector(Eigen::Index n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

// root/alphabet_a/character_c/img_i.png, side x side. Pixel (0, 0) encodes
// the global character index and pixel (0, 1) the image index, so every
// image is distinct; the rest is a per-character pattern.
inline void WriteSyntheticOmniglot(const std::filesystem::path& root,
                                   int alphabets, int chars_per_alphabet,
                                   int images_per_char, int side) {
  int global = 0;
  for (int a = 0; a < alphabets; ++a) {
    for (int c = 0; c < chars_per_alphabet; ++c, ++global) {
      const auto dir = root / ("alphabet_" + std::to_string(a)) /
                       ("character_" + std::to_string(c));
      std::filesystem::create_directories(dir);
      for (int i = 0; i < images_per_char; ++i) {
        Eigen::MatrixXd px(side, side);
        for (int r = 0; r < side; ++r) {
          for (int k = 0; k < side; ++k) {
            px(r, k) = ((r * 7 + k * 3 + global * 5) % 11) / 10.0;
          }
        }
        px(0, 0) = global / 255.0;
        px(0, 1) = i / 255.0;
        WriteGrayPng(dir / ("img_" + std::to_string(i) + ".png"), px);
      }
    }
  }
}

}  // namespace metaclip::testing

#endif  // METACLIP_TESTS_TEST_UTIL_HPP_
