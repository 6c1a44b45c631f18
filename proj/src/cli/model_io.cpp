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

#include "metaclip/cli/model_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "metaclip/errors.hpp"

namespace metaclip::cli {

namespace {

constexpr char kMagic[] = "MCLP1";
constexpr std::size_t kMagicLen = 5;

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <typename T>
void Put(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T Get() {
    if (pos_ + sizeof(T) > bytes_.size()) {
      throw DataError("model blob is truncated");
    }
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(raw, raw + sizeof(T));
    }
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::string Take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw DataError("model blob is truncated");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void PutVector(std::string& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) Put<double>(out, v(i));
}

Eigen::VectorXd GetVector(Reader& in, std::uint64_t n) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::uint64_t i = 0; i < n; ++i) {
    v(static_cast<Eigen::Index>(i)) = in.Get<double>();
  }
  return v;
}

}  // namespace

std::string EncodeModel(const ModelBlob& blob) {
  const auto& theta = blob.model.theta;
  std::string out(kMagic, kMagicLen);
  Put<std::uint8_t>(out, blob.activation == Activation::kRelu ? 0 : 1);
  Put<std::uint8_t>(out, static_cast<std::uint8_t>(blob.head));
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(theta.shape_map.size()));
  for (const auto& s : theta.shape_map) {
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(s.rows));
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(s.cols));
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(s.bias_len));
  }
  Put<std::uint64_t>(out, static_cast<std::uint64_t>(theta.size()));
  PutVector(out, theta.values);
  Put<std::uint8_t>(out, blob.model.alpha_vec ? 1 : 0);
  if (blob.model.alpha_vec) PutVector(out, blob.model.alpha_vec->values);
  Put<std::uint8_t>(out, blob.model.clip_state ? 1 : 0);
  if (blob.model.clip_state) Put<double>(out, blob.model.clip_state->C);
  return out;
}

ModelBlob DecodeModel(const std::string& bytes) {
  Reader in(bytes);
  if (bytes.size() < kMagicLen || in.Take(kMagicLen) != kMagic) {
    throw DataError("not a model blob (bad magic)");
  }
  ModelBlob blob;
  const auto act = in.Get<std::uint8_t>();
  if (act > 1) throw DataError("model blob has unknown activation");
  blob.activation = act == 0 ? Activation::kRelu : Activation::kTanh;
  const auto head = in.Get<std::uint8_t>();
  if (head > 2) throw DataError("model blob has unknown head");
  blob.head = static_cast<HeadTag>(head);
  const auto layers = in.Get<std::uint32_t>();
  auto& theta = blob.model.theta;
  std::uint64_t expected = 0;
  for (std::uint32_t l = 0; l < layers; ++l) {
    LayerShape s;
    s.layer_index = static_cast<int>(l);
    s.rows = static_cast<int>(in.Get<std::uint32_t>());
    s.cols = static_cast<int>(in.Get<std::uint32_t>());
    s.bias_len = static_cast<int>(in.Get<std::uint32_t>());
    expected += static_cast<std::uint64_t>(s.size());
    theta.shape_map.push_back(s);
  }
  const auto n = in.Get<std::uint64_t>();
  if (n != expected) throw DataError("model blob shape table does not match N");
  theta.values = GetVector(in, n);
  if (in.Get<std::uint8_t>() == 1) {
    ParamVector alpha = theta;
    alpha.values = GetVector(in, n);
    blob.model.alpha_vec = std::move(alpha);
  }
  if (in.Get<std::uint8_t>() == 1) {
    ClipState clip;
    clip.C = in.Get<double>();
    blob.model.clip_state = clip;
  }
  if (!in.done()) throw DataError("model blob has trailing bytes");
  return blob;
}

void SaveModel(const std::filesystem::path& path, const ModelBlob& blob) {
  std::ofstream out(path, std::ios::binary);
  const std::string bytes = EncodeModel(blob);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write model to " + path.string());
}

ModelBlob LoadModel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read model " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return DecodeModel(buf.str());
}

}  // namespace metaclip::cli
