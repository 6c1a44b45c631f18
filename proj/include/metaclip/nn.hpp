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

// Minimal fully-connected network: forward pass, mean loss, batch and
// per-example gradients by manual backpropagation.
//
// Parameters live in one flat vector. Layer l occupies a contiguous block:
// the (rows x cols) weight matrix in column-major order, followed by its
// bias of length rows. rows is the layer's output width, cols its input
// width.

#ifndef METACLIP_NN_HPP_
#define METACLIP_NN_HPP_

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metaclip/errors.hpp"
#include "metaclip/random.hpp"

namespace metaclip {

enum class Activation { kRelu, kTanh };
enum class LossKind { kMse, kCrossEntropy };

struct Head {
  enum class Kind { kRegressionScalar, kLogits };
  Kind kind = Kind::kRegressionScalar;
  int n_classes = 0;

  static Head Regression() { return {Kind::kRegressionScalar, 0}; }
  static Head Logits(int n) { return {Kind::kLogits, n}; }
  int output_dim() const { return kind == Kind::kLogits ? n_classes : 1; }
  LossKind default_loss() const {
    return kind == Kind::kLogits ? LossKind::kCrossEntropy : LossKind::kMse;
  }
  bool operator==(const Head&) const = default;
};

// layer_widths = {input_dim, hidden..., output_dim}.
struct NetworkSpec {
  std::vector<int> layer_widths;
  Activation activation = Activation::kRelu;
  Head head;

  int input_dim() const { return layer_widths.front(); }
  int num_layers() const { return static_cast<int>(layer_widths.size()) - 1; }

  void Validate() const {
    if (layer_widths.size() < 2) {
      throw ConfigError("network needs at least an input and output width");
    }
    for (int w : layer_widths) {
      if (w < 1) throw ConfigError("network widths must be >= 1");
    }
    if (head.kind == Head::Kind::kLogits && head.n_classes < 1) {
      throw ConfigError("logits head needs n_classes >= 1");
    }
    if (layer_widths.back() != head.output_dim()) {
      throw ConfigError("final width " + std::to_string(layer_widths.back()) +
                        " does not match head output " +
                        std::to_string(head.output_dim()));
    }
  }

  bool operator==(const NetworkSpec&) const = default;
};

struct LayerShape {
  int layer_index = 0;
  int rows = 0;
  int cols = 0;
  int bias_len = 0;

  Eigen::Index size() const {
    return static_cast<Eigen::Index>(rows) * cols + bias_len;
  }
  bool operator==(const LayerShape&) const = default;
};

inline std::vector<LayerShape> ShapeMap(const NetworkSpec& spec) {
  std::vector<LayerShape> shapes;
  for (int l = 0; l < spec.num_layers(); ++l) {
    shapes.push_back({l, spec.layer_widths[l + 1], spec.layer_widths[l],
                      spec.layer_widths[l + 1]});
  }
  return shapes;
}

inline Eigen::Index ParamCount(const std::vector<LayerShape>& shapes) {
  Eigen::Index n = 0;
  for (const auto& s : shapes) n += s.size();
  return n;
}

template <typename Scalar>
struct ParamVectorT {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Vector values;
  std::vector<LayerShape> shape_map;

  static ParamVectorT Zeros(const NetworkSpec& spec) {
    ParamVectorT p;
    p.shape_map = ShapeMap(spec);
    p.values = Vector::Zero(ParamCount(p.shape_map));
    return p;
  }

  // A plain vector with a single (n x 1) block and no bias.
  static ParamVectorT Flat(Vector v) {
    ParamVectorT p;
    p.shape_map = {{0, static_cast<int>(v.size()), 1, 0}};
    p.values = std::move(v);
    return p;
  }

  Eigen::Index size() const { return values.size(); }

  Eigen::Index offset(int layer) const {
    Eigen::Index off = 0;
    for (int l = 0; l < layer; ++l) off += shape_map[l].size();
    return off;
  }

  Eigen::Map<const Matrix> weights(int layer) const {
    const auto& s = shape_map[layer];
    return {values.data() + offset(layer), s.rows, s.cols};
  }
  Eigen::Map<Matrix> weights(int layer) {
    const auto& s = shape_map[layer];
    return {values.data() + offset(layer), s.rows, s.cols};
  }
  Eigen::Map<const Vector> bias(int layer) const {
    const auto& s = shape_map[layer];
    return {values.data() + offset(layer) + Eigen::Index{s.rows} * s.cols,
            s.bias_len};
  }
  Eigen::Map<Vector> bias(int layer) {
    const auto& s = shape_map[layer];
    return {values.data() + offset(layer) + Eigen::Index{s.rows} * s.cols,
            s.bias_len};
  }

  bool AllFinite() const { return values.allFinite(); }
};

// inputs is (n_examples x input_dim). Regression batches use targets;
// classification batches use labels.
template <typename Scalar>
struct LabeledBatchT {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> inputs;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> targets;
  std::vector<int> labels;

  Eigen::Index size() const { return inputs.rows(); }
  bool is_classification() const { return !labels.empty(); }

  LabeledBatchT Row(Eigen::Index i) const {
    LabeledBatchT one;
    one.inputs = inputs.row(i);
    if (is_classification()) {
      one.labels = {labels[static_cast<std::size_t>(i)]};
    } else {
      one.targets = targets.segment(i, 1);
    }
    return one;
  }
};

template <typename Scalar>
struct LossAndGradT {
  Scalar loss{};
  ParamVectorT<Scalar> grad;
};

using ParamVector = ParamVectorT<double>;
using LabeledBatch = LabeledBatchT<double>;
using LossAndGrad = LossAndGradT<double>;

namespace nn_detail {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
Matrix<Scalar> Activate(const Matrix<Scalar>& z, Activation act) {
  if (act == Activation::kRelu) return z.cwiseMax(Scalar(0));
  return z.array().tanh().matrix();
}

// Derivative expressed through the pre-activation z and activation a.
template <typename Scalar>
Matrix<Scalar> ActivationGrad(const Matrix<Scalar>& z, const Matrix<Scalar>& a,
                              Activation act) {
  if (act == Activation::kRelu) {
    return (z.array() > Scalar(0)).template cast<Scalar>().matrix();
  }
  return (Scalar(1) - a.array().square()).matrix();
}

// Column-per-example activations. acts[0] is the input; zs[l] is the
// pre-activation of layer l.
template <typename Scalar>
struct ForwardCache {
  std::vector<Matrix<Scalar>> acts;
  std::vector<Matrix<Scalar>> zs;
};

template <typename Scalar>
void CheckShapes(const NetworkSpec& spec, const ParamVectorT<Scalar>& params,
                 Eigen::Index input_cols) {
  spec.Validate();
  if (input_cols != spec.input_dim()) {
    throw ConfigError("input dimension " + std::to_string(input_cols) +
                      " does not match network input " +
                      std::to_string(spec.input_dim()));
  }
  if (params.size() != ParamCount(ShapeMap(spec))) {
    throw ConfigError("parameter vector length " +
                      std::to_string(params.size()) +
                      " does not match network spec");
  }
}

template <typename Scalar>
ForwardCache<Scalar> Forward(const NetworkSpec& spec,
                             const ParamVectorT<Scalar>& params,
                             const Matrix<Scalar>& inputs) {
  CheckShapes(spec, params, inputs.cols());
  ForwardCache<Scalar> cache;
  cache.acts.push_back(inputs.transpose());
  const int layers = spec.num_layers();
  for (int l = 0; l < layers; ++l) {
    Matrix<Scalar> z = params.weights(l) * cache.acts.back();
    z.colwise() += params.bias(l);
    if (!z.allFinite()) {
      throw NumericError("non-finite value in forward pass at layer " +
                         std::to_string(l));
    }
    Matrix<Scalar> a =
        (l + 1 < layers) ? Activate<Scalar>(z, spec.activation) : z;
    cache.zs.push_back(std::move(z));
    cache.acts.push_back(std::move(a));
  }
  return cache;
}

// Per-example loss derivative w.r.t. the network output (unscaled by 1/n),
// plus the mean loss.
template <typename Scalar>
Matrix<Scalar> OutputDelta(const Matrix<Scalar>& out,
                           const LabeledBatchT<Scalar>& batch, LossKind loss,
                           Scalar* mean_loss) {
  const Eigen::Index n = out.cols();
  Matrix<Scalar> delta(out.rows(), n);
  Scalar total(0);
  if (loss == LossKind::kMse) {
    if (batch.targets.size() != n || out.rows() != 1) {
      throw ConfigError("mse loss needs a scalar head and one target per row");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const Scalar r = out(0, i) - batch.targets(i);
      delta(0, i) = r;
      total += Scalar(0.5) * r * r;
    }
  } else {
    if (static_cast<Eigen::Index>(batch.labels.size()) != n) {
      throw ConfigError("cross-entropy loss needs one label per row");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const int y = batch.labels[static_cast<std::size_t>(i)];
      if (y < 0 || y >= out.rows()) {
        throw ConfigError("class index " + std::to_string(y) +
                          " out of range");
      }
      const Scalar m = out.col(i).maxCoeff();
      auto e = (out.col(i).array() - m).exp();
      const Scalar s = e.sum();
      delta.col(i) = (e / s).matrix();
      delta(y, i) -= Scalar(1);
      total += -(out(y, i) - m - std::log(s));
    }
  }
  *mean_loss = total / static_cast<Scalar>(n);
  return delta;
}

template <typename Scalar>
void CheckBatch(const LabeledBatchT<Scalar>& batch) {
  if (batch.size() < 1) throw ConfigError("batch must be nonempty");
}

}  // namespace nn_detail

// Predictions are (n_examples x head_dim).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> Forward(
    const NetworkSpec& spec, const ParamVectorT<Scalar>& params,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& inputs) {
  return nn_detail::Forward(spec, params, inputs).acts.back().transpose();
}

template <typename Scalar>
LossAndGradT<Scalar> ComputeLossAndGrad(const NetworkSpec& spec,
                                        const ParamVectorT<Scalar>& params,
                                        const LabeledBatchT<Scalar>& batch,
                                        LossKind loss) {
  using nn_detail::Matrix;
  nn_detail::CheckBatch(batch);
  auto cache = nn_detail::Forward(spec, params, batch.inputs);
  LossAndGradT<Scalar> result;
  Matrix<Scalar> delta =
      nn_detail::OutputDelta(cache.acts.back(), batch, loss, &result.loss);
  delta /= static_cast<Scalar>(batch.size());
  result.grad.shape_map = params.shape_map;
  result.grad.values.setZero(params.size());
  for (int l = spec.num_layers() - 1; l >= 0; --l) {
    result.grad.weights(l) = delta * cache.acts[l].transpose();
    result.grad.bias(l) = delta.rowwise().sum();
    if (l > 0) {
      Matrix<Scalar> back = params.weights(l).transpose() * delta;
      delta = back.cwiseProduct(nn_detail::ActivationGrad<Scalar>(
          cache.zs[l - 1], cache.acts[l], spec.activation));
    }
  }
  return result;
}

template <typename Scalar>
LossAndGradT<Scalar> ComputeLossAndGrad(const NetworkSpec& spec,
                                        const ParamVectorT<Scalar>& params,
                                        const LabeledBatchT<Scalar>& batch) {
  return ComputeLossAndGrad(spec, params, batch, spec.head.default_loss());
}

// One gradient per example; their mean is the batch gradient.
template <typename Scalar>
std::vector<ParamVectorT<Scalar>> PerExampleGrads(
    const NetworkSpec& spec, const ParamVectorT<Scalar>& params,
    const LabeledBatchT<Scalar>& batch, LossKind loss) {
  using nn_detail::Matrix;
  nn_detail::CheckBatch(batch);
  auto cache = nn_detail::Forward(spec, params, batch.inputs);
  Scalar unused;
  Matrix<Scalar> delta =
      nn_detail::OutputDelta(cache.acts.back(), batch, loss, &unused);
  const Eigen::Index n = batch.size();
  std::vector<ParamVectorT<Scalar>> grads(static_cast<std::size_t>(n));
  for (auto& g : grads) {
    g.shape_map = params.shape_map;
    g.values.setZero(params.size());
  }
  for (int l = spec.num_layers() - 1; l >= 0; --l) {
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& g = grads[static_cast<std::size_t>(i)];
      g.weights(l).noalias() = delta.col(i) * cache.acts[l].col(i).transpose();
      g.bias(l) = delta.col(i);
    }
    if (l > 0) {
      Matrix<Scalar> back = params.weights(l).transpose() * delta;
      delta = back.cwiseProduct(nn_detail::ActivationGrad<Scalar>(
          cache.zs[l - 1], cache.acts[l], spec.activation));
    }
  }
  return grads;
}

template <typename Scalar>
std::vector<ParamVectorT<Scalar>> PerExampleGrads(
    const NetworkSpec& spec, const ParamVectorT<Scalar>& params,
    const LabeledBatchT<Scalar>& batch) {
  return PerExampleGrads(spec, params, batch, spec.head.default_loss());
}

// Glorot-uniform weights, zero biases.
template <typename Scalar>
ParamVectorT<Scalar> InitParams(const NetworkSpec& spec, Rng& rng) {
  spec.Validate();
  auto params = ParamVectorT<Scalar>::Zeros(spec);
  for (int l = 0; l < spec.num_layers(); ++l) {
    const auto& s = params.shape_map[l];
    const double limit = std::sqrt(6.0 / (s.rows + s.cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    auto w = params.weights(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        w(i, j) = static_cast<Scalar>(dist(rng));
      }
    }
  }
  return params;
}

}  // namespace metaclip

#endif  // METACLIP_NN_HPP_
