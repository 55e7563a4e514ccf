// Copyright (c) the cotta project authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef COTTA_NN_MODEL_HPP_
#define COTTA_NN_MODEL_HPP_

#include <cstring>
#include <string>
#include <variant>
#include <vector>

#include "cotta/core/ops.hpp"
#include "cotta/core/rng.hpp"
#include "cotta/core/tensor.hpp"

namespace cotta {

// How normalization layers obtain statistics during a forward pass.
//   UseRunning      - stored running statistics (inference on clean data).
//   UseCurrentBatch - statistics of the current batch; running buffers are
//                     left untouched (all test-time adaptation passes).
//   UpdateRunning   - batch statistics, and running buffers receive a
//                     momentum update (pretraining only).
enum class StatsMode { UseRunning, UseCurrentBatch, UpdateRunning };

template <typename S>
struct Parameter {
  std::string name;           // unique path, e.g. "conv1.weight"
  Tensor<S> value;            // requires_grad leaf
  bool is_norm_affine = false;  // true iff a normalization gamma/beta
};

template <typename S>
struct Conv2dLayer {
  int in_ch = 0, out_ch = 0, ksize = 3, stride = 1, padding = 1;
  Parameter<S> weight;  // [out_ch, in_ch, k, k]
  Parameter<S> bias;    // [out_ch]
};

template <typename S>
struct DenseLayer {
  int in_features = 0, out_features = 0;
  Parameter<S> weight;  // [in, out]
  Parameter<S> bias;    // [out]
};

template <typename S>
struct BatchNormLayer {
  int channels = 0;
  S momentum = S(0.1);
  S eps = S(1e-5);
  Parameter<S> gamma, beta;
  ArrayX<S> running_mean, running_var;
};

struct ReluLayer {};
struct MaxPool2Layer {
  int ksize = 2, stride = 2;
};
struct FlattenLayer {};

template <typename S>
using Layer = std::variant<Conv2dLayer<S>, DenseLayer<S>, BatchNormLayer<S>,
                           ReluLayer, MaxPool2Layer, FlattenLayer>;

// A model is its ordered layers plus identity metadata. Tensors are handles,
// so Model is move-only; clone() makes the storage-disjoint deep copy.
template <typename S>
class Model {
 public:
  std::string architecture_id;
  int num_classes = 0;
  int input_channels = 1, input_height = 16, input_width = 16;
  std::vector<Layer<S>> layers;

  Model() = default;
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  Tensor<S> forward(const Tensor<S>& batch, StatsMode mode) {
    Tensor<S> x = batch;
    for (auto& layer : layers) {
      x = std::visit([&](auto& l) { return apply(l, x, mode); }, layer);
    }
    return x;
  }

  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> out;
    for (auto& layer : layers) {
      std::visit([&](auto& l) { collect(l, out); }, layer);
    }
    return out;
  }

  std::vector<const Parameter<S>*> parameters() const {
    std::vector<const Parameter<S>*> out;
    for (const auto& layer : layers) {
      std::visit([&](const auto& l) { collect_const(l, out); }, layer);
    }
    return out;
  }

  std::vector<Parameter<S>*> norm_affine_parameters() {
    std::vector<Parameter<S>*> out;
    for (auto* p : parameters())
      if (p->is_norm_affine) out.push_back(p);
    return out;
  }

  std::vector<BatchNormLayer<S>*> batch_norm_layers() {
    std::vector<BatchNormLayer<S>*> out;
    for (auto& layer : layers)
      if (auto* bn = std::get_if<BatchNormLayer<S>>(&layer)) out.push_back(bn);
    return out;
  }

  std::vector<const BatchNormLayer<S>*> batch_norm_layers() const {
    std::vector<const BatchNormLayer<S>*> out;
    for (const auto& layer : layers)
      if (const auto* bn = std::get_if<BatchNormLayer<S>>(&layer))
        out.push_back(bn);
    return out;
  }

  void zero_grads() {
    for (auto* p : parameters()) p->value.zero_grad();
  }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto* p : parameters()) n += p->value.numel();
    return n;
  }

  Model clone() const {
    Model out;
    out.architecture_id = architecture_id;
    out.num_classes = num_classes;
    out.input_channels = input_channels;
    out.input_height = input_height;
    out.input_width = input_width;
    out.layers.reserve(layers.size());
    for (const auto& layer : layers) {
      out.layers.push_back(
          std::visit([](const auto& l) -> Layer<S> { return clone_layer(l); }, layer));
    }
    return out;
  }

  // Copies every parameter value and BN buffer from `other` into this
  // model's existing storage. Architectures must match.
  void copy_from(const Model& other) {
    if (architecture_id != other.architecture_id ||
        num_classes != other.num_classes) {
      throw ContractError("copy_from: architecture mismatch (" +
                          architecture_id + " vs " + other.architecture_id + ")");
    }
    auto dst = parameters();
    auto src = other.parameters();
    for (size_t i = 0; i < dst.size(); ++i) {
      dst[i]->value.array() = src[i]->value.array();
      dst[i]->value.zero_grad();
    }
    auto dbn = batch_norm_layers();
    auto sbn = other.batch_norm_layers();
    for (size_t i = 0; i < dbn.size(); ++i) {
      dbn[i]->running_mean = sbn[i]->running_mean;
      dbn[i]->running_var = sbn[i]->running_var;
    }
  }

 private:
  Tensor<S> apply(Conv2dLayer<S>& l, const Tensor<S>& x, StatsMode) {
    return add_channel_bias(conv2d(x, l.weight.value, l.stride, l.padding),
                            l.bias.value);
  }
  Tensor<S> apply(DenseLayer<S>& l, const Tensor<S>& x, StatsMode) {
    return add_row_bias(matmul(x, l.weight.value), l.bias.value);
  }
  Tensor<S> apply(BatchNormLayer<S>& l, const Tensor<S>& x, StatsMode mode) {
    if (mode == StatsMode::UseRunning) {
      return batch_norm(x, l.gamma.value, l.beta.value, &l.running_mean,
                        &l.running_var, l.eps);
    }
    BatchNormStats<S> stats;
    Tensor<S> out = batch_norm(x, l.gamma.value, l.beta.value, nullptr, nullptr,
                               l.eps, &stats);
    if (mode == StatsMode::UpdateRunning) {
      l.running_mean = (S(1) - l.momentum) * l.running_mean + l.momentum * stats.mean;
      l.running_var = (S(1) - l.momentum) * l.running_var + l.momentum * stats.var;
    }
    return out;
  }
  Tensor<S> apply(ReluLayer&, const Tensor<S>& x, StatsMode) { return relu(x); }
  Tensor<S> apply(MaxPool2Layer& l, const Tensor<S>& x, StatsMode) {
    return maxpool2d(x, l.ksize, l.stride);
  }
  Tensor<S> apply(FlattenLayer&, const Tensor<S>& x, StatsMode) {
    return flatten(x);
  }

  static void collect(Conv2dLayer<S>& l, std::vector<Parameter<S>*>& out) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  static void collect(DenseLayer<S>& l, std::vector<Parameter<S>*>& out) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  static void collect(BatchNormLayer<S>& l, std::vector<Parameter<S>*>& out) {
    out.push_back(&l.gamma);
    out.push_back(&l.beta);
  }
  template <typename L>
  static void collect(L&, std::vector<Parameter<S>*>&) {}

  static void collect_const(const Conv2dLayer<S>& l,
                            std::vector<const Parameter<S>*>& out) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  static void collect_const(const DenseLayer<S>& l,
                            std::vector<const Parameter<S>*>& out) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  static void collect_const(const BatchNormLayer<S>& l,
                            std::vector<const Parameter<S>*>& out) {
    out.push_back(&l.gamma);
    out.push_back(&l.beta);
  }
  template <typename L>
  static void collect_const(const L&, std::vector<const Parameter<S>*>&) {}

  static Parameter<S> clone_param(const Parameter<S>& p) {
    return Parameter<S>{p.name, p.value.clone(), p.is_norm_affine};
  }
  static Conv2dLayer<S> clone_layer(const Conv2dLayer<S>& l) {
    return Conv2dLayer<S>{l.in_ch,  l.out_ch,          l.ksize, l.stride,
                          l.padding, clone_param(l.weight), clone_param(l.bias)};
  }
  static DenseLayer<S> clone_layer(const DenseLayer<S>& l) {
    return DenseLayer<S>{l.in_features, l.out_features, clone_param(l.weight),
                         clone_param(l.bias)};
  }
  static BatchNormLayer<S> clone_layer(const BatchNormLayer<S>& l) {
    BatchNormLayer<S> out{l.channels,          l.momentum,
                          l.eps,               clone_param(l.gamma),
                          clone_param(l.beta), l.running_mean,
                          l.running_var};
    return out;
  }
  static ReluLayer clone_layer(const ReluLayer& l) { return l; }
  static MaxPool2Layer clone_layer(const MaxPool2Layer& l) { return l; }
  static FlattenLayer clone_layer(const FlattenLayer& l) { return l; }
};

namespace detail {

template <typename S>
Tensor<S> he_uniform(Shape shape, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  ArrayX<S> a(shape_numel(shape));
  for (int64_t i = 0; i < a.size(); ++i)
    a[i] = static_cast<S>(rng.uniform(-bound, bound));
  Tensor<S> t(std::move(shape), std::move(a));
  t.set_requires_grad(true);
  return t;
}

template <typename S>
Parameter<S> make_param(std::string name, Tensor<S> value,
                        bool is_norm_affine = false) {
  value.set_requires_grad(true);
  return Parameter<S>{std::move(name), std::move(value), is_norm_affine};
}

template <typename S>
Conv2dLayer<S> make_conv(const std::string& name, int in_ch, int out_ch,
                         Rng& rng) {
  Conv2dLayer<S> l;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.weight = make_param(name + ".weight",
                        he_uniform<S>({out_ch, in_ch, 3, 3}, in_ch * 9, rng));
  l.bias = make_param(name + ".bias", Tensor<S>::zeros({out_ch}));
  return l;
}

template <typename S>
DenseLayer<S> make_dense(const std::string& name, int in, int out, Rng& rng) {
  DenseLayer<S> l;
  l.in_features = in;
  l.out_features = out;
  l.weight = make_param(name + ".weight", he_uniform<S>({in, out}, in, rng));
  l.bias = make_param(name + ".bias", Tensor<S>::zeros({out}));
  return l;
}

template <typename S>
BatchNormLayer<S> make_bn(const std::string& name, int channels) {
  BatchNormLayer<S> l;
  l.channels = channels;
  l.gamma = make_param(name + ".gamma", Tensor<S>::full({channels}, S(1)), true);
  l.beta = make_param(name + ".beta", Tensor<S>::zeros({channels}), true);
  l.running_mean = ArrayX<S>::Zero(channels);
  l.running_var = ArrayX<S>::Constant(channels, S(1));
  return l;
}

}  // namespace detail

// Architectures:
//   cnn-small: [Conv3x3-BN-ReLU-MaxPool2] x3 (8,16,32 channels) + linear head
//   mlp-small: Flatten + two Dense-BN-ReLU blocks (128, 64) + linear head
// Weights are He-uniform from the seed, biases zero, BN gamma=1 beta=0.
template <typename S>
Model<S> build_model(const std::string& architecture_id, int num_classes,
                     uint64_t seed) {
  if (num_classes < 2) {
    throw ConfigError("build_model: num_classes must be >= 2, got " +
                      std::to_string(num_classes));
  }
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  Model<S> m;
  m.architecture_id = architecture_id;
  m.num_classes = num_classes;
  if (architecture_id == "cnn-small") {
    const int chans[3] = {8, 16, 32};
    int in_ch = 1;
    for (int i = 0; i < 3; ++i) {
      const std::string tag = std::to_string(i + 1);
      m.layers.emplace_back(detail::make_conv<S>("conv" + tag, in_ch, chans[i], rng));
      m.layers.emplace_back(detail::make_bn<S>("bn" + tag, chans[i]));
      m.layers.emplace_back(ReluLayer{});
      m.layers.emplace_back(MaxPool2Layer{});
      in_ch = chans[i];
    }
    m.layers.emplace_back(FlattenLayer{});
    m.layers.emplace_back(detail::make_dense<S>("head", 32 * 2 * 2, num_classes, rng));
  } else if (architecture_id == "mlp-small") {
    m.layers.emplace_back(FlattenLayer{});
    m.layers.emplace_back(detail::make_dense<S>("fc1", 16 * 16, 128, rng));
    m.layers.emplace_back(detail::make_bn<S>("bn1", 128));
    m.layers.emplace_back(ReluLayer{});
    m.layers.emplace_back(detail::make_dense<S>("fc2", 128, 64, rng));
    m.layers.emplace_back(detail::make_bn<S>("bn2", 64));
    m.layers.emplace_back(ReluLayer{});
    m.layers.emplace_back(detail::make_dense<S>("head", 64, num_classes, rng));
  } else {
    throw ConfigError("build_model: unknown architecture_id '" +
                      architecture_id + "' (expected cnn-small or mlp-small)");
  }
  return m;
}

template <typename S>
Model<S> snapshot(const Model<S>& m) {
  return m.clone();
}

template <typename S>
void restore_into(Model<S>& m, const Model<S>& snap) {
  m.copy_from(snap);
}

// Bitwise equality over all parameters and BN buffers.
template <typename S>
bool models_bitwise_equal(const Model<S>& a, const Model<S>& b) {
  auto pa = a.parameters();
  auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->name != pb[i]->name) return false;
    if (pa[i]->value.numel() != pb[i]->value.numel()) return false;
    if (std::memcmp(pa[i]->value.data(), pb[i]->value.data(),
                    sizeof(S) * static_cast<size_t>(pa[i]->value.numel())) != 0)
      return false;
  }
  auto ba = a.batch_norm_layers();
  auto bb = b.batch_norm_layers();
  if (ba.size() != bb.size()) return false;
  for (size_t i = 0; i < ba.size(); ++i) {
    if (std::memcmp(ba[i]->running_mean.data(), bb[i]->running_mean.data(),
                    sizeof(S) * static_cast<size_t>(ba[i]->running_mean.size())) != 0)
      return false;
    if (std::memcmp(ba[i]->running_var.data(), bb[i]->running_var.data(),
                    sizeof(S) * static_cast<size_t>(ba[i]->running_var.size())) != 0)
      return false;
  }
  return true;
}

template <typename S>
S max_abs_param_diff(const Model<S>& a, const Model<S>& b) {
  auto pa = a.parameters();
  auto pb = b.parameters();
  S worst = S(0);
  for (size_t i = 0; i < pa.size(); ++i) {
    worst = std::max(worst,
                     (pa[i]->value.array() - pb[i]->value.array()).abs().maxCoeff());
  }
  return worst;
}

}  // namespace cotta

#endif  // COTTA_NN_MODEL_HPP_
