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

#ifndef COTTA_NN_ADAM_HPP_
#define COTTA_NN_ADAM_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cotta/nn/model.hpp"

namespace cotta {

// Adam with bias correction. Moment slots are keyed by parameter name, so a
// filtered parameter set (e.g. only normalization affines) works naturally.
// step() consumes and zeroes the gradients of the given set.
template <typename S>
class Adam {
 public:
  Adam() = default;
  explicit Adam(S lr, S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Parameter<S>*>& params) {
    ++t_;
    const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta1_), t_));
    const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta2_), t_));
    for (auto* p : params) {
      if (!p->value.has_grad()) {
        throw ContractError("adam_step: missing gradient for parameter '" +
                            p->name + "'");
      }
      const ArrayX<S>& g = p->value.grad();
      Slot& s = slots_[p->name];
      if (s.m.size() == 0) {
        s.m = ArrayX<S>::Zero(g.size());
        s.v = ArrayX<S>::Zero(g.size());
      }
      s.m = beta1_ * s.m + (S(1) - beta1_) * g;
      s.v = beta2_ * s.v + (S(1) - beta2_) * g * g;
      p->value.array() -= lr_ * (s.m / bc1) / ((s.v / bc2).sqrt() + eps_);
      p->value.zero_grad();
    }
  }

  void reset() {
    slots_.clear();
    t_ = 0;
  }

  int64_t step_count() const { return t_; }
  S learning_rate() const { return lr_; }

 private:
  struct Slot {
    ArrayX<S> m, v;
  };
  std::unordered_map<std::string, Slot> slots_;
  S lr_ = S(1e-3), beta1_ = S(0.9), beta2_ = S(0.999), eps_ = S(1e-8);
  int64_t t_ = 0;
};

}  // namespace cotta

#endif  // COTTA_NN_ADAM_HPP_
