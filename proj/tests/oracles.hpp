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

// Independent oracles shared by the unit and acceptance suites: a central
// finite-difference gradient checker and a plain-loop convolution reference.
// Nothing here calls into the backward rules it is used to check.

#ifndef COTTA_TESTS_ORACLES_HPP_
#define COTTA_TESTS_ORACLES_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cotta/core/tensor.hpp"

namespace cotta::test {

struct FdReport {
  int64_t checked = 0;
  int64_t failures = 0;
  double worst_abs = 0.0;
  double worst_rel = 0.0;
  std::string first_failure;
};

// Central finite differences on every entry of every leaf. The analytic
// gradients must already be populated on the leaves. An entry passes when
// |fd - grad| <= max(abs_tol, rel_tol * max(|fd|, |grad|)) — the looser of
// the relative and absolute criteria.
template <typename S, typename LossFn>
FdReport fd_report(LossFn&& loss_fn, const std::vector<Tensor<S>*>& leaves,
                   double step = 1e-3, double rel_tol = 1e-3,
                   double abs_tol = 1e-4) {
  FdReport rep;
  NoGradGuard guard;  // re-evaluations need no recorded graph
  for (Tensor<S>* leaf : leaves) {
    const ArrayX<S> analytic = leaf->grad();
    for (int64_t i = 0; i < leaf->numel(); ++i) {
      const S saved = leaf->array()[i];
      leaf->array()[i] = saved + static_cast<S>(step);
      const double up = static_cast<double>(loss_fn().value());
      leaf->array()[i] = saved - static_cast<S>(step);
      const double down = static_cast<double>(loss_fn().value());
      leaf->array()[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double g = static_cast<double>(analytic[i]);
      const double abs_err = std::fabs(fd - g);
      const double scale = std::max(std::fabs(fd), std::fabs(g));
      const double rel_err = scale > 0 ? abs_err / scale : 0.0;
      ++rep.checked;
      rep.worst_abs = std::max(rep.worst_abs, abs_err);
      if (abs_err > abs_tol) rep.worst_rel = std::max(rep.worst_rel, rel_err);
      if (abs_err > std::max(abs_tol, rel_tol * scale)) {
        ++rep.failures;
        if (rep.first_failure.empty()) {
          rep.first_failure = "entry " + std::to_string(i) + ": fd=" +
                              std::to_string(fd) + " grad=" + std::to_string(g);
        }
      }
    }
  }
  return rep;
}

template <typename S, typename LossFn>
void check_against_fd(LossFn&& loss_fn, const std::vector<Tensor<S>*>& leaves,
                      double step = 1e-3, double rel_tol = 1e-3,
                      double abs_tol = 1e-4) {
  FdReport rep = fd_report(std::forward<LossFn>(loss_fn), leaves, step, rel_tol,
                           abs_tol);
  if (rep.failures != 0) {
    throw std::runtime_error("finite-difference mismatch (" +
                             std::to_string(rep.failures) + "/" +
                             std::to_string(rep.checked) + "): " +
                             rep.first_failure);
  }
}

// Reference convolution: cross-correlation with zero padding, accumulating
// over (c, kh, kw) for each output element in plain nested loops.
template <typename S>
std::vector<S> conv2d_reference(const S* in, int B, int C, int H, int W,
                                const S* w, int O, int KH, int KW, int stride,
                                int padding, int* out_h, int* out_w) {
  const int OH = (H + 2 * padding - KH) / stride + 1;
  const int OW = (W + 2 * padding - KW) / stride + 1;
  *out_h = OH;
  *out_w = OW;
  std::vector<S> out(static_cast<size_t>(B) * O * OH * OW, S(0));
  for (int b = 0; b < B; ++b)
    for (int o = 0; o < O; ++o)
      for (int y = 0; y < OH; ++y)
        for (int x = 0; x < OW; ++x) {
          S acc = S(0);
          for (int c = 0; c < C; ++c)
            for (int kh = 0; kh < KH; ++kh)
              for (int kw = 0; kw < KW; ++kw) {
                const int iy = y * stride - padding + kh;
                const int ix = x * stride - padding + kw;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += in[((static_cast<int64_t>(b) * C + c) * H + iy) * W + ix] *
                       w[((static_cast<int64_t>(o) * C + c) * KH + kh) * KW + kw];
              }
          out[((static_cast<size_t>(b) * O + o) * OH + y) * OW + x] = acc;
        }
  return out;
}

}  // namespace cotta::test

#endif  // COTTA_TESTS_ORACLES_HPP_
