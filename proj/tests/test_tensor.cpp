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

#include <doctest.h>

#include "cotta/core/ops.hpp"
#include "cotta/core/rng.hpp"
#include "cotta/core/tensor.hpp"
#include "oracles.hpp"

using namespace cotta;

namespace {

Tensor<float> randf(Shape shape, Rng& rng, float lo = -2.0f, float hi = 2.0f) {
  ArrayX<float> a(shape_numel(shape));
  for (int64_t i = 0; i < a.size(); ++i)
    a[i] = static_cast<float>(rng.uniform(lo, hi));
  return Tensor<float>(std::move(shape), std::move(a));
}

}  // namespace

TEST_CASE("elementwise mul matches direct definition") {
  auto a = Tensor<float>::from({3}, {1, 2, 3});
  auto b = Tensor<float>::from({3}, {4, 5, 6});
  auto c = mul(a, b);
  CHECK(c[0] == 4.0f);
  CHECK(c[1] == 10.0f);
  CHECK(c[2] == 18.0f);
}

TEST_CASE("add of zero is exact identity") {
  Rng rng(7);
  auto x = randf({4, 5}, rng);
  auto y = add(x, 0.0f);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("mul by a binary mask zeroes exactly the masked entries") {
  Rng rng(8);
  auto x = randf({2, 8}, rng);
  ArrayX<float> m(16);
  for (int i = 0; i < 16; ++i) m[i] = (i % 3 == 0) ? 0.0f : 1.0f;
  Tensor<float> mask({2, 8}, m);
  auto y = mul(x, mask);
  for (int64_t i = 0; i < 16; ++i) {
    if (m[i] == 0.0f)
      CHECK(y[i] == 0.0f);
    else
      CHECK(y[i] == x[i]);
  }
}

TEST_CASE("elementwise shape mismatch reports both shapes") {
  auto a = Tensor<float>::zeros({2, 3});
  auto b = Tensor<float>::zeros({3, 2});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[2x3]"), ShapeError);
  try {
    mul(a, b);
    CHECK(false);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[3x2]") != std::string::npos);
  }
}

TEST_CASE("matmul identity and hand-computed case") {
  auto eye = Tensor<float>::from({2, 2}, {1, 0, 0, 1});
  Rng rng(3);
  auto x = randf({2, 2}, rng);
  auto ix = matmul(eye, x);
  for (int64_t i = 0; i < 4; ++i) CHECK(ix[i] == x[i]);

  auto a = Tensor<float>::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor<float>::from({2, 1}, {1, 1});
  auto c = matmul(a, b);
  CHECK(c[0] == 3.0f);
  CHECK(c[1] == 7.0f);
}

TEST_CASE("matmul inner-dimension mismatch throws") {
  auto a = Tensor<float>::zeros({3, 4});
  auto b = Tensor<float>::zeros({5, 2});
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("matmul gradients match finite differences") {
  Rng rng(11);
  auto a = randf({3, 4}, rng).set_requires_grad(true);
  auto b = randf({4, 2}, rng).set_requires_grad(true);
  auto loss_fn = [&]() { return mean(mul(matmul(a, b), matmul(a, b))); };
  auto loss = loss_fn();
  backward(loss);
  test::check_against_fd(loss_fn, std::vector<Tensor<float>*>{&a, &b});
}

TEST_CASE("softmax basics") {
  auto z = Tensor<float>::from({1, 3}, {0, 0, 0});
  auto p = softmax(z);
  for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(1.0f / 3).epsilon(1e-6));

  auto big = Tensor<float>::from({1, 2}, {1000, 0});
  auto q = softmax(big);
  CHECK(q[0] == doctest::Approx(1.0f));
  CHECK(q[1] == doctest::Approx(0.0f));
  CHECK(std::isfinite(q[0]));

  Rng rng(5);
  auto logits = randf({4, 6}, rng);
  auto base = softmax(logits);
  auto shifted = softmax(add(logits, 3.25f));
  for (int64_t i = 0; i < base.numel(); ++i)
    CHECK(shifted[i] == doctest::Approx(base[i]).epsilon(1e-6));

  // Rows sum to one.
  for (int b = 0; b < 4; ++b) {
    float s = 0;
    for (int k = 0; k < 6; ++k) s += base[b * 6 + k];
    CHECK(s == doctest::Approx(1.0f).epsilon(1e-5));
  }
}

TEST_CASE("backward on sum gives all-ones; on x*x gives 2x") {
  Rng rng(9);
  auto x = randf({3, 3}, rng).set_requires_grad(true);
  auto loss = sum(x);
  backward(loss);
  for (int64_t i = 0; i < 9; ++i) CHECK(x.grad()[i] == 1.0f);

  x.zero_grad();
  auto loss2 = sum(mul(x, x));
  backward(loss2);
  for (int64_t i = 0; i < 9; ++i)
    CHECK(x.grad()[i] == doctest::Approx(2 * x[i]).epsilon(1e-6));
}

TEST_CASE("backward requires scalar loss") {
  auto x = Tensor<float>::zeros({2, 2}).set_requires_grad(true);
  auto y = mul(x, 2.0f);
  CHECK_THROWS_AS(backward(y), ContractError);
}

TEST_CASE("diamond graph accumulates gradient once per path") {
  auto x = Tensor<float>::from({2}, {1.5f, -0.5f}).set_requires_grad(true);
  // loss = sum(x*x + x) => grad = 2x + 1
  auto loss = sum(add(mul(x, x), x));
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(4.0f));
  CHECK(x.grad()[1] == doctest::Approx(0.0f));
}

TEST_CASE("backward twice on the same graph is a contract error") {
  auto x = Tensor<float>::from({2}, {1, 2}).set_requires_grad(true);
  auto loss = sum(mul(x, x));
  backward(loss);
  CHECK_THROWS_AS(backward(loss), ContractError);
}

TEST_CASE("linearity of backward") {
  Rng rng(21);
  auto x = randf({4, 4}, rng).set_requires_grad(true);
  const float a = 1.7f, b = -0.6f;

  auto loss1 = [&]() { return mean(mul(x, x)); };
  auto loss2 = [&]() { return sum(relu(x)); };

  auto l1 = loss1();
  backward(l1);
  ArrayX<float> g1 = x.grad();
  x.zero_grad();

  auto l2 = loss2();
  backward(l2);
  ArrayX<float> g2 = x.grad();
  x.zero_grad();

  auto combined = add(mul(loss1(), a), mul(loss2(), b));
  backward(combined);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(x.grad()[i] == doctest::Approx(a * g1[i] + b * g2[i]).epsilon(1e-5));
}

TEST_CASE("NoGradGuard suppresses recording") {
  auto x = Tensor<float>::from({2}, {1, 2}).set_requires_grad(true);
  NoGradGuard guard;
  auto y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("determinism: same seed gives bit-identical outputs and grads") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    auto x = randf({3, 5}, rng).set_requires_grad(true);
    auto w = randf({5, 4}, rng).set_requires_grad(true);
    auto loss = mean(mul(softmax(matmul(x, w)), matmul(x, w)));
    backward(loss);
    std::vector<float> out;
    out.push_back(loss[0]);
    for (int64_t i = 0; i < x.grad().size(); ++i) out.push_back(x.grad()[i]);
    for (int64_t i = 0; i < w.grad().size(); ++i) out.push_back(w.grad()[i]);
    return out;
  };
  auto r1 = run(12345), r2 = run(12345);
  REQUIRE(r1.size() == r2.size());
  for (size_t i = 0; i < r1.size(); ++i) CHECK(r1[i] == r2[i]);
}

TEST_CASE("finite outputs for finite inputs across composed ops") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = randf({4, 6}, rng);
    auto w = randf({6, 3}, rng);
    auto y = softmax(matmul(relu(x), w));
    for (int64_t i = 0; i < y.numel(); ++i) CHECK(std::isfinite(y[i]));
  }
}
