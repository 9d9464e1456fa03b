// Copyright 2026 The Cadet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cadet/ops.hpp"
#include "cadet/rng.hpp"
#include "cadet/tensor.hpp"

using namespace cadet;

namespace {

Tensor t1(std::vector<float> v) {
  const int n = static_cast<int>(v.size());
  return Tensor({n}, std::move(v));
}

}  // namespace

TEST_CASE("elementwise arithmetic") {
  Tensor a = t1({1, 2});
  Tensor b = t1({3, 4});
  Tensor c = add(a, b);
  CHECK(c.vec() == std::vector<float>{4, 6});

  Tape tape;
  Tensor x = tape.watch(t1({2, -3, 5}));
  Tensor y = mul(x, 0.0f);
  for (float v : y.vec()) CHECK(v == 0.0f);
  Tensor loss = sum(y);
  auto grads = tape.backward(loss);
  for (float v : grads.wrt(x).vec()) CHECK(v == 0.0f);
}

TEST_CASE("max ties route gradient to the first argument") {
  Tape tape;
  Tensor a = tape.watch(t1({1, 2, 3}));
  Tensor b = tape.watch(t1({1, 2, 3}));
  Tensor m = emax(a, b);
  CHECK(m.vec() == a.vec());
  auto grads = tape.backward(sum(m));
  CHECK(grads.wrt(a).vec() == std::vector<float>{1, 1, 1});
  CHECK(grads.wrt(b).vec() == std::vector<float>{0, 0, 0});
}

TEST_CASE("broadcasting") {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({3}, {10, 20, 30});
  Tensor c = add(a, b);
  CHECK(c.shape() == Shape{2, 3});
  CHECK(c.vec() == std::vector<float>{11, 22, 33, 14, 25, 36});

  CHECK_THROWS_WITH_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({4})),
                       doctest::Contains("[2,3]"), ShapeError);

  // associativity of the broadcast result shape, fuzzed
  Rng rng(7);
  const Shape base{2, 3, 4};
  auto variant = [&]() {
    Shape s;
    size_t drop = rng.uniform_index(base.size());
    for (size_t i = drop; i < base.size(); ++i) {
      s.push_back(rng.uniform() < 0.4f ? 1 : base[i]);
    }
    return s;
  };
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = Tensor::zeros(variant());
    Tensor y = Tensor::zeros(variant());
    Tensor z = Tensor::zeros(variant());
    CHECK(add(add(x, y), z).shape() == add(x, add(y, z)).shape());
  }
}

TEST_CASE("broadcast gradients reduce over expanded dims") {
  Tape tape;
  Tensor a = tape.watch(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  Tensor b = tape.watch(Tensor({3}, {1, 2, 3}));
  auto grads = tape.backward(sum(mul(a, b)));
  CHECK(grads.wrt(a).vec() == std::vector<float>{1, 2, 3, 1, 2, 3});
  CHECK(grads.wrt(b).vec() == std::vector<float>{5, 7, 9});
}

TEST_CASE("matmul basics") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor eye({2, 2}, {1, 0, 0, 1});
  CHECK(matmul(a, eye).vec() == a.vec());

  Tensor ones({2, 1}, {1, 1});
  Tensor p = matmul(a, ones);
  CHECK(p.shape() == Shape{2, 1});
  CHECK(p.vec() == std::vector<float>{3, 7});

  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), ShapeError);
}

TEST_CASE("matmul gradient vs finite differences") {
  Rng rng(11);
  Tensor b = Tensor::randn({3, 2}, rng);
  Tensor x0 = Tensor::randn({2, 3}, rng);
  auto fn = [&b](Tape&, const Tensor& x) { return mean(mul(matmul(x, b), matmul(x, b))); };
  auto rep = grad_check(fn, x0, 1e-3, 1e-3);
  CHECK(rep.pass);
}

TEST_CASE("conv2d identity-scaling and constant-image cases") {
  Rng rng(3);
  Tensor x = Tensor::randu({1, 2, 4, 4}, rng, 0.0f, 1.0f);
  Tensor w({2, 2, 1, 1}, {2, 0, 0, 2});  // per-channel 1x1 kernel with weight 2
  Tensor y = conv2d(x, w, 1, 0);
  for (int64_t i = 0; i < x.size(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(2.0f * x.data()[i]));
  }

  const float v = 0.5f;
  Tensor xc = Tensor::full({1, 3, 8, 8}, v);
  Tensor wones = Tensor::full({1, 3, 3, 3}, 1.0f);
  Tensor yc = conv2d(xc, wones, 1, 0);
  CHECK(yc.shape() == Shape{1, 1, 6, 6});
  for (float o : yc.vec()) CHECK(o == doctest::Approx(9.0f * 3.0f * v));

  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 5, 5}), 1, 1),
                  ShapeError);
}

TEST_CASE("conv2d gradients vs finite differences") {
  Rng rng(17);
  Tensor w = Tensor::randn({2, 2, 3, 3}, rng);
  Tensor x0 = Tensor::randn({1, 2, 5, 5}, rng);
  auto fn_x = [&w](Tape&, const Tensor& x) {
    Tensor y = conv2d(x, w, 2, 1);
    return mean(mul(y, y));
  };
  CHECK(grad_check(fn_x, x0, 1e-3, 1e-3).pass);

  Tensor xfix = Tensor::randn({1, 2, 5, 5}, rng);
  Tensor w0 = Tensor::randn({2, 2, 3, 3}, rng);
  auto fn_w = [&xfix](Tape&, const Tensor& w) {
    Tensor y = conv2d(xfix, w, 1, 1);
    return mean(mul(y, y));
  };
  CHECK(grad_check(fn_w, w0, 1e-3, 1e-3).pass);
}

TEST_CASE("nonlinearities") {
  CHECK(relu(t1({-1})).vec()[0] == 0.0f);
  CHECK(sigmoid(t1({0})).vec()[0] == doctest::Approx(0.5f));

  // away from the relu kink
  Rng rng(23);
  std::vector<float> v(12);
  for (auto& f : v) {
    f = rng.uniform(0.05f, 1.5f) * (rng.uniform() < 0.5f ? -1.0f : 1.0f);
  }
  Tensor x0(Shape{12}, v);
  auto fn = [](Tape&, const Tensor& x) { return sum(mul(relu(x), sigmoid(x))); };
  CHECK(grad_check(fn, x0, 1e-3, 1e-3).pass);
  auto fn2 = [](Tape&, const Tensor& x) { return mean(mul(tanh(x), exp(mul(x, 0.1f)))); };
  CHECK(grad_check(fn2, x0, 1e-3, 1e-3).pass);
}

TEST_CASE("softmax cross entropy") {
  Tensor uniform = Tensor::zeros({1, 10});
  CHECK(softmax_cross_entropy(uniform, {3}).item() == doctest::Approx(std::log(10.0)).epsilon(1e-6));

  std::vector<float> v(10, 0.0f);
  v[4] = 1000.0f;
  CHECK(softmax_cross_entropy(Tensor({1, 10}, v), {4}).item() == doctest::Approx(0.0f));

  CHECK_THROWS_AS(softmax_cross_entropy(Tensor::zeros({1, 10}), {10}), Error);

  Rng rng(5);
  Tensor logits = Tensor::randn({4, 6}, rng);
  auto fn = [](Tape&, const Tensor& l) { return softmax_cross_entropy(l, {1, 0, 5, 2}); };
  CHECK(grad_check(fn, logits, 1e-3, 1e-3).pass);

  // gradient equals softmax(logits) - onehot, scaled by 1/B
  Tape tape;
  Tensor lt = tape.watch(logits);
  auto grads = tape.backward(softmax_cross_entropy(lt, {1, 0, 5, 2}));
  const Tensor& g = grads.wrt(lt);
  const std::vector<int> labels{1, 0, 5, 2};
  for (int i = 0; i < 4; ++i) {
    double denom = 0.0;
    for (int j = 0; j < 6; ++j) denom += std::exp(logits.data()[i * 6 + j]);
    for (int j = 0; j < 6; ++j) {
      double p = std::exp(logits.data()[i * 6 + j]) / denom;
      double expect = (p - (labels[i] == j ? 1.0 : 0.0)) / 4.0;
      CHECK(g.data()[i * 6 + j] == doctest::Approx(expect).epsilon(1e-4));
    }
  }
}

TEST_CASE("sign") {
  Tensor s = sign(t1({-2, 0, 5}));
  CHECK(s.vec() == std::vector<float>{-1, 0, 1});
  CHECK(sign(s).vec() == s.vec());
  CHECK_FALSE(s.on_tape());
}

TEST_CASE("straight-through round and clamp") {
  CHECK(round_ste(t1({0.6f})).vec()[0] == 1.0f);
  CHECK(clamp_ste(t1({1.4f}), 0.0f, 1.0f).vec()[0] == 1.0f);
  CHECK_THROWS_AS(clamp_ste(t1({0}), 1.0f, 0.0f), Error);

  Tape tape;
  Tensor x = tape.watch(t1({0.6f, 1.4f}));
  Tensor y = clamp_ste(round_ste(x), 0.0f, 1.0f);
  auto grads = tape.backward(sum(y));
  CHECK(grads.wrt(x).vec() == std::vector<float>{1, 1});

  // forward matches exact rounding bit-for-bit
  Rng rng(31);
  Tensor r = Tensor::randu({64}, rng, -6.0f, 6.0f);
  Tensor rr = round_ste(r);
  for (int64_t i = 0; i < r.size(); ++i) CHECK(rr.data()[i] == std::round(r.data()[i]));
}

TEST_CASE("composition through round_ste differentiates the outer fn at the rounded point") {
  // f(u) = u^2 => tape gradient of f(round_ste(x)) must equal 2 * round(x)
  Tape tape;
  Tensor x = tape.watch(t1({0.6f, 2.3f, -1.8f}));
  Tensor y = round_ste(x);
  auto grads = tape.backward(sum(mul(y, y)));
  const Tensor& g = grads.wrt(x);
  for (int i = 0; i < 3; ++i) {
    CHECK(g.data()[i] == doctest::Approx(2.0f * std::round(x.data()[i])));
  }
}

TEST_CASE("backward basics and errors") {
  {
    Tape tape;
    Tensor x = tape.watch(t1({3}));
    auto grads = tape.backward(sum(mul(x, x)));
    CHECK(grads.wrt(x).vec()[0] == doctest::Approx(6.0f));
  }
  {
    Tape tape;
    Tensor x = tape.watch(t1({3}));
    Tensor unused = tape.watch(t1({1, 2}));
    auto grads = tape.backward(sum(mul(x, x)));
    CHECK(grads.wrt(unused).vec() == std::vector<float>{0, 0});
  }
  {
    Tape tape;
    Tensor x = tape.watch(t1({1, 2}));
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), TapeError);  // non-scalar
  }
  {
    Tape tape;
    Tensor x = tape.watch(t1({1}));
    Tensor loss = sum(x);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), TapeError);  // tape consumed
  }
  {
    Tape ta, tb;
    Tensor a = ta.watch(t1({1}));
    Tensor b = tb.watch(t1({2}));
    CHECK_THROWS_AS(add(a, b), TapeError);
  }
}

TEST_CASE("three-layer MLP gradients match finite differences") {
  Rng rng(41);
  Tensor w1 = Tensor::randn({5, 8}, rng);
  Tensor w2 = Tensor::randn({8, 8}, rng);
  Tensor w3 = Tensor::randn({8, 3}, rng);
  auto net = [&](Tape&, const Tensor& x) {
    Tensor h1 = tanh(matmul(x, w1));
    Tensor h2 = tanh(matmul(h1, w2));
    return softmax_cross_entropy(matmul(h2, w3), {2, 0});
  };
  Tensor x0 = Tensor::randn({2, 5}, rng);
  auto rep = grad_check(net, x0, 1e-3, 1e-3);
  CHECK(rep.pass);

  // deterministic replay: same inputs, fresh tapes, bit-identical grads
  auto run = [&]() {
    Tape tape;
    Tensor x = tape.watch(x0);
    auto grads = tape.backward(net(tape, x));
    return grads.wrt(x).vec();
  };
  CHECK(run() == run());
}

TEST_CASE("grad_check reports") {
  // power-of-two step keeps every f32 evaluation exact, so the error is 0
  auto rep = grad_check([](Tape&, const Tensor& x) { return sum(x); }, t1({1, 2, 3}),
                        0.0009765625, 1e-3);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err == 0.0);

  auto nd = grad_check([](Tape&, const Tensor& x) { return sum(sign(x)); }, t1({1, -2}), 1e-3, 1e-3);
  CHECK(nd.nondiff_error);
  CHECK_FALSE(nd.pass);
  CHECK(nd.message.find("sign") != std::string::npos);
}

TEST_CASE("spatial ops: upsample, avgpool, concat, patches, reshape, transpose") {
  Rng rng(53);
  Tensor x0 = Tensor::randn({2, 3, 4, 4}, rng);
  auto fn = [](Tape&, const Tensor& x) {
    Tensor u = upsample2x(x);
    Tensor p = avgpool2x(u);
    Tensor cat = concat_channels(p, p);
    Tensor patches = extract_patches(cat, {{0, 1, 1}, {1, 0, 2}}, 2);
    Tensor flat = reshape(patches, {2, 6 * 2 * 2});
    return mean(mul(transpose2d(flat), transpose2d(flat)));
  };
  CHECK(grad_check(fn, x0, 1e-3, 1e-3).pass);

  // upsample then avgpool is the identity
  Tensor rt = avgpool2x(upsample2x(x0));
  CHECK(max_abs_diff(rt, x0) == 0.0f);

  CHECK_THROWS_AS(avgpool2x(Tensor::zeros({1, 1, 3, 3})), ShapeError);
  CHECK_THROWS_AS(reshape(Tensor::zeros({4}), {3}), ShapeError);
}
