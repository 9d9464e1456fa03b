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

#include "cadet/nets.hpp"

using namespace cadet;
using namespace cadet::nets;

namespace {

data::Dataset small_shapes(int per_class, uint64_t seed) {
  data::ShapesSpec spec;
  spec.samples_per_class = per_class;
  spec.seed = seed;
  return data::gen_shapes(spec);
}

}  // namespace

TEST_CASE("distortion loss") {
  Rng rng(2);
  Tensor x = Tensor::randu({2, 3, 4, 4}, rng, 0.0f, 1.0f);
  CHECK(distortion_loss(x, x).item() == 0.0f);

  Tensor zeros = Tensor::zeros({1, 3, 2, 2});
  Tensor ones = Tensor::full({1, 3, 2, 2}, 1.0f);
  CHECK(distortion_loss(zeros, ones).item() == doctest::Approx(1.0f));

  CHECK_THROWS_AS(distortion_loss(zeros, Tensor::zeros({1, 3, 4, 4})), ShapeError);

  // gradient wrt xhat is 2(xhat - x)/N
  Tensor xh = Tensor::randu({1, 3, 4, 4}, rng, 0.0f, 1.0f);
  Tensor xr = Tensor::randu({1, 3, 4, 4}, rng, 0.0f, 1.0f);
  auto fn = [&xr](Tape&, const Tensor& v) { return distortion_loss(xr, v); };
  CHECK(grad_check(fn, xh, 1e-3, 1e-3).pass);
  Tape tape;
  Tensor v = tape.watch(xh);
  auto grads = tape.backward(distortion_loss(xr, v));
  const Tensor& g = grads.wrt(v);
  const float n = static_cast<float>(xh.size());
  for (int64_t i = 0; i < xh.size(); ++i) {
    CHECK(g.data()[i] == doctest::Approx(2.0f * (xh.data()[i] - xr.data()[i]) / n).epsilon(1e-4));
  }
}

TEST_CASE("realism loss estimator properties") {
  Rng rng(11);
  data::Dataset ds = small_shapes(8, 5);
  Tensor imgs = ds.images;

  Rng prng(1);
  Tensor real_a = sample_patches(imgs, 1, 8, prng);
  Tensor real_b = sample_patches(imgs, 1, 8, prng);

  // identical sets
  CHECK(std::fabs(realism_loss(real_a, real_a).item()) < 1e-6f);

  // noise patches are farther from real patches than a disjoint real subset is
  Tensor noise = Tensor::randu(real_a.shape(), rng, 0.0f, 1.0f);
  const float mmd_noise = realism_loss(noise, real_a).item();
  const float mmd_real = realism_loss(real_b, real_a).item();
  CHECK(mmd_noise > mmd_real);

  // fewer than 2 patches per side is an error
  std::vector<PatchPos> one{{0, 0, 0}};
  Tensor single = extract_patches(imgs, one, 8);
  CHECK_THROWS_AS(realism_loss(single, real_a), Error);

  // median bandwidth ignores patch order
  Tensor fa = patch_features(real_a);
  Tensor fb = patch_features(real_b);
  const int m = fa.dim(0), f = fa.dim(1);
  std::vector<float> rev(static_cast<size_t>(m) * f);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < f; ++j) rev[static_cast<size_t>((m - 1 - i) * f + j)] = fa.data()[i * f + j];
  }
  Tensor fa_rev({m, f}, std::move(rev));
  CHECK(median_bandwidth(fa, fb) == median_bandwidth(fa_rev, fb));

  // metric symmetry within estimator tolerance
  CHECK(realism_loss(noise, real_a).item() ==
        doctest::Approx(realism_loss(real_a, noise).item()).epsilon(1e-4));
}

TEST_CASE("mmd2 gradient with fixed bandwidth") {
  Rng rng(21);
  Tensor fy = Tensor::randn({6, 5}, rng);
  Tensor fx0 = Tensor::randn({6, 5}, rng);
  auto fn = [&fy](Tape&, const Tensor& fx) { return mmd2_unbiased(fx, fy, 4.0f); };
  CHECK(grad_check(fn, fx0, 1e-3, 1e-3).pass);
}

TEST_CASE("codec quantizer") {
  CodecConfig cfg;
  cfg.quality_levels = 65536;
  LearnedCodec g = LearnedCodec::init(cfg, 4, 3);
  Rng rng(9);
  Tensor x = Tensor::randu({2, 3, 32, 32}, rng, 0.0f, 1.0f);
  Tensor z = g.encode(x);
  Tensor zq = g.quantize(z);
  // latent range is 2, so half a quantizer step stays below 2/(L-1)
  CHECK(max_abs_diff(z, zq) < 2.0f / 65535.0f);

  // idempotent forward
  CodecConfig coarse = cfg;
  coarse.quality_levels = 8;
  LearnedCodec g2 = LearnedCodec::init(coarse, 4, 3);
  Tensor q1 = g2.quantize(g2.encode(x));
  CHECK(max_abs_diff(g2.quantize(q1), q1) == 0.0f);
}

TEST_CASE("codec forward invariants") {
  CodecConfig cfg;
  cfg.defense_iterations = 2;
  LearnedCodec g = LearnedCodec::init(cfg, 6, 7);
  Rng rng(13);
  Tensor x = Tensor::randu({2, 3, 32, 32}, rng, 0.0f, 1.0f);
  Tensor once = g.forward_once(x);
  CHECK(once.shape() == x.shape());
  for (int64_t i = 0; i < once.size(); ++i) {
    CHECK(once.data()[i] >= 0.0f);
    CHECK(once.data()[i] <= 1.0f);
  }
  // defense_iterations=2 is exactly forward_once twice
  CHECK(max_abs_diff(g.forward(x), g.forward_once(once)) == 0.0f);
}

TEST_CASE("classifier forward contract") {
  Classifier f = Classifier::init(10, 77);
  Rng rng(4);
  Tensor x = Tensor::randu({4, 3, 32, 32}, rng, 0.0f, 1.0f);
  Tensor logits = f.forward(x);
  CHECK(logits.shape() == Shape{4, 10});
  CHECK(all_finite(logits));
  CHECK_THROWS_AS(f.forward(Tensor::zeros({1, 1, 32, 32})), ShapeError);

  // permuting the batch permutes logits identically
  std::vector<float> perm(static_cast<size_t>(x.size()));
  const int64_t stride = 3 * 32 * 32;
  const int order[4] = {2, 0, 3, 1};
  for (int i = 0; i < 4; ++i) {
    std::copy(x.data() + order[i] * stride, x.data() + (order[i] + 1) * stride,
              perm.begin() + i * stride);
  }
  Tensor logits_perm = f.forward(Tensor(x.shape(), std::move(perm)));
  for (int i = 0; i < 4; ++i) {
    for (int k = 0; k < 10; ++k) {
      CHECK(logits_perm.data()[i * 10 + k] == logits.data()[order[i] * 10 + k]);
    }
  }
}

TEST_CASE("pipeline with identity codec matches the bare classifier bitwise") {
  Classifier f = Classifier::init(10, 3);
  DefendedPipeline h{identity_codec(), &f};
  Rng rng(15);
  Tensor x = Tensor::randu({3, 3, 32, 32}, rng, 0.0f, 1.0f);
  CHECK(h.forward(x).vec() == f.forward(x).vec());
}

TEST_CASE("ste quantizer codec") {
  nets::Codec q = ste_quantizer_codec(5);
  Tensor x({1, 1, 1, 4}, {0.0f, 0.1f, 0.5f, 1.0f});
  Tensor y = q.apply(x);
  CHECK(y.vec() == std::vector<float>{0.0f, 0.0f, 0.5f, 1.0f});
  CHECK_THROWS_AS(ste_quantizer_codec(1), ConfigError);
}

TEST_CASE("train_classifier on a small seeded run") {
  data::Dataset ds = small_shapes(20, 11);  // 200 images
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 5;
  auto result = train_classifier(ds, cfg);
  REQUIRE(result.metrics.epochs.size() == 2);
  CHECK(result.metrics.epochs.back().accuracy > 0.5f);

  // determinism: same seed gives a bit-identical checkpoint
  auto result2 = train_classifier(ds, cfg);
  for (size_t i = 0; i < result.model.params().size(); ++i) {
    CHECK(result.model.params()[i]->vec() == result2.model.params()[i]->vec());
  }

  // lr = 0 leaves parameters unchanged
  TrainConfig frozen = cfg;
  frozen.epochs = 1;
  frozen.lr = 0.0f;
  auto still = train_classifier(ds, frozen);
  Classifier fresh = Classifier::init(ds.class_count, frozen.seed);
  for (size_t i = 0; i < still.model.params().size(); ++i) {
    CHECK(still.model.params()[i]->vec() == fresh.params()[i]->vec());
  }

  CHECK_THROWS_AS(train_classifier(data::Dataset{}, cfg), Error);
}

TEST_CASE("train_codec seeded run") {
  data::Dataset ds = small_shapes(20, 13);
  CodecConfig cc;
  cc.lambda_distortion = 1.0f;
  cc.beta_realism = 0.0f;
  TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 9;
  auto result = train_codec(ds, cc, tc);
  REQUIRE(result.metrics.epochs.size() == 3);
  CHECK(result.metrics.epochs.back().loss < result.metrics.epochs.front().loss);

  // degenerate objective is rejected
  CodecConfig degenerate;
  degenerate.lambda_distortion = 0.0f;
  degenerate.beta_realism = 0.0f;
  CHECK_THROWS_AS(train_codec(ds, degenerate, tc), ConfigError);

  // objective linearity in lambda at fixed parameters
  LearnedCodec g = LearnedCodec::init(cc, 8, 4);
  Tensor xb = gather_images(ds, {0, 1, 2, 3});
  const float base = distortion_loss(xb, g.forward_once(xb)).item();
  const float scaled = mul(distortion_loss(xb, g.forward_once(xb)), 3.0f).item();
  CHECK(scaled == doctest::Approx(3.0f * base).epsilon(1e-6));
}

TEST_CASE("train_codec with realism term runs and keeps outputs valid") {
  data::Dataset ds = small_shapes(10, 17);
  CodecConfig cc;
  cc.lambda_distortion = 1.0f;
  cc.beta_realism = 0.5f;
  TrainConfig tc;
  tc.epochs = 1;
  tc.seed = 2;
  auto result = train_codec(ds, cc, tc);
  Tensor xb = gather_images(ds, {0, 1});
  Tensor xhat = result.model.forward_once(xb);
  CHECK(all_finite(xhat));
  for (int64_t i = 0; i < xhat.size(); ++i) {
    CHECK(xhat.data()[i] >= 0.0f);
    CHECK(xhat.data()[i] <= 1.0f);
  }
}

TEST_CASE("train_surrogate") {
  data::Dataset ds = small_shapes(8, 19);
  LearnedCodec g = LearnedCodec::init(CodecConfig{}, 8, 21);
  auto defense = [&g](const Tensor& x) { return g.forward_once(x); };

  // zero epochs returns the initialized network unchanged
  SurrogateTrainConfig zero;
  zero.epochs = 0;
  zero.seed = 31;
  SurrogatePurifier untrained = train_surrogate(defense, ds, zero);
  SurrogatePurifier fresh = SurrogatePurifier::init(zero.seed);
  for (size_t i = 0; i < untrained.params().size(); ++i) {
    CHECK(untrained.params()[i]->vec() == fresh.params()[i]->vec());
  }

  // a short run beats the identity baseline on held-out images
  SurrogateTrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 31;
  SurrogatePurifier trained = train_surrogate(defense, ds, cfg);
  data::Dataset held = small_shapes(4, 23);
  Tensor x = gather_images(held, {0, 1, 2, 3});
  Tensor gx = defense(x);
  CHECK(l1_value(trained.forward(x), gx) < l1_value(x, gx));

  CHECK_THROWS_AS(train_surrogate(defense, data::Dataset{}, cfg), Error);
}

TEST_CASE("model checkpoints round trip") {
  Classifier f = Classifier::init(10, 55);
  Classifier f2 = Classifier::from_checkpoint(f.to_checkpoint());
  Rng rng(6);
  Tensor x = Tensor::randu({1, 3, 32, 32}, rng, 0.0f, 1.0f);
  CHECK(f2.forward(x).vec() == f.forward(x).vec());

  CodecConfig cc;
  cc.beta_realism = 2.0f;
  LearnedCodec g = LearnedCodec::init(cc, 8, 56);
  LearnedCodec g2 = LearnedCodec::from_checkpoint(g.to_checkpoint());
  CHECK(g2.config().beta_realism == 2.0f);
  CHECK(g2.forward_once(x).vec() == g.forward_once(x).vec());

  SurrogatePurifier s = SurrogatePurifier::init(57);
  SurrogatePurifier s2 = SurrogatePurifier::from_checkpoint(s.to_checkpoint());
  CHECK(s2.forward(x).vec() == s.forward(x).vec());

  // wrong architecture id
  auto ckpt = f.to_checkpoint();
  CHECK_THROWS_AS(LearnedCodec::from_checkpoint(ckpt), CheckpointError);
}
