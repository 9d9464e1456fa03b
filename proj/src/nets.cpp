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

#include "cadet/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cadet::nets {
namespace {

Tensor conv_init(int out_c, int in_c, int k, Rng& rng) {
  const float limit = std::sqrt(6.0f / static_cast<float>(in_c * k * k));
  return Tensor::randu({out_c, in_c, k, k}, rng, -limit, limit);
}

Tensor dense_init(int in_f, int out_f, Rng& rng) {
  const float limit = std::sqrt(6.0f / static_cast<float>(in_f + out_f));
  return Tensor::randu({in_f, out_f}, rng, -limit, limit);
}

Tensor conv_bias(int out_c) { return Tensor::zeros({out_c, 1, 1}); }

void require_images(const Tensor& x, const char* who) {
  if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != 32 || x.dim(3) != 32) {
    throw ShapeError(std::string(who) + " expects [B,3,32,32], got " + shape_str(x.shape()));
  }
}

std::vector<Tensor> collect_grads(const Gradients& grads, std::vector<Tensor*> watched) {
  std::vector<Tensor> out;
  out.reserve(watched.size());
  for (Tensor* p : watched) out.push_back(grads.wrt(*p));
  return out;
}

std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(i + 1)));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  return idx;
}

Tensor l1_loss(const Tensor& a, const Tensor& b) {
  Tensor d = sub(a, b);
  return mean(emax(d, mul(d, -1.0f)));
}

}  // namespace

// ---- losses ----

Tensor distortion_loss(const Tensor& x, const Tensor& xhat) {
  if (x.shape() != xhat.shape()) {
    throw ShapeError("distortion_loss: shapes " + shape_str(x.shape()) + " and " +
                     shape_str(xhat.shape()) + " differ");
  }
  Tensor d = sub(xhat, x);
  return mean(mul(d, d));
}

float mse_value(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("mse_value: shape mismatch");
  double acc = 0.0;
  const float* pa = a.data();
  const float* pb = b.data();
  for (int64_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
    acc += d * d;
  }
  return static_cast<float>(acc / static_cast<double>(a.size()));
}

float l1_value(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("l1_value: shape mismatch");
  double acc = 0.0;
  const float* pa = a.data();
  const float* pb = b.data();
  for (int64_t i = 0; i < a.size(); ++i) acc += std::fabs(static_cast<double>(pa[i]) - pb[i]);
  return static_cast<float>(acc / static_cast<double>(a.size()));
}

Tensor patch_features(const Tensor& patches) {
  if (patches.rank() != 4) {
    throw ShapeError("patch_features expects [N,C,P,P], got " + shape_str(patches.shape()));
  }
  static const Tensor kFeatureConv = [] {
    Rng rng(0xFEA7123ull);
    return mul(Tensor::randn({24, 3, 3, 3}, rng), 1.0f / std::sqrt(27.0f));
  }();
  const int n = patches.dim(0);
  Tensor h = tanh(conv2d(patches, kFeatureConv, 1, 0));
  const int f = h.dim(1);
  const int s = h.dim(2) * h.dim(3);
  Tensor flat = reshape(h, {n * f, s});
  Tensor pooled = matmul(flat, Tensor::full({s, 1}, 1.0f / static_cast<float>(s)));
  return reshape(pooled, {n, f});
}

float median_bandwidth(const Tensor& fx, const Tensor& fy) {
  const int m = fx.dim(0), f = fx.dim(1);
  const int my = fy.dim(0);
  auto dist2 = [f](const float* a, const float* b) {
    double acc = 0.0;
    for (int j = 0; j < f; ++j) {
      const double d = static_cast<double>(a[j]) - b[j];
      acc += d * d;
    }
    return static_cast<float>(acc);
  };
  std::vector<float> dists;
  dists.reserve(static_cast<size_t>(m) * m + static_cast<size_t>(my) * my);
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) dists.push_back(dist2(fx.data() + i * f, fx.data() + j * f));
  }
  for (int i = 0; i < my; ++i) {
    for (int j = i + 1; j < my; ++j) dists.push_back(dist2(fy.data() + i * f, fy.data() + j * f));
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < my; ++j) dists.push_back(dist2(fx.data() + i * f, fy.data() + j * f));
  }
  if (dists.empty()) return 1e-6f;
  const size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  return std::max(dists[mid], 1e-6f);
}

Tensor mmd2_unbiased(const Tensor& fx, const Tensor& fy, float bandwidth) {
  if (fx.rank() != 2 || fy.rank() != 2 || fx.shape() != fy.shape()) {
    throw ShapeError("mmd2_unbiased expects matching [m,F] features, got " +
                     shape_str(fx.shape()) + " and " + shape_str(fy.shape()));
  }
  const int m = fx.dim(0), f = fx.dim(1);
  if (m < 2) throw Error("mmd2_unbiased needs at least 2 samples per side");
  const float inv_h = -1.0f / bandwidth;
  Tensor ones_col = Tensor::full({f, 1}, 1.0f);

  auto gram = [&](const Tensor& a, const Tensor& b) {
    Tensor prods = matmul(a, transpose2d(b));
    Tensor ra = matmul(mul(a, a), ones_col);              // [m,1]
    Tensor rb = matmul(mul(b, b), ones_col);              // [m,1]
    Tensor d = add(add(ra, transpose2d(rb)), mul(prods, -2.0f));
    return exp(mul(d, inv_h));
  };

  std::vector<float> eye_v(static_cast<size_t>(m) * m, 0.0f);
  for (int i = 0; i < m; ++i) eye_v[static_cast<size_t>(i) * m + i] = 1.0f;
  Tensor eye({m, m}, std::move(eye_v));

  Tensor kxx = gram(fx, fx);
  Tensor kyy = gram(fy, fy);
  Tensor kxy = gram(fx, fy);
  Tensor off_xx = sub(sum(kxx), sum(mul(kxx, eye)));
  Tensor off_yy = sub(sum(kyy), sum(mul(kyy, eye)));
  Tensor off_xy = sub(sum(kxy), sum(mul(kxy, eye)));
  const float norm = 1.0f / static_cast<float>(static_cast<int64_t>(m) * (m - 1));
  return mul(add(sub(off_xx, mul(off_xy, 2.0f)), off_yy), norm);
}

Tensor realism_loss(const Tensor& xhat_patches, const Tensor& real_patches) {
  if (xhat_patches.rank() != 4 || real_patches.rank() != 4) {
    throw ShapeError("realism_loss expects [N,C,P,P] patch sets");
  }
  if (xhat_patches.dim(0) < 2 || real_patches.dim(0) < 2) {
    throw Error("realism_loss needs at least 2 patches per set, got " +
                std::to_string(xhat_patches.dim(0)) + " and " +
                std::to_string(real_patches.dim(0)));
  }
  const int m = std::min(xhat_patches.dim(0), real_patches.dim(0));
  const int p = xhat_patches.dim(2);
  auto head = [&](const Tensor& t) {
    if (t.dim(0) == m) return t;
    std::vector<PatchPos> at;
    at.reserve(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) at.push_back({i, 0, 0});
    return extract_patches(t, at, p);
  };
  Tensor fx = patch_features(head(xhat_patches));
  Tensor fy = patch_features(head(real_patches));
  const float h = median_bandwidth(fx, fy);
  return mmd2_unbiased(fx, fy, h);
}

Tensor sample_patches(const Tensor& images, int per_image, int patch, Rng& rng) {
  if (images.rank() != 4) throw ShapeError("sample_patches expects [B,C,H,W]");
  const int b = images.dim(0), h = images.dim(2), w = images.dim(3);
  if (patch > h || patch > w) throw ShapeError("sample_patches: patch larger than image");
  std::vector<PatchPos> at;
  at.reserve(static_cast<size_t>(b) * per_image);
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < per_image; ++j) {
      const int y = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(h - patch + 1)));
      const int x = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(w - patch + 1)));
      at.push_back({i, y, x});
    }
  }
  return extract_patches(images, at, patch);
}

// ---- optimizer ----

Adam::Adam(std::vector<Tensor*> params, float lr) : params_(std::move(params)), lr_(lr) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Tensor* p : params_) {
    m_.emplace_back(static_cast<size_t>(p->size()), 0.0f);
    v_.emplace_back(static_cast<size_t>(p->size()), 0.0f);
  }
}

void Adam::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size()) throw Error("Adam::step: gradient count mismatch");
  ++t_;
  const float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
  const float bc1 = 1.0f - std::pow(b1, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(b2, static_cast<float>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor* p = params_[i];
    const float* g = grads[i].data();
    if (grads[i].shape() != p->shape()) throw ShapeError("Adam::step: gradient shape mismatch");
    std::vector<float> next(p->vec());
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < next.size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const float mhat = m[j] / bc1;
      const float vhat = v[j] / bc2;
      next[j] -= lr_ * mhat / (std::sqrt(vhat) + eps);
    }
    *p = Tensor(p->shape(), std::move(next));
  }
}

// ---- classifier ----

Classifier Classifier::init(int num_classes, uint64_t seed) {
  if (num_classes < 2) throw Error("Classifier::init: need at least 2 classes");
  Rng rng(derive_seed(seed, 0x0C1A55ull));
  Classifier c;
  c.num_classes_ = num_classes;
  c.c1w_ = conv_init(16, 3, 3, rng);
  c.c1b_ = conv_bias(16);
  c.c2w_ = conv_init(32, 16, 3, rng);
  c.c2b_ = conv_bias(32);
  c.c3w_ = conv_init(64, 32, 3, rng);
  c.c3b_ = conv_bias(64);
  c.fcw_ = dense_init(64 * 4 * 4, num_classes, rng);
  c.fcb_ = Tensor::zeros({num_classes});
  return c;
}

Tensor Classifier::forward(const Tensor& x) const {
  require_images(x, "Classifier::forward");
  Tensor h = avgpool2x(relu(add(conv2d(x, c1w_, 1, 1), c1b_)));
  h = avgpool2x(relu(add(conv2d(h, c2w_, 1, 1), c2b_)));
  h = avgpool2x(relu(add(conv2d(h, c3w_, 1, 1), c3b_)));
  h = reshape(h, {x.dim(0), 64 * 4 * 4});
  return add(matmul(h, fcw_), fcb_);
}

std::vector<Tensor*> Classifier::params() {
  return {&c1w_, &c1b_, &c2w_, &c2b_, &c3w_, &c3b_, &fcw_, &fcb_};
}

Classifier Classifier::watched(Tape& tape) const {
  Classifier c = *this;
  for (Tensor* p : c.params()) *p = tape.watch(*p);
  return c;
}

data::Checkpoint Classifier::to_checkpoint() const {
  data::Checkpoint ckpt;
  ckpt.manifest["arch"] = "classifier_v1";
  ckpt.manifest["num_classes"] = std::to_string(num_classes_);
  ckpt.tensors = {{"c1w", c1w_}, {"c1b", c1b_}, {"c2w", c2w_}, {"c2b", c2b_},
                  {"c3w", c3w_}, {"c3b", c3b_}, {"fcw", fcw_}, {"fcb", fcb_}};
  return ckpt;
}

Classifier Classifier::from_checkpoint(const data::Checkpoint& ckpt) {
  if (ckpt.field("arch") != "classifier_v1") {
    throw CheckpointError("expected classifier_v1 checkpoint, found '" + ckpt.field("arch") + "'");
  }
  Classifier c;
  c.num_classes_ = std::stoi(ckpt.field("num_classes"));
  c.c1w_ = ckpt.tensor("c1w");
  c.c1b_ = ckpt.tensor("c1b");
  c.c2w_ = ckpt.tensor("c2w");
  c.c2b_ = ckpt.tensor("c2b");
  c.c3w_ = ckpt.tensor("c3w");
  c.c3b_ = ckpt.tensor("c3b");
  c.fcw_ = ckpt.tensor("fcw");
  c.fcb_ = ckpt.tensor("fcb");
  return c;
}

// ---- codec ----

void CodecConfig::validate() const {
  if (!(lambda_distortion >= 0.0f) || !std::isfinite(lambda_distortion)) {
    throw ConfigError("codec lambda must be finite and >= 0");
  }
  if (!(beta_realism >= 0.0f) || !std::isfinite(beta_realism)) {
    throw ConfigError("codec beta must be finite and >= 0");
  }
  if (quality_levels < 2) throw ConfigError("codec quality_levels must be >= 2");
  if (defense_iterations < 1) throw ConfigError("codec defense_iterations must be >= 1");
}

LearnedCodec LearnedCodec::init(const CodecConfig& config, int latent_channels, uint64_t seed) {
  config.validate();
  if (latent_channels < 1) throw ConfigError("latent_channels must be >= 1");
  Rng rng(derive_seed(seed, 0xC0DECull));
  LearnedCodec g;
  g.config_ = config;
  g.latent_channels_ = latent_channels;
  g.e1w_ = conv_init(32, 3, 3, rng);
  g.e1b_ = conv_bias(32);
  g.e2w_ = conv_init(latent_channels, 32, 3, rng);
  g.e2b_ = conv_bias(latent_channels);
  g.d1w_ = conv_init(32, latent_channels, 3, rng);
  g.d1b_ = conv_bias(32);
  g.d2w_ = conv_init(3, 32, 3, rng);
  g.d2b_ = conv_bias(3);
  return g;
}

Tensor LearnedCodec::encode(const Tensor& x) const {
  require_images(x, "LearnedCodec::encode");
  Tensor h = relu(add(conv2d(x, e1w_, 2, 1), e1b_));
  return tanh(add(conv2d(h, e2w_, 2, 1), e2b_));
}

Tensor LearnedCodec::quantize(const Tensor& z) const {
  const float steps = static_cast<float>(config_.quality_levels - 1);
  Tensor u = clamp_ste(mul(add(z, 1.0f), 0.5f), 0.0f, 1.0f);
  Tensor q = div(round_ste(mul(u, steps)), steps);
  return sub(mul(q, 2.0f), 1.0f);
}

Tensor LearnedCodec::decode(const Tensor& zq) const {
  Tensor h = relu(add(conv2d(upsample2x(zq), d1w_, 1, 1), d1b_));
  Tensor y = sigmoid(add(conv2d(upsample2x(h), d2w_, 1, 1), d2b_));
  return clamp_ste(y, 0.0f, 1.0f);
}

Tensor LearnedCodec::forward_once(const Tensor& x) const { return decode(quantize(encode(x))); }

Tensor LearnedCodec::forward(const Tensor& x) const {
  Tensor y = x;
  for (int i = 0; i < config_.defense_iterations; ++i) y = forward_once(y);
  return y;
}

std::vector<Tensor*> LearnedCodec::params() {
  return {&e1w_, &e1b_, &e2w_, &e2b_, &d1w_, &d1b_, &d2w_, &d2b_};
}

LearnedCodec LearnedCodec::watched(Tape& tape) const {
  LearnedCodec g = *this;
  for (Tensor* p : g.params()) *p = tape.watch(*p);
  return g;
}

data::Checkpoint LearnedCodec::to_checkpoint() const {
  data::Checkpoint ckpt;
  ckpt.manifest["arch"] = "codec_v1";
  ckpt.manifest["lambda"] = std::to_string(config_.lambda_distortion);
  ckpt.manifest["beta"] = std::to_string(config_.beta_realism);
  ckpt.manifest["levels"] = std::to_string(config_.quality_levels);
  ckpt.manifest["iterations"] = std::to_string(config_.defense_iterations);
  ckpt.manifest["latent_channels"] = std::to_string(latent_channels_);
  ckpt.tensors = {{"e1w", e1w_}, {"e1b", e1b_}, {"e2w", e2w_}, {"e2b", e2b_},
                  {"d1w", d1w_}, {"d1b", d1b_}, {"d2w", d2w_}, {"d2b", d2b_}};
  return ckpt;
}

LearnedCodec LearnedCodec::from_checkpoint(const data::Checkpoint& ckpt) {
  if (ckpt.field("arch") != "codec_v1") {
    throw CheckpointError("expected codec_v1 checkpoint, found '" + ckpt.field("arch") + "'");
  }
  LearnedCodec g;
  g.config_.lambda_distortion = std::stof(ckpt.field("lambda"));
  g.config_.beta_realism = std::stof(ckpt.field("beta"));
  g.config_.quality_levels = std::stoi(ckpt.field("levels"));
  g.config_.defense_iterations = std::stoi(ckpt.field("iterations"));
  g.latent_channels_ = std::stoi(ckpt.field("latent_channels"));
  g.e1w_ = ckpt.tensor("e1w");
  g.e1b_ = ckpt.tensor("e1b");
  g.e2w_ = ckpt.tensor("e2w");
  g.e2b_ = ckpt.tensor("e2b");
  g.d1w_ = ckpt.tensor("d1w");
  g.d1b_ = ckpt.tensor("d1b");
  g.d2w_ = ckpt.tensor("d2w");
  g.d2b_ = ckpt.tensor("d2b");
  return g;
}

// ---- surrogate ----

SurrogatePurifier SurrogatePurifier::init(uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5180ull));
  SurrogatePurifier s;
  s.d0w_ = conv_init(16, 3, 3, rng);
  s.d0b_ = conv_bias(16);
  s.d1w_ = conv_init(32, 16, 3, rng);
  s.d1b_ = conv_bias(32);
  s.d2w_ = conv_init(32, 32, 3, rng);
  s.d2b_ = conv_bias(32);
  s.u1w_ = conv_init(16, 64, 3, rng);
  s.u1b_ = conv_bias(16);
  s.u2w_ = conv_init(3, 32, 3, rng);
  s.u2b_ = conv_bias(3);
  return s;
}

Tensor SurrogatePurifier::forward(const Tensor& x) const {
  require_images(x, "SurrogatePurifier::forward");
  Tensor d0 = relu(add(conv2d(x, d0w_, 1, 1), d0b_));                  // 32x32
  Tensor d1 = relu(add(conv2d(avgpool2x(d0), d1w_, 1, 1), d1b_));      // 16x16
  Tensor d2 = relu(add(conv2d(avgpool2x(d1), d2w_, 1, 1), d2b_));      // 8x8
  Tensor u1 = concat_channels(upsample2x(d2), d1);                     // 16x16, 64ch
  u1 = relu(add(conv2d(u1, u1w_, 1, 1), u1b_));
  Tensor u2 = concat_channels(upsample2x(u1), d0);                     // 32x32, 32ch
  return sigmoid(add(conv2d(u2, u2w_, 1, 1), u2b_));
}

std::vector<Tensor*> SurrogatePurifier::params() {
  return {&d0w_, &d0b_, &d1w_, &d1b_, &d2w_, &d2b_, &u1w_, &u1b_, &u2w_, &u2b_};
}

SurrogatePurifier SurrogatePurifier::watched(Tape& tape) const {
  SurrogatePurifier s = *this;
  for (Tensor* p : s.params()) *p = tape.watch(*p);
  return s;
}

data::Checkpoint SurrogatePurifier::to_checkpoint() const {
  data::Checkpoint ckpt;
  ckpt.manifest["arch"] = "unet_v1";
  ckpt.tensors = {{"d0w", d0w_}, {"d0b", d0b_}, {"d1w", d1w_}, {"d1b", d1b_}, {"d2w", d2w_},
                  {"d2b", d2b_}, {"u1w", u1w_}, {"u1b", u1b_}, {"u2w", u2w_}, {"u2b", u2b_}};
  return ckpt;
}

SurrogatePurifier SurrogatePurifier::from_checkpoint(const data::Checkpoint& ckpt) {
  if (ckpt.field("arch") != "unet_v1") {
    throw CheckpointError("expected unet_v1 checkpoint, found '" + ckpt.field("arch") + "'");
  }
  SurrogatePurifier s;
  s.d0w_ = ckpt.tensor("d0w");
  s.d0b_ = ckpt.tensor("d0b");
  s.d1w_ = ckpt.tensor("d1w");
  s.d1b_ = ckpt.tensor("d1b");
  s.d2w_ = ckpt.tensor("d2w");
  s.d2b_ = ckpt.tensor("d2b");
  s.u1w_ = ckpt.tensor("u1w");
  s.u1b_ = ckpt.tensor("u1b");
  s.u2w_ = ckpt.tensor("u2w");
  s.u2b_ = ckpt.tensor("u2b");
  return s;
}

// ---- defended pipeline ----

Tensor Codec::apply(const Tensor& x) const {
  if (!apply_once) throw Error("Codec '" + name + "' has no apply function");
  Tensor y = x;
  for (int i = 0; i < iterations; ++i) y = apply_once(y);
  return y;
}

Codec identity_codec() {
  Codec c;
  c.name = "identity";
  c.iterations = 1;
  c.apply_once = [](const Tensor& x) { return x; };
  return c;
}

Codec ste_quantizer_codec(int levels) {
  if (levels < 2) throw ConfigError("ste_quantizer_codec: levels must be >= 2");
  Codec c;
  c.name = "ste_quant" + std::to_string(levels);
  c.iterations = 1;
  const float steps = static_cast<float>(levels - 1);
  c.apply_once = [steps](const Tensor& x) {
    return div(round_ste(mul(clamp_ste(x, 0.0f, 1.0f), steps)), steps);
  };
  return c;
}

Codec learned_defense(const LearnedCodec* codec) {
  if (codec == nullptr) throw Error("learned_defense: null codec");
  Codec c;
  c.name = "codec";
  c.iterations = codec->config().defense_iterations;
  c.apply_once = [codec](const Tensor& x) { return codec->forward_once(x); };
  return c;
}

Tensor DefendedPipeline::forward(const Tensor& x) const {
  if (classifier == nullptr) throw Error("DefendedPipeline has no classifier");
  return classifier->forward(codec.apply(x));
}

// ---- training ----

Tensor gather_images(const data::Dataset& dataset, const std::vector<int>& indices) {
  const int64_t floats = 3 * 32 * 32;
  std::vector<float> v(indices.size() * static_cast<size_t>(floats));
  for (size_t i = 0; i < indices.size(); ++i) {
    std::memcpy(v.data() + i * static_cast<size_t>(floats),
                dataset.images.data() + static_cast<int64_t>(indices[i]) * floats,
                sizeof(float) * static_cast<size_t>(floats));
  }
  return Tensor({static_cast<int>(indices.size()), 3, 32, 32}, std::move(v));
}

std::vector<int> gather_labels(const data::Dataset& dataset, const std::vector<int>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(dataset.labels[static_cast<size_t>(i)]);
  return out;
}

ClassifierTrainResult train_classifier(const data::Dataset& dataset, const TrainConfig& config) {
  if (dataset.size() == 0) throw Error("train_classifier: empty dataset");
  for (int y : dataset.labels) {
    if (y < 0 || y >= dataset.class_count) throw Error("train_classifier: label out of range");
  }
  ClassifierTrainResult result;
  result.model = Classifier::init(dataset.class_count, config.seed);
  Adam adam(result.model.params(), config.lr);
  const int n = dataset.size();
  const int bs = std::max(1, config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, 1000 + static_cast<uint64_t>(epoch)));
    const std::vector<int> order = shuffled_indices(n, shuffle_rng);
    double loss_acc = 0.0;
    int64_t correct = 0, seen = 0, batches = 0;
    for (int start = 0; start < n; start += bs) {
      const int end = std::min(n, start + bs);
      std::vector<int> batch(order.begin() + start, order.begin() + end);
      Tensor xb = gather_images(dataset, batch);
      std::vector<int> yb = gather_labels(dataset, batch);

      Tape tape;
      Classifier w = result.model.watched(tape);
      Tensor logits = w.forward(xb);
      Tensor loss = softmax_cross_entropy(logits, yb);
      Gradients grads = tape.backward(loss);
      adam.step(collect_grads(grads, w.params()));

      loss_acc += loss.item();
      ++batches;
      const std::vector<int> preds = argmax_rows(logits);
      for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == yb[i]) ++correct;
      }
      seen += static_cast<int64_t>(preds.size());
    }
    EpochMetrics m;
    m.loss = batches > 0 ? static_cast<float>(loss_acc / batches) : 0.0f;
    m.accuracy = seen > 0 ? static_cast<float>(correct) / static_cast<float>(seen) : 0.0f;
    result.metrics.epochs.push_back(m);
  }
  return result;
}

CodecTrainResult train_codec(const data::Dataset& dataset, const CodecConfig& codec_config,
                             const TrainConfig& config, int latent_channels) {
  if (dataset.size() == 0) throw Error("train_codec: empty dataset");
  codec_config.validate();
  if (codec_config.lambda_distortion == 0.0f && codec_config.beta_realism == 0.0f) {
    throw ConfigError("train_codec: lambda and beta are both zero (degenerate objective)");
  }
  CodecTrainResult result;
  result.model = LearnedCodec::init(codec_config, latent_channels, config.seed);
  Adam adam(result.model.params(), config.lr);
  const int n = dataset.size();
  const int bs = std::max(2, config.batch_size);
  constexpr int kPatch = 8;
  constexpr int kPatchesPerImage = 2;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, 2000 + static_cast<uint64_t>(epoch)));
    Rng patch_rng(derive_seed(config.seed, 3000 + static_cast<uint64_t>(epoch)));
    const std::vector<int> order = shuffled_indices(n, shuffle_rng);
    double loss_acc = 0.0;
    int64_t batches = 0;
    for (int start = 0; start + 1 < n; start += bs) {
      const int end = std::min(n, start + bs);
      std::vector<int> batch(order.begin() + start, order.begin() + end);
      Tensor xb = gather_images(dataset, batch);

      Tape tape;
      LearnedCodec w = result.model.watched(tape);
      Tensor xhat = w.forward_once(xb);
      Tensor loss = mul(distortion_loss(xb, xhat), codec_config.lambda_distortion);
      if (codec_config.beta_realism > 0.0f) {
        Tensor fake = sample_patches(xhat, kPatchesPerImage, kPatch, patch_rng);
        Tensor real = sample_patches(xb, kPatchesPerImage, kPatch, patch_rng);
        loss = add(loss, mul(realism_loss(fake, real), codec_config.beta_realism));
      }
      Gradients grads = tape.backward(loss);
      adam.step(collect_grads(grads, w.params()));
      loss_acc += loss.item();
      ++batches;
    }
    EpochMetrics m;
    m.loss = batches > 0 ? static_cast<float>(loss_acc / batches) : 0.0f;
    result.metrics.epochs.push_back(m);
  }
  return result;
}

SurrogatePurifier train_surrogate(const std::function<Tensor(const Tensor&)>& defense,
                                  const data::Dataset& dataset,
                                  const SurrogateTrainConfig& config) {
  if (dataset.size() == 0) throw Error("train_surrogate: empty dataset");
  SurrogatePurifier model = SurrogatePurifier::init(config.seed);
  Adam adam(model.params(), config.lr);
  const int n = dataset.size();
  const int bs = std::max(1, config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    adam.set_lr(config.lr * std::pow(config.lr_gamma, static_cast<float>(epoch / config.lr_step)));
    Rng shuffle_rng(derive_seed(config.seed, 4000 + static_cast<uint64_t>(epoch)));
    Rng noise_rng(derive_seed(config.seed, 5000 + static_cast<uint64_t>(epoch)));
    const std::vector<int> order = shuffled_indices(n, shuffle_rng);
    for (int start = 0; start < n; start += bs) {
      const int end = std::min(n, start + bs);
      std::vector<int> batch(order.begin() + start, order.begin() + end);
      Tensor xb = gather_images(dataset, batch);

      const int noisy_passes = config.noise_passes ? 3 : 0;
      for (int pass = 0; pass < noisy_passes + 1; ++pass) {
        Tensor input = xb;
        if (pass < noisy_passes) {
          std::vector<float> v(xb.vec());
          for (auto& f : v) {
            f = std::clamp(f + noise_rng.uniform(-config.noise_magnitude, config.noise_magnitude),
                           0.0f, 1.0f);
          }
          input = Tensor(xb.shape(), std::move(v));
        }
        Tensor target = defense(input).detached();

        Tape tape;
        SurrogatePurifier w = model.watched(tape);
        Tensor loss = l1_loss(w.forward(input), target);
        Gradients grads = tape.backward(loss);
        adam.step(collect_grads(grads, w.params()));
      }
    }
  }
  return model;
}

}  // namespace cadet::nets
