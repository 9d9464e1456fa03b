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

#ifndef CADET_NETS_HPP_
#define CADET_NETS_HPP_

#include <functional>
#include <string>
#include <vector>

#include "cadet/data.hpp"
#include "cadet/ops.hpp"
#include "cadet/tensor.hpp"

namespace cadet::nets {

// ---- losses ----

// Mean squared error; the toolkit's single distortion notion.
Tensor distortion_loss(const Tensor& x, const Tensor& xhat);
float mse_value(const Tensor& a, const Tensor& b);
float l1_value(const Tensor& a, const Tensor& b);

// Unbiased squared MMD with RBF kernel over fixed random-convolution patch
// features; bandwidth from the median heuristic over the joint pairwise
// squared distances (treated as a constant on the tape). Both patch sets are
// truncated to the smaller count; requires >= 2 patches per side.
Tensor realism_loss(const Tensor& xhat_patches, const Tensor& real_patches);

// Equal-size unbiased MMD^2 with an explicit bandwidth; exposed for
// gradient checks. fx, fy are [m,F] feature matrices.
Tensor mmd2_unbiased(const Tensor& fx, const Tensor& fy, float bandwidth);

// The fixed random-convolution feature map used by realism_loss.
Tensor patch_features(const Tensor& patches);

// Median of the joint pairwise squared feature distances (order-invariant).
float median_bandwidth(const Tensor& fx, const Tensor& fy);

// Seeded patch positions, `per_image` patches from every image.
Tensor sample_patches(const Tensor& images, int per_image, int patch, Rng& rng);

// ---- optimizer ----

class Adam {
 public:
  Adam(std::vector<Tensor*> params, float lr);
  void set_lr(float lr) { lr_ = lr; }
  float lr() const { return lr_; }
  void step(const std::vector<Tensor>& grads);

 private:
  std::vector<Tensor*> params_;
  std::vector<std::vector<float>> m_, v_;
  float lr_;
  int64_t t_ = 0;
};

// ---- models ----

class Classifier {
 public:
  Classifier() = default;
  static Classifier init(int num_classes, uint64_t seed);

  // [B,3,32,32] in [0,1] -> [B,K] logits
  Tensor forward(const Tensor& x) const;
  int num_classes() const { return num_classes_; }

  std::vector<Tensor*> params();
  Classifier watched(Tape& tape) const;

  data::Checkpoint to_checkpoint() const;
  static Classifier from_checkpoint(const data::Checkpoint& ckpt);

 private:
  int num_classes_ = 0;
  Tensor c1w_, c1b_, c2w_, c2b_, c3w_, c3b_, fcw_, fcb_;
};

struct CodecConfig {
  float lambda_distortion = 4.0f;
  float beta_realism = 0.0f;
  int quality_levels = 8;     // L >= 2 uniform levels over the latent range
  int defense_iterations = 1;
  void validate() const;
};

class LearnedCodec {
 public:
  LearnedCodec() = default;
  static LearnedCodec init(const CodecConfig& config, int latent_channels, uint64_t seed);

  Tensor encode(const Tensor& x) const;      // [B,3,32,32] -> [B,Cz,8,8] in (-1,1)
  Tensor quantize(const Tensor& z) const;    // straight-through, L uniform levels
  Tensor decode(const Tensor& zq) const;     // -> [B,3,32,32] in [0,1]
  Tensor forward_once(const Tensor& x) const;
  Tensor forward(const Tensor& x) const;     // forward_once iterated defense_iterations times

  const CodecConfig& config() const { return config_; }
  CodecConfig& config() { return config_; }
  int latent_channels() const { return latent_channels_; }

  std::vector<Tensor*> params();
  LearnedCodec watched(Tape& tape) const;

  data::Checkpoint to_checkpoint() const;
  static LearnedCodec from_checkpoint(const data::Checkpoint& ckpt);

 private:
  CodecConfig config_;
  int latent_channels_ = 0;
  Tensor e1w_, e1b_, e2w_, e2b_, d1w_, d1b_, d2w_, d2b_;
};

// Encoder-decoder with two downsampling stages and skip connections.
class SurrogatePurifier {
 public:
  SurrogatePurifier() = default;
  static SurrogatePurifier init(uint64_t seed);

  Tensor forward(const Tensor& x) const;  // output in (0,1), shape preserved
  std::vector<Tensor*> params();
  SurrogatePurifier watched(Tape& tape) const;

  data::Checkpoint to_checkpoint() const;
  static SurrogatePurifier from_checkpoint(const data::Checkpoint& ckpt);

 private:
  Tensor d0w_, d0b_, d1w_, d1b_, d2w_, d2b_, u1w_, u1b_, u2w_, u2b_;
};

// ---- defended pipeline ----

// Type-erased preprocessing defense; jpeg and learned codecs plug in here.
struct Codec {
  std::string name = "identity";
  int iterations = 1;
  std::function<Tensor(const Tensor&)> apply_once;

  Tensor apply(const Tensor& x) const;
};

Codec identity_codec();
Codec ste_quantizer_codec(int levels);
Codec learned_defense(const LearnedCodec* codec);

struct DefendedPipeline {
  Codec codec;
  const Classifier* classifier = nullptr;

  Tensor apply_defense(const Tensor& x) const { return codec.apply(x); }
  Tensor forward(const Tensor& x) const;
};

// ---- training ----

struct TrainConfig {
  int epochs = 6;
  float lr = 1e-3f;
  int batch_size = 32;
  uint64_t seed = 1;
};

struct EpochMetrics {
  float loss = 0.0f;
  float accuracy = 0.0f;  // classifier only
};

struct TrainMetrics {
  std::vector<EpochMetrics> epochs;
};

struct ClassifierTrainResult {
  Classifier model;
  TrainMetrics metrics;
};
ClassifierTrainResult train_classifier(const data::Dataset& dataset, const TrainConfig& config);

struct CodecTrainResult {
  LearnedCodec model;
  TrainMetrics metrics;
};
CodecTrainResult train_codec(const data::Dataset& dataset, const CodecConfig& codec_config,
                             const TrainConfig& config, int latent_channels = 8);

struct SurrogateTrainConfig {
  int epochs = 20;
  float lr = 1e-3f;
  int lr_step = 5;          // decay every lr_step epochs
  float lr_gamma = 0.1f;
  int batch_size = 32;
  bool noise_passes = true;  // 3 noisy passes + 1 clean pass per batch
  float noise_magnitude = 8.0f / 255.0f;
  uint64_t seed = 1;
};

// Trains g' to mimic `defense` with the L1 loss.
SurrogatePurifier train_surrogate(const std::function<Tensor(const Tensor&)>& defense,
                                  const data::Dataset& dataset,
                                  const SurrogateTrainConfig& config);

// Batch assembly helpers shared by training and evaluation code.
Tensor gather_images(const data::Dataset& dataset, const std::vector<int>& indices);
std::vector<int> gather_labels(const data::Dataset& dataset, const std::vector<int>& indices);

}  // namespace cadet::nets

#endif  // CADET_NETS_HPP_
