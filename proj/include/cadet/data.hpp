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

#ifndef CADET_DATA_HPP_
#define CADET_DATA_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cadet/tensor.hpp"

namespace cadet::data {

enum class Split { Train, Val, Test };

struct Dataset {
  Tensor images;               // [N,3,32,32] in [0,1]
  std::vector<int> labels;     // N entries, < class_count
  int class_count = 0;
  std::vector<uint8_t> splits;  // per-image Split tag
  std::string source;
  uint64_t seed = 0;

  int size() const { return images.defined() ? images.dim(0) : 0; }
  Tensor image(int index) const;                      // [1,3,32,32]
  std::vector<int> indices_of(Split split) const;
  Dataset subset(const std::vector<int>& indices) const;
  Dataset split(Split split) const { return subset(indices_of(split)); }
};

struct ShapesSpec {
  int samples_per_class = 500;  // 10 classes: 5 shapes x 2 textures
  uint64_t seed = 7;
  float position_jitter = 4.0f;   // pixels
  float scale_jitter = 2.5f;      // base radius 8.5 +- this
  float rotation_jitter = 1.0f;   // fraction of the full turn allowed
  float color_jitter = 0.2f;
  float noise_sigma = 0.03f;      // background Gaussian noise
};

// Deterministic parametric dataset: circle/square/triangle/cross/ring, each
// solid or striped. Train/val/test assigned 80/10/10 by index hash.
Dataset gen_shapes(const ShapesSpec& spec);

// CIFAR-10 binary layout: per record 1 label byte + 3072 pixel bytes
// (R,G,B planes, row-major 32x32). `path` may be a single .bin file or a
// directory with data_batch_{1..5}.bin + test_batch.bin.
Dataset load_cifar10_binary(const std::string& path);

// "RTF1" tensor file: magic, u8 rank, rank x u32 LE dims, f32 LE payload.
void save_tensorfile(const std::string& path, const Tensor& tensor);
Tensor load_tensorfile(const std::string& path);

// Checkpoint container: a text manifest plus named RTF1 blobs in one file.
struct Checkpoint {
  std::map<std::string, std::string> manifest;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
  const std::string& field(const std::string& key) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cadet::data

#endif  // CADET_DATA_HPP_
