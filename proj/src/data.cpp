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

#include "cadet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "cadet/rng.hpp"

namespace cadet::data {
namespace {

constexpr int kSide = 32;
constexpr int kChannels = 3;
constexpr int kImageFloats = kChannels * kSide * kSide;
constexpr int kCifarRecord = 1 + kImageFloats;

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw FormatError(std::string("short read in ") + what);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_tensor_blob(std::ostream& os, const Tensor& t) {
  os.write("RTF1", 4);
  const uint8_t rank = static_cast<uint8_t>(t.rank());
  os.write(reinterpret_cast<const char*>(&rank), 1);
  for (int d : t.shape()) write_u32(os, static_cast<uint32_t>(d));
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * 4));
}

Tensor read_tensor_blob(std::istream& is, const char* what) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "RTF1", 4) != 0) {
    throw FormatError(std::string("bad RTF1 magic in ") + what);
  }
  uint8_t rank = 0;
  is.read(reinterpret_cast<char*>(&rank), 1);
  if (!is) throw FormatError(std::string("short read in ") + what);
  Shape shape;
  int64_t count = 1;
  for (int i = 0; i < rank; ++i) {
    const uint32_t d = read_u32(is, what);
    if (d > 0x7FFFFFFFu) throw FormatError(std::string("dimension overflow in ") + what);
    shape.push_back(static_cast<int>(d));
    count *= d;
    if (count > (int64_t(1) << 33)) throw FormatError(std::string("tensor too large in ") + what);
  }
  std::vector<float> payload(static_cast<size_t>(count));
  is.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(count * 4));
  if (!is) throw FormatError(std::string("short payload in ") + what);
  return Tensor(std::move(shape), std::move(payload));
}

struct ShapeFrame {
  float cx, cy, radius, cos_t, sin_t, phase;
};

float shape_sdf(int kind, float u, float v, float r) {
  switch (kind) {
    case 0:  // circle
      return std::sqrt(u * u + v * v) - r;
    case 1:  // square
      return std::max(std::fabs(u), std::fabs(v)) - 0.8f * r;
    case 2: {  // triangle, point up (v grows upward in shape frame)
      const float big = 1.15f * r;
      const float d1 = -v;
      const float d2 = 0.8660254f * u + 0.5f * v;
      const float d3 = -0.8660254f * u + 0.5f * v;
      return std::max({d1, d2, d3}) - 0.5f * big;
    }
    case 3: {  // cross
      const float arm = 0.32f * r;
      const float b1 = std::max(std::fabs(u) - r, std::fabs(v) - arm);
      const float b2 = std::max(std::fabs(v) - r, std::fabs(u) - arm);
      return std::min(b1, b2);
    }
    default: {  // ring
      return std::fabs(std::sqrt(u * u + v * v) - 0.8f * r) - 0.28f * r;
    }
  }
}

void render_shape(float* img, int label, const ShapesSpec& spec, Rng& rng) {
  const int shape_kind = label / 2;
  const bool striped = (label % 2) == 1;

  float bg[3], fg[3], fg2[3];
  for (int c = 0; c < kChannels; ++c) {
    bg[c] = 0.12f + spec.color_jitter * (rng.uniform() - 0.5f) * 0.6f;
  }
  for (int c = 0; c < kChannels; ++c) {
    fg[c] = 0.75f + spec.color_jitter * (rng.uniform() - 0.5f) * 1.2f;
    fg2[c] = fg[c] * 0.45f;
  }

  ShapeFrame f;
  f.cx = 16.0f + spec.position_jitter * (rng.uniform() - 0.5f) * 2.0f;
  f.cy = 16.0f + spec.position_jitter * (rng.uniform() - 0.5f) * 2.0f;
  f.radius = 8.5f + spec.scale_jitter * (rng.uniform() - 0.5f) * 2.0f;
  const float theta = 6.2831853f * rng.uniform() * spec.rotation_jitter;
  f.cos_t = std::cos(theta);
  f.sin_t = std::sin(theta);
  f.phase = 6.2831853f * rng.uniform() * spec.rotation_jitter;

  const float stripe_freq = 6.2831853f / 4.0f;  // 4 px period
  for (int y = 0; y < kSide; ++y) {
    for (int x = 0; x < kSide; ++x) {
      const float dx = (static_cast<float>(x) + 0.5f) - f.cx;
      const float dy = f.cy - (static_cast<float>(y) + 0.5f);  // v axis points up
      const float u = f.cos_t * dx + f.sin_t * dy;
      const float v = -f.sin_t * dx + f.cos_t * dy;
      const float d = shape_sdf(shape_kind, u, v, f.radius);
      const float alpha = std::clamp(0.5f - d, 0.0f, 1.0f);

      float t = 1.0f;
      if (striped) {
        const float s = std::sin(u * stripe_freq + f.phase);
        t = std::clamp(0.5f + 2.0f * s, 0.0f, 1.0f);
      }
      for (int c = 0; c < kChannels; ++c) {
        const float shade = striped ? fg2[c] + (fg[c] - fg2[c]) * t : fg[c];
        const float base = bg[c] + alpha * (shade - bg[c]);
        const float noisy = base + spec.noise_sigma * rng.normal();
        img[(c * kSide + y) * kSide + x] = std::clamp(noisy, 0.0f, 1.0f);
      }
    }
  }
}

uint8_t split_of_index(uint64_t seed, int index) {
  const uint64_t h = derive_seed(seed ^ 0xD15C0DEull, static_cast<uint64_t>(index)) % 10;
  if (h < 8) return static_cast<uint8_t>(Split::Train);
  if (h == 8) return static_cast<uint8_t>(Split::Val);
  return static_cast<uint8_t>(Split::Test);
}

}  // namespace

Tensor Dataset::image(int index) const {
  if (index < 0 || index >= size()) {
    throw Error("dataset index " + std::to_string(index) + " out of range");
  }
  std::vector<float> v(kImageFloats);
  std::memcpy(v.data(), images.data() + static_cast<int64_t>(index) * kImageFloats,
              sizeof(float) * kImageFloats);
  return Tensor({1, kChannels, kSide, kSide}, std::move(v));
}

std::vector<int> Dataset::indices_of(Split split) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    if (splits[static_cast<size_t>(i)] == static_cast<uint8_t>(split)) out.push_back(i);
  }
  return out;
}

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Dataset out;
  std::vector<float> v(indices.size() * kImageFloats);
  out.labels.reserve(indices.size());
  out.splits.reserve(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= size()) throw Error("subset index out of range");
    std::memcpy(v.data() + i * kImageFloats,
                images.data() + static_cast<int64_t>(idx) * kImageFloats,
                sizeof(float) * kImageFloats);
    out.labels.push_back(labels[static_cast<size_t>(idx)]);
    out.splits.push_back(splits[static_cast<size_t>(idx)]);
  }
  out.images = Tensor({static_cast<int>(indices.size()), kChannels, kSide, kSide}, std::move(v));
  out.class_count = class_count;
  out.source = source;
  out.seed = seed;
  return out;
}

Dataset gen_shapes(const ShapesSpec& spec) {
  if (spec.samples_per_class < 1) throw Error("gen_shapes: samples_per_class must be >= 1");
  if (spec.noise_sigma < 0.0f) throw Error("gen_shapes: noise sigma must be >= 0");
  const int classes = 10;
  const int n = classes * spec.samples_per_class;
  std::vector<float> v(static_cast<size_t>(n) * kImageFloats);
  Dataset ds;
  ds.labels.resize(static_cast<size_t>(n));
  ds.splits.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int label = i / spec.samples_per_class;
    Rng rng(derive_seed(spec.seed, static_cast<uint64_t>(i)));
    render_shape(v.data() + static_cast<int64_t>(i) * kImageFloats, label, spec, rng);
    ds.labels[static_cast<size_t>(i)] = label;
    ds.splits[static_cast<size_t>(i)] = split_of_index(spec.seed, i);
  }
  ds.images = Tensor({n, kChannels, kSide, kSide}, std::move(v));
  ds.class_count = classes;
  ds.source = "shapes";
  ds.seed = spec.seed;
  return ds;
}

namespace {

void append_cifar_file(const std::string& path, std::vector<float>& pixels,
                       std::vector<int>& labels) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  is.seekg(0, std::ios::end);
  const int64_t bytes = is.tellg();
  is.seekg(0);
  if (bytes <= 0 || bytes % kCifarRecord != 0) {
    throw FormatError(path + ": size " + std::to_string(bytes) + " is not a multiple of " +
                      std::to_string(kCifarRecord) + " (label byte + 3072 pixel bytes)");
  }
  const int64_t records = bytes / kCifarRecord;
  std::vector<unsigned char> raw(static_cast<size_t>(bytes));
  is.read(reinterpret_cast<char*>(raw.data()), bytes);
  if (!is) throw FormatError(path + ": short read");
  pixels.reserve(pixels.size() + static_cast<size_t>(records) * kImageFloats);
  for (int64_t r = 0; r < records; ++r) {
    const unsigned char* rec = raw.data() + r * kCifarRecord;
    if (rec[0] > 9) {
      throw FormatError(path + ": record " + std::to_string(r) + " has label byte " +
                        std::to_string(rec[0]) + " > 9");
    }
    labels.push_back(rec[0]);
    for (int j = 0; j < kImageFloats; ++j) {
      pixels.push_back(static_cast<float>(rec[1 + j]) * (1.0f / 255.0f));
    }
  }
}

}  // namespace

Dataset load_cifar10_binary(const std::string& path) {
  Dataset ds;
  std::vector<float> pixels;
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) {
    size_t train_records = 0;
    for (int i = 1; i <= 5; ++i) {
      append_cifar_file(path + "/data_batch_" + std::to_string(i) + ".bin", pixels, ds.labels);
    }
    train_records = ds.labels.size();
    append_cifar_file(path + "/test_batch.bin", pixels, ds.labels);
    ds.splits.resize(ds.labels.size());
    for (size_t i = 0; i < ds.labels.size(); ++i) {
      if (i >= train_records) {
        ds.splits[i] = static_cast<uint8_t>(Split::Test);
      } else {
        // carve 10% of the train files out as validation
        ds.splits[i] = (derive_seed(0xC1FA5ull, i) % 10 == 0)
                           ? static_cast<uint8_t>(Split::Val)
                           : static_cast<uint8_t>(Split::Train);
      }
    }
  } else {
    append_cifar_file(path, pixels, ds.labels);
    ds.splits.assign(ds.labels.size(), static_cast<uint8_t>(Split::Train));
  }
  const int n = static_cast<int>(ds.labels.size());
  ds.images = Tensor({n, kChannels, kSide, kSide}, std::move(pixels));
  ds.class_count = 10;
  ds.source = "cifar10";
  ds.seed = 0;
  return ds;
}

void save_tensorfile(const std::string& path, const Tensor& tensor) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  write_tensor_blob(os, tensor);
  if (!os) throw FormatError("write failed for " + path);
}

Tensor load_tensorfile(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return read_tensor_blob(is, path.c_str());
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw CheckpointError("checkpoint is missing tensor '" + name + "'");
}

const std::string& Checkpoint::field(const std::string& key) const {
  auto it = manifest.find(key);
  if (it == manifest.end()) throw CheckpointError("checkpoint is missing manifest key '" + key + "'");
  return it->second;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open " + path + " for writing");
  os.write("RTC1", 4);
  std::string manifest;
  for (const auto& [k, v] : ckpt.manifest) manifest += k + "=" + v + "\n";
  write_u32(os, static_cast<uint32_t>(manifest.size()));
  os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  write_u32(os, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor_blob(os, t);
  }
  if (!os) throw CheckpointError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "RTC1", 4) != 0) {
    throw CheckpointError(path + ": bad checkpoint magic");
  }
  Checkpoint ckpt;
  const uint32_t mlen = read_u32(is, "manifest");
  std::string manifest(mlen, '\0');
  is.read(manifest.data(), mlen);
  if (!is) throw CheckpointError(path + ": short manifest");
  size_t pos = 0;
  while (pos < manifest.size()) {
    size_t eol = manifest.find('\n', pos);
    if (eol == std::string::npos) eol = manifest.size();
    const std::string line = manifest.substr(pos, eol - pos);
    pos = eol + 1;
    const size_t eq = line.find('=');
    if (eq != std::string::npos) ckpt.manifest[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const uint32_t count = read_u32(is, "tensor count");
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t nlen = read_u32(is, "tensor name");
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    if (!is) throw CheckpointError(path + ": short tensor name");
    ckpt.tensors.emplace_back(std::move(name), read_tensor_blob(is, path.c_str()));
  }
  return ckpt;
}

}  // namespace cadet::data
