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

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cadet/data.hpp"
#include "cadet/ops.hpp"

using namespace cadet;
using namespace cadet::data;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("RTF1 round trip") {
  Rng rng(99);
  Tensor t = Tensor::randn({3, 4, 5}, rng);
  const std::string path = temp_path("cadet_rtf1_test.rtf");
  save_tensorfile(path, t);
  Tensor back = load_tensorfile(path);
  CHECK(back.shape() == t.shape());
  CHECK(back.vec() == t.vec());

  // rank-0 scalar
  save_tensorfile(path, Tensor::scalar(2.5f));
  Tensor s = load_tensorfile(path);
  CHECK(s.rank() == 0);
  CHECK(s.item() == 2.5f);

  write_bytes(path, {'N', 'O', 'P', 'E', 0});
  CHECK_THROWS_AS(load_tensorfile(path), FormatError);

  // truncated payload
  {
    std::ofstream os(path, std::ios::binary);
    os.write("RTF1", 4);
    const uint8_t rank = 1;
    os.write(reinterpret_cast<const char*>(&rank), 1);
    const uint32_t dim = 8;
    os.write(reinterpret_cast<const char*>(&dim), 4);
    const float one = 1.0f;
    os.write(reinterpret_cast<const char*>(&one), 4);  // 1 of 8 floats
  }
  CHECK_THROWS_AS(load_tensorfile(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint container round trip") {
  Rng rng(5);
  Checkpoint ckpt;
  ckpt.manifest["arch"] = "test_v1";
  ckpt.manifest["seed"] = "42";
  ckpt.tensors.emplace_back("weights", Tensor::randn({4, 4}, rng));
  ckpt.tensors.emplace_back("bias", Tensor::randn({4}, rng));
  const std::string path = temp_path("cadet_ckpt_test.rtc");
  save_checkpoint(path, ckpt);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.field("arch") == "test_v1");
  CHECK(back.field("seed") == "42");
  CHECK(back.tensor("weights").vec() == ckpt.tensors[0].second.vec());
  CHECK(back.tensor("bias").vec() == ckpt.tensors[1].second.vec());
  CHECK_THROWS_AS(back.tensor("missing"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(temp_path("no_such_checkpoint.rtc")), CheckpointError);
  std::remove(path.c_str());
}

TEST_CASE("gen_shapes determinism and invariants") {
  ShapesSpec spec;
  spec.samples_per_class = 6;
  spec.seed = 123;
  Dataset a = gen_shapes(spec);
  Dataset b = gen_shapes(spec);
  CHECK(a.size() == 60);
  CHECK(a.images.vec() == b.images.vec());
  CHECK(a.labels == b.labels);
  CHECK(a.splits == b.splits);

  for (int64_t i = 0; i < a.images.size(); ++i) {
    CHECK(a.images.data()[i] >= 0.0f);
    CHECK(a.images.data()[i] <= 1.0f);
  }
  for (int y : a.labels) CHECK(y < a.class_count);

  ShapesSpec other = spec;
  other.seed = 124;
  CHECK(gen_shapes(other).images.vec() != a.images.vec());
}

TEST_CASE("gen_shapes collapses to one prototype per class without jitter") {
  ShapesSpec spec;
  spec.samples_per_class = 4;
  spec.position_jitter = 0.0f;
  spec.scale_jitter = 0.0f;
  spec.rotation_jitter = 0.0f;
  spec.color_jitter = 0.0f;
  spec.noise_sigma = 0.0f;
  Dataset ds = gen_shapes(spec);
  for (int cls = 0; cls < 10; ++cls) {
    Tensor proto = ds.image(cls * spec.samples_per_class);
    for (int j = 1; j < spec.samples_per_class; ++j) {
      CHECK(max_abs_diff(ds.image(cls * spec.samples_per_class + j), proto) == 0.0f);
    }
  }
  // classes remain distinct
  CHECK(max_abs_diff(ds.image(0), ds.image(spec.samples_per_class)) > 0.0f);
}

TEST_CASE("shapes split is hash-assigned and stable") {
  ShapesSpec spec;
  spec.samples_per_class = 50;
  Dataset ds = gen_shapes(spec);
  const auto train = ds.indices_of(Split::Train);
  const auto val = ds.indices_of(Split::Val);
  const auto test = ds.indices_of(Split::Test);
  CHECK(train.size() + val.size() + test.size() == static_cast<size_t>(ds.size()));
  CHECK(train.size() > 300);
  CHECK(val.size() > 10);
  CHECK(test.size() > 10);

  Dataset sub = ds.split(Split::Test);
  CHECK(sub.size() == static_cast<int>(test.size()));
  CHECK(max_abs_diff(sub.image(0), ds.image(test[0])) == 0.0f);
}

TEST_CASE("cifar10 binary loader") {
  const std::string path = temp_path("cadet_cifar_test.bin");

  // single all-zero record: one black image, label 0
  write_bytes(path, std::vector<unsigned char>(3073, 0));
  Dataset one = load_cifar10_binary(path);
  CHECK(one.size() == 1);
  CHECK(one.labels[0] == 0);
  for (int64_t i = 0; i < one.images.size(); ++i) CHECK(one.images.data()[i] == 0.0f);

  // truncated file names the expected record multiple
  write_bytes(path, std::vector<unsigned char>(3000, 0));
  CHECK_THROWS_WITH_AS(load_cifar10_binary(path), doctest::Contains("3073"), FormatError);

  // label byte out of range
  {
    std::vector<unsigned char> bad(3073, 0);
    bad[0] = 11;
    write_bytes(path, bad);
  }
  CHECK_THROWS_AS(load_cifar10_binary(path), FormatError);

  // pixel scaling and RTF1 cache round trip
  {
    std::vector<unsigned char> rec(2 * 3073, 0);
    rec[0] = 3;
    for (int i = 0; i < 3072; ++i) rec[1 + i] = static_cast<unsigned char>(i % 256);
    rec[3073] = 9;
    write_bytes(path, rec);
  }
  Dataset two = load_cifar10_binary(path);
  CHECK(two.size() == 2);
  CHECK(two.labels == std::vector<int>{3, 9});
  CHECK(two.images.data()[0] == 0.0f);
  CHECK(two.images.data()[1] == doctest::Approx(1.0f / 255.0f));

  const std::string cache = temp_path("cadet_cifar_cache.rtf");
  save_tensorfile(cache, two.images);
  CHECK(load_tensorfile(cache).vec() == two.images.vec());
  std::remove(path.c_str());
  std::remove(cache.c_str());
}
