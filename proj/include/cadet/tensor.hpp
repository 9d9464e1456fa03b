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

#ifndef CADET_TENSOR_HPP_
#define CADET_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cadet/rng.hpp"

namespace cadet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ShapeError : public Error {
 public:
  using Error::Error;
};
class TapeError : public Error {
 public:
  using Error::Error;
};
class FormatError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class CheckpointError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);

class Tape;

// Dense row-major f32 tensor. Data is immutable after construction; ops build
// new tensors. A tensor is optionally bound to a tape via (tape, node).
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> values);

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, float value);
  static Tensor scalar(float value);
  static Tensor randn(const Shape& shape, Rng& rng);
  static Tensor randu(const Shape& shape, Rng& rng, float lo, float hi);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
  bool defined() const { return data_ != nullptr; }

  const float* data() const { return data_->data(); }
  const std::vector<float>& vec() const { return *data_; }
  float item() const;

  bool requires_grad() const { return requires_grad_; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  bool on_tape() const { return tape_ != nullptr && node_ >= 0; }

  // same data, no tape binding
  Tensor detached() const;

 private:
  friend class Tape;
  friend Tensor bind_result(Shape, std::vector<float>, Tape*, int);
  friend Tensor bind_alias(const Tensor&, Shape, Tape*, int);

  std::shared_ptr<const std::vector<float>> data_;
  Shape shape_;
  Tape* tape_ = nullptr;
  int node_ = -1;
  bool requires_grad_ = false;
};

// Result of Tape::backward: node_id -> gradient tensor for every watched
// leaf that requires grad (zeros when the loss does not depend on it).
class Gradients {
 public:
  const Tensor& wrt(const Tensor& leaf) const;
  const Tensor& wrt_node(int node) const;
  bool contains(int node) const { return map_.count(node) > 0; }
  size_t count() const { return map_.size(); }

 private:
  friend class Tape;
  std::unordered_map<int, Tensor> map_;
};

// Reverse-mode tape. Single use: build one forward pass, call backward once.
// Not shareable across threads; parallelism lives above (one tape per image).
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const std::vector<float>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf. The returned tensor shares data with `t` and is bound
  // to this tape.
  Tensor watch(const Tensor& t, bool requires_grad = true);

  // Propagates from a scalar loss recorded on this tape. Consumes the tape.
  Gradients backward(const Tensor& loss);

  bool consumed() const { return consumed_; }
  bool saw_nondifferentiable() const { return nondiff_; }
  const std::string& nondifferentiable_op() const { return nondiff_op_; }

  // --- recording interface used by ops ---
  int record(const Shape& shape, BackwardFn fn);
  void mark_nondifferentiable(const std::string& op_name);
  // Lazily-allocated gradient accumulation buffer for a node.
  std::vector<float>& grad_buffer(int node);

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    BackwardFn backward;  // null for leaves
    Shape shape;
    bool is_leaf = false;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<float>> grads_;
  bool consumed_ = false;
  bool nondiff_ = false;
  std::string nondiff_op_;
};

// Shared by ops: validates that all taped inputs live on one tape and
// returns it (nullptr when no input is taped).
Tape* common_tape(std::initializer_list<const Tensor*> inputs);

// True when the input participates in gradient recording.
inline bool needs_grad(const Tensor& t) { return t.on_tape() && t.requires_grad(); }

// Internal: wrap op output, binding it to `tape` at `node` (node < 0 leaves
// it unbound).
Tensor bind_result(Shape shape, std::vector<float> values, Tape* tape, int node);
// Internal: rebind existing storage under a new shape (reshape-style views).
Tensor bind_alias(const Tensor& src, Shape shape, Tape* tape, int node);

}  // namespace cadet

#endif  // CADET_TENSOR_HPP_
