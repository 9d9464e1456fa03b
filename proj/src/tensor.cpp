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

#include "cadet/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace cadet {

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)) {
  for (int d : shape_) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape_));
  }
  if (numel(shape_) != static_cast<int64_t>(values.size())) {
    throw ShapeError("shape " + shape_str(shape_) + " expects " +
                     std::to_string(numel(shape_)) + " values, got " +
                     std::to_string(values.size()));
  }
  data_ = std::make_shared<const std::vector<float>>(std::move(values));
}

Tensor Tensor::zeros(const Shape& shape) {
  return Tensor(shape, std::vector<float>(static_cast<size_t>(numel(shape)), 0.0f));
}

Tensor Tensor::full(const Shape& shape, float value) {
  return Tensor(shape, std::vector<float>(static_cast<size_t>(numel(shape)), value));
}

Tensor Tensor::scalar(float value) { return Tensor(Shape{}, std::vector<float>{value}); }

Tensor Tensor::randn(const Shape& shape, Rng& rng) {
  std::vector<float> v(static_cast<size_t>(numel(shape)));
  for (auto& x : v) x = rng.normal();
  return Tensor(shape, std::move(v));
}

Tensor Tensor::randu(const Shape& shape, Rng& rng, float lo, float hi) {
  std::vector<float> v(static_cast<size_t>(numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v));
}

float Tensor::item() const {
  if (size() != 1) throw ShapeError("item() requires a single-element tensor, shape is " + shape_str(shape_));
  return (*data_)[0];
}

Tensor Tensor::detached() const {
  Tensor t;
  t.data_ = data_;
  t.shape_ = shape_;
  return t;
}

Tensor bind_result(Shape shape, std::vector<float> values, Tape* tape, int node) {
  Tensor t(std::move(shape), std::move(values));
  if (tape != nullptr && node >= 0) {
    t.tape_ = tape;
    t.node_ = node;
    t.requires_grad_ = true;
  }
  return t;
}

Tensor bind_alias(const Tensor& src, Shape shape, Tape* tape, int node) {
  if (numel(shape) != src.size()) {
    throw ShapeError("cannot view " + shape_str(src.shape()) + " as " + shape_str(shape));
  }
  Tensor t;
  t.data_ = src.data_;
  t.shape_ = std::move(shape);
  if (tape != nullptr && node >= 0) {
    t.tape_ = tape;
    t.node_ = node;
    t.requires_grad_ = true;
  }
  return t;
}

Tensor Tape::watch(const Tensor& t, bool requires_grad) {
  if (!t.defined()) throw TapeError("cannot watch an undefined tensor");
  if (consumed_) throw TapeError("tape already consumed by backward");
  Node n;
  n.shape = t.shape();
  n.is_leaf = true;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  Tensor out;
  out.data_ = t.data_;
  out.shape_ = t.shape_;
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size()) - 1;
  out.requires_grad_ = requires_grad;
  return out;
}

int Tape::record(const Shape& shape, BackwardFn fn) {
  if (consumed_) throw TapeError("tape already consumed by backward");
  Node n;
  n.backward = std::move(fn);
  n.shape = shape;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::mark_nondifferentiable(const std::string& op_name) {
  nondiff_ = true;
  if (nondiff_op_.empty()) nondiff_op_ = op_name;
}

std::vector<float>& Tape::grad_buffer(int node) {
  auto& buf = grads_[static_cast<size_t>(node)];
  if (buf.empty()) {
    buf.assign(static_cast<size_t>(numel(nodes_[static_cast<size_t>(node)].shape)), 0.0f);
  }
  return buf;
}

Gradients Tape::backward(const Tensor& loss) {
  if (consumed_) throw TapeError("second backward on the same tape");
  if (loss.tape() != this || loss.node() < 0) {
    throw TapeError("loss is not recorded on this tape");
  }
  if (loss.size() != 1) {
    throw TapeError("backward requires a scalar loss, shape is " + shape_str(loss.shape()));
  }
  consumed_ = true;
  grads_.assign(nodes_.size(), {});
  grads_[static_cast<size_t>(loss.node())] = {1.0f};

  for (int i = loss.node(); i >= 0; --i) {
    auto& node = nodes_[static_cast<size_t>(i)];
    auto& g = grads_[static_cast<size_t>(i)];
    if (g.empty()) continue;
    if (node.backward) {
      node.backward(*this, g);
      g.clear();
      g.shrink_to_fit();
    }
  }

  Gradients out;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const auto& node = nodes_[i];
    if (!node.is_leaf || !node.requires_grad) continue;
    auto& g = grads_[i];
    if (g.empty()) g.assign(static_cast<size_t>(numel(node.shape)), 0.0f);
    out.map_.emplace(static_cast<int>(i), Tensor(node.shape, std::move(g)));
  }
  grads_.clear();
  return out;
}

const Tensor& Gradients::wrt(const Tensor& leaf) const { return wrt_node(leaf.node()); }

const Tensor& Gradients::wrt_node(int node) const {
  auto it = map_.find(node);
  if (it == map_.end()) {
    throw TapeError("no gradient recorded for node " + std::to_string(node) +
                    " (not a watched leaf with requires_grad)");
  }
  return it->second;
}

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->on_tape()) continue;
    if (tape == nullptr) {
      tape = t->tape();
    } else if (tape != t->tape()) {
      throw TapeError("operands are bound to different tapes");
    }
  }
  return tape;
}

}  // namespace cadet
