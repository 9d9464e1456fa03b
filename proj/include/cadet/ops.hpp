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

#ifndef CADET_OPS_HPP_
#define CADET_OPS_HPP_

#include <functional>
#include <string>
#include <vector>

#include "cadet/tensor.hpp"

namespace cadet {

// ---- elementwise with trailing-dimension broadcasting ----
Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
// Ties route the full gradient to the first argument.
Tensor emax(const Tensor& a, const Tensor& b);
Tensor emin(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, float b);
Tensor sub(const Tensor& a, float b);
Tensor mul(const Tensor& a, float b);
Tensor div(const Tensor& a, float b);
Tensor emax(const Tensor& a, float b);
Tensor emin(const Tensor& a, float b);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
Tensor transpose2d(const Tensor& a);

// ---- convolution and spatial ops on [B,C,H,W] ----
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int padding);
Tensor upsample2x(const Tensor& x);            // nearest neighbour
Tensor avgpool2x(const Tensor& x);             // 2x2 window, stride 2
Tensor maxpool2x(const Tensor& x);             // 2x2 window, stride 2; ties -> first
Tensor concat_channels(const Tensor& a, const Tensor& b);

struct PatchPos {
  int image;
  int y;
  int x;
};
// Gathers P x P crops into [N,C,P,P]; gradient scatter-adds back.
Tensor extract_patches(const Tensor& x, const std::vector<PatchPos>& at, int patch);

// ---- nonlinearities ----
Tensor relu(const Tensor& x);     // gradient at exactly 0 is 0
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);

// ---- reductions / reshaping ----
Tensor sum(const Tensor& x);   // scalar
Tensor mean(const Tensor& x);  // scalar
Tensor reshape(const Tensor& x, const Shape& shape);

// ---- loss ----
// Mean over the batch of -log softmax(logits)[label]; max-subtraction
// stabilized. labels must be in [0, K).
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// ---- non-differentiable / straight-through ----
// sign(0) = 0. Never recorded on a tape; flags the tape when a gradient
// path runs through it.
Tensor sign(const Tensor& x);
// Exact round / clamp forward, identity backward.
Tensor round_ste(const Tensor& x);
Tensor clamp_ste(const Tensor& x, float lo, float hi);

// ---- plain helpers (never taped) ----
std::vector<int> argmax_rows(const Tensor& logits);  // ties -> lowest index
float max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

// ---- gradient checking ----
struct CheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  bool nondiff_error = false;
  std::string message;
};

// Compares tape gradients of fn against central finite differences (f64
// difference arithmetic). Relative error is measured against
// max(1, |tape|, |fd|) per component.
CheckReport grad_check(const std::function<Tensor(Tape&, const Tensor&)>& fn,
                       const Tensor& x, double fd_step, double tol);

}  // namespace cadet

#endif  // CADET_OPS_HPP_
