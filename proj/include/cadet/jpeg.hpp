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

#ifndef CADET_JPEG_HPP_
#define CADET_JPEG_HPP_

#include <array>

#include "cadet/nets.hpp"
#include "cadet/tensor.hpp"

namespace cadet::jpeg {

enum class Relaxation { Cubic, Ste };

struct JpegConfig {
  int quality = 50;  // 1..100
  Relaxation relaxation = Relaxation::Cubic;
  int defense_iterations = 1;
  void validate() const;
};

struct QuantTables {
  std::array<int, 64> luma;
  std::array<int, 64> chroma;
};

// libjpeg quality scaling of the Annex K base tables.
QuantTables quality_to_tables(int quality);

// Full-range JFIF color transform on [B,3,H,W]; chroma carries a +0.5 offset.
Tensor rgb_to_ycbcr(const Tensor& x);
Tensor ycbcr_to_rgb(const Tensor& x);

// Orthonormal type-II DCT applied per 8x8 block; H and W must be multiples
// of 8. The gradient of each is the other (orthonormal transpose).
Tensor block_dct8(const Tensor& x);
Tensor block_idct8(const Tensor& x);

// c -> t * r(c/t) per coefficient, table entry t chosen blockwise (luma for
// channel 0, chroma otherwise). Cubic: r(u) = round(u) + (u - round(u))^3,
// rounding half away from zero; Ste: exact round forward, identity backward.
Tensor quantize_relaxed(const Tensor& coeffs, const QuantTables& tables, Relaxation relaxation);

// The full differentiable codec. Inputs with H or W not a multiple of 8 are
// edge-replicate padded and cropped back.
Tensor jpeg_forward(const Tensor& x, const JpegConfig& config);

// Same pipeline with exact integer rounding, never taped; test-side parity
// reference. Ste-mode jpeg_forward matches it bit for bit.
Tensor jpeg_reference(const Tensor& x, const JpegConfig& config);

// Plugs the codec into a DefendedPipeline.
nets::Codec make_codec(const JpegConfig& config);

}  // namespace cadet::jpeg

#endif  // CADET_JPEG_HPP_
