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

#include "cadet/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>

namespace cadet {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

enum class EwKind { Add, Sub, Mul, Div, Max, Min };

const char* ew_name(EwKind k) {
  switch (k) {
    case EwKind::Add: return "add";
    case EwKind::Sub: return "sub";
    case EwKind::Mul: return "mul";
    case EwKind::Div: return "div";
    case EwKind::Max: return "max";
    default: return "min";
  }
}

struct BcastPlan {
  Shape out;
  std::vector<int64_t> sa;  // per-out-dim strides into a (0 on broadcast dims)
  std::vector<int64_t> sb;
  int64_t n = 0;
};

BcastPlan make_plan(const Shape& a, const Shape& b, const char* op) {
  const int ra = static_cast<int>(a.size());
  const int rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  BcastPlan p;
  p.out.assign(static_cast<size_t>(r), 1);
  for (int i = 0; i < r; ++i) {
    const int da = i < ra ? a[static_cast<size_t>(ra - 1 - i)] : 1;
    const int db = i < rb ? b[static_cast<size_t>(rb - 1 - i)] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are not broadcastable");
    }
    p.out[static_cast<size_t>(r - 1 - i)] = std::max(da, db);
  }
  p.n = numel(p.out);
  // contiguous strides of the padded operand shapes, zeroed where dim == 1
  p.sa.assign(static_cast<size_t>(r), 0);
  p.sb.assign(static_cast<size_t>(r), 0);
  int64_t stra = 1, strb = 1;
  for (int i = r - 1; i >= 0; --i) {
    const int da = (r - 1 - i) < ra ? a[static_cast<size_t>(ra - 1 - (r - 1 - i))] : 1;
    const int db = (r - 1 - i) < rb ? b[static_cast<size_t>(rb - 1 - (r - 1 - i))] : 1;
    p.sa[static_cast<size_t>(i)] = da == 1 ? 0 : stra;
    p.sb[static_cast<size_t>(i)] = db == 1 ? 0 : strb;
    stra *= da;
    strb *= db;
  }
  return p;
}

template <class F>
void bcast_iterate(const BcastPlan& p, F&& f) {
  const int r = static_cast<int>(p.out.size());
  if (p.n == 0) return;
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<int> idx(static_cast<size_t>(r), 0);
  int64_t oa = 0, ob = 0;
  for (int64_t i = 0;;) {
    f(i, oa, ob);
    if (++i == p.n) break;
    for (int d = r - 1; d >= 0; --d) {
      ++idx[static_cast<size_t>(d)];
      oa += p.sa[static_cast<size_t>(d)];
      ob += p.sb[static_cast<size_t>(d)];
      if (idx[static_cast<size_t>(d)] < p.out[static_cast<size_t>(d)]) break;
      oa -= p.sa[static_cast<size_t>(d)] * p.out[static_cast<size_t>(d)];
      ob -= p.sb[static_cast<size_t>(d)] * p.out[static_cast<size_t>(d)];
      idx[static_cast<size_t>(d)] = 0;
    }
  }
}

inline float ew_eval(EwKind k, float x, float y) {
  switch (k) {
    case EwKind::Add: return x + y;
    case EwKind::Sub: return x - y;
    case EwKind::Mul: return x * y;
    case EwKind::Div: return x / y;
    case EwKind::Max: return x >= y ? x : y;
    default: return x <= y ? x : y;
  }
}

Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b) {
  Tape* tape = common_tape({&a, &b});
  const BcastPlan plan = make_plan(a.shape(), b.shape(), ew_name(kind));
  std::vector<float> out(static_cast<size_t>(plan.n));
  const float* pa = a.data();
  const float* pb = b.data();
  if (a.shape() == b.shape()) {
    for (int64_t i = 0; i < plan.n; ++i) out[static_cast<size_t>(i)] = ew_eval(kind, pa[i], pb[i]);
  } else {
    bcast_iterate(plan, [&](int64_t i, int64_t oa, int64_t ob) {
      out[static_cast<size_t>(i)] = ew_eval(kind, pa[oa], pb[ob]);
    });
  }

  int node = -1;
  if (tape != nullptr && (needs_grad(a) || needs_grad(b))) {
    const int na = needs_grad(a) ? a.node() : -1;
    const int nb = needs_grad(b) ? b.node() : -1;
    Tensor ad = a.detached(), bd = b.detached();
    node = tape->record(plan.out, [kind, plan, ad, bd, na, nb](Tape& t, const std::vector<float>& g) {
      float* ga = na >= 0 ? t.grad_buffer(na).data() : nullptr;
      float* gb = nb >= 0 ? t.grad_buffer(nb).data() : nullptr;
      const float* xa = ad.data();
      const float* xb = bd.data();
      bcast_iterate(plan, [&](int64_t i, int64_t oa, int64_t ob) {
        const float gi = g[static_cast<size_t>(i)];
        switch (kind) {
          case EwKind::Add:
            if (ga) ga[oa] += gi;
            if (gb) gb[ob] += gi;
            break;
          case EwKind::Sub:
            if (ga) ga[oa] += gi;
            if (gb) gb[ob] -= gi;
            break;
          case EwKind::Mul:
            if (ga) ga[oa] += gi * xb[ob];
            if (gb) gb[ob] += gi * xa[oa];
            break;
          case EwKind::Div:
            if (ga) ga[oa] += gi / xb[ob];
            if (gb) gb[ob] -= gi * xa[oa] / (xb[ob] * xb[ob]);
            break;
          case EwKind::Max:
            if (xa[oa] >= xb[ob]) {
              if (ga) ga[oa] += gi;
            } else if (gb) {
              gb[ob] += gi;
            }
            break;
          case EwKind::Min:
            if (xa[oa] <= xb[ob]) {
              if (ga) ga[oa] += gi;
            } else if (gb) {
              gb[ob] += gi;
            }
            break;
        }
      });
    });
  }
  return bind_result(plan.out, std::move(out), tape, node);
}

// im2col for one image: col is [C*kh*kw, oh*ow] row-major.
void im2col(const float* x, int c, int h, int w, int kh, int kw, int stride, int pad, int oh,
            int ow, float* col) {
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        float* row = col + ((static_cast<int64_t>(ch) * kh + ky) * kw + kx) *
                               static_cast<int64_t>(oh) * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            std::memset(row + static_cast<int64_t>(oy) * ow, 0, sizeof(float) * static_cast<size_t>(ow));
            continue;
          }
          const float* src = x + (static_cast<int64_t>(ch) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            row[static_cast<int64_t>(oy) * ow + ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

// scatter-add counterpart of im2col
void col2im_add(const float* col, int c, int h, int w, int kh, int kw, int stride, int pad,
                int oh, int ow, float* x) {
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const float* row = col + ((static_cast<int64_t>(ch) * kh + ky) * kw + kx) *
                                     static_cast<int64_t>(oh) * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          float* dst = x + (static_cast<int64_t>(ch) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) dst[ix] += row[static_cast<int64_t>(oy) * ow + ox];
          }
        }
      }
    }
  }
}

void require_rank4(const Tensor& t, const char* op, const char* arg) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(op) + ": " + arg + " must be [B,C,H,W], got " +
                     shape_str(t.shape()));
  }
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) { return make_plan(a, b, "broadcast").out; }

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(EwKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(EwKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(EwKind::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(EwKind::Div, a, b); }
Tensor emax(const Tensor& a, const Tensor& b) { return elementwise(EwKind::Max, a, b); }
Tensor emin(const Tensor& a, const Tensor& b) { return elementwise(EwKind::Min, a, b); }

Tensor add(const Tensor& a, float b) { return add(a, Tensor::scalar(b)); }
Tensor sub(const Tensor& a, float b) { return sub(a, Tensor::scalar(b)); }
Tensor mul(const Tensor& a, float b) { return mul(a, Tensor::scalar(b)); }
Tensor div(const Tensor& a, float b) { return div(a, Tensor::scalar(b)); }
Tensor emax(const Tensor& a, float b) { return emax(a, Tensor::scalar(b)); }
Tensor emin(const Tensor& a, float b) { return emin(a, Tensor::scalar(b)); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Tape* tape = common_tape({&a, &b});
  std::vector<float> out(static_cast<size_t>(m) * n);
  {
    ConstMatMap ma(a.data(), m, k), mb(b.data(), k, n);
    MatMap mo(out.data(), m, n);
    mo.noalias() = ma * mb;
  }
  int node = -1;
  if (tape != nullptr && (needs_grad(a) || needs_grad(b))) {
    const int na = needs_grad(a) ? a.node() : -1;
    const int nb = needs_grad(b) ? b.node() : -1;
    Tensor ad = a.detached(), bd = b.detached();
    node = tape->record({m, n}, [ad, bd, na, nb, m, k, n](Tape& t, const std::vector<float>& g) {
      ConstMatMap mg(g.data(), m, n);
      if (na >= 0) {
        MatMap ga(t.grad_buffer(na).data(), m, k);
        ConstMatMap mb(bd.data(), k, n);
        ga.noalias() += mg * mb.transpose();
      }
      if (nb >= 0) {
        MatMap gb(t.grad_buffer(nb).data(), k, n);
        ConstMatMap ma(ad.data(), m, k);
        gb.noalias() += ma.transpose() * mg;
      }
    });
  }
  return bind_result({m, n}, std::move(out), tape, node);
}

Tensor transpose2d(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose2d expects rank 2, got " + shape_str(a.shape()));
  const int m = a.dim(0), n = a.dim(1);
  std::vector<float> out(static_cast<size_t>(m) * n);
  {
    ConstMatMap ma(a.data(), m, n);
    MatMap mo(out.data(), n, m);
    mo = ma.transpose();
  }
  Tape* tape = common_tape({&a});
  int node = -1;
  if (needs_grad(a)) {
    const int na = a.node();
    node = tape->record({n, m}, [na, m, n](Tape& t, const std::vector<float>& g) {
      ConstMatMap mg(g.data(), n, m);
      MatMap ga(t.grad_buffer(na).data(), m, n);
      ga += mg.transpose();
    });
  }
  return bind_result({n, m}, std::move(out), tape, node);
}

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int padding) {
  require_rank4(x, "conv2d", "input");
  require_rank4(w, "conv2d", "weight");
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (padding < 0) throw ShapeError("conv2d: padding must be >= 0");
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), ww = x.dim(3);
  const int o = w.dim(0), cw = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (c != cw) {
    throw ShapeError("conv2d: input channels " + std::to_string(c) + " != weight channels " +
                     std::to_string(cw));
  }
  if (kh > h + 2 * padding || kw > ww + 2 * padding) {
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " larger than padded input " + std::to_string(h + 2 * padding) + "x" +
                     std::to_string(ww + 2 * padding));
  }
  const int oh = (h + 2 * padding - kh) / stride + 1;
  const int ow = (ww + 2 * padding - kw) / stride + 1;
  const int ckk = c * kh * kw;
  const int64_t ohow = static_cast<int64_t>(oh) * ow;

  std::vector<float> out(static_cast<size_t>(b) * o * ohow);
  std::vector<float> col(static_cast<size_t>(ckk) * ohow);
  ConstMatMap wm(w.data(), o, ckk);
  for (int i = 0; i < b; ++i) {
    im2col(x.data() + static_cast<int64_t>(i) * c * h * ww, c, h, ww, kh, kw, stride, padding,
           oh, ow, col.data());
    ConstMatMap cm(col.data(), ckk, static_cast<int>(ohow));
    MatMap om(out.data() + static_cast<int64_t>(i) * o * ohow, o, static_cast<int>(ohow));
    om.noalias() = wm * cm;
  }

  const Shape out_shape{b, o, oh, ow};
  Tape* tape = common_tape({&x, &w});
  int node = -1;
  if (tape != nullptr && (needs_grad(x) || needs_grad(w))) {
    const int nx = needs_grad(x) ? x.node() : -1;
    const int nw = needs_grad(w) ? w.node() : -1;
    Tensor xd = x.detached(), wd = w.detached();
    node = tape->record(out_shape, [xd, wd, nx, nw, b, c, h, ww, o, kh, kw, stride, padding, oh,
                                    ow, ckk, ohow](Tape& t, const std::vector<float>& g) {
      std::vector<float> col(static_cast<size_t>(ckk) * ohow);
      float* gx = nx >= 0 ? t.grad_buffer(nx).data() : nullptr;
      float* gw = nw >= 0 ? t.grad_buffer(nw).data() : nullptr;
      ConstMatMap wm(wd.data(), o, ckk);
      for (int i = 0; i < b; ++i) {
        ConstMatMap gm(g.data() + static_cast<int64_t>(i) * o * ohow, o, static_cast<int>(ohow));
        if (gw != nullptr) {
          im2col(xd.data() + static_cast<int64_t>(i) * c * h * ww, c, h, ww, kh, kw, stride,
                 padding, oh, ow, col.data());
          ConstMatMap cm(col.data(), ckk, static_cast<int>(ohow));
          MatMap gwm(gw, o, ckk);
          gwm.noalias() += gm * cm.transpose();
        }
        if (gx != nullptr) {
          MatMap gcol(col.data(), ckk, static_cast<int>(ohow));
          gcol.noalias() = wm.transpose() * gm;
          col2im_add(col.data(), c, h, ww, kh, kw, stride, padding, oh, ow,
                     gx + static_cast<int64_t>(i) * c * h * ww);
        }
      }
    });
  }
  return bind_result(out_shape, std::move(out), tape, node);
}

Tensor upsample2x(const Tensor& x) {
  require_rank4(x, "upsample2x", "input");
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<float> out(static_cast<size_t>(b) * c * 4 * h * w);
  const float* px = x.data();
  const int64_t planes = static_cast<int64_t>(b) * c;
  for (int64_t p = 0; p < planes; ++p) {
    const float* src = px + p * h * w;
    float* dst = out.data() + p * 4 * h * w;
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        const float v = src[y * w + xx];
        float* d = dst + (2 * y) * (2 * w) + 2 * xx;
        d[0] = v;
        d[1] = v;
        d[2 * w] = v;
        d[2 * w + 1] = v;
      }
    }
  }
  const Shape out_shape{b, c, 2 * h, 2 * w};
  Tape* tape = common_tape({&x});
  int node = -1;
  if (needs_grad(x)) {
    const int nx = x.node();
    node = tape->record(out_shape, [nx, b, c, h, w](Tape& t, const std::vector<float>& g) {
      float* gx = t.grad_buffer(nx).data();
      const int64_t planes = static_cast<int64_t>(b) * c;
      for (int64_t p = 0; p < planes; ++p) {
        const float* gs = g.data() + p * 4 * h * w;
        float* gd = gx + p * h * w;
        for (int y = 0; y < h; ++y) {
          for (int xx = 0; xx < w; ++xx) {
            const float* s = gs + (2 * y) * (2 * w) + 2 * xx;
            gd[y * w + xx] += s[0] + s[1] + s[2 * w] + s[2 * w + 1];
          }
        }
      }
    });
  }
  return bind_result(out_shape, std::move(out), tape, node);
}

Tensor avgpool2x(const Tensor& x) {
  require_rank4(x, "avgpool2x", "input");
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("avgpool2x requires even spatial dims, got " + shape_str(x.shape()));
  }
  const int oh = h / 2, ow = w / 2;
  std::vector<float> out(static_cast<size_t>(b) * c * oh * ow);
  const float* px = x.data();
  const int64_t planes = static_cast<int64_t>(b) * c;
  for (int64_t p = 0; p < planes; ++p) {
    const float* src = px + p * h * w;
    float* dst = out.data() + p * oh * ow;
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        const float* s = src + (2 * y) * w + 2 * xx;
        dst[y * ow + xx] = 0.25f * (s[0] + s[1] + s[w] + s[w + 1]);
      }
    }
  }
  const Shape out_shape{b, c, oh, ow};
  Tape* tape = common_tape({&x});
  int node = -1;
  if (needs_grad(x)) {
    const int nx = x.node();
    node = tape->record(out_shape, [nx, b, c, h, w, oh, ow](Tape& t, const std::vector<float>& g) {
      float* gx = t.grad_buffer(nx).data();
      const int64_t planes = static_cast<int64_t>(b) * c;
      for (int64_t p = 0; p < planes; ++p) {
        const float* gs = g.data() + p * oh * ow;
        float* gd = gx + p * h * w;
        for (int y = 0; y < oh; ++y) {
          for (int xx = 0; xx < ow; ++xx) {
            const float q = 0.25f * gs[y * ow + xx];
            float* d = gd + (2 * y) * w + 2 * xx;
            d[0] += q;
            d[1] += q;
            d[w] += q;
            d[w + 1] += q;
          }
        }
      }
    });
  }
  return bind_result(out_shape, std::move(out), tape, node);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank4(a, "concat_channels", "first input");
  require_rank4(b, "concat_channels", "second input");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
  const int64_t hw = static_cast<int64_t>(h) * w;
  std::vector<float> out(static_cast<size_t>(n) * (ca + cb) * hw);
  for (int i = 0; i < n; ++i) {
    std::memcpy(out.data() + static_cast<int64_t>(i) * (ca + cb) * hw,
                a.data() + static_cast<int64_t>(i) * ca * hw, sizeof(float) * static_cast<size_t>(ca * hw));
    std::memcpy(out.data() + static_cast<int64_t>(i) * (ca + cb) * hw + ca * hw,
                b.data() + static_cast<int64_t>(i) * cb * hw, sizeof(float) * static_cast<size_t>(cb * hw));
  }
  const Shape out_shape{n, ca + cb, h, w};
  Tape* tape = common_tape({&a, &b});
  int node = -1;
  if (tape != nullptr && (needs_grad(a) || needs_grad(b))) {
    const int na = needs_grad(a) ? a.node() : -1;
    const int nb = needs_grad(b) ? b.node() : -1;
    node = tape->record(out_shape, [na, nb, n, ca, cb, hw](Tape& t, const std::vector<float>& g) {
      for (int i = 0; i < n; ++i) {
        const float* gi = g.data() + static_cast<int64_t>(i) * (ca + cb) * hw;
        if (na >= 0) {
          float* ga = t.grad_buffer(na).data() + static_cast<int64_t>(i) * ca * hw;
          for (int64_t j = 0; j < ca * hw; ++j) ga[j] += gi[j];
        }
        if (nb >= 0) {
          float* gb = t.grad_buffer(nb).data() + static_cast<int64_t>(i) * cb * hw;
          for (int64_t j = 0; j < cb * hw; ++j) gb[j] += gi[ca * hw + j];
        }
      }
    });
  }
  return bind_result(out_shape, std::move(out), tape, node);
}

Tensor extract_patches(const Tensor& x, const std::vector<PatchPos>& at, int patch) {
  require_rank4(x, "extract_patches", "input");
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int n = static_cast<int>(at.size());
  for (const auto& p : at) {
    if (p.image < 0 || p.image >= b || p.y < 0 || p.x < 0 || p.y + patch > h || p.x + patch > w) {
      throw ShapeError("extract_patches: patch out of bounds");
    }
  }
  std::vector<float> out(static_cast<size_t>(n) * c * patch * patch);
  const float* px = x.data();
  for (int i = 0; i < n; ++i) {
    const auto& p = at[static_cast<size_t>(i)];
    for (int ch = 0; ch < c; ++ch) {
      const float* src = px + ((static_cast<int64_t>(p.image) * c + ch) * h + p.y) * w + p.x;
      float* dst = out.data() + ((static_cast<int64_t>(i) * c + ch) * patch) * patch;
      for (int y = 0; y < patch; ++y) {
        std::memcpy(dst + static_cast<int64_t>(y) * patch, src + static_cast<int64_t>(y) * w,
                    sizeof(float) * static_cast<size_t>(patch));
      }
    }
  }
  const Shape out_shape{n, c, patch, patch};
  Tape* tape = common_tape({&x});
  int node = -1;
  if (needs_grad(x)) {
    const int nx = x.node();
    node = tape->record(out_shape, [nx, at, patch, c, h, w](Tape& t, const std::vector<float>& g) {
      float* gx = t.grad_buffer(nx).data();
      const int n = static_cast<int>(at.size());
      for (int i = 0; i < n; ++i) {
        const auto& p = at[static_cast<size_t>(i)];
        for (int ch = 0; ch < c; ++ch) {
          float* dst = gx + ((static_cast<int64_t>(p.image) * c + ch) * h + p.y) * w + p.x;
          const float* src = g.data() + ((static_cast<int64_t>(i) * c + ch) * patch) * patch;
          for (int y = 0; y < patch; ++y) {
            for (int xx = 0; xx < patch; ++xx) {
              dst[static_cast<int64_t>(y) * w + xx] += src[static_cast<int64_t>(y) * patch + xx];
            }
          }
        }
      }
    });
  }
  return bind_result(out_shape, std::move(out), tape, node);
}

Tensor relu(const Tensor& x) {
  std::vector<float> out(static_cast<size_t>(x.size()));
  const float* px = x.data();
  for (int64_t i = 0; i < x.size(); ++i) out[static_cast<size_t>(i)] = px[i] > 0.0f ? px[i] : 0.0f;
  Tape* tape = common_tape({&x});
  int node = -1;
  if (needs_grad(x)) {
    const int nx = x.node();
    Tensor xd = x.detached();
    node = tape->record(x.shape(), [nx, xd](Tape& t, const std::vector<float>& g) {
      float* gx = t.grad_buffer(nx).data();
      const float* px = xd.data();
      for (size_t i = 0; i < g.size(); ++i) {
        if (px[i] > 0.0f) gx[i] += g[i];
      }
    });
  }
  return bind_result(x.shape(), std::move(out), tape, node);
}

Tensor sigmoid(const Tensor& x) {
  std::vector<float> out(static_cast<size_t>(x.size()));
  const float* px = x.data();
  for (int64_t i = 0; i < x.size(); ++i) out[static_cast<size_t>(i)] = 1.0f / (1.0f + std::exp(-px[i]));
  Tape* tape = common_tape({&x});
  int node = -1;
  Tensor result = bind_result(x.shape(), std::move(out), nullptr, -1);
  if (needs_grad(x)) {
    const int nx = x.node();
    Tensor od = result.detached();
    node = tape->record(x.shape(), [nx, od](Tape& t, const std::vector<float>& g) {
      float* gx = t.grad_buffer(nx).data();
      const float* s = od.data();
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s[i] * (1.0f - s[i]);
    });
    return bind_alias(result, x.shape(), tape, node);
  }
  return result;
}

Tensor tanh(const Tensor& x) {
  std::vector<float> out(static_cast<size_t>(x.size()));
  const float* px = x.data();
  for (int64_t i = 0; i < x.size(); ++i) out[static_cast<size_t>(i)] = std::tanh(px[i]);
  Tape* tape = common_tape({&x});
  Tensor result = bind_result(x.shape(), std::move(out), nullptr, -1);
  if (needs_grad(x)) {
    const int nx = x.node();
    Tensor od = result.detached();
    int node = tape->record(x.shape(), [nx, od](Tape& t, const std::vector<float>& g) {
      float* gx = t.grad_buffer(nx).data();
      const float* y = od.data();
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0f - y[i] * y[i]);
    });
    return bind_alias(result, x.shape(), tape, node);
  }
  return result;
}

Tensor exp(const Tensor& x) {
  std::vector<float> out(static_cast<size_t>(x.size()));
  const float* px = x.data();
  for (int64_t i = 0; i < x.size(); ++i) out[static_cast<size_t>(i)] = std::exp(px[i]);
  Tape* tape = common_tape({&x});
  Tensor result = bind_result(x.shape(), std::move(out), nullptr, -1);
  if (needs_grad(x)) {
    const int nx = x.node();
    Tensor od = result.detached();
    int node = tape->record(x.shape(), [nx, od](Tape& t, const std::vector<float>& g) {
      float* gx = t.grad_buffer(nx).data();
      const float* y = od.data();
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
    });
    return bind_alias(result, x.shape(), tape, node);
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  const float* px = x.data();
  for (int64_t i = 0; i < x.size(); ++i) acc += px[i];
  Tape* tape = common_tape({&x});
  int node = -1;
  if (needs_grad(x)) {
    const int nx = x.node();
    const int64_t n = x.size();
    node = tape->record(Shape{}, [nx, n](Tape& t, const std::vector<float>& g) {
      float* gx = t.grad_buffer(nx).data();
      for (int64_t i = 0; i < n; ++i) gx[i] += g[0];
    });
  }
  return bind_result(Shape{}, {static_cast<float>(acc)}, tape, node);
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean of an empty tensor");
  double acc = 0.0;
  const float* px = x.data();
  for (int64_t i = 0; i < x.size(); ++i) acc += px[i];
  const float inv = 1.0f / static_cast<float>(x.size());
  Tape* tape = common_tape({&x});
  int node = -1;
  if (needs_grad(x)) {
    const int nx = x.node();
    const int64_t n = x.size();
    node = tape->record(Shape{}, [nx, n, inv](Tape& t, const std::vector<float>& g) {
      float* gx = t.grad_buffer(nx).data();
      const float gi = g[0] * inv;
      for (int64_t i = 0; i < n; ++i) gx[i] += gi;
    });
  }
  return bind_result(Shape{}, {static_cast<float>(acc * inv)}, tape, node);
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tape* tape = common_tape({&x});
  if (needs_grad(x)) {
    const int nx = x.node();
    int node = tape->record(shape, [nx](Tape& t, const std::vector<float>& g) {
      float* gx = t.grad_buffer(nx).data();
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
    return bind_alias(x, shape, tape, node);
  }
  return bind_alias(x, shape, nullptr, -1);
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) {
    throw ShapeError("softmax_cross_entropy expects [B,K] logits, got " + shape_str(logits.shape()));
  }
  const int b = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != b) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(b));
  }
  for (int label : labels) {
    if (label < 0 || label >= k) {
      throw Error("softmax_cross_entropy: label " + std::to_string(label) + " out of range [0," +
                  std::to_string(k) + ")");
    }
  }
  const float* pl = logits.data();
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    const float* row = pl + static_cast<int64_t>(i) * k;
    float mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double lse = 0.0;
    for (int j = 0; j < k; ++j) lse += std::exp(static_cast<double>(row[j] - mx));
    total += std::log(lse) - static_cast<double>(row[labels[static_cast<size_t>(i)]] - mx);
  }
  const float loss = static_cast<float>(total / b);

  Tape* tape = common_tape({&logits});
  int node = -1;
  if (needs_grad(logits)) {
    const int nl = logits.node();
    Tensor ld = logits.detached();
    auto labs = labels;
    node = tape->record(Shape{}, [nl, ld, labs, b, k](Tape& t, const std::vector<float>& g) {
      float* gl = t.grad_buffer(nl).data();
      const float* pl = ld.data();
      const float scale = g[0] / static_cast<float>(b);
      for (int i = 0; i < b; ++i) {
        const float* row = pl + static_cast<int64_t>(i) * k;
        float mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
        float* grow = gl + static_cast<int64_t>(i) * k;
        for (int j = 0; j < k; ++j) {
          const float p = static_cast<float>(std::exp(static_cast<double>(row[j] - mx)) / denom);
          grow[j] += scale * (p - (j == labs[static_cast<size_t>(i)] ? 1.0f : 0.0f));
        }
      }
    });
  }
  return bind_result(Shape{}, {loss}, tape, node);
}

Tensor sign(const Tensor& x) {
  std::vector<float> out(static_cast<size_t>(x.size()));
  const float* px = x.data();
  for (int64_t i = 0; i < x.size(); ++i) {
    out[static_cast<size_t>(i)] = px[i] > 0.0f ? 1.0f : (px[i] < 0.0f ? -1.0f : 0.0f);
  }
  if (needs_grad(x)) x.tape()->mark_nondifferentiable("sign");
  return Tensor(x.shape(), std::move(out));
}

Tensor round_ste(const Tensor& x) {
  std::vector<float> out(static_cast<size_t>(x.size()));
  const float* px = x.data();
  for (int64_t i = 0; i < x.size(); ++i) out[static_cast<size_t>(i)] = std::round(px[i]);
  Tape* tape = common_tape({&x});
  int node = -1;
  if (needs_grad(x)) {
    const int nx = x.node();
    node = tape->record(x.shape(), [nx](Tape& t, const std::vector<float>& g) {
      float* gx = t.grad_buffer(nx).data();
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return bind_result(x.shape(), std::move(out), tape, node);
}

Tensor clamp_ste(const Tensor& x, float lo, float hi) {
  if (lo > hi) {
    throw Error("clamp_ste: lo " + std::to_string(lo) + " > hi " + std::to_string(hi));
  }
  std::vector<float> out(static_cast<size_t>(x.size()));
  const float* px = x.data();
  for (int64_t i = 0; i < x.size(); ++i) {
    out[static_cast<size_t>(i)] = std::min(hi, std::max(lo, px[i]));
  }
  Tape* tape = common_tape({&x});
  int node = -1;
  if (needs_grad(x)) {
    const int nx = x.node();
    node = tape->record(x.shape(), [nx](Tape& t, const std::vector<float>& g) {
      float* gx = t.grad_buffer(nx).data();
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return bind_result(x.shape(), std::move(out), tape, node);
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw ShapeError("argmax_rows expects [B,K], got " + shape_str(logits.shape()));
  }
  const int b = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(static_cast<size_t>(b));
  const float* pl = logits.data();
  for (int i = 0; i < b; ++i) {
    const float* row = pl + static_cast<int64_t>(i) * k;
    int best = 0;
    for (int j = 1; j < k; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  float m = 0.0f;
  const float* pa = a.data();
  const float* pb = b.data();
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(pa[i] - pb[i]));
  return m;
}

bool all_finite(const Tensor& t) {
  const float* p = t.data();
  for (int64_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(p[i])) return false;
  }
  return true;
}

CheckReport grad_check(const std::function<Tensor(Tape&, const Tensor&)>& fn, const Tensor& x,
                       double fd_step, double tol) {
  CheckReport rep;
  Tape tape;
  Tensor xt = tape.watch(x);
  Tensor loss = fn(tape, xt);
  if (tape.saw_nondifferentiable()) {
    rep.nondiff_error = true;
    rep.message = "non-differentiable node: " + tape.nondifferentiable_op();
    return rep;
  }
  if (loss.size() != 1) {
    throw ShapeError("grad_check: fn must return a scalar, got " + shape_str(loss.shape()));
  }
  Gradients grads = tape.backward(loss);
  const Tensor& gt = grads.wrt(xt);

  auto eval = [&fn](const Tensor& point) -> double {
    Tape scratch;
    Tensor p = scratch.watch(point, /*requires_grad=*/false);
    return static_cast<double>(fn(scratch, p).item());
  };

  const std::vector<float>& base = x.vec();
  double max_err = 0.0;
  for (size_t i = 0; i < base.size(); ++i) {
    std::vector<float> vp = base, vm = base;
    vp[i] = static_cast<float>(static_cast<double>(base[i]) + fd_step);
    vm[i] = static_cast<float>(static_cast<double>(base[i]) - fd_step);
    const double h = static_cast<double>(vp[i]) - static_cast<double>(vm[i]);
    const double lp = eval(Tensor(x.shape(), std::move(vp)));
    const double lm = eval(Tensor(x.shape(), std::move(vm)));
    const double fd = (lp - lm) / h;
    const double tg = static_cast<double>(gt.data()[i]);
    const double denom = std::max({1.0, std::fabs(tg), std::fabs(fd)});
    max_err = std::max(max_err, std::fabs(tg - fd) / denom);
  }
  rep.max_rel_err = max_err;
  rep.pass = max_err < tol;
  if (!rep.pass) {
    rep.message = "max relative error " + std::to_string(max_err) + " exceeds tolerance " +
                  std::to_string(tol);
  }
  return rep;
}

}  // namespace cadet
