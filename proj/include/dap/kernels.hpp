#pragma once

// Raw dense kernels shared by the f32 inference path and the f64 training
// path. All kernels are deterministic: the accumulation order for each
// output element of the convolution is fixed as (kt, ci, kh, kw), with the
// output-width loop innermost so the compiler can vectorize it. Parallel
// callers may split work across output channels / frames; each output
// element is written by exactly one thread.

#include <cmath>
#include <cstdint>
#include <vector>

#include "dap/errors.hpp"

namespace dap {

struct Dims4 {
  int t = 0, c = 0, h = 0, w = 0;
  int64_t volume() const { return int64_t(t) * c * h * w; }
  bool operator==(const Dims4&) const = default;
};

// Conv geometry. Weights laid out [c_out][c_in][kt][kh][kw], one contiguous
// buffer; bias one entry per output channel.
struct ConvGeom {
  int c_in = 0, c_out = 0;
  int kt = 1, kh = 1, kw = 1;
  int st = 1, sh = 1, sw = 1;
  int pt = 0, ph = 0, pw = 0;

  int64_t weight_count() const {
    return int64_t(c_out) * c_in * kt * kh * kw;
  }
  static int out_extent(int in, int pad, int k, int stride) {
    return (in + 2 * pad - k) / stride + 1;
  }
  Dims4 out_dims(const Dims4& in) const {
    Dims4 o;
    o.t = out_extent(in.t, pt, kt, st);
    o.c = c_out;
    o.h = out_extent(in.h, ph, kh, sh);
    o.w = out_extent(in.w, pw, kw, sw);
    if (in.c != c_in)
      throw ConfigError("conv: input has " + std::to_string(in.c) +
                        " channels, spec expects " + std::to_string(c_in));
    if (o.t < 1 || o.h < 1 || o.w < 1)
      throw ConfigError("conv: output dims collapse below 1");
    return o;
  }
};

namespace kern {

inline int64_t idx4(const Dims4& d, int t, int c, int h, int w) {
  return ((int64_t(t) * d.c + c) * d.h + h) * d.w + w;
}

// Cross-correlation with zero padding, bias added per output channel.
template <typename T>
void conv3d_forward(const T* x, const Dims4& xd, const T* wgt, const T* bias,
                    const ConvGeom& g, T* y, const Dims4& yd) {
  const int64_t x_frame = int64_t(xd.c) * xd.h * xd.w;
  const int64_t w_per_co = int64_t(g.c_in) * g.kt * g.kh * g.kw;
#pragma omp parallel for collapse(2) schedule(static)
  for (int co = 0; co < yd.c; ++co) {
    for (int to = 0; to < yd.t; ++to) {
      std::vector<T> acc(yd.w);
      for (int ho = 0; ho < yd.h; ++ho) {
        const T b = bias ? bias[co] : T(0);
        for (int wo = 0; wo < yd.w; ++wo) acc[wo] = b;
        for (int kt = 0; kt < g.kt; ++kt) {
          const int ti = to * g.st - g.pt + kt;
          if (ti < 0 || ti >= xd.t) continue;
          for (int ci = 0; ci < g.c_in; ++ci) {
            const T* xrow0 = x + ti * x_frame + int64_t(ci) * xd.h * xd.w;
            const T* wrow = wgt + co * w_per_co +
                            (int64_t(ci) * g.kt + kt) * g.kh * g.kw;
            for (int kh = 0; kh < g.kh; ++kh) {
              const int hi = ho * g.sh - g.ph + kh;
              if (hi < 0 || hi >= xd.h) continue;
              const T* xrow = xrow0 + int64_t(hi) * xd.w;
              for (int kw = 0; kw < g.kw; ++kw) {
                const T wv = wrow[kh * g.kw + kw];
                const int base = -g.pw + kw;
                // valid wo range so that wi = wo*sw + base is in bounds
                int wo_lo = 0, wo_hi = yd.w - 1;
                if (base < 0) wo_lo = (-base + g.sw - 1) / g.sw;
                const int max_wi = xd.w - 1 - base;
                if (max_wi < 0) continue;
                if (max_wi / g.sw < wo_hi) wo_hi = max_wi / g.sw;
                for (int wo = wo_lo; wo <= wo_hi; ++wo)
                  acc[wo] += wv * xrow[wo * g.sw + base];
              }
            }
          }
        }
        T* yrow = y + idx4(yd, to, co, ho, 0);
        for (int wo = 0; wo < yd.w; ++wo) yrow[wo] = acc[wo];
      }
    }
  }
}

// Gradient w.r.t. the convolution input (gather form: each input element
// sums the output positions whose receptive field covers it). Accumulates
// into dx so a multi-consumer node keeps earlier contributions.
template <typename T>
void conv3d_backward_input(const T* dy, const Dims4& yd, const T* wgt,
                           const ConvGeom& g, T* dx, const Dims4& xd) {
  const int64_t w_per_co = int64_t(g.c_in) * g.kt * g.kh * g.kw;
#pragma omp parallel for collapse(2) schedule(static)
  for (int ci = 0; ci < xd.c; ++ci) {
    for (int ti = 0; ti < xd.t; ++ti) {
      for (int hi = 0; hi < xd.h; ++hi) {
        for (int wi = 0; wi < xd.w; ++wi) {
          T acc = 0;
          for (int co = 0; co < yd.c; ++co) {
            const T* wco = wgt + co * w_per_co;
            for (int kt = 0; kt < g.kt; ++kt) {
              const int tn = ti + g.pt - kt;
              if (tn < 0 || tn % g.st != 0) continue;
              const int to = tn / g.st;
              if (to >= yd.t) continue;
              for (int kh = 0; kh < g.kh; ++kh) {
                const int hn = hi + g.ph - kh;
                if (hn < 0 || hn % g.sh != 0) continue;
                const int ho = hn / g.sh;
                if (ho >= yd.h) continue;
                for (int kw = 0; kw < g.kw; ++kw) {
                  const int wn = wi + g.pw - kw;
                  if (wn < 0 || wn % g.sw != 0) continue;
                  const int wo = wn / g.sw;
                  if (wo >= yd.w) continue;
                  acc += dy[idx4(yd, to, co, ho, wo)] *
                         wco[((int64_t(ci) * g.kt + kt) * g.kh + kh) * g.kw + kw];
                }
              }
            }
          }
          dx[idx4(xd, ti, ci, hi, wi)] += acc;
        }
      }
    }
  }
}

// Gradients w.r.t. weights and bias. dw/db are accumulated into (caller
// zero-initializes if that is the desired semantics).
template <typename T>
void conv3d_backward_params(const T* x, const Dims4& xd, const T* dy,
                            const Dims4& yd, const ConvGeom& g, T* dw, T* db) {
  const int64_t w_per_co = int64_t(g.c_in) * g.kt * g.kh * g.kw;
#pragma omp parallel for schedule(static)
  for (int co = 0; co < yd.c; ++co) {
    T* dwco = dw + co * w_per_co;
    T dbacc = 0;
    for (int to = 0; to < yd.t; ++to) {
      for (int ho = 0; ho < yd.h; ++ho) {
        for (int wo = 0; wo < yd.w; ++wo) {
          const T gy = dy[idx4(yd, to, co, ho, wo)];
          dbacc += gy;
          if (gy == T(0)) continue;
          for (int kt = 0; kt < g.kt; ++kt) {
            const int ti = to * g.st - g.pt + kt;
            if (ti < 0 || ti >= xd.t) continue;
            for (int ci = 0; ci < g.c_in; ++ci) {
              for (int kh = 0; kh < g.kh; ++kh) {
                const int hi = ho * g.sh - g.ph + kh;
                if (hi < 0 || hi >= xd.h) continue;
                for (int kw = 0; kw < g.kw; ++kw) {
                  const int wi = wo * g.sw - g.pw + kw;
                  if (wi < 0 || wi >= xd.w) continue;
                  dwco[((int64_t(ci) * g.kt + kt) * g.kh + kh) * g.kw + kw] +=
                      gy * x[idx4(xd, ti, ci, hi, wi)];
                }
              }
            }
          }
        }
      }
    }
    if (db) db[co] += dbacc;
  }
}

// y = W x + b with W row-major [rows x cols].
template <typename T>
void affine_forward(const T* x, const T* W, const T* b, int rows, int cols,
                    T* y) {
  for (int r = 0; r < rows; ++r) {
    T acc = b ? b[r] : T(0);
    const T* wr = W + int64_t(r) * cols;
    for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

template <typename T>
T sigmoid(T z) {
  if (z >= 0) {
    const T e = std::exp(-z);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(z);
  return e / (T(1) + e);
}

} // namespace kern
} // namespace dap
