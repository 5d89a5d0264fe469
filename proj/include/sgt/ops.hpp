#pragma once

// Differentiable tensor operations.
//
// Every op computes its result eagerly, and — when a tape is active on the
// current thread AND at least one operand requires grad — records a backward
// closure on that tape. Closures capture operand/result storages by
// shared_ptr, so the graph stays alive even if the caller drops its handles.
// With no active tape the same functions run as plain inference kernels.
//
// Numerics: values are stored in the scalar type S, but every explicit
// reduction (sum, mean, losses, softmax normalization, pooling means, bias
// gradient sums) accumulates in double before casting back, so float32 runs
// do not lose digits to long accumulation chains. Matrix products go through
// Eigen GEMM in S precision, as any BLAS would.

#include "sgt/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace sgt {

namespace detail {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
inline void check_same_shape(const char* op, const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
}

template <typename S>
inline void check_rank(const char* op, const TensorT<S>& t, int rank) {
  if (t.rank() != rank)
    throw std::invalid_argument(std::string(op) + ": expected rank " +
                                std::to_string(rank) + " tensor, got " +
                                shape_to_string(t.shape()));
}

// Returns the active tape if any listed operand wants gradients, else null.
template <typename S>
inline TapeT<S>* recording_tape(std::initializer_list<const TensorT<S>*> operands) {
  TapeT<S>* t = active_tape<S>();
  if (t == nullptr) return nullptr;
  for (const TensorT<S>* op : operands)
    if (op->requires_grad()) return t;
  return nullptr;
}

template <typename S>
inline void record(TapeT<S>* tape, TensorT<S>& out, std::function<void()> fn) {
  out.storage()->requires_grad = true;
  out.storage()->tape = tape;
  tape->record(out.storage_ptr(), std::move(fn));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape("add", a, b);
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  out.storage()->values = a.storage()->values + b.storage()->values;
  if (auto* t = detail::recording_tape<S>({&a, &b})) {
    auto as = a.storage_ptr(), bs = b.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [as, bs, os] {
      if (as->requires_grad) { as->ensure_grad(); as->grad += os->grad; }
      if (bs->requires_grad) { bs->ensure_grad(); bs->grad += os->grad; }
    });
  }
  return out;
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape("sub", a, b);
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  out.storage()->values = a.storage()->values - b.storage()->values;
  if (auto* t = detail::recording_tape<S>({&a, &b})) {
    auto as = a.storage_ptr(), bs = b.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [as, bs, os] {
      if (as->requires_grad) { as->ensure_grad(); as->grad += os->grad; }
      if (bs->requires_grad) { bs->ensure_grad(); bs->grad -= os->grad; }
    });
  }
  return out;
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape("mul", a, b);
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  out.storage()->values = a.storage()->values * b.storage()->values;
  if (auto* t = detail::recording_tape<S>({&a, &b})) {
    auto as = a.storage_ptr(), bs = b.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [as, bs, os] {
      if (as->requires_grad) { as->ensure_grad(); as->grad += os->grad * bs->values; }
      if (bs->requires_grad) { bs->ensure_grad(); bs->grad += os->grad * as->values; }
    });
  }
  return out;
}

template <typename S>
TensorT<S> scale(const TensorT<S>& x, S c) {
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  out.storage()->values = x.storage()->values * c;
  if (auto* t = detail::recording_tape<S>({&x})) {
    auto xs = x.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [xs, os, c] {
      xs->ensure_grad();
      xs->grad += os->grad * c;
    });
  }
  return out;
}

template <typename S>
TensorT<S> relu(const TensorT<S>& x) {
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  out.storage()->values = x.storage()->values.max(S(0));
  if (auto* t = detail::recording_tape<S>({&x})) {
    auto xs = x.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [xs, os] {
      xs->ensure_grad();
      xs->grad += (xs->values > S(0)).select(os->grad, S(0));
    });
  }
  return out;
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& x) {
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  out.storage()->values = S(1) / (S(1) + (-x.storage()->values).exp());
  if (auto* t = detail::recording_tape<S>({&x})) {
    auto xs = x.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [xs, os] {
      xs->ensure_grad();
      xs->grad += os->grad * os->values * (S(1) - os->values);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

// Softmax along `axis` (negative axes count from the back). Rows are
// max-shifted for stability and normalized with double accumulation.
template <typename S>
TensorT<S> softmax(const TensorT<S>& x, int axis) {
  const Shape& sh = x.shape();
  int r = x.rank();
  if (r == 0) throw std::invalid_argument("softmax: scalar input has no axis");
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw std::invalid_argument("softmax: axis out of range for " + shape_to_string(sh));

  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= sh[i];
  for (int i = axis + 1; i < r; ++i) inner *= sh[i];
  const std::int64_t k = sh[axis];

  TensorT<S> out = TensorT<S>::zeros(sh);
  const S* xv = x.data().data();
  S* ov = out.storage()->values.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * k * inner + in;
      S mx = xv[base];
      for (std::int64_t c = 1; c < k; ++c) mx = std::max(mx, xv[base + c * inner]);
      double denom = 0.0;
      for (std::int64_t c = 0; c < k; ++c) {
        double e = std::exp(static_cast<double>(xv[base + c * inner] - mx));
        ov[base + c * inner] = static_cast<S>(e);
        denom += e;
      }
      for (std::int64_t c = 0; c < k; ++c)
        ov[base + c * inner] = static_cast<S>(static_cast<double>(ov[base + c * inner]) / denom);
    }
  }

  if (auto* t = detail::recording_tape<S>({&x})) {
    auto xs = x.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [xs, os, outer, inner, k] {
      xs->ensure_grad();
      const S* y = os->values.data();
      const S* g = os->grad.data();
      S* dx = xs->grad.data();
      for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
          const std::int64_t base = o * k * inner + in;
          double dot = 0.0;
          for (std::int64_t c = 0; c < k; ++c) {
            const std::int64_t i = base + c * inner;
            dot += static_cast<double>(g[i]) * static_cast<double>(y[i]);
          }
          for (std::int64_t c = 0; c < k; ++c) {
            const std::int64_t i = base + c * inner;
            dx[i] += static_cast<S>(static_cast<double>(y[i]) *
                                    (static_cast<double>(g[i]) - dot));
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

// y[N,M] = x[N,D] * w[D,M] + b[M]
template <typename S>
TensorT<S> linear(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
  detail::check_rank("linear", x, 2);
  detail::check_rank("linear", w, 2);
  detail::check_rank("linear", b, 1);
  const int N = x.dim(0), D = x.dim(1), M = w.dim(1);
  if (w.dim(0) != D || b.dim(0) != M)
    throw std::invalid_argument("linear: incompatible shapes x" + shape_to_string(x.shape()) +
                                " w" + shape_to_string(w.shape()) + " b" +
                                shape_to_string(b.shape()));

  TensorT<S> out = TensorT<S>::zeros({N, M});
  {
    Eigen::Map<const detail::MatRM<S>> X(x.data().data(), N, D);
    Eigen::Map<const detail::MatRM<S>> W(w.data().data(), D, M);
    Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> B(b.data().data(), M);
    Eigen::Map<detail::MatRM<S>> Y(out.storage()->values.data(), N, M);
    Y.noalias() = X * W;
    Y.rowwise() += B;
  }

  if (auto* t = detail::recording_tape<S>({&x, &w, &b})) {
    auto xs = x.storage_ptr(), ws = w.storage_ptr(), bs = b.storage_ptr(),
         os = out.storage_ptr();
    detail::record(t, out, [xs, ws, bs, os, N, D, M] {
      Eigen::Map<const detail::MatRM<S>> X(xs->values.data(), N, D);
      Eigen::Map<const detail::MatRM<S>> W(ws->values.data(), D, M);
      Eigen::Map<const detail::MatRM<S>> G(os->grad.data(), N, M);
      if (xs->requires_grad) {
        xs->ensure_grad();
        Eigen::Map<detail::MatRM<S>> dX(xs->grad.data(), N, D);
        dX.noalias() += G * W.transpose();
      }
      if (ws->requires_grad) {
        ws->ensure_grad();
        Eigen::Map<detail::MatRM<S>> dW(ws->grad.data(), D, M);
        dW.noalias() += X.transpose() * G;
      }
      if (bs->requires_grad) {
        bs->ensure_grad();
        for (int m = 0; m < M; ++m) {
          double acc = 0.0;
          for (int n = 0; n < N; ++n) acc += static_cast<double>(G(n, m));
          bs->grad(m) += static_cast<S>(acc);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// conv2d (cross-correlation) via im2col + GEMM
// ---------------------------------------------------------------------------

namespace detail {

struct Conv2dDims {
  int N, C, H, W;    // input
  int F, kh, kw;     // kernel
  int stride, pad;
  int Ho, Wo;
};

template <typename S>
inline Conv2dDims conv2d_dims(const TensorT<S>& x, const TensorT<S>& k,
                              int stride, int padding) {
  check_rank("conv2d", x, 4);
  check_rank("conv2d", k, 4);
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
  Conv2dDims d{};
  d.N = x.dim(0); d.C = x.dim(1); d.H = x.dim(2); d.W = x.dim(3);
  d.F = k.dim(0); d.kh = k.dim(2); d.kw = k.dim(3);
  d.stride = stride; d.pad = padding;
  if (k.dim(1) != d.C)
    throw std::invalid_argument("conv2d: kernel channels " + std::to_string(k.dim(1)) +
                                " do not match input channels " + std::to_string(d.C));
  d.Ho = (d.H + 2 * padding - d.kh) / stride + 1;
  d.Wo = (d.W + 2 * padding - d.kw) / stride + 1;
  if (d.H + 2 * padding < d.kh || d.W + 2 * padding < d.kw || d.Ho < 1 || d.Wo < 1)
    throw std::invalid_argument("conv2d: kernel does not fit input " +
                                shape_to_string(x.shape()));
  return d;
}

// Unfolds one sample into a [C*kh*kw, Ho*Wo] patch matrix (row-major).
template <typename S>
inline void im2col_sample(const S* x, const Conv2dDims& d, S* col) {
  const std::int64_t cols = static_cast<std::int64_t>(d.Ho) * d.Wo;
  for (int c = 0; c < d.C; ++c) {
    for (int i = 0; i < d.kh; ++i) {
      for (int j = 0; j < d.kw; ++j) {
        const std::int64_t row = (static_cast<std::int64_t>(c) * d.kh + i) * d.kw + j;
        S* dst = col + row * cols;
        for (int oh = 0; oh < d.Ho; ++oh) {
          const int ih = oh * d.stride + i - d.pad;
          for (int ow = 0; ow < d.Wo; ++ow) {
            const int iw = ow * d.stride + j - d.pad;
            const bool in = ih >= 0 && ih < d.H && iw >= 0 && iw < d.W;
            dst[static_cast<std::int64_t>(oh) * d.Wo + ow] =
                in ? x[(static_cast<std::int64_t>(c) * d.H + ih) * d.W + iw] : S(0);
          }
        }
      }
    }
  }
}

// Scatter-adds a patch-matrix gradient back onto one sample's input gradient.
template <typename S>
inline void col2im_accum_sample(const S* dcol, const Conv2dDims& d, S* dx) {
  const std::int64_t cols = static_cast<std::int64_t>(d.Ho) * d.Wo;
  for (int c = 0; c < d.C; ++c) {
    for (int i = 0; i < d.kh; ++i) {
      for (int j = 0; j < d.kw; ++j) {
        const std::int64_t row = (static_cast<std::int64_t>(c) * d.kh + i) * d.kw + j;
        const S* src = dcol + row * cols;
        for (int oh = 0; oh < d.Ho; ++oh) {
          const int ih = oh * d.stride + i - d.pad;
          if (ih < 0 || ih >= d.H) continue;
          for (int ow = 0; ow < d.Wo; ++ow) {
            const int iw = ow * d.stride + j - d.pad;
            if (iw < 0 || iw >= d.W) continue;
            dx[(static_cast<std::int64_t>(c) * d.H + ih) * d.W + iw] +=
                src[static_cast<std::int64_t>(oh) * d.Wo + ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2D cross-correlation: x[N,C,H,W] * k[F,C,kh,kw] -> [N,F,Ho,Wo] with
// Ho = (H + 2*padding - kh)/stride + 1 (likewise Wo). No kernel flip; no bias
// (see add_channel_bias).
template <typename S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& k, int stride = 1,
                  int padding = 0) {
  const detail::Conv2dDims d = detail::conv2d_dims(x, k, stride, padding);
  const std::int64_t ckk = static_cast<std::int64_t>(d.C) * d.kh * d.kw;
  const std::int64_t cols = static_cast<std::int64_t>(d.Ho) * d.Wo;

  TensorT<S> out = TensorT<S>::zeros({d.N, d.F, d.Ho, d.Wo});
  // Patch matrices for the whole batch; kept alive for the backward pass.
  auto col = std::make_shared<std::vector<S>>(static_cast<std::size_t>(d.N) * ckk * cols);

  const S* xv = x.data().data();
  S* ov = out.storage()->values.data();
  Eigen::Map<const detail::MatRM<S>> K(k.data().data(), d.F, ckk);
  for (int n = 0; n < d.N; ++n) {
    S* coln = col->data() + static_cast<std::int64_t>(n) * ckk * cols;
    detail::im2col_sample(xv + static_cast<std::int64_t>(n) * d.C * d.H * d.W, d, coln);
    Eigen::Map<const detail::MatRM<S>> Col(coln, ckk, cols);
    Eigen::Map<detail::MatRM<S>> O(ov + static_cast<std::int64_t>(n) * d.F * cols, d.F, cols);
    O.noalias() = K * Col;
  }

  if (auto* t = detail::recording_tape<S>({&x, &k})) {
    auto xs = x.storage_ptr(), ks = k.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [xs, ks, os, d, ckk, cols, col] {
      Eigen::Map<const detail::MatRM<S>> K(ks->values.data(), d.F, ckk);
      std::vector<S> dcol(static_cast<std::size_t>(ckk) * cols);
      for (int n = 0; n < d.N; ++n) {
        Eigen::Map<const detail::MatRM<S>> G(
            os->grad.data() + static_cast<std::int64_t>(n) * d.F * cols, d.F, cols);
        Eigen::Map<const detail::MatRM<S>> Col(
            col->data() + static_cast<std::int64_t>(n) * ckk * cols, ckk, cols);
        if (ks->requires_grad) {
          ks->ensure_grad();
          Eigen::Map<detail::MatRM<S>> dK(ks->grad.data(), d.F, ckk);
          dK.noalias() += G * Col.transpose();
        }
        if (xs->requires_grad) {
          xs->ensure_grad();
          Eigen::Map<detail::MatRM<S>> DCol(dcol.data(), ckk, cols);
          DCol.noalias() = K.transpose() * G;
          detail::col2im_accum_sample(
              dcol.data(), d,
              xs->grad.data() + static_cast<std::int64_t>(n) * d.C * d.H * d.W);
        }
      }
    });
  }
  return out;
}

// Adds a per-channel bias: x[N,C,H,W] + b[C] broadcast over N,H,W.
template <typename S>
TensorT<S> add_channel_bias(const TensorT<S>& x, const TensorT<S>& b) {
  detail::check_rank("add_channel_bias", x, 4);
  detail::check_rank("add_channel_bias", b, 1);
  const int N = x.dim(0), C = x.dim(1);
  const std::int64_t hw = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  if (b.dim(0) != C)
    throw std::invalid_argument("add_channel_bias: bias size " + std::to_string(b.dim(0)) +
                                " does not match channels " + std::to_string(C));

  TensorT<S> out = TensorT<S>::zeros(x.shape());
  const S* xv = x.data().data();
  const S* bv = b.data().data();
  S* ov = out.storage()->values.data();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * hw;
      for (std::int64_t i = 0; i < hw; ++i) ov[base + i] = xv[base + i] + bv[c];
    }

  if (auto* t = detail::recording_tape<S>({&x, &b})) {
    auto xs = x.storage_ptr(), bs = b.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [xs, bs, os, N, C, hw] {
      if (xs->requires_grad) { xs->ensure_grad(); xs->grad += os->grad; }
      if (bs->requires_grad) {
        bs->ensure_grad();
        const S* g = os->grad.data();
        for (int c = 0; c < C; ++c) {
          double acc = 0.0;
          for (int n = 0; n < N; ++n) {
            const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * hw;
            for (std::int64_t i = 0; i < hw; ++i) acc += static_cast<double>(g[base + i]);
          }
          bs->grad(c) += static_cast<S>(acc);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// spatial ops
// ---------------------------------------------------------------------------

// 2x2 max pooling with stride 2 on [N,C,H,W]; H and W must be even. Ties take
// the first maximum in row-major window order, and the backward pass routes
// the full gradient to exactly that element.
template <typename S>
TensorT<S> maxpool2x(const TensorT<S>& x) {
  detail::check_rank("maxpool2x", x, 4);
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 != 0 || W % 2 != 0)
    throw std::invalid_argument("maxpool2x: spatial extents must be even, got " +
                                shape_to_string(x.shape()));
  const int Ho = H / 2, Wo = W / 2;

  TensorT<S> out = TensorT<S>::zeros({N, C, Ho, Wo});
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.size()));
  const S* xv = x.data().data();
  S* ov = out.storage()->values.data();
  std::int64_t oi = 0;
  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
    const S* plane = xv + nc * H * W;
    for (int oh = 0; oh < Ho; ++oh)
      for (int ow = 0; ow < Wo; ++ow, ++oi) {
        std::int64_t best = static_cast<std::int64_t>(2 * oh) * W + 2 * ow;
        S bv = plane[best];
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) {
            const std::int64_t idx = static_cast<std::int64_t>(2 * oh + i) * W + (2 * ow + j);
            if (plane[idx] > bv) { bv = plane[idx]; best = idx; }
          }
        ov[oi] = bv;
        argmax[static_cast<std::size_t>(oi)] = nc * H * W + best;
      }
  }

  if (auto* t = detail::recording_tape<S>({&x})) {
    auto xs = x.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [xs, os, argmax = std::move(argmax)] {
      xs->ensure_grad();
      const S* g = os->grad.data();
      for (std::size_t i = 0; i < argmax.size(); ++i)
        xs->grad(argmax[i]) += g[i];
    });
  }
  return out;
}

// Nearest-neighbour 2x upsampling: each input pixel becomes a 2x2 block.
template <typename S>
TensorT<S> upsample_nearest2x(const TensorT<S>& x) {
  detail::check_rank("upsample_nearest2x", x, 4);
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  TensorT<S> out = TensorT<S>::zeros({N, C, 2 * H, 2 * W});
  const S* xv = x.data().data();
  S* ov = out.storage()->values.data();
  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
    const S* src = xv + nc * H * W;
    S* dst = ov + nc * 4 * H * W;
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) {
        const S v = src[static_cast<std::int64_t>(h) * W + w];
        S* row0 = dst + static_cast<std::int64_t>(2 * h) * 2 * W + 2 * w;
        row0[0] = v;
        row0[1] = v;
        row0[2 * W] = v;
        row0[2 * W + 1] = v;
      }
  }

  if (auto* t = detail::recording_tape<S>({&x})) {
    auto xs = x.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [xs, os, N, C, H, W] {
      xs->ensure_grad();
      const S* g = os->grad.data();
      for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
        S* dst = xs->grad.data() + nc * H * W;
        const S* src = g + nc * 4 * H * W;
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) {
            const S* row0 = src + static_cast<std::int64_t>(2 * h) * 2 * W + 2 * w;
            dst[static_cast<std::int64_t>(h) * W + w] +=
                row0[0] + row0[1] + row0[2 * W] + row0[2 * W + 1];
          }
      }
    });
  }
  return out;
}

// Concatenates along the channel axis: [N,Ca,H,W] ++ [N,Cb,H,W] -> [N,Ca+Cb,H,W].
template <typename S>
TensorT<S> concat_channels(const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_rank("concat_channels", a, 4);
  detail::check_rank("concat_channels", b, 4);
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw std::invalid_argument("concat_channels: incompatible shapes " +
                                shape_to_string(a.shape()) + " and " +
                                shape_to_string(b.shape()));
  const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
  const std::int64_t hw = static_cast<std::int64_t>(a.dim(2)) * a.dim(3);

  TensorT<S> out = TensorT<S>::zeros({N, Ca + Cb, a.dim(2), a.dim(3)});
  const S* av = a.data().data();
  const S* bv = b.data().data();
  S* ov = out.storage()->values.data();
  for (int n = 0; n < N; ++n) {
    S* dst = ov + static_cast<std::int64_t>(n) * (Ca + Cb) * hw;
    std::copy_n(av + static_cast<std::int64_t>(n) * Ca * hw, Ca * hw, dst);
    std::copy_n(bv + static_cast<std::int64_t>(n) * Cb * hw, Cb * hw, dst + Ca * hw);
  }

  if (auto* t = detail::recording_tape<S>({&a, &b})) {
    auto as = a.storage_ptr(), bs = b.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [as, bs, os, N, Ca, Cb, hw] {
      const S* g = os->grad.data();
      for (int n = 0; n < N; ++n) {
        const S* src = g + static_cast<std::int64_t>(n) * (Ca + Cb) * hw;
        if (as->requires_grad) {
          as->ensure_grad();
          S* da = as->grad.data() + static_cast<std::int64_t>(n) * Ca * hw;
          for (std::int64_t i = 0; i < Ca * hw; ++i) da[i] += src[i];
        }
        if (bs->requires_grad) {
          bs->ensure_grad();
          S* db = bs->grad.data() + static_cast<std::int64_t>(n) * Cb * hw;
          for (std::int64_t i = 0; i < Cb * hw; ++i) db[i] += src[Ca * hw + i];
        }
      }
    });
  }
  return out;
}

// Spatial mean per channel: [N,C,H,W] -> [N,C].
template <typename S>
TensorT<S> global_avg_pool(const TensorT<S>& x) {
  detail::check_rank("global_avg_pool", x, 4);
  const int N = x.dim(0), C = x.dim(1);
  const std::int64_t hw = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  if (hw == 0) throw std::invalid_argument("global_avg_pool: empty spatial extent");

  TensorT<S> out = TensorT<S>::zeros({N, C});
  const S* xv = x.data().data();
  S* ov = out.storage()->values.data();
  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < hw; ++i) acc += static_cast<double>(xv[nc * hw + i]);
    ov[nc] = static_cast<S>(acc / static_cast<double>(hw));
  }

  if (auto* t = detail::recording_tape<S>({&x})) {
    auto xs = x.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [xs, os, N, C, hw] {
      xs->ensure_grad();
      const S inv = S(1) / static_cast<S>(hw);
      const S* g = os->grad.data();
      for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(N) * C; ++nc) {
        const S gv = g[nc] * inv;
        for (std::int64_t i = 0; i < hw; ++i) xs->grad(nc * hw + i) += gv;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> sum(const TensorT<S>& x) {
  double acc = 0.0;
  for (S v : x.data()) acc += static_cast<double>(v);
  TensorT<S> out = TensorT<S>::scalar(static_cast<S>(acc));
  if (auto* t = detail::recording_tape<S>({&x})) {
    auto xs = x.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [xs, os] {
      xs->ensure_grad();
      xs->grad += os->grad(0);
    });
  }
  return out;
}

template <typename S>
TensorT<S> mean(const TensorT<S>& x) {
  if (x.size() == 0) throw std::invalid_argument("mean: empty tensor");
  double acc = 0.0;
  for (S v : x.data()) acc += static_cast<double>(v);
  const std::int64_t n = x.size();
  TensorT<S> out = TensorT<S>::scalar(static_cast<S>(acc / static_cast<double>(n)));
  if (auto* t = detail::recording_tape<S>({&x})) {
    auto xs = x.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [xs, os, n] {
      xs->ensure_grad();
      xs->grad += os->grad(0) / static_cast<S>(n);
    });
  }
  return out;
}

// Mean squared error over all elements: mean((a - b)^2).
template <typename S>
TensorT<S> mse_loss(const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape("mse_loss", a, b);
  if (a.size() == 0) throw std::invalid_argument("mse_loss: empty tensors");
  const std::int64_t n = a.size();
  const S* av = a.data().data();
  const S* bv = b.data().data();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    acc += d * d;
  }
  TensorT<S> out = TensorT<S>::scalar(static_cast<S>(acc / static_cast<double>(n)));
  if (auto* t = detail::recording_tape<S>({&a, &b})) {
    auto as = a.storage_ptr(), bs = b.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [as, bs, os, n] {
      const S c = os->grad(0) * S(2) / static_cast<S>(n);
      if (as->requires_grad) {
        as->ensure_grad();
        as->grad += c * (as->values - bs->values);
      }
      if (bs->requires_grad) {
        bs->ensure_grad();
        bs->grad -= c * (as->values - bs->values);
      }
    });
  }
  return out;
}

// Mean absolute error over all elements: mean(|a - b|). The subgradient at
// exact equality is taken as 0.
template <typename S>
TensorT<S> l1_loss(const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_same_shape("l1_loss", a, b);
  if (a.size() == 0) throw std::invalid_argument("l1_loss: empty tensors");
  const std::int64_t n = a.size();
  const S* av = a.data().data();
  const S* bv = b.data().data();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i)
    acc += std::abs(static_cast<double>(av[i]) - static_cast<double>(bv[i]));
  TensorT<S> out = TensorT<S>::scalar(static_cast<S>(acc / static_cast<double>(n)));
  if (auto* t = detail::recording_tape<S>({&a, &b})) {
    auto as = a.storage_ptr(), bs = b.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [as, bs, os, n] {
      const S c = os->grad(0) / static_cast<S>(n);
      auto sign = (as->values > bs->values)
                      .select(detail::StorageT<S>::Array::Constant(n, S(1)),
                              (as->values < bs->values)
                                  .select(detail::StorageT<S>::Array::Constant(n, S(-1)),
                                          detail::StorageT<S>::Array::Zero(n)))
                      .eval();
      if (as->requires_grad) { as->ensure_grad(); as->grad += c * sign; }
      if (bs->requires_grad) { bs->ensure_grad(); bs->grad -= c * sign; }
    });
  }
  return out;
}

// Mean softmax cross-entropy of logits[N,C] against integer labels in [0,C).
template <typename S>
TensorT<S> cross_entropy(const TensorT<S>& logits, const std::vector<int>& labels) {
  detail::check_rank("cross_entropy", logits, 2);
  const int N = logits.dim(0), C = logits.dim(1);
  if (static_cast<int>(labels.size()) != N)
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(N) + " rows");
  for (int y : labels)
    if (y < 0 || y >= C)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(y) +
                                  " outside [0," + std::to_string(C) + ")");

  const S* lv = logits.data().data();
  // Per-row softmax probabilities, kept for the backward pass.
  std::vector<S> probs(static_cast<std::size_t>(N) * C);
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    const S* row = lv + static_cast<std::int64_t>(n) * C;
    S mx = row[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (int c = 0; c < C; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
    const double logdenom = std::log(denom);
    for (int c = 0; c < C; ++c) {
      const double z = static_cast<double>(row[c] - mx);
      probs[static_cast<std::size_t>(n) * C + c] = static_cast<S>(std::exp(z) / denom);
      if (c == labels[static_cast<std::size_t>(n)]) total += logdenom - z;
    }
  }
  TensorT<S> out = TensorT<S>::scalar(static_cast<S>(total / static_cast<double>(N)));

  if (auto* t = detail::recording_tape<S>({&logits})) {
    auto ls = logits.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [ls, os, labels, probs = std::move(probs), N, C] {
      ls->ensure_grad();
      const S c0 = os->grad(0) / static_cast<S>(N);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const std::size_t i = static_cast<std::size_t>(n) * C + c;
          const S ind = (c == labels[static_cast<std::size_t>(n)]) ? S(1) : S(0);
          ls->grad(static_cast<std::int64_t>(i)) += c0 * (probs[i] - ind);
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// class-evidence map ops
// ---------------------------------------------------------------------------

// Per-sample class-evidence map: for features[N,C,h,w], fc_weight[C,M] and a
// class index per sample, out[n,0,:,:] = sum_c fc_weight[c, cls[n]] * features[n,c,:,:].
// Differentiable in both features and fc_weight.
template <typename S>
TensorT<S> cam_weighted_sum(const TensorT<S>& features, const TensorT<S>& fc_weight,
                            const std::vector<int>& class_index) {
  detail::check_rank("cam_weighted_sum", features, 4);
  detail::check_rank("cam_weighted_sum", fc_weight, 2);
  const int N = features.dim(0), C = features.dim(1);
  const int h = features.dim(2), w = features.dim(3);
  const int M = fc_weight.dim(1);
  if (fc_weight.dim(0) != C)
    throw std::invalid_argument("cam_weighted_sum: weight rows " +
                                std::to_string(fc_weight.dim(0)) +
                                " do not match feature channels " + std::to_string(C));
  if (static_cast<int>(class_index.size()) != N)
    throw std::invalid_argument("cam_weighted_sum: need one class index per sample");
  for (int y : class_index)
    if (y < 0 || y >= M)
      throw std::invalid_argument("cam_weighted_sum: class index " + std::to_string(y) +
                                  " outside [0," + std::to_string(M) + ")");

  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  TensorT<S> out = TensorT<S>::zeros({N, 1, h, w});
  const S* fv = features.data().data();
  const S* wv = fc_weight.data().data();
  S* ov = out.storage()->values.data();
  for (int n = 0; n < N; ++n) {
    const int y = class_index[static_cast<std::size_t>(n)];
    S* dst = ov + static_cast<std::int64_t>(n) * hw;
    for (std::int64_t i = 0; i < hw; ++i) dst[i] = S(0);
    for (int c = 0; c < C; ++c) {
      const S wc = wv[static_cast<std::int64_t>(c) * M + y];
      const S* src = fv + (static_cast<std::int64_t>(n) * C + c) * hw;
      for (std::int64_t i = 0; i < hw; ++i) dst[i] += wc * src[i];
    }
  }

  if (auto* t = detail::recording_tape<S>({&features, &fc_weight})) {
    auto fs = features.storage_ptr(), ws = fc_weight.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [fs, ws, os, class_index, N, C, M, hw] {
      const S* g = os->grad.data();
      for (int n = 0; n < N; ++n) {
        const int y = class_index[static_cast<std::size_t>(n)];
        const S* gn = g + static_cast<std::int64_t>(n) * hw;
        for (int c = 0; c < C; ++c) {
          const std::int64_t fbase = (static_cast<std::int64_t>(n) * C + c) * hw;
          if (fs->requires_grad) {
            fs->ensure_grad();
            const S wc = ws->values(static_cast<std::int64_t>(c) * M + y);
            for (std::int64_t i = 0; i < hw; ++i) fs->grad(fbase + i) += wc * gn[i];
          }
          if (ws->requires_grad) {
            ws->ensure_grad();
            double acc = 0.0;
            for (std::int64_t i = 0; i < hw; ++i)
              acc += static_cast<double>(gn[i]) * static_cast<double>(fs->values(fbase + i));
            ws->grad(static_cast<std::int64_t>(c) * M + y) += static_cast<S>(acc);
          }
        }
      }
    });
  }
  return out;
}

// Per-sample min-max normalization over all non-batch elements:
// y = (x - min) / (max - min). A constant sample (max == min) maps to all
// zeros and contributes no gradient. Ties for min/max resolve to the first
// occurrence in row-major order.
template <typename S>
TensorT<S> minmax_normalize_per_sample(const TensorT<S>& x) {
  if (x.rank() < 2)
    throw std::invalid_argument("minmax_normalize_per_sample: need a batch dimension, got " +
                                shape_to_string(x.shape()));
  const int N = x.dim(0);
  const std::int64_t per = x.size() / N;
  if (per == 0) throw std::invalid_argument("minmax_normalize_per_sample: empty samples");

  TensorT<S> out = TensorT<S>::zeros(x.shape());
  std::vector<std::int64_t> imin(static_cast<std::size_t>(N)), imax(static_cast<std::size_t>(N));
  std::vector<S> range(static_cast<std::size_t>(N));
  const S* xv = x.data().data();
  S* ov = out.storage()->values.data();
  for (int n = 0; n < N; ++n) {
    const S* src = xv + static_cast<std::int64_t>(n) * per;
    std::int64_t jmin = 0, jmax = 0;
    for (std::int64_t i = 1; i < per; ++i) {
      if (src[i] < src[jmin]) jmin = i;
      if (src[i] > src[jmax]) jmax = i;
    }
    const S r = src[jmax] - src[jmin];
    imin[static_cast<std::size_t>(n)] = static_cast<std::int64_t>(n) * per + jmin;
    imax[static_cast<std::size_t>(n)] = static_cast<std::int64_t>(n) * per + jmax;
    range[static_cast<std::size_t>(n)] = r;
    S* dst = ov + static_cast<std::int64_t>(n) * per;
    if (r == S(0)) {
      for (std::int64_t i = 0; i < per; ++i) dst[i] = S(0);
    } else {
      const S lo = src[jmin];
      for (std::int64_t i = 0; i < per; ++i) dst[i] = (src[i] - lo) / r;
    }
  }

  if (auto* t = detail::recording_tape<S>({&x})) {
    auto xs = x.storage_ptr(), os = out.storage_ptr();
    detail::record(t, out, [xs, os, N, per, imin = std::move(imin),
                            imax = std::move(imax), range = std::move(range)] {
      xs->ensure_grad();
      const S* g = os->grad.data();
      const S* y = os->values.data();
      for (int n = 0; n < N; ++n) {
        const S r = range[static_cast<std::size_t>(n)];
        if (r == S(0)) continue;  // constant sample: treated as locally flat
        const std::int64_t base = static_cast<std::int64_t>(n) * per;
        double gsum = 0.0, gysum = 0.0;
        for (std::int64_t i = 0; i < per; ++i) {
          gsum += static_cast<double>(g[base + i]);
          gysum += static_cast<double>(g[base + i]) * static_cast<double>(y[base + i]);
        }
        for (std::int64_t i = 0; i < per; ++i) xs->grad(base + i) += g[base + i] / r;
        xs->grad(imin[static_cast<std::size_t>(n)]) +=
            static_cast<S>((gysum - gsum) / static_cast<double>(r));
        xs->grad(imax[static_cast<std::size_t>(n)]) -=
            static_cast<S>(gysum / static_cast<double>(r));
      }
    });
  }
  return out;
}

}  // namespace sgt
