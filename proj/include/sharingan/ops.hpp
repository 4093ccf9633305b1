#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sharingan/tensor.hpp"

namespace sharingan {

namespace detail {

// C[m,n] += A[m,k] * B[k,n]
template <typename S>
inline void mm_acc(const S* a, const S* b, S* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    S* crow = c + static_cast<size_t>(i) * n;
    const S* arow = a + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const S s = arow[kk];
      const S* brow = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

// dA[m,k] += G[m,n] * B[k,n]^T
template <typename S>
inline void mm_acc_gbt(const S* g, const S* b, S* da, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* grow = g + static_cast<size_t>(i) * n;
    S* darow = da + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const S* brow = b + static_cast<size_t>(kk) * n;
      S s = S(0);
      for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
      darow[kk] += s;
    }
  }
}

// dB[k,n] += A[m,k]^T * G[m,n]
template <typename S>
inline void mm_acc_atg(const S* a, const S* g, S* db, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const S* arow = a + static_cast<size_t>(i) * k;
    const S* grow = g + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const S s = arow[kk];
      S* dbrow = db + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) dbrow[j] += s * grow[j];
    }
  }
}

template <typename S>
inline bool needs_grad(const TensorT<S>& t) {
  return t.st && (t.st->requires_grad || t.st->tracked);
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  debug_check(out, "add");
  if (TapeT<S>* tape = tape_for<S>({&a, &b})) {
    const bool na = detail::needs_grad(a), nb = detail::needs_grad(b);
    record(tape, out, [a, b, out, na, nb](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      if (na) {
        auto& ga = t.grad_buf(a);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (nb) {
        auto& gb = t.grad_buf(b);
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  debug_check(out, "sub");
  if (TapeT<S>* tape = tape_for<S>({&a, &b})) {
    const bool na = detail::needs_grad(a), nb = detail::needs_grad(b);
    record(tape, out, [a, b, out, na, nb](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      if (na) {
        auto& ga = t.grad_buf(a);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (nb) {
        auto& gb = t.grad_buf(b);
        for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  debug_check(out, "mul");
  if (TapeT<S>* tape = tape_for<S>({&a, &b})) {
    const bool na = detail::needs_grad(a), nb = detail::needs_grad(b);
    record(tape, out, [a, b, out, na, nb](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      if (na) {
        auto& ga = t.grad_buf(a);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.data()[i];
      }
      if (nb) {
        auto& gb = t.grad_buf(b);
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.data()[i];
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> add_scalar(const TensorT<S>& a, S c) {
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] + c;
  if (TapeT<S>* tape = tape_for<S>({&a})) {
    record(tape, out, [a, out](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      auto& ga = t.grad_buf(a);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

template <typename S>
TensorT<S> mul_scalar(const TensorT<S>& a, S c) {
  TensorT<S> out = TensorT<S>::zeros(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * c;
  if (TapeT<S>* tape = tape_for<S>({&a})) {
    record(tape, out, [a, out, c](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      auto& ga = t.grad_buf(a);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    });
  }
  return out;
}

// ---------------------------------------------------------------- matmul

// a: [.., m, k], b: [.., k, n]. Batch dims must match exactly, or either side
// may be rank-2 and is broadcast across the other's batch.
template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw std::invalid_argument("matmul: operands must have rank >= 2, got " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const int m = a.dim(-2), k = a.dim(-1);
  const int kb = b.dim(-2), n = b.dim(-1);
  if (k != kb)
    throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  Shape abatch(a.shape().begin(), a.shape().end() - 2);
  Shape bbatch(b.shape().begin(), b.shape().end() - 2);
  if (!abatch.empty() && !bbatch.empty() && abatch != bbatch)
    throw std::invalid_argument("matmul: batch dimensions not broadcastable: " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const Shape& batch = abatch.empty() ? bbatch : abatch;
  const int64_t nb = numel_of(batch);
  Shape oshape = batch;
  oshape.push_back(m);
  oshape.push_back(n);
  TensorT<S> out = TensorT<S>::zeros(oshape);

  const bool a_b = !abatch.empty(), b_b = !bbatch.empty();
  const int64_t as = static_cast<int64_t>(m) * k, bs = static_cast<int64_t>(k) * n, os = static_cast<int64_t>(m) * n;
  for (int64_t bi = 0; bi < nb; ++bi)
    detail::mm_acc(a.data() + (a_b ? bi * as : 0), b.data() + (b_b ? bi * bs : 0), out.data() + bi * os, m, k, n);
  debug_check(out, "matmul");

  if (TapeT<S>* tape = tape_for<S>({&a, &b})) {
    const bool na = detail::needs_grad(a), nbg = detail::needs_grad(b);
    record(tape, out, [a, b, out, m, k, n, nb, a_b, b_b, as, bs, os, na, nbg](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      if (na) {
        auto& ga = t.grad_buf(a);
        for (int64_t bi = 0; bi < nb; ++bi)
          detail::mm_acc_gbt(g.data() + bi * os, b.data() + (b_b ? bi * bs : 0), ga.data() + (a_b ? bi * as : 0), m,
                             k, n);
      }
      if (nbg) {
        auto& gb = t.grad_buf(b);
        for (int64_t bi = 0; bi < nb; ++bi)
          detail::mm_acc_atg(a.data() + (a_b ? bi * as : 0), g.data() + bi * os, gb.data() + (b_b ? bi * bs : 0), m,
                             k, n);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- linear

// x: [.., din] -> [.., dout]; y = x W + bias
template <typename S>
TensorT<S> linear(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& bias) {
  if (x.rank() < 1 || w.rank() != 2 || bias.rank() != 1)
    throw std::invalid_argument("linear: bad operand ranks");
  const int din = w.dim(0), dout = w.dim(1);
  if (x.dim(-1) != din || bias.dim(0) != dout)
    throw std::invalid_argument("linear: dimension mismatch x" + shape_str(x.shape()) + " w" + shape_str(w.shape()) +
                                " b" + shape_str(bias.shape()));
  const int64_t rows = x.numel() / din;
  Shape oshape = x.shape();
  oshape.back() = dout;
  TensorT<S> out = TensorT<S>::zeros(oshape);
  for (int64_t r = 0; r < rows; ++r) {
    S* orow = out.data() + r * dout;
    for (int j = 0; j < dout; ++j) orow[j] = bias.data()[j];
  }
  detail::mm_acc(x.data(), w.data(), out.data(), static_cast<int>(rows), din, dout);
  debug_check(out, "linear");

  if (TapeT<S>* tape = tape_for<S>({&x, &w, &bias})) {
    const bool nx = detail::needs_grad(x), nw = detail::needs_grad(w), nb = detail::needs_grad(bias);
    record(tape, out, [x, w, bias, out, rows, din, dout, nx, nw, nb](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      if (nx) detail::mm_acc_gbt(g.data(), w.data(), t.grad_buf(x).data(), static_cast<int>(rows), din, dout);
      if (nw) detail::mm_acc_atg(x.data(), g.data(), t.grad_buf(w).data(), static_cast<int>(rows), din, dout);
      if (nb) {
        auto& gb = t.grad_buf(bias);
        for (int64_t r = 0; r < rows; ++r) {
          const S* grow = g.data() + r * dout;
          for (int j = 0; j < dout; ++j) gb[j] += grow[j];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- conv2d

// x: [B,Cin,H,W], w: [Cout,Cin,kh,kw], bias: [Cout]. Cross-correlation with
// zero padding; output size must divide exactly.
template <typename S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& bias, int stride, int padding) {
  if (x.rank() != 4 || w.rank() != 4 || bias.rank() != 1)
    throw std::invalid_argument("conv2d: bad operand ranks");
  const int B = x.dim(0), cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != cin || bias.dim(0) != cout)
    throw std::invalid_argument("conv2d: channel mismatch x" + shape_str(x.shape()) + " w" + shape_str(w.shape()));
  if (stride < 1 || padding < 0) throw std::invalid_argument("conv2d: bad stride/padding");
  const int hnum = H + 2 * padding - kh, wnum = W + 2 * padding - kw;
  if (hnum < 0 || wnum < 0 || hnum % stride != 0 || wnum % stride != 0)
    throw std::invalid_argument("conv2d: output size not integral for input " + shape_str(x.shape()) + " kernel " +
                                shape_str(w.shape()) + " stride " + std::to_string(stride) + " padding " +
                                std::to_string(padding));
  const int OH = hnum / stride + 1, OW = wnum / stride + 1;
  TensorT<S> out = TensorT<S>::zeros({B, cout, OH, OW});

  const auto xat = [&](int b, int c, int y, int xx) {
    return x.data()[((static_cast<size_t>(b) * cin + c) * H + y) * W + xx];
  };
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < cout; ++co) {
      S* oplane = out.data() + (static_cast<size_t>(b) * cout + co) * OH * OW;
      const S bv = bias.data()[co];
      for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i) oplane[i] = bv;
      for (int ci = 0; ci < cin; ++ci) {
        const S* wpl = w.data() + (static_cast<size_t>(co) * cin + ci) * kh * kw;
        for (int oy = 0; oy < OH; ++oy)
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride + ky - padding;
            if (iy < 0 || iy >= H) continue;
            S* orow = oplane + static_cast<size_t>(oy) * OW;
            const S* wrow = wpl + static_cast<size_t>(ky) * kw;
            for (int ox = 0; ox < OW; ++ox) {
              S acc = S(0);
              const int ix0 = ox * stride - padding;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ix0 + kx;
                if (ix < 0 || ix >= W) continue;
                acc += wrow[kx] * xat(b, ci, iy, ix);
              }
              orow[ox] += acc;
            }
          }
      }
    }
  debug_check(out, "conv2d");

  if (TapeT<S>* tape = tape_for<S>({&x, &w, &bias})) {
    const bool nx = detail::needs_grad(x), nw = detail::needs_grad(w), nb = detail::needs_grad(bias);
    record(tape, out, [x, w, bias, out, B, cin, H, W, cout, kh, kw, stride, padding, OH, OW, nx, nw, nb](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      std::vector<S>* gx = nx ? &t.grad_buf(x) : nullptr;
      std::vector<S>* gw = nw ? &t.grad_buf(w) : nullptr;
      std::vector<S>* gb = nb ? &t.grad_buf(bias) : nullptr;
      for (int b = 0; b < B; ++b)
        for (int co = 0; co < cout; ++co) {
          const S* gpl = g.data() + (static_cast<size_t>(b) * cout + co) * OH * OW;
          if (gb)
            for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i) (*gb)[co] += gpl[i];
          if (!gx && !gw) continue;
          for (int ci = 0; ci < cin; ++ci) {
            const size_t xoff = (static_cast<size_t>(b) * cin + ci) * H * W;
            const size_t woff = (static_cast<size_t>(co) * cin + ci) * kh * kw;
            for (int oy = 0; oy < OH; ++oy)
              for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy * stride + ky - padding;
                if (iy < 0 || iy >= H) continue;
                const S* grow = gpl + static_cast<size_t>(oy) * OW;
                for (int ox = 0; ox < OW; ++ox) {
                  const S gv = grow[ox];
                  const int ix0 = ox * stride - padding;
                  for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ix0 + kx;
                    if (ix < 0 || ix >= W) continue;
                    if (gx) (*gx)[xoff + static_cast<size_t>(iy) * W + ix] += w.data()[woff + ky * kw + kx] * gv;
                    if (gw) (*gw)[woff + ky * kw + kx] += x.data()[xoff + static_cast<size_t>(iy) * W + ix] * gv;
                  }
                }
              }
          }
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------- activations

template <typename S>
TensorT<S> relu(const TensorT<S>& x) {
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out.data()[i] = x.data()[i] > S(0) ? x.data()[i] : S(0);
  if (TapeT<S>* tape = tape_for<S>({&x})) {
    record(tape, out, [x, out](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      auto& gx = t.grad_buf(x);
      for (size_t i = 0; i < g.size(); ++i)
        if (x.data()[i] > S(0)) gx[i] += g[i];
    });
  }
  return out;
}

// exact erf form
template <typename S>
TensorT<S> gelu(const TensorT<S>& x) {
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double v = static_cast<double>(x.data()[i]);
    out.data()[i] = static_cast<S>(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
  }
  if (TapeT<S>* tape = tape_for<S>({&x})) {
    record(tape, out, [x, out](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      auto& gx = t.grad_buf(x);
      constexpr double inv_sqrt2pi = 0.39894228040143267794;
      for (size_t i = 0; i < g.size(); ++i) {
        const double v = static_cast<double>(x.data()[i]);
        const double cdf = 0.5 * (1.0 + std::erf(v * 0.70710678118654752440));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        gx[i] += g[i] * static_cast<S>(cdf + v * pdf);
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& x) {
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double v = static_cast<double>(x.data()[i]);
    out.data()[i] = static_cast<S>(1.0 / (1.0 + std::exp(-v)));
  }
  if (TapeT<S>* tape = tape_for<S>({&x})) {
    record(tape, out, [x, out](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      auto& gx = t.grad_buf(x);
      for (size_t i = 0; i < g.size(); ++i) {
        const S y = out.data()[i];
        gx[i] += g[i] * y * (S(1) - y);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- softmax / layernorm

template <typename S>
TensorT<S> softmax_lastdim(const TensorT<S>& x) {
  if (x.rank() < 1) throw std::invalid_argument("softmax: empty shape");
  const int n = x.dim(-1);
  if (n < 1) throw std::invalid_argument("softmax: empty last axis");
  const int64_t rows = x.numel() / n;
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const S* xr = x.data() + r * n;
    S* yr = out.data() + r * n;
    S mx = xr[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      const double e = std::exp(static_cast<double>(xr[j] - mx));
      yr[j] = static_cast<S>(e);
      sum += e;
    }
    const S inv = static_cast<S>(1.0 / sum);
    for (int j = 0; j < n; ++j) yr[j] *= inv;
  }
  debug_check(out, "softmax");
  if (TapeT<S>* tape = tape_for<S>({&x})) {
    record(tape, out, [x, out, rows, n](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      auto& gx = t.grad_buf(x);
      for (int64_t r = 0; r < rows; ++r) {
        const S* yr = out.data() + r * n;
        const S* gr = g.data() + r * n;
        S dot = S(0);
        for (int j = 0; j < n; ++j) dot += gr[j] * yr[j];
        S* gxr = gx.data() + r * n;
        for (int j = 0; j < n; ++j) gxr[j] += (gr[j] - dot) * yr[j];
      }
    });
  }
  return out;
}

// last-axis layer norm with learnable scale/shift, population variance
template <typename S>
TensorT<S> layernorm_lastdim(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta, S eps) {
  if (x.rank() < 1) throw std::invalid_argument("layernorm: empty shape");
  const int n = x.dim(-1);
  if (n < 1) throw std::invalid_argument("layernorm: empty last axis");
  if (gamma.numel() != n || beta.numel() != n)
    throw std::invalid_argument("layernorm: scale/shift must have length " + std::to_string(n));
  const int64_t rows = x.numel() / n;
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  std::vector<S> mean(rows), inv_std(rows);
  for (int64_t r = 0; r < rows; ++r) {
    const S* xr = x.data() + r * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += xr[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = xr[j] - mu;
      var += d * d;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
    mean[r] = static_cast<S>(mu);
    inv_std[r] = static_cast<S>(is);
    S* yr = out.data() + r * n;
    for (int j = 0; j < n; ++j) yr[j] = static_cast<S>((xr[j] - mu) * is) * gamma.data()[j] + beta.data()[j];
  }
  debug_check(out, "layernorm");
  if (TapeT<S>* tape = tape_for<S>({&x, &gamma, &beta})) {
    const bool nx = detail::needs_grad(x), ng = detail::needs_grad(gamma), nb = detail::needs_grad(beta);
    record(tape, out, [x, gamma, beta, out, rows, n, mean = std::move(mean), inv_std = std::move(inv_std), nx, ng,
                       nb](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      std::vector<S>* gx = nx ? &t.grad_buf(x) : nullptr;
      std::vector<S>* gg = ng ? &t.grad_buf(gamma) : nullptr;
      std::vector<S>* gb = nb ? &t.grad_buf(beta) : nullptr;
      std::vector<S> xhat(n);
      for (int64_t r = 0; r < rows; ++r) {
        const S* xr = x.data() + r * n;
        const S* gr = g.data() + r * n;
        for (int j = 0; j < n; ++j) xhat[j] = (xr[j] - mean[r]) * inv_std[r];
        if (gg)
          for (int j = 0; j < n; ++j) (*gg)[j] += gr[j] * xhat[j];
        if (gb)
          for (int j = 0; j < n; ++j) (*gb)[j] += gr[j];
        if (gx) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (int j = 0; j < n; ++j) {
            const double dy = static_cast<double>(gr[j]) * gamma.data()[j];
            sum_dy += dy;
            sum_dy_xhat += dy * xhat[j];
          }
          const double m1 = sum_dy / n, m2 = sum_dy_xhat / n;
          S* gxr = gx->data() + r * n;
          for (int j = 0; j < n; ++j) {
            const double dy = static_cast<double>(gr[j]) * gamma.data()[j];
            gxr[j] += static_cast<S>((dy - m1 - xhat[j] * m2) * inv_std[r]);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- reductions

template <typename S>
TensorT<S> sum_all(const TensorT<S>& x) {
  double acc = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
  TensorT<S> out = TensorT<S>::scalar(static_cast<S>(acc));
  if (TapeT<S>* tape = tape_for<S>({&x})) {
    record(tape, out, [x, out](TapeT<S>& t) {
      const S g = (*t.find_grad(out.id()))[0];
      auto& gx = t.grad_buf(x);
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

template <typename S>
TensorT<S> mean_all(const TensorT<S>& x) {
  return mul_scalar(sum_all(x), static_cast<S>(1.0 / static_cast<double>(x.numel())));
}

// x: [B,C,H,W] -> [B,C]
template <typename S>
TensorT<S> global_avg_pool(const TensorT<S>& x) {
  if (x.rank() != 4) throw std::invalid_argument("global_avg_pool: expected rank-4 input");
  const int B = x.dim(0), C = x.dim(1);
  const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  TensorT<S> out = TensorT<S>::zeros({B, C});
  for (int64_t p = 0; p < static_cast<int64_t>(B) * C; ++p) {
    double acc = 0.0;
    const S* plane = x.data() + p * hw;
    for (int64_t i = 0; i < hw; ++i) acc += plane[i];
    out.data()[p] = static_cast<S>(acc / hw);
  }
  if (TapeT<S>* tape = tape_for<S>({&x})) {
    record(tape, out, [x, out, B, C, hw](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      auto& gx = t.grad_buf(x);
      const S inv = static_cast<S>(1.0 / hw);
      for (int64_t p = 0; p < static_cast<int64_t>(B) * C; ++p) {
        const S gv = g[p] * inv;
        S* plane = gx.data() + p * hw;
        for (int64_t i = 0; i < hw; ++i) plane[i] += gv;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- shape ops

template <typename S>
TensorT<S> reshape(const TensorT<S>& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw std::invalid_argument("reshape: element count mismatch " + shape_str(x.shape()) + " -> " +
                                shape_str(shape));
  TensorT<S> out = TensorT<S>::from_data(std::move(shape), x.vec());
  if (TapeT<S>* tape = tape_for<S>({&x})) {
    record(tape, out, [x, out](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      auto& gx = t.grad_buf(x);
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

// general axis permutation
template <typename S>
TensorT<S> transpose(const TensorT<S>& x, const std::vector<int>& perm) {
  const int r = x.rank();
  if (static_cast<int>(perm.size()) != r) throw std::invalid_argument("transpose: permutation rank mismatch");
  std::vector<bool> seen(r, false);
  Shape oshape(r);
  for (int i = 0; i < r; ++i) {
    if (perm[i] < 0 || perm[i] >= r || seen[perm[i]]) throw std::invalid_argument("transpose: invalid permutation");
    seen[perm[i]] = true;
    oshape[i] = x.dim(perm[i]);
  }
  // strides of x in units of elements
  std::vector<int64_t> xstride(r, 1);
  for (int i = r - 2; i >= 0; --i) xstride[i] = xstride[i + 1] * x.dim(i + 1);
  std::vector<int64_t> gather(r);  // stride in x for each output axis
  for (int i = 0; i < r; ++i) gather[i] = xstride[perm[i]];

  TensorT<S> out = TensorT<S>::zeros(oshape);
  const int64_t n = x.numel();
  std::vector<int> idx(r, 0);
  int64_t src = 0;
  for (int64_t o = 0; o < n; ++o) {
    out.data()[o] = x.data()[src];
    for (int ax = r - 1; ax >= 0; --ax) {
      if (++idx[ax] < oshape[ax]) {
        src += gather[ax];
        break;
      }
      src -= gather[ax] * (oshape[ax] - 1);
      idx[ax] = 0;
    }
  }
  if (TapeT<S>* tape = tape_for<S>({&x})) {
    record(tape, out, [x, out, oshape, gather, r](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      auto& gx = t.grad_buf(x);
      std::vector<int> idx(r, 0);
      int64_t src = 0;
      for (int64_t o = 0; o < static_cast<int64_t>(g.size()); ++o) {
        gx[src] += g[o];
        for (int ax = r - 1; ax >= 0; --ax) {
          if (++idx[ax] < oshape[ax]) {
            src += gather[ax];
            break;
          }
          src -= gather[ax] * (oshape[ax] - 1);
          idx[ax] = 0;
        }
      }
    });
  }
  return out;
}

// rows [r0, r0+len) along axis 0
template <typename S>
TensorT<S> slice_rows(const TensorT<S>& x, int r0, int len) {
  if (x.rank() < 1) throw std::invalid_argument("slice_rows: rank-0 input");
  const int R = x.dim(0);
  if (r0 < 0 || len <= 0 || r0 + len > R)
    throw std::invalid_argument("slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r0 + len) +
                                ") out of bounds for " + shape_str(x.shape()));
  const int64_t rowsz = x.numel() / R;
  Shape oshape = x.shape();
  oshape[0] = len;
  TensorT<S> out = TensorT<S>::zeros(oshape);
  std::copy(x.data() + r0 * rowsz, x.data() + (r0 + len) * rowsz, out.data());
  if (TapeT<S>* tape = tape_for<S>({&x})) {
    record(tape, out, [x, out, r0, rowsz](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      auto& gx = t.grad_buf(x);
      for (size_t i = 0; i < g.size(); ++i) gx[static_cast<size_t>(r0) * rowsz + i] += g[i];
    });
  }
  return out;
}

// concatenation along an axis; all parts must agree on the other dims
template <typename S>
TensorT<S> concat(const std::vector<TensorT<S>>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const int r = parts[0].rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw std::invalid_argument("concat: bad axis");
  Shape oshape = parts[0].shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p.rank() != r) throw std::invalid_argument("concat: rank mismatch");
    for (int i = 0; i < r; ++i)
      if (i != axis && p.dim(i) != oshape[i])
        throw std::invalid_argument("concat: shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(oshape));
    total += p.dim(axis);
  }
  oshape[axis] = total;
  TensorT<S> out = TensorT<S>::zeros(oshape);

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= oshape[i];
  for (int i = axis + 1; i < r; ++i) inner *= oshape[i];
  const int64_t ostride = static_cast<int64_t>(total) * inner;
  int64_t off = 0;
  std::vector<int64_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const int64_t pstride = static_cast<int64_t>(p.dim(axis)) * inner;
    for (int64_t o = 0; o < outer; ++o)
      std::copy(p.data() + o * pstride, p.data() + (o + 1) * pstride, out.data() + o * ostride + off);
    off += pstride;
  }

  std::vector<const TensorT<S>*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  TapeT<S>* tape = current_tape<S>();
  bool need = false;
  if (tape) {
    for (const auto& p : parts)
      if (detail::needs_grad(p)) need = true;
    if (need)
      for (const auto& p : parts)
        if (p.st->requires_grad && !p.st->tracked) tape->note_leaf(p);
  }
  if (tape && need) {
    std::vector<TensorT<S>> held = parts;
    record(tape, out, [held = std::move(held), out, offsets, outer, inner, ostride](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      for (size_t pi = 0; pi < held.size(); ++pi) {
        if (!detail::needs_grad(held[pi])) continue;
        auto& gp = t.grad_buf(held[pi]);
        const int64_t pstride = held[pi].numel() / outer;
        for (int64_t o = 0; o < outer; ++o) {
          const S* src = g.data() + o * ostride + offsets[pi];
          S* dst = gp.data() + o * pstride;
          for (int64_t i = 0; i < pstride; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------- resize / normalize

// x: [B,C,H,W] -> [B,C,OH,OW], bilinear with half-pixel centers
template <typename S>
TensorT<S> bilinear_resize(const TensorT<S>& x, int OH, int OW) {
  if (x.rank() != 4) throw std::invalid_argument("bilinear_resize: expected rank-4 input");
  if (OH < 1 || OW < 1) throw std::invalid_argument("bilinear_resize: bad target size");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  TensorT<S> out = TensorT<S>::zeros({B, C, OH, OW});

  std::vector<int> y0(OH), y1(OH), x0(OW), x1(OW);
  std::vector<S> wy(OH), wx(OW);
  const double sy = static_cast<double>(H) / OH, sx = static_cast<double>(W) / OW;
  for (int oy = 0; oy < OH; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(H - 1));
    y0[oy] = static_cast<int>(fy);
    y1[oy] = std::min(y0[oy] + 1, H - 1);
    wy[oy] = static_cast<S>(fy - y0[oy]);
  }
  for (int ox = 0; ox < OW; ++ox) {
    double fx = (ox + 0.5) * sx - 0.5;
    fx = std::min(std::max(fx, 0.0), static_cast<double>(W - 1));
    x0[ox] = static_cast<int>(fx);
    x1[ox] = std::min(x0[ox] + 1, W - 1);
    wx[ox] = static_cast<S>(fx - x0[ox]);
  }
  for (int p = 0; p < B * C; ++p) {
    const S* ip = x.data() + static_cast<size_t>(p) * H * W;
    S* op = out.data() + static_cast<size_t>(p) * OH * OW;
    for (int oy = 0; oy < OH; ++oy) {
      const S* r0 = ip + static_cast<size_t>(y0[oy]) * W;
      const S* r1 = ip + static_cast<size_t>(y1[oy]) * W;
      const S b = wy[oy];
      S* orow = op + static_cast<size_t>(oy) * OW;
      for (int ox = 0; ox < OW; ++ox) {
        const S a = wx[ox];
        const S top = r0[x0[ox]] * (S(1) - a) + r0[x1[ox]] * a;
        const S bot = r1[x0[ox]] * (S(1) - a) + r1[x1[ox]] * a;
        orow[ox] = top * (S(1) - b) + bot * b;
      }
    }
  }
  if (TapeT<S>* tape = tape_for<S>({&x})) {
    record(tape, out,
           [x, out, B, C, H, W, OH, OW, y0, y1, x0, x1, wy, wx](TapeT<S>& t) {
             const auto& g = *t.find_grad(out.id());
             auto& gx = t.grad_buf(x);
             for (int p = 0; p < B * C; ++p) {
               S* ip = gx.data() + static_cast<size_t>(p) * H * W;
               const S* op = g.data() + static_cast<size_t>(p) * OH * OW;
               for (int oy = 0; oy < OH; ++oy) {
                 const S b = wy[oy];
                 const S* orow = op + static_cast<size_t>(oy) * OW;
                 for (int ox = 0; ox < OW; ++ox) {
                   const S a = wx[ox];
                   const S gv = orow[ox];
                   ip[static_cast<size_t>(y0[oy]) * W + x0[ox]] += gv * (S(1) - a) * (S(1) - b);
                   ip[static_cast<size_t>(y0[oy]) * W + x1[ox]] += gv * a * (S(1) - b);
                   ip[static_cast<size_t>(y1[oy]) * W + x0[ox]] += gv * (S(1) - a) * b;
                   ip[static_cast<size_t>(y1[oy]) * W + x1[ox]] += gv * a * b;
                 }
               }
             }
           });
  }
  return out;
}

// y = x / max(|x|, eps), rows along the last axis: exactly unit norm away
// from the origin, linear scaling inside the eps ball (degenerate direction)
template <typename S>
TensorT<S> l2_normalize_lastdim(const TensorT<S>& x, S eps) {
  if (x.rank() < 1) throw std::invalid_argument("l2_normalize: rank-0 input");
  const int n = x.dim(-1);
  const int64_t rows = x.numel() / n;
  TensorT<S> out = TensorT<S>::zeros(x.shape());
  std::vector<S> inv_norm(rows);
  std::vector<char> degenerate(rows);
  for (int64_t r = 0; r < rows; ++r) {
    const S* xr = x.data() + r * n;
    double s2 = 0.0;
    for (int j = 0; j < n; ++j) s2 += static_cast<double>(xr[j]) * xr[j];
    const double norm = std::sqrt(s2);
    degenerate[r] = norm < static_cast<double>(eps);
    const double inv = 1.0 / std::max(norm, static_cast<double>(eps));
    inv_norm[r] = static_cast<S>(inv);
    S* yr = out.data() + r * n;
    for (int j = 0; j < n; ++j) yr[j] = static_cast<S>(xr[j] * inv);
  }
  if (TapeT<S>* tape = tape_for<S>({&x})) {
    record(tape, out,
           [x, out, rows, n, inv_norm = std::move(inv_norm), degenerate = std::move(degenerate)](TapeT<S>& t) {
             const auto& g = *t.find_grad(out.id());
             auto& gx = t.grad_buf(x);
             for (int64_t r = 0; r < rows; ++r) {
               const S* gr = g.data() + r * n;
               const S inv = inv_norm[r];
               S* gxr = gx.data() + r * n;
               if (degenerate[r]) {
                 for (int j = 0; j < n; ++j) gxr[j] += gr[j] * inv;
                 continue;
               }
               const S* yr = out.data() + r * n;
               double dot = 0.0;
               for (int j = 0; j < n; ++j) dot += static_cast<double>(gr[j]) * yr[j];
               for (int j = 0; j < n; ++j) gxr[j] += static_cast<S>((gr[j] - dot * yr[j]) * inv);
             }
           });
  }
  return out;
}

// ---------------------------------------------------------------- losses

// binary cross-entropy on a probability scalar, clamped away from {0,1}
template <typename S>
TensorT<S> bce_scalar(const TensorT<S>& p, double label, double clamp_eps = 1e-7) {
  if (p.numel() != 1) throw std::invalid_argument("bce: probability must be scalar");
  const double pv = std::min(std::max(static_cast<double>(p.data()[0]), clamp_eps), 1.0 - clamp_eps);
  const double loss = -(label * std::log(pv) + (1.0 - label) * std::log(1.0 - pv));
  TensorT<S> out = TensorT<S>::scalar(static_cast<S>(loss));
  if (TapeT<S>* tape = tape_for<S>({&p})) {
    record(tape, out, [p, out, label, clamp_eps](TapeT<S>& t) {
      const S g = (*t.find_grad(out.id()))[0];
      const double raw = static_cast<double>(p.data()[0]);
      if (raw <= clamp_eps || raw >= 1.0 - clamp_eps) return;  // clamped: zero slope
      const double d = (raw - label) / (raw * (1.0 - raw));
      t.grad_buf(p)[0] += g * static_cast<S>(d);
    });
  }
  return out;
}

}  // namespace sharingan
