#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sharingan/ops.hpp"

namespace sharingan {

template <typename S>
using NamedParams = std::vector<std::pair<std::string, TensorT<S>>>;

template <typename S>
void init_gaussian(TensorT<S>& t, Rng& rng, double stddev) {
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<S>(rng.normal(0.0, stddev));
}

template <typename S>
struct LinearT {
  TensorT<S> w, b;  // w: [din, dout]

  LinearT() = default;
  LinearT(int din, int dout, Rng& rng, double init_std) {
    w = TensorT<S>::zeros({din, dout});
    b = TensorT<S>::zeros({dout});
    init_gaussian(w, rng, init_std);
    w.set_requires_grad();
    b.set_requires_grad();
  }

  TensorT<S> forward(const TensorT<S>& x) const { return linear(x, w, b); }

  void params(NamedParams<S>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
  }
};

template <typename S>
struct Conv2dT {
  TensorT<S> w, b;  // w: [cout, cin, kh, kw]
  int stride = 1, padding = 0;

  Conv2dT() = default;
  // He initialization; conv stacks with sublayer-count-agnostic fan-in scaling
  Conv2dT(int cin, int cout, int k, int stride_, int padding_, Rng& rng) : stride(stride_), padding(padding_) {
    w = TensorT<S>::zeros({cout, cin, k, k});
    b = TensorT<S>::zeros({cout});
    const double std = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
    init_gaussian(w, rng, std);
    w.set_requires_grad();
    b.set_requires_grad();
  }

  TensorT<S> forward(const TensorT<S>& x) const { return conv2d(x, w, b, stride, padding); }

  void params(NamedParams<S>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
  }
};

template <typename S>
struct LayerNormT {
  TensorT<S> gamma, beta;
  S eps = static_cast<S>(1e-5);

  LayerNormT() = default;
  explicit LayerNormT(int dim) {
    gamma = TensorT<S>::filled({dim}, S(1));
    beta = TensorT<S>::zeros({dim});
    gamma.set_requires_grad();
    beta.set_requires_grad();
  }

  TensorT<S> forward(const TensorT<S>& x) const { return layernorm_lastdim(x, gamma, beta, eps); }

  void params(NamedParams<S>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
  }
};

// Affine stack with GELU between layers and an optional sigmoid on the output.
template <typename S>
struct MlpT {
  std::vector<LinearT<S>> layers;
  bool final_sigmoid = false;

  MlpT() = default;
  MlpT(const std::vector<int>& widths, Rng& rng, double init_std, bool final_sigmoid_ = false)
      : final_sigmoid(final_sigmoid_) {
    for (size_t i = 0; i + 1 < widths.size(); ++i) layers.emplace_back(widths[i], widths[i + 1], rng, init_std);
  }

  TensorT<S> forward(const TensorT<S>& x) const {
    TensorT<S> h = x;
    for (size_t i = 0; i < layers.size(); ++i) {
      h = layers[i].forward(h);
      if (i + 1 < layers.size()) h = gelu(h);
    }
    return final_sigmoid ? sigmoid(h) : h;
  }

  void params(NamedParams<S>& out, const std::string& prefix) const {
    for (size_t i = 0; i < layers.size(); ++i) layers[i].params(out, prefix + "." + std::to_string(i));
  }
};

}  // namespace sharingan
