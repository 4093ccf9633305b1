#pragma once

#include <map>
#include <set>

#include "sharingan/nn.hpp"

namespace sharingan {

// Encoder input/output: [image tokens | person tokens | global token].
// The row of person i is n_image + i.
template <typename S>
struct TokenSequenceT {
  TensorT<S> x;  // [N_t, D]
  int n_image = 0, n_person = 0;

  int total() const { return n_image + n_person + 1; }
  int person_row(int i) const { return n_image + i; }
};

template <typename S>
TokenSequenceT<S> assemble(const TensorT<S>& x_img, const TensorT<S>& x_g, const TensorT<S>& x_glo) {
  if (x_img.rank() != 2 || x_g.rank() != 2 || x_glo.rank() != 2 || x_glo.dim(0) != 1)
    throw std::invalid_argument("assemble: expected [N,D], [N_p,D], [1,D]");
  const int D = x_img.dim(1);
  if (x_g.dim(1) != D || x_glo.dim(1) != D)
    throw std::invalid_argument("assemble: token dimension mismatch " + shape_str(x_img.shape()) + " " +
                                shape_str(x_g.shape()) + " " + shape_str(x_glo.shape()));
  TokenSequenceT<S> seq;
  seq.n_image = x_img.dim(0);
  seq.n_person = x_g.dim(0);
  seq.x = concat<S>({x_img, x_g, x_glo}, 0);
  return seq;
}

// Multi-head self-attention over the full (unmasked) sequence.
// attn_out, when given, receives the [h, N_t, N_t] attention weights.
template <typename S>
TensorT<S> mhsa(const TensorT<S>& x, int heads, const LinearT<S>& wq, const LinearT<S>& wk, const LinearT<S>& wv,
                const LinearT<S>& wo, TensorT<S>* attn_out = nullptr) {
  if (x.rank() != 2) throw std::invalid_argument("mhsa: expected [N_t, D] input");
  const int n = x.dim(0), d = x.dim(1);
  if (d % heads != 0)
    throw std::invalid_argument("mhsa: dimension " + std::to_string(d) + " not divisible by " +
                                std::to_string(heads) + " heads");
  const int dh = d / heads;
  TensorT<S> q = transpose(reshape(wq.forward(x), {n, heads, dh}), {1, 0, 2});  // [h,n,dh]
  TensorT<S> k = transpose(reshape(wk.forward(x), {n, heads, dh}), {1, 2, 0});  // [h,dh,n]
  TensorT<S> v = transpose(reshape(wv.forward(x), {n, heads, dh}), {1, 0, 2});  // [h,n,dh]
  TensorT<S> scores = mul_scalar(matmul(q, k), static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh))));
  TensorT<S> attn = softmax_lastdim(scores);  // [h,n,n]
  if (attn_out) *attn_out = attn;
  TensorT<S> ctx = reshape(transpose(matmul(attn, v), {1, 0, 2}), {n, d});
  return wo.forward(ctx);
}

// Pre-norm transformer block: x += MHSA(LN(x)); x += FFN(LN(x)).
template <typename S>
struct EncoderBlockT {
  LayerNormT<S> ln1, ln2;
  LinearT<S> wq, wk, wv, wo;
  LinearT<S> fc1, fc2;
  int heads = 1;

  EncoderBlockT() = default;
  EncoderBlockT(int dim, int heads_, Rng& rng, double init_std) : heads(heads_) {
    ln1 = LayerNormT<S>(dim);
    ln2 = LayerNormT<S>(dim);
    wq = LinearT<S>(dim, dim, rng, init_std);
    wk = LinearT<S>(dim, dim, rng, init_std);
    wv = LinearT<S>(dim, dim, rng, init_std);
    wo = LinearT<S>(dim, dim, rng, init_std);
    fc1 = LinearT<S>(dim, 4 * dim, rng, init_std);
    fc2 = LinearT<S>(4 * dim, dim, rng, init_std);
  }

  TensorT<S> forward(const TensorT<S>& x, TensorT<S>* attn_out = nullptr) const {
    TensorT<S> h = add(x, mhsa(ln1.forward(x), heads, wq, wk, wv, wo, attn_out));
    return add(h, fc2.forward(gelu(fc1.forward(ln2.forward(h)))));
  }

  void params(NamedParams<S>& out, const std::string& prefix) const {
    ln1.params(out, prefix + ".ln1");
    wq.params(out, prefix + ".wq");
    wk.params(out, prefix + ".wk");
    wv.params(out, prefix + ".wv");
    wo.params(out, prefix + ".wo");
    ln2.params(out, prefix + ".ln2");
    fc1.params(out, prefix + ".fc1");
    fc2.params(out, prefix + ".fc2");
  }
};

// Per-layer output states captured for the dense decoder, keyed by 1-based
// layer index.
template <typename S>
using EncoderTapsT = std::map<int, TensorT<S>>;

template <typename S>
struct EncoderT {
  std::vector<EncoderBlockT<S>> blocks;

  EncoderT() = default;
  EncoderT(int dim, int layers, int heads, Rng& rng, double init_std) {
    for (int i = 0; i < layers; ++i) blocks.emplace_back(dim, heads, rng, init_std);
  }

  int layer_count() const { return static_cast<int>(blocks.size()); }

  TensorT<S> encode(const TokenSequenceT<S>& seq, const std::set<int>& tap_layers, EncoderTapsT<S>* taps) const {
    for (int l : tap_layers)
      if (l < 1 || l > layer_count())
        throw std::invalid_argument("encode: tap layer " + std::to_string(l) + " outside 1.." +
                                    std::to_string(layer_count()));
    TensorT<S> x = seq.x;
    for (int l = 1; l <= layer_count(); ++l) {
      x = blocks[static_cast<size_t>(l - 1)].forward(x);
      if (taps && tap_layers.count(l)) (*taps)[l] = x;
    }
    return x;
  }

  void params(NamedParams<S>& out, const std::string& prefix) const {
    for (size_t i = 0; i < blocks.size(); ++i) blocks[i].params(out, prefix + "." + std::to_string(i));
  }
};

}  // namespace sharingan
