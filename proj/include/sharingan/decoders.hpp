#pragma once

#include "sharingan/encoder.hpp"

namespace sharingan {

constexpr int kHeatmapSize = 64;

// Score grid over the image; cell (r,c) covers the point
// ((c+0.5)/64, (r+0.5)/64) in normalized (x,y).
template <typename S>
struct HeatmapT {
  TensorT<S> scores;  // [64, 64]
};

using Heatmap = HeatmapT<float>;

inline std::pair<double, double> heatmap_cell_center(int r, int c, int size = kHeatmapSize) {
  return {(c + 0.5) / size, (r + 0.5) / size};
}

// Max cell center in normalized coordinates; ties go to the smallest row,
// then the smallest column.
template <typename S>
std::pair<double, double> heatmap_argmax(const HeatmapT<S>& hm) {
  const int n = hm.scores.dim(0), m = hm.scores.dim(1);
  int br = 0, bc = 0;
  S best = hm.scores.data()[0];
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < m; ++c) {
      const S v = hm.scores.data()[static_cast<size_t>(r) * m + c];
      if (v > best) {
        best = v;
        br = r;
        bc = c;
      }
    }
  return heatmap_cell_center(br, bc, n);
}

// residual unit: x + conv(gelu(conv(gelu(x))))
template <typename S>
struct ResidualConvUnitT {
  Conv2dT<S> a, b;

  ResidualConvUnitT() = default;
  ResidualConvUnitT(int width, Rng& rng) : a(width, width, 3, 1, 1, rng), b(width, width, 3, 1, 1, rng) {}

  TensorT<S> forward(const TensorT<S>& x) const { return add(x, b.forward(gelu(a.forward(gelu(x))))); }

  void params(NamedParams<S>& out, const std::string& prefix) const {
    a.params(out, prefix + ".a");
    b.params(out, prefix + ".b");
  }
};

// Dense-prediction decoder: reassembles image-token states from 4 encoder
// layers into feature maps at resolutions {4g, 2g, g, g/2} (shallowest tap
// finest), fuses coarse-to-fine with residual units and bilinear upsampling,
// and emits a raw 64x64 score map. Person and global rows are dropped; only
// image-token rows contribute.
template <typename S>
struct DptDecoderT {
  std::vector<Conv2dT<S>> reassemble;  // 1x1, D -> stage channels
  std::vector<Conv2dT<S>> to_fusion;   // 3x3, stage channels -> fusion width
  std::vector<ResidualConvUnitT<S>> rcu;
  Conv2dT<S> head_a;  // 3x3 fusion -> fusion
  Conv2dT<S> head_b;  // 1x1 fusion -> 1
  int fusion = 0;

  DptDecoderT() = default;
  DptDecoderT(int dim, const std::vector<int>& stage_channels, int fusion_width, Rng& rng) : fusion(fusion_width) {
    if (stage_channels.size() != 4) throw std::invalid_argument("dpt: expected 4 stage channel widths");
    for (int c : stage_channels) {
      reassemble.emplace_back(dim, c, 1, 1, 0, rng);
      to_fusion.emplace_back(c, fusion_width, 3, 1, 1, rng);
      rcu.emplace_back(fusion_width, rng);
    }
    head_a = Conv2dT<S>(fusion_width, fusion_width, 3, 1, 1, rng);
    head_b = Conv2dT<S>(fusion_width, 1, 1, 1, 0, rng);
  }

  // taps: 4 encoder states [N_t, D], shallowest layer first
  HeatmapT<S> forward(const std::vector<TensorT<S>>& taps, int n_image, int grid_h, int grid_w) const {
    if (taps.size() != 4) throw std::invalid_argument("dpt: expected exactly 4 tap states, got " +
                                                      std::to_string(taps.size()));
    const int mult_h[4] = {4 * grid_h, 2 * grid_h, grid_h, std::max(1, grid_h / 2)};
    const int mult_w[4] = {4 * grid_w, 2 * grid_w, grid_w, std::max(1, grid_w / 2)};
    std::vector<TensorT<S>> stages;
    for (int i = 0; i < 4; ++i) {
      TensorT<S> img_rows = slice_rows(taps[static_cast<size_t>(i)], 0, n_image);  // [N, D]
      const int d = img_rows.dim(1);
      TensorT<S> map = reshape(transpose(reshape(img_rows, {grid_h, grid_w, d}), {2, 0, 1}), {1, d, grid_h, grid_w});
      TensorT<S> s = reassemble[static_cast<size_t>(i)].forward(map);
      s = bilinear_resize(s, mult_h[i], mult_w[i]);
      stages.push_back(to_fusion[static_cast<size_t>(i)].forward(s));
    }
    TensorT<S> f = rcu[3].forward(stages[3]);
    for (int i = 2; i >= 0; --i) {
      f = bilinear_resize(f, mult_h[i], mult_w[i]);
      f = add(f, stages[static_cast<size_t>(i)]);
      f = rcu[static_cast<size_t>(i)].forward(f);
    }
    f = head_b.forward(gelu(head_a.forward(f)));
    f = bilinear_resize(f, kHeatmapSize, kHeatmapSize);
    HeatmapT<S> hm;
    hm.scores = reshape(f, {kHeatmapSize, kHeatmapSize});
    return hm;
  }

  void params(NamedParams<S>& out, const std::string& prefix) const {
    for (int i = 0; i < 4; ++i) {
      reassemble[static_cast<size_t>(i)].params(out, prefix + ".reassemble" + std::to_string(i));
      to_fusion[static_cast<size_t>(i)].params(out, prefix + ".to_fusion" + std::to_string(i));
      rcu[static_cast<size_t>(i)].params(out, prefix + ".rcu" + std::to_string(i));
    }
    head_a.params(out, prefix + ".head_a");
    head_b.params(out, prefix + ".head_b");
  }
};

// MLP regression head D -> D -> D/2 -> 2, sigmoid keeps (x,y) inside (0,1).
template <typename S>
MlpT<S> make_point_decoder(int dim, Rng& rng, double init_std) {
  return MlpT<S>({dim, dim, std::max(2, dim / 2), 2}, rng, init_std, /*final_sigmoid=*/true);
}

// 7 affine layers on [x_out_i, x_g_i], halving widths, sigmoid output.
template <typename S>
MlpT<S> make_inout_head(int dim, Rng& rng, double init_std) {
  const auto w = [&](int div) { return std::max(1, dim / div); };
  return MlpT<S>({2 * dim, 2 * dim, dim, w(2), w(4), w(8), w(16), 1}, rng, init_std, /*final_sigmoid=*/true);
}

}  // namespace sharingan
