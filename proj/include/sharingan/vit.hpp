#pragma once

#include <cmath>

#include "sharingan/ops.hpp"

namespace sharingan {

// Non-overlapping P x P patches of an [H,W,C] image, flattened row-major:
// patch k holds the raster-order pixels of its block.
template <typename S>
struct PatchGridT {
  int grid_h = 0, grid_w = 0;
  int patch = 0, channels = 0;
  TensorT<S> vectors;  // [N, P*P*C]

  int count() const { return grid_h * grid_w; }
};

template <typename S>
PatchGridT<S> patchify(const TensorT<S>& image, int patch) {
  if (image.rank() != 3) throw std::invalid_argument("patchify: expected [H,W,C] image");
  const int H = image.dim(0), W = image.dim(1), C = image.dim(2);
  if (patch <= 0 || H % patch != 0 || W % patch != 0)
    throw std::invalid_argument("patchify: image " + shape_str(image.shape()) + " not divisible by patch size " +
                                std::to_string(patch));
  PatchGridT<S> grid;
  grid.grid_h = H / patch;
  grid.grid_w = W / patch;
  grid.patch = patch;
  grid.channels = C;
  const int N = grid.count();
  const int plen = patch * patch * C;
  TensorT<S> out = TensorT<S>::zeros({N, plen});
  for (int gy = 0; gy < grid.grid_h; ++gy)
    for (int gx = 0; gx < grid.grid_w; ++gx) {
      S* dst = out.data() + static_cast<size_t>(gy * grid.grid_w + gx) * plen;
      for (int py = 0; py < patch; ++py) {
        const S* src = image.data() + ((static_cast<size_t>(gy * patch + py) * W) + gx * patch) * C;
        std::copy(src, src + static_cast<size_t>(patch) * C, dst + static_cast<size_t>(py) * patch * C);
      }
    }
  grid.vectors = out;

  if (TapeT<S>* tape = tape_for<S>({&image})) {
    const int gw = grid.grid_w, gh = grid.grid_h;
    record(tape, out, [image, out, gh, gw, patch, W, C, plen](TapeT<S>& t) {
      const auto& g = *t.find_grad(out.id());
      auto& gi = t.grad_buf(image);
      for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
          const S* src = g.data() + static_cast<size_t>(gy * gw + gx) * plen;
          for (int py = 0; py < patch; ++py) {
            S* dst = gi.data() + ((static_cast<size_t>(gy * patch + py) * W) + gx * patch) * C;
            for (int i = 0; i < patch * C; ++i) dst[i] += src[static_cast<size_t>(py) * patch * C + i];
          }
        }
    });
  }
  return grid;
}

// test helper: inverse of patchify
template <typename S>
TensorT<S> unpatchify(const PatchGridT<S>& grid) {
  const int H = grid.grid_h * grid.patch, W = grid.grid_w * grid.patch, C = grid.channels;
  const int plen = grid.patch * grid.patch * C;
  TensorT<S> img = TensorT<S>::zeros({H, W, C});
  for (int gy = 0; gy < grid.grid_h; ++gy)
    for (int gx = 0; gx < grid.grid_w; ++gx) {
      const S* src = grid.vectors.data() + static_cast<size_t>(gy * grid.grid_w + gx) * plen;
      for (int py = 0; py < grid.patch; ++py) {
        S* dst = img.data() + ((static_cast<size_t>(gy * grid.patch + py) * W) + gx * grid.patch) * C;
        std::copy(src + static_cast<size_t>(py) * grid.patch * C, src + static_cast<size_t>(py + 1) * grid.patch * C,
                  dst);
      }
    }
  return img;
}

// Fixed 2D sine-cosine table [grid_h*grid_w, D]: first half of the channels
// encodes the row index, second half the column index, each as interleaved
// sin/cos over geometric frequencies with base 10000.
template <typename S>
TensorT<S> posenc_2d(int grid_h, int grid_w, int D) {
  if (D % 4 != 0) throw std::invalid_argument("posenc_2d: token dimension must be divisible by 4");
  const int half = D / 2;
  const int nfreq = half / 2;
  TensorT<S> out = TensorT<S>::zeros({grid_h * grid_w, D});
  for (int r = 0; r < grid_h; ++r)
    for (int c = 0; c < grid_w; ++c) {
      S* row = out.data() + static_cast<size_t>(r * grid_w + c) * D;
      for (int i = 0; i < nfreq; ++i) {
        const double omega = std::pow(10000.0, -2.0 * i / half);
        row[2 * i] = static_cast<S>(std::sin(r * omega));
        row[2 * i + 1] = static_cast<S>(std::cos(r * omega));
        row[half + 2 * i] = static_cast<S>(std::sin(c * omega));
        row[half + 2 * i + 1] = static_cast<S>(std::cos(c * omega));
      }
    }
  return out;
}

}  // namespace sharingan
