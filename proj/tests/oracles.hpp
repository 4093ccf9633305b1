#pragma once

// Independent reference implementations used only by tests. These stay
// deliberately naive (explicit loops, pairwise counting, dense marching) so
// they share no code path with the library.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "sharingan/data.hpp"
#include "sharingan/nn.hpp"

namespace oracles {

using sharingan::LinearT;
using sharingan::TensorD;
using sharingan::Vec2;

// per-head, per-query, per-key triple loop
inline TensorD naive_mhsa(const TensorD& x, int heads, const LinearT<double>& wq, const LinearT<double>& wk,
                          const LinearT<double>& wv, const LinearT<double>& wo) {
  const int n = x.dim(0), d = x.dim(1), dh = d / heads;
  auto project = [&](const LinearT<double>& l, int row, int col) {
    double s = l.b.at({col});
    for (int k = 0; k < d; ++k) s += x.at({row, k}) * l.w.at({k, col});
    return s;
  };
  TensorD ctx = TensorD::zeros({n, d});
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < n; ++i) {
      std::vector<double> scores(static_cast<size_t>(n));
      double mx = -1e300;
      for (int j = 0; j < n; ++j) {
        double s = 0;
        for (int k = 0; k < dh; ++k) s += project(wq, i, h * dh + k) * project(wk, j, h * dh + k);
        scores[static_cast<size_t>(j)] = s / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, scores[static_cast<size_t>(j)]);
      }
      double z = 0;
      for (double s : scores) z += std::exp(s - mx);
      for (int k = 0; k < dh; ++k) {
        double acc = 0;
        for (int j = 0; j < n; ++j)
          acc += std::exp(scores[static_cast<size_t>(j)] - mx) / z * project(wv, j, h * dh + k);
        ctx.set({i, h * dh + k}, acc);
      }
    }
  TensorD out = TensorD::zeros({n, d});
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) {
      double s = wo.b.at({c});
      for (int k = 0; k < d; ++k) s += ctx.at({i, k}) * wo.w.at({k, c});
      out.set({i, c}, s);
    }
  return out;
}

// O(P*N) pairwise comparisons: wins + half ties over all positive/negative
// cell pairs
template <typename S>
inline std::optional<double> pairwise_auc(const std::vector<S>& scores, int grid_h, int grid_w,
                                          const std::vector<Vec2>& points) {
  const int64_t n = static_cast<int64_t>(grid_h) * grid_w;
  std::vector<char> positive(static_cast<size_t>(n), 0);
  for (const auto& p : points) {
    const int c = std::min(grid_w - 1, std::max(0, static_cast<int>(p.x * grid_w)));
    const int r = std::min(grid_h - 1, std::max(0, static_cast<int>(p.y * grid_h)));
    positive[static_cast<size_t>(r) * grid_w + c] = 1;
  }
  std::vector<int64_t> pos, neg;
  for (int64_t i = 0; i < n; ++i) (positive[static_cast<size_t>(i)] ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) return std::nullopt;
  double u = 0.0;
  for (int64_t p : pos)
    for (int64_t q : neg) {
      if (scores[static_cast<size_t>(p)] > scores[static_cast<size_t>(q)]) u += 1.0;
      else if (scores[static_cast<size_t>(p)] == scores[static_cast<size_t>(q)]) u += 0.5;
    }
  return u / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// explicit threshold sweep over the distinct scores, trapezoid-free
// (precision envelope over recall, like the library but recomputed from
// scratch at each threshold)
inline double sweep_ap(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  int64_t total_pos = 0;
  for (int l : labels) total_pos += l ? 1 : 0;
  std::vector<double> recalls, precisions;
  for (double t : thresholds) {
    int64_t tp = 0, fp = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) (labels[i] ? tp : fp) += 1;
    }
    recalls.push_back(static_cast<double>(tp) / static_cast<double>(total_pos));
    precisions.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
  }
  double ap = 0.0, prev = 0.0;
  for (size_t i = 0; i < recalls.size(); ++i) {
    double env = 0.0;
    for (size_t j = i; j < recalls.size(); ++j) env = std::max(env, precisions[j]);
    ap += (recalls[i] - prev) * env;
    prev = recalls[i];
  }
  return ap;
}

// Dense ray march over the rendered image: step along the direction, find the
// first pixel painted in an object palette color, flood-fill that color blob
// and return its centroid. Falls back to the boundary exit point.
struct MarchResult {
  bool hit = false;
  Vec2 point_px;  // disc centroid or boundary exit
};

inline MarchResult ray_march(const sharingan::ImageU8& img, const Vec2& origin_px, double theta) {
  const auto& palette = sharingan::toy_object_palette();
  auto palette_index = [&](int x, int y) -> int {
    const uint8_t* p = img.px(x, y);
    for (size_t i = 0; i < palette.size(); ++i)
      if (p[0] == palette[i][0] && p[1] == palette[i][1] && p[2] == palette[i][2]) return static_cast<int>(i);
    return -1;
  };
  const double dx = std::cos(theta), dy = std::sin(theta);
  double last_x = origin_px.x, last_y = origin_px.y;
  for (double t = 0.0;; t += 0.25) {
    const double x = origin_px.x + t * dx, y = origin_px.y + t * dy;
    if (x < 0 || y < 0 || x >= img.w || y >= img.h) return {false, {last_x, last_y}};
    last_x = x;
    last_y = y;
    const int px = static_cast<int>(x), py = static_cast<int>(y);
    const int color = palette_index(px, py);
    if (color < 0) continue;
    // flood fill the blob of this exact color
    std::vector<std::pair<int, int>> stack = {{px, py}};
    std::vector<char> seen(static_cast<size_t>(img.w) * img.h, 0);
    double sx = 0, sy = 0;
    int64_t count = 0;
    while (!stack.empty()) {
      auto [cx, cy] = stack.back();
      stack.pop_back();
      if (cx < 0 || cy < 0 || cx >= img.w || cy >= img.h) continue;
      char& s = seen[static_cast<size_t>(cy) * img.w + cx];
      if (s || palette_index(cx, cy) != color) continue;
      s = 1;
      sx += cx + 0.5;
      sy += cy + 0.5;
      ++count;
      stack.push_back({cx + 1, cy});
      stack.push_back({cx - 1, cy});
      stack.push_back({cx, cy + 1});
      stack.push_back({cx, cy - 1});
    }
    return {true, {sx / static_cast<double>(count), sy / static_cast<double>(count)}};
  }
}

}  // namespace oracles
