#pragma once

#include "sharingan/model.hpp"

namespace sharingan {

struct LossWeights {
  double reg = 100.0;  // 1000 for the heatmap variant, 100 for point regression
  double ang = 3.0;
  double io = 1.0;
};

// row r of a [R,C] tensor as a [C] vector, differentiable
template <typename S>
TensorT<S> row_vector(const TensorT<S>& x, int r) {
  return reshape(slice_rows(x, r, 1), {x.dim(1)});
}

// pixel-wise squared error, summed over all cells
template <typename S>
TensorT<S> loss_heatmap(const HeatmapT<S>& pred, const HeatmapT<S>& gt) {
  if (pred.scores.shape() != gt.scores.shape())
    throw std::runtime_error("loss_heatmap: shape mismatch " + shape_str(pred.scores.shape()) + " vs " +
                             shape_str(gt.scores.shape()));
  TensorT<S> d = sub(pred.scores, gt.scores);
  return sum_all(mul(d, d));
}

// squared Euclidean distance between normalized points, inputs [2]
template <typename S>
TensorT<S> loss_point(const TensorT<S>& pred, const TensorT<S>& gt) {
  TensorT<S> d = sub(pred, gt);
  return sum_all(mul(d, d));
}

// 1 - <pred, gt>, both unit vectors
template <typename S>
TensorT<S> loss_angular(const TensorT<S>& pred_unit, const TensorT<S>& gt_unit) {
  return add_scalar(mul_scalar(sum_all(mul(pred_unit, gt_unit)), S(-1)), S(1));
}

template <typename S>
TensorT<S> loss_inout(const TensorT<S>& prob, double label) {
  return bce_scalar(prob, label);
}

// Unnormalized Gaussians centered at each point's cell, composed cellwise by
// max; peak value 1.
template <typename S>
HeatmapT<S> build_gt_heatmap(const std::vector<std::pair<double, double>>& points, double sigma = 3.0,
                             int size = kHeatmapSize) {
  if (points.empty()) throw std::runtime_error("build_gt_heatmap: no gaze points");
  HeatmapT<S> hm;
  hm.scores = TensorT<S>::zeros({size, size});
  for (const auto& [x, y] : points) {
    if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0) throw std::runtime_error("build_gt_heatmap: point outside [0,1]^2");
    const int c0 = std::min(size - 1, static_cast<int>(x * size));
    const int r0 = std::min(size - 1, static_cast<int>(y * size));
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) {
        const double d2 = static_cast<double>(r - r0) * (r - r0) + static_cast<double>(c - c0) * (c - c0);
        const S v = static_cast<S>(std::exp(-0.5 * d2 / (sigma * sigma)));
        S& cell = hm.scores.data()[static_cast<size_t>(r) * size + c];
        cell = std::max(cell, v);
      }
  }
  return hm;
}

// Per-person supervision for one sample.
struct PersonTarget {
  bool real = false;       // occupies a non-pad slot
  double inout = 0.0;      // 0/1 label
  bool has_point = false;  // in-frame with an annotated gaze point
  double gt_x = 0.0, gt_y = 0.0;
  bool has_gvec = false;  // false when the target coincides with the head center
  double gvx = 0.0, gvy = 0.0;
};

// gt gaze direction: normalized (gaze point - head box center)
inline PersonTarget make_person_target(bool real, double inout, bool has_point, double gx, double gy, double bbox_cx,
                                       double bbox_cy) {
  PersonTarget t;
  t.real = real;
  t.inout = inout;
  t.has_point = has_point;
  t.gt_x = gx;
  t.gt_y = gy;
  if (has_point) {
    const double dx = gx - bbox_cx, dy = gy - bbox_cy;
    const double n = std::sqrt(dx * dx + dy * dy);
    if (n > 1e-9) {
      t.has_gvec = true;
      t.gvx = dx / n;
      t.gvy = dy / n;
    }
  }
  return t;
}

template <typename S>
struct GlobalLossT {
  TensorT<S> total;                       // scalar, on tape
  double reg = 0.0, ang = 0.0, io = 0.0;  // unweighted per-term means
  int n_reg = 0, n_ang = 0, n_io = 0;
};

// Masked mean of each term over real persons, then the weighted sum.
// Out-of-frame persons contribute only the in-out term.
template <typename S>
GlobalLossT<S> global_loss(const ForwardResultT<S>& fwd, const HeatmapT<S>* gt_heatmap,
                           const std::vector<PersonTarget>& targets, Variant variant, const LossWeights& w) {
  const int np = static_cast<int>(targets.size());
  if (fwd.inout_probs.dim(0) != np) throw std::runtime_error("global_loss: target count mismatch");
  int n_real = 0;
  for (const auto& t : targets) n_real += t.real ? 1 : 0;
  if (n_real == 0) throw std::runtime_error("global_loss: all person slots masked");

  GlobalLossT<S> out;
  TensorT<S> reg_sum, ang_sum, io_sum;
  for (int i = 0; i < np; ++i) {
    const PersonTarget& t = targets[static_cast<size_t>(i)];
    if (!t.real) continue;
    if (t.has_point) {
      TensorT<S> li;
      if (variant == Variant::Point) {
        TensorT<S> gt = TensorT<S>::from_data({2}, {static_cast<S>(t.gt_x), static_cast<S>(t.gt_y)});
        li = loss_point(row_vector(fwd.points, i), gt);
      } else {
        if (!gt_heatmap) throw std::runtime_error("global_loss: heatmap variant needs a GT heatmap");
        li = loss_heatmap(fwd.heatmap, *gt_heatmap);
      }
      reg_sum = reg_sum.defined() ? add(reg_sum, li) : li;
      ++out.n_reg;
    }
    if (t.has_gvec) {
      TensorT<S> gt = TensorT<S>::from_data({2}, {static_cast<S>(t.gvx), static_cast<S>(t.gvy)});
      TensorT<S> la = loss_angular(row_vector(fwd.gaze_vectors, i), gt);
      ang_sum = ang_sum.defined() ? add(ang_sum, la) : la;
      ++out.n_ang;
    }
    TensorT<S> prob = reshape(slice_rows(fwd.inout_probs, i, 1), {1});
    TensorT<S> lio = loss_inout(prob, t.inout);
    io_sum = io_sum.defined() ? add(io_sum, lio) : lio;
    ++out.n_io;
  }

  TensorT<S> total = TensorT<S>::scalar(S(0));
  if (reg_sum.defined()) {
    TensorT<S> m = mul_scalar(reg_sum, static_cast<S>(1.0 / out.n_reg));
    out.reg = m.item();
    total = add(total, mul_scalar(m, static_cast<S>(w.reg)));
  }
  if (ang_sum.defined()) {
    TensorT<S> m = mul_scalar(ang_sum, static_cast<S>(1.0 / out.n_ang));
    out.ang = m.item();
    total = add(total, mul_scalar(m, static_cast<S>(w.ang)));
  }
  if (io_sum.defined()) {
    TensorT<S> m = mul_scalar(io_sum, static_cast<S>(1.0 / out.n_io));
    out.io = m.item();
    total = add(total, mul_scalar(m, static_cast<S>(w.io)));
  }
  out.total = total;
  return out;
}

}  // namespace sharingan
