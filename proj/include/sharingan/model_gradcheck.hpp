#pragma once

#include "sharingan/config.hpp"
#include "sharingan/gradcheck.hpp"
#include "sharingan/losses.hpp"

namespace sharingan {

// Builds the micro model in f64, synthesizes a supervised instance covering
// all three loss terms, and checks every parameter against central
// differences.
//
// The check point is conditioned for finite differences: the raw gaze vector
// is biased away from the origin (x/|x| has unbounded curvature there), the
// heatmap head is scaled down and the loss weights are chosen so the total
// loss is O(1). Central differences subtract two O(f) numbers, so entries
// whose true gradient is orders of magnitude below f drown in rounding noise
// otherwise; none of this changes which code paths are exercised.
inline GradCheckReport run_model_grad_check(Variant variant, uint64_t seed = 7, double h = 1e-5) {
  ModelConfig mc = micro_model_config(variant);
  Rng rng(seed);
  ModelD model(mc, rng);
  model.p_gpred.layers.back().b.vec() = {0.35, -0.25};
  if (variant == Variant::Heatmap)
    for (auto& v : model.dpt.head_b.w.vec()) v *= 0.02;

  TensorD image = TensorD::randn({mc.image_size, mc.image_size, mc.channels}, rng, 1.0);
  std::vector<PersonInputT<double>> persons;
  std::vector<PersonTarget> targets;
  for (int i = 0; i < mc.n_persons; ++i) {
    PersonInputT<double> p;
    p.crop = TensorD::randn({mc.crop_size, mc.crop_size, mc.channels}, rng, 1.0);
    p.bbox = {0.1 + 0.3 * i, 0.2, 0.3 + 0.3 * i, 0.5};
    persons.push_back(std::move(p));
    // alternate in/out so the BCE sees both labels; in-frame persons carry
    // point and direction supervision
    const bool in_frame = i % 2 == 0;
    targets.push_back(make_person_target(true, in_frame ? 1.0 : 0.0, in_frame, 0.7, 0.6, 0.2 + 0.3 * i, 0.35));
  }
  HeatmapT<double> gt_hm;
  if (variant == Variant::Heatmap) gt_hm = build_gt_heatmap<double>({{0.7, 0.6}});
  LossWeights w{variant == Variant::Heatmap ? 0.01 : 3.0, 0.1, 0.03};

  auto loss_fn = [&]() -> TensorD {
    ForwardResultT<double> fwd = model.forward(image, persons);
    return global_loss(fwd, variant == Variant::Heatmap ? &gt_hm : nullptr, targets, variant, w).total;
  };
  return grad_check(loss_fn, model.named_params(), h);
}

}  // namespace sharingan
