#include <doctest.h>

#include "sharingan/config.hpp"
#include "sharingan/gradcheck.hpp"
#include "sharingan/model.hpp"

using namespace sharingan;

TEST_CASE("heatmap argmax centers, tie-break, and exhaustive scan") {
  HeatmapT<float> hm;
  hm.scores = Tensor::zeros({64, 64});
  hm.scores.set({32, 16}, 1.0f);
  auto [x, y] = heatmap_argmax(hm);
  CHECK(x == doctest::Approx(0.2578125));
  CHECK(y == doctest::Approx(0.5078125));

  HeatmapT<float> flat;
  flat.scores = Tensor::filled({64, 64}, 0.25f);
  auto [fx, fy] = heatmap_argmax(flat);
  CHECK(fx == doctest::Approx(0.0078125));
  CHECK(fy == doctest::Approx(0.0078125));

  Rng rng(30);
  for (int trial = 0; trial < 10; ++trial) {
    HeatmapT<float> r;
    r.scores = Tensor::randn({64, 64}, rng);
    auto [ax, ay] = heatmap_argmax(r);
    // exhaustive: no cell strictly exceeds the chosen one, and every earlier
    // cell is strictly below
    const int bc = static_cast<int>(ax * 64), br = static_cast<int>(ay * 64);
    const float best = r.scores.at({br, bc});
    for (int rr = 0; rr < 64; ++rr)
      for (int cc = 0; cc < 64; ++cc) {
        CHECK(r.scores.at({rr, cc}) <= best);
        if (rr < br || (rr == br && cc < bc)) CHECK(r.scores.at({rr, cc}) < best);
      }
  }
}

TEST_CASE("point decoder bounds and zero-state fixed point") {
  ModelConfig mc = micro_model_config(Variant::Point);
  Rng rng(31);
  Model m(mc, rng);
  for (auto& l : m.point_head.layers) {
    std::fill(l.w.vec().begin(), l.w.vec().end(), 0.0f);
    std::fill(l.b.vec().begin(), l.b.vec().end(), 0.0f);
  }
  Tensor tokens = Tensor::randn({5, mc.dim}, rng);
  Tensor pts = m.point_head.forward(tokens);
  for (float v : pts.vec()) CHECK(v == doctest::Approx(0.5));

  Model m2(mc, rng);
  Tensor many = Tensor::randn({1000, mc.dim}, rng, 3.0);
  Tensor out = m2.point_head.forward(many);
  for (float v : out.vec()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("in-out head bounds, zero state, and concatenation order") {
  ModelConfig mc = micro_model_config(Variant::Point);
  Rng rng(32);
  Model m(mc, rng);
  for (auto& l : m.inout_head.layers) {
    std::fill(l.w.vec().begin(), l.w.vec().end(), 0.0f);
    std::fill(l.b.vec().begin(), l.b.vec().end(), 0.0f);
  }
  Tensor in = Tensor::randn({3, 2 * mc.dim}, rng);
  Tensor p = m.inout_head.forward(in);
  for (float v : p.vec()) CHECK(v == doctest::Approx(0.5));

  Model m2(mc, rng);
  Tensor a = Tensor::randn({1, mc.dim}, rng);
  Tensor b = Tensor::randn({1, mc.dim}, rng);
  Tensor ab = m2.inout_head.forward(concat<float>({a, b}, 1));
  Tensor ba = m2.inout_head.forward(concat<float>({b, a}, 1));
  CHECK(ab.at({0, 0}) != ba.at({0, 0}));
  for (float v : ab.vec()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  CHECK(m2.inout_head.layers.size() == 7);
}

TEST_CASE("dpt heatmap shape and zero-input linearity") {
  ModelConfig mc = micro_model_config(Variant::Heatmap);
  Rng rng(33);
  DptDecoderT<float> dpt(mc.dim, mc.dpt_channels, mc.dpt_fusion, rng);
  const int n = 9, nt = 11;
  std::vector<Tensor> taps;
  for (int i = 0; i < 4; ++i) taps.push_back(Tensor::randn({nt, mc.dim}, rng));
  HeatmapT<float> hm = dpt.forward(taps, n, 3, 3);
  CHECK(hm.scores.shape() == Shape{64, 64});

  // all-zero taps with zero biases keep the whole conv stack at zero
  std::vector<Tensor> zero_taps(4, Tensor::zeros({nt, mc.dim}));
  HeatmapT<float> zhm = dpt.forward(zero_taps, n, 3, 3);
  for (float v : zhm.scores.vec()) CHECK(v == 0.0f);

  std::vector<Tensor> three(3, Tensor::zeros({nt, mc.dim}));
  CHECK_THROWS_AS(dpt.forward(three, n, 3, 3), std::invalid_argument);
}

TEST_CASE("dpt consumes only image-token rows") {
  ModelConfig mc = micro_model_config(Variant::Heatmap);
  Rng rng(34);
  DptDecoderT<float> dpt(mc.dim, mc.dpt_channels, mc.dpt_fusion, rng);
  const int n = 9, nt = 11;
  std::vector<Tensor> taps;
  for (int i = 0; i < 4; ++i) taps.push_back(Tensor::randn({nt, mc.dim}, rng));
  HeatmapT<float> base = dpt.forward(taps, n, 3, 3);

  std::vector<Tensor> perturbed;
  for (const auto& t : taps) {
    Tensor u = t.clone();
    for (int r = n; r < nt; ++r)
      for (int d = 0; d < mc.dim; ++d) u.set({r, d}, u.at({r, d}) + 37.0f);
    perturbed.push_back(u);
  }
  HeatmapT<float> same = dpt.forward(perturbed, n, 3, 3);
  CHECK(same.scores.vec() == base.scores.vec());
}

TEST_CASE("dpt gradients flow to the encoder taps") {
  ModelConfig mc = micro_model_config(Variant::Heatmap);
  Rng rng(35);
  DptDecoderT<double> dpt(mc.dim, mc.dpt_channels, mc.dpt_fusion, rng);
  for (auto& v : dpt.head_b.w.vec()) v *= 0.05;  // keep the objective O(1)
  const int n = 9, nt = 11;
  std::vector<TensorD> taps;
  std::vector<std::pair<std::string, TensorD>> named;
  for (int i = 0; i < 4; ++i) {
    taps.push_back(TensorD::randn({nt, mc.dim}, rng, 0.5));
    taps.back().set_requires_grad();
    named.emplace_back("tap" + std::to_string(i), taps.back());
  }
  TensorD w = TensorD::randn({64, 64}, rng);
  auto f = [&] { return sum_all(mul(dpt.forward(taps, n, 3, 3).scores, w)); };
  CHECK(grad_check(f, named, 1e-5).pass(1e-4));
}

TEST_CASE("heatmap variant rejects more than one person") {
  ModelConfig mc = micro_model_config(Variant::Heatmap);
  mc.channels = 3;
  Rng rng(36);
  Model m(mc, rng);
  Tensor image = Tensor::randn({mc.image_size, mc.image_size, mc.channels}, rng);
  std::vector<PersonInput> two;
  for (int i = 0; i < 2; ++i) {
    PersonInput p;
    p.crop = Tensor::randn({mc.crop_size, mc.crop_size, mc.channels}, rng);
    p.bbox = {0.1, 0.1, 0.4, 0.4};
    two.push_back(std::move(p));
  }
  CHECK_THROWS_AS(m.forward(image, two), std::runtime_error);

  ModelConfig bad = mc;
  bad.n_persons = 2;
  Rng rng2(37);
  CHECK_THROWS_AS(Model(bad, rng2), std::invalid_argument);
}

TEST_CASE("repeated point forwards are identical and person order is respected") {
  ModelConfig mc = micro_model_config(Variant::Point);
  mc.channels = 3;
  Rng rng(38);
  Model m(mc, rng);
  Tensor image = Tensor::randn({mc.image_size, mc.image_size, mc.channels}, rng);
  std::vector<PersonInput> persons;
  for (int i = 0; i < 2; ++i) {
    PersonInput p;
    p.crop = Tensor::randn({mc.crop_size, mc.crop_size, mc.channels}, rng);
    p.bbox = {0.1 + 0.4 * i, 0.2, 0.3 + 0.4 * i, 0.5};
    persons.push_back(std::move(p));
  }
  ForwardResultT<float> a = m.forward(image, persons);
  ForwardResultT<float> b = m.forward(image, persons);
  CHECK(a.points.vec() == b.points.vec());
  CHECK(a.inout_probs.vec() == b.inout_probs.vec());

  ForwardResultT<float> swapped = m.forward(image, {persons[1], persons[0]});
  for (int c = 0; c < 2; ++c) {
    CHECK(swapped.points.at({0, c}) == doctest::Approx(a.points.at({1, c})).epsilon(1e-5));
    CHECK(swapped.points.at({1, c}) == doctest::Approx(a.points.at({0, c})).epsilon(1e-5));
  }
  CHECK(swapped.inout_probs.at({0, 0}) == doctest::Approx(a.inout_probs.at({1, 0})).epsilon(1e-5));
  CHECK(swapped.inout_probs.at({1, 0}) == doctest::Approx(a.inout_probs.at({0, 0})).epsilon(1e-5));
}
