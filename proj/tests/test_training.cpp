#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sharingan/trainer.hpp"

using namespace sharingan;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sharingan_train_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// micro training setup on a tiny toy world
TrainConfig micro_train_config(const std::string& root) {
  ToyParams p;
  p.image_size = 48;
  p.n_persons = 2;
  p.n_objects = 2;
  p.marker_px = 7;
  p.tick_px = 2;
  p.object_r_px = 5;
  p.crop_window_px = 13;
  p.p_out = 0.25;
  generate_dataset(root + "/train", 41, 10, p);
  generate_dataset(root + "/val", 42, 4, p);

  TrainConfig cfg;
  cfg.variant = Variant::Point;
  cfg.seed = 5;
  cfg.image_size = 48;
  cfg.channels = 3;
  cfg.patch_size = 16;
  cfg.dim = 32;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.n_persons = 2;
  cfg.crop_size = 17;
  cfg.d_emb = 8;
  cfg.backbone_channels = {2, 4, 4};
  cfg.gpred_hidden = 16;
  cfg.base_lr = 1e-3;
  cfg.warmup_steps = 2;
  cfg.restart_period = 100;
  cfg.batch_size = 4;
  cfg.total_steps = 8;
  cfg.eval_every = 4;
  cfg.checkpoint_every = 4;
  cfg.log_every = 2;
  cfg.train_data = root + "/train/annotations.tsv";
  cfg.val_data = root + "/val/annotations.tsv";
  cfg.checkpoint_dir = root + "/ckpt";
  cfg.threads = 1;
  cfg.finalize();
  return cfg;
}

}  // namespace

TEST_CASE("adamw: zero gradients leave only the decoupled decay") {
  Rng rng(60);
  NamedParams<double> params;
  TensorT<double> p = TensorT<double>::randn({4}, rng);
  p.set_requires_grad();
  p.grad();  // zeros
  params.emplace_back("p", p);
  const std::vector<double> before = p.vec();

  AdamWT<double> opt;
  opt.weight_decay = 0.0;
  opt.init(params);
  opt.step(params, 0.1);
  CHECK(p.vec() == before);

  AdamWT<double> opt2;
  opt2.weight_decay = 0.5;
  opt2.init(params);
  opt2.step(params, 0.1);
  for (size_t i = 0; i < before.size(); ++i) CHECK(p.vec()[i] == before[i] * (1.0 - 0.1 * 0.5));
}

TEST_CASE("adamw scalar quadratic matches an independent reference trace") {
  // f(p) = p^2 / 2, grad = p, from p = 1
  NamedParams<double> params;
  TensorT<double> p = TensorT<double>::from_data({1}, {1.0});
  p.set_requires_grad();
  params.emplace_back("p", p);
  AdamWT<double> opt;
  opt.weight_decay = 0.01;
  opt.init(params);

  double ref = 1.0, m = 0.0, v = 0.0;
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.01;
  for (int t = 1; t <= 50; ++t) {
    p.zero_grad();
    p.grad()[0] = p.data()[0];
    opt.step(params, lr);

    const double g = ref;  // reference keeps its own state throughout
    ref -= lr * wd * ref;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    ref -= lr * mhat / (std::sqrt(vhat) + eps);
    CHECK(p.data()[0] == doctest::Approx(ref).epsilon(1e-12));
  }
  CHECK(std::abs(p.data()[0]) < 0.9);  // made progress toward the minimum
}

TEST_CASE("learning-rate schedule endpoints and restarts") {
  LrSchedule s;
  s.base_lr = 1e-3;
  s.lr_min = 1e-5;
  s.warmup_steps = 100;
  s.restart_period = 200;
  s.restart_mult = 2.0;

  CHECK(s.at(0) == 0.0);
  CHECK(s.at(50) == doctest::Approx(5e-4));
  CHECK(s.at(100) == doctest::Approx(1e-3));                    // warmup endpoint == cycle start
  CHECK(s.at(200) == doctest::Approx((1e-3 + 1e-5) / 2));       // cycle midpoint
  CHECK(s.at(299) > s.at(250) - 1e3);                           // decreasing toward the restart
  CHECK(s.at(300) == doctest::Approx(1e-3));                    // restart jumps back to base
  CHECK(s.at(300 + 200) == doctest::Approx((1e-3 + 1e-5) / 2)); // second cycle midpoint at T0*2/2
  CHECK_THROWS_AS(s.at(-1), std::invalid_argument);
}

TEST_CASE("gradient clipping bounds the global norm") {
  Rng rng(61);
  NamedParams<float> params;
  for (int i = 0; i < 3; ++i) {
    Tensor t = Tensor::randn({16}, rng);
    t.set_requires_grad();
    auto& g = t.grad();
    for (auto& v : g) v = static_cast<float>(rng.normal(0.0, 4.0));
    params.emplace_back("t" + std::to_string(i), t);
  }
  const double before = clip_global_grad_norm(params, 1.0);
  CHECK(before > 1.0);
  double sq = 0;
  for (auto& [n, t] : params)
    for (float g : t.grad()) sq += static_cast<double>(g) * g;
  CHECK(std::sqrt(sq) <= 1.0 + 1e-6);

  // below the threshold nothing changes
  NamedParams<float> small;
  Tensor t = Tensor::filled({2}, 0.0f);
  t.set_requires_grad();
  t.grad() = {1e-3f, 2e-3f};
  small.emplace_back("s", t);
  const std::vector<float> keep = t.grad();
  clip_global_grad_norm(small, 1.0);
  CHECK(t.grad() == keep);
}

TEST_CASE("checkpoint container round-trip and failure modes") {
  const std::string dir = temp_dir("ckpt_io");
  Rng rng(62);
  NamedParams<float> tensors;
  tensors.emplace_back("alpha", Tensor::randn({3, 4}, rng));
  tensors.emplace_back("beta", Tensor::randn({7}, rng));
  save_checkpoint(dir + "/a.shrn", tensors);
  NamedParams<float> back = load_checkpoint(dir + "/a.shrn");
  REQUIRE(back.size() == 2);
  CHECK(back[0].first == "alpha");
  CHECK(back[0].second.shape() == Shape{3, 4});
  CHECK(back[0].second.vec() == tensors[0].second.vec());
  CHECK(back[1].second.vec() == tensors[1].second.vec());

  {
    std::ofstream f(dir + "/bad.shrn", std::ios::binary);
    f << "NOPE";
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(dir + "/bad.shrn"), doctest::Contains("magic"), std::runtime_error);

  // truncate the valid file
  {
    std::string bytes = slurp(dir + "/a.shrn");
    std::ofstream f(dir + "/trunc.shrn", std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(dir + "/trunc.shrn"), doctest::Contains("truncated"), std::runtime_error);
}

TEST_CASE("model checkpoint restores bitwise-identical forwards") {
  const std::string root = temp_dir("restore");
  TrainConfig cfg = micro_train_config(root);
  Rng rng(cfg.seed);
  Model model(cfg.model_config(), rng);
  AdamW opt;
  opt.init(model.named_params());
  save_train_checkpoint(root + "/m.shrn", model, opt, 0, cfg);

  RestoredState state = restore_checkpoint(root + "/m.shrn");
  CHECK(state.step == 0);
  CHECK(serialize_config(state.cfg) == serialize_config(cfg));

  Rng drng(63);
  Tensor image = Tensor::randn({cfg.image_size, cfg.image_size, cfg.channels}, drng);
  PersonInput person;
  person.crop = Tensor::randn({cfg.crop_size, cfg.crop_size, cfg.channels}, drng);
  person.bbox = {0.2, 0.2, 0.5, 0.5};
  auto [slots, mask] = pad_person_slots<float>({person}, 2, cfg.crop_size, cfg.channels);
  ForwardResultT<float> a = model.forward(image, slots);
  ForwardResultT<float> b = state.model.forward(image, slots);
  CHECK(a.points.vec() == b.points.vec());
  CHECK(a.inout_probs.vec() == b.inout_probs.vec());
  CHECK(a.gaze_vectors.vec() == b.gaze_vectors.vec());

  // unknown tensor names are load errors
  NamedParams<float> tensors = load_checkpoint(root + "/m.shrn");
  tensors.emplace_back("mystery", Tensor::zeros({2}));
  save_checkpoint(root + "/extra.shrn", tensors);
  CHECK_THROWS_WITH_AS(restore_checkpoint(root + "/extra.shrn"), doctest::Contains("mystery"), std::runtime_error);
}

TEST_CASE("epoch order is a seeded permutation") {
  auto a = epoch_order(7, 3, 100);
  auto b = epoch_order(7, 3, 100);
  CHECK(a == b);
  auto c = epoch_order(7, 4, 100);
  CHECK(a != c);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) CHECK(sorted[static_cast<size_t>(i)] == i);
}

TEST_CASE("training runs deterministically and resumes exactly") {
  const std::string root = temp_dir("loop");
  TrainConfig cfg = micro_train_config(root);

  std::ostringstream log;
  TrainResult r1 = train_model(cfg, "", log);
  CHECK(r1.steps_done == 8);
  CHECK_FALSE(r1.aborted_nonfinite);
  const std::string hist1 = slurp(r1.history_path);
  CHECK(hist1.find("\ttrain\tloss\t") != std::string::npos);
  CHECK(hist1.find("\tval\tavg_dist\t") != std::string::npos);

  // identical second run, byte-identical history
  TrainConfig cfg2 = cfg;
  cfg2.checkpoint_dir = root + "/ckpt2";
  TrainResult r2 = train_model(cfg2, "", log);
  CHECK(slurp(r2.history_path) == hist1);

  // multi-threaded run, still byte-identical
  TrainConfig cfg4 = cfg;
  cfg4.checkpoint_dir = root + "/ckpt4";
  cfg4.threads = 2;
  TrainResult r4 = train_model(cfg4, "", log);
  CHECK(slurp(r4.history_path) == hist1);

  // resume from the step-4 checkpoint and match the uninterrupted run bitwise
  TrainConfig cfg3 = cfg;
  cfg3.checkpoint_dir = root + "/ckpt3";
  TrainResult r3 = train_model(cfg3, cfg.checkpoint_dir + "/step_00000004.shrn", log);
  CHECK(r3.steps_done == 8);
  const std::string final1 = slurp(r1.final_checkpoint);
  std::string final3 = slurp(r3.final_checkpoint);
  CHECK(final1 == final3);
}

TEST_CASE("training aborts on a non-finite loss") {
  const std::string root = temp_dir("abort");
  TrainConfig cfg = micro_train_config(root);
  cfg.base_lr = 1e18;  // guarantees an overflow within a few steps
  cfg.warmup_steps = 0;
  cfg.checkpoint_dir = root + "/ckpt_abort";
  std::ostringstream log;
  TrainResult r = train_model(cfg, "", log);
  CHECK(r.aborted_nonfinite);
  CHECK(r.abort_step >= 1);
}
