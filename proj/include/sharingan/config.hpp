#pragma once

#include <array>
#include <string>

#include "sharingan/losses.hpp"
#include "sharingan/optimizer.hpp"

namespace sharingan {

// Full training configuration. The plain-text form is `key = value` per line,
// '#' comments allowed, unknown keys rejected; parse(serialize(c)) == c.
struct TrainConfig {
  Variant variant = Variant::Point;
  uint64_t seed = 42;

  // model
  int image_size = 224;
  int channels = 3;
  int patch_size = 16;
  int dim = 768;
  int layers = 12;
  int heads = 12;
  int n_persons = 6;
  int crop_size = 225;
  int d_emb = 512;
  std::vector<int> backbone_channels = {32, 64, 128};
  int gpred_hidden = 128;
  std::vector<int> dpt_taps = {3, 6, 9, 12};
  std::vector<int> dpt_channels = {96, 192, 384, 768};
  int dpt_fusion = 256;
  double init_std = 0.02;

  // input standardization
  std::array<float, 3> norm_mean = {0.5f, 0.5f, 0.5f};
  std::array<float, 3> norm_std = {0.5f, 0.5f, 0.5f};

  // optimization
  double base_lr = 3e-5;
  double lr_min = 1e-6;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  int batch_size = 8;
  int64_t total_steps = 3000;
  int64_t warmup_steps = 200;
  int64_t restart_period = 1000;
  double restart_mult = 2.0;

  // loss; lambda_reg < 0 means "default for the variant" (1000 heatmap, 100 point)
  double lambda_reg = -1.0;
  double lambda_ang = 3.0;
  double lambda_io = 1.0;
  double gt_sigma = 3.0;

  // data + loop
  std::string train_data;
  std::string val_data;
  int64_t eval_every = 250;
  int64_t checkpoint_every = 1000;
  int64_t log_every = 50;
  std::string checkpoint_dir = "checkpoints";
  int threads = 1;

  void finalize() {
    if (lambda_reg < 0.0) lambda_reg = variant == Variant::Heatmap ? 1000.0 : 100.0;
  }

  ModelConfig model_config() const {
    ModelConfig m;
    m.variant = variant;
    m.image_size = image_size;
    m.channels = channels;
    m.patch = patch_size;
    m.dim = dim;
    m.layers = layers;
    m.heads = heads;
    m.n_persons = n_persons;
    m.crop_size = crop_size;
    m.d_emb = d_emb;
    m.backbone_channels = backbone_channels;
    m.gpred_hidden = gpred_hidden;
    m.dpt_taps = dpt_taps;
    m.dpt_channels = dpt_channels;
    m.dpt_fusion = dpt_fusion;
    m.init_std = init_std;
    return m;
  }

  LossWeights loss_weights() const { return {lambda_reg, lambda_ang, lambda_io}; }

  LrSchedule lr_schedule() const { return {base_lr, lr_min, warmup_steps, restart_period, restart_mult}; }

  bool operator==(const TrainConfig&) const = default;
};

std::string serialize_config(const TrainConfig& cfg);
TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config_file(const std::string& path);

// desk-scale presets used by the toy-world experiments
TrainConfig desk_point_config();
TrainConfig desk_heatmap_config();

// tiny f64-checkable configuration for the full-model gradient suite
ModelConfig micro_model_config(Variant variant);

}  // namespace sharingan
