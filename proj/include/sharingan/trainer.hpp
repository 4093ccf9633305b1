#pragma once

#include <iostream>
#include <limits>

#include "sharingan/checkpoint.hpp"
#include "sharingan/config.hpp"
#include "sharingan/data.hpp"
#include "sharingan/losses.hpp"

namespace sharingan {

// One training sample: an image with up to N_p of its person records.
struct TrainSample {
  int image_index = 0;
  std::vector<int> record_indices;
};

// groups chunked to at most `capacity` persons, preserving record order
std::vector<TrainSample> make_samples(const Dataset& ds, int capacity);

struct PreparedSample {
  Tensor image;
  std::vector<PersonInput> persons;  // padded to capacity
  std::vector<PersonTarget> targets;
  HeatmapT<float> gt_heatmap;  // heatmap variant, when a point exists
  bool has_gt_heatmap = false;
};

PreparedSample prepare_sample(const Dataset& ds, const TrainSample& sample, const TrainConfig& cfg, int capacity);

// permutation of [0, n) for one epoch, a pure function of (seed, epoch)
std::vector<int> epoch_order(uint64_t seed, int64_t epoch, int64_t n);

MetricReport evaluate_model(const Model& model, const Dataset& ds, const TrainConfig& cfg, int eval_np, int threads);

// full training state in one container
void save_train_checkpoint(const std::string& path, const Model& model, const AdamW& opt, int64_t step,
                           const TrainConfig& cfg);

struct RestoredState {
  TrainConfig cfg;
  int64_t step = 0;
  Model model;
  bool has_optimizer = false;
  AdamW opt;
};

RestoredState restore_checkpoint(const std::string& path);

struct TrainResult {
  int64_t steps_done = 0;
  double best_val_avg_dist = std::numeric_limits<double>::infinity();
  std::string history_path;
  std::string final_checkpoint;
  std::string best_checkpoint;
  bool aborted_nonfinite = false;
  int64_t abort_step = -1;
};

TrainResult train_model(const TrainConfig& cfg, const std::string& resume_path, std::ostream& log);

}  // namespace sharingan
