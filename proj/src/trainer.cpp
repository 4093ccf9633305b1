#include "sharingan/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include "sharingan/threadpool.hpp"

namespace sharingan {

namespace fs = std::filesystem;

std::vector<TrainSample> make_samples(const Dataset& ds, int capacity) {
  std::vector<TrainSample> out;
  for (size_t img = 0; img < ds.groups.size(); ++img) {
    const auto& group = ds.groups[img];
    for (size_t start = 0; start < group.size(); start += static_cast<size_t>(capacity)) {
      TrainSample s;
      s.image_index = static_cast<int>(img);
      for (size_t i = start; i < std::min(group.size(), start + static_cast<size_t>(capacity)); ++i)
        s.record_indices.push_back(group[i]);
      out.push_back(std::move(s));
    }
  }
  return out;
}

PreparedSample prepare_sample(const Dataset& ds, const TrainSample& sample, const TrainConfig& cfg, int capacity) {
  PreparedSample p;
  p.image = image_to_tensor(ds.images[static_cast<size_t>(sample.image_index)], cfg.norm_mean, cfg.norm_std);
  std::vector<PersonInput> real;
  for (int ri : sample.record_indices) {
    const AnnotationRecord& rec = ds.records[static_cast<size_t>(ri)];
    PersonInput person;
    person.crop = crop_head(p.image, rec.bbox, cfg.crop_size);
    person.bbox = rec.bbox;
    real.push_back(std::move(person));

    const bool has_point = rec.inout == 1 && !rec.gaze_points.empty();
    Vec2 target = has_point ? rec.target_point() : Vec2{};
    const Vec2 bc = rec.bbox_center();
    p.targets.push_back(make_person_target(true, rec.inout, has_point, target.x, target.y, bc.x, bc.y));
    if (cfg.variant == Variant::Heatmap && has_point) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& g : rec.gaze_points) pts.emplace_back(g.x, g.y);
      p.gt_heatmap = build_gt_heatmap<float>(pts, cfg.gt_sigma);
      p.has_gt_heatmap = true;
    }
  }
  auto [slots, mask] = pad_person_slots(real, capacity, cfg.crop_size, cfg.channels);
  p.persons = std::move(slots);
  for (size_t i = p.targets.size(); i < static_cast<size_t>(capacity); ++i) p.targets.push_back(PersonTarget{});
  return p;
}

std::vector<int> epoch_order(uint64_t seed, int64_t epoch, int64_t n) {
  std::vector<int> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = static_cast<int>(i);
  Rng rng(mix_seed(seed, 0x51755FFEULL + static_cast<uint64_t>(epoch)));
  for (int64_t i = n - 1; i > 0; --i) {
    const int j = rng.uniform_int(0, static_cast<int>(i));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  return order;
}

// ------------------------------------------------------------- evaluation

namespace {

struct EvalAccum {
  std::vector<double> avg_dists, min_dists, aucs;
  std::vector<double> ap_scores;
  std::vector<int> ap_labels;
};

}  // namespace

MetricReport evaluate_model(const Model& model, const Dataset& ds, const TrainConfig& cfg, int eval_np, int threads) {
  const int capacity = cfg.variant == Variant::Heatmap ? 1 : eval_np;
  std::vector<TrainSample> samples = make_samples(ds, capacity);
  std::vector<EvalAccum> per_sample(samples.size());

  parallel_for(threads, static_cast<int>(samples.size()), [&](int si) {
    const TrainSample& sample = samples[static_cast<size_t>(si)];
    PreparedSample prep = prepare_sample(ds, sample, cfg, capacity);
    ForwardResultT<float> fwd = model.forward(prep.image, prep.persons);
    EvalAccum& acc = per_sample[static_cast<size_t>(si)];
    for (size_t i = 0; i < sample.record_indices.size(); ++i) {
      const AnnotationRecord& rec = ds.records[static_cast<size_t>(sample.record_indices[i])];
      acc.ap_scores.push_back(fwd.inout_probs.at({static_cast<int>(i), 0}));
      acc.ap_labels.push_back(rec.inout);
      if (rec.inout == 1 && !rec.gaze_points.empty()) {
        Vec2 pred;
        if (cfg.variant == Variant::Point) {
          pred.x = fwd.points.at({static_cast<int>(i), 0});
          pred.y = fwd.points.at({static_cast<int>(i), 1});
        } else {
          auto [px, py] = heatmap_argmax(fwd.heatmap);
          pred.x = px;
          pred.y = py;
        }
        acc.avg_dists.push_back(metric_avg_dist(pred, rec.gaze_points));
        acc.min_dists.push_back(metric_min_dist(pred, rec.gaze_points));
        if (cfg.variant == Variant::Heatmap) {
          auto auc = metric_auc(fwd.heatmap.scores.vec(), kHeatmapSize, kHeatmapSize, rec.gaze_points);
          if (auc) acc.aucs.push_back(*auc);
        }
      }
    }
  });

  // deterministic reduce in sample order
  MetricReport rep;
  double sum_avg = 0.0, sum_min = 0.0, sum_auc = 0.0;
  int64_t n_dist = 0, n_auc = 0;
  std::vector<double> ap_scores;
  std::vector<int> ap_labels;
  for (const auto& acc : per_sample) {
    for (double v : acc.avg_dists) sum_avg += v;
    for (double v : acc.min_dists) sum_min += v;
    for (double v : acc.aucs) sum_auc += v;
    n_dist += static_cast<int64_t>(acc.avg_dists.size());
    n_auc += static_cast<int64_t>(acc.aucs.size());
    ap_scores.insert(ap_scores.end(), acc.ap_scores.begin(), acc.ap_scores.end());
    ap_labels.insert(ap_labels.end(), acc.ap_labels.begin(), acc.ap_labels.end());
  }
  rep.n_instances = static_cast<int64_t>(ap_scores.size());
  rep.avg_dist = n_dist ? sum_avg / static_cast<double>(n_dist) : 0.0;
  rep.min_dist = n_dist ? sum_min / static_cast<double>(n_dist) : 0.0;
  if (cfg.variant == Variant::Heatmap && n_auc) rep.auc = sum_auc / static_cast<double>(n_auc);
  bool any_pos = false;
  for (int l : ap_labels) any_pos |= l == 1;
  if (any_pos) rep.ap = metric_ap(ap_scores, ap_labels);
  return rep;
}

// ------------------------------------------------------------- checkpointing

void save_train_checkpoint(const std::string& path, const Model& model, const AdamW& opt, int64_t step,
                           const TrainConfig& cfg) {
  NamedParams<float> tensors = model.named_params();
  const size_t n_params = tensors.size();
  if (!opt.m.empty()) {
    if (opt.m.size() != n_params) throw std::runtime_error("checkpoint: optimizer state does not match parameters");
    for (size_t i = 0; i < n_params; ++i) {
      const Shape& shape = tensors[i].second.shape();
      tensors.emplace_back("opt.m." + tensors[i].first, Tensor::from_data(shape, opt.m[i]));
      tensors.emplace_back("opt.v." + tensors[i].first, Tensor::from_data(shape, opt.v[i]));
    }
  }
  tensors.emplace_back("meta.step", Tensor::scalar(static_cast<float>(step)));
  tensors.emplace_back("meta.config", encode_text_tensor(serialize_config(cfg)));
  save_checkpoint(path, tensors);
}

RestoredState restore_checkpoint(const std::string& path) {
  NamedParams<float> tensors = load_checkpoint(path);
  std::unordered_map<std::string, Tensor> by_name;
  for (auto& [name, t] : tensors) {
    if (!by_name.emplace(name, t).second) throw std::runtime_error("checkpoint: duplicate tensor name " + name);
  }

  auto take = [&](const std::string& name) -> Tensor {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint: missing tensor " + name + " in " + path);
    Tensor t = it->second;
    by_name.erase(it);
    return t;
  };

  RestoredState state;
  state.cfg = parse_config_text(decode_text_tensor(take("meta.config")));
  state.step = static_cast<int64_t>(take("meta.step").item());

  Rng rng(state.cfg.seed);
  state.model = Model(state.cfg.model_config(), rng);
  NamedParams<float> params = state.model.named_params();
  for (auto& [name, p] : params) {
    Tensor loaded = take(name);
    if (loaded.shape() != p.shape())
      throw std::runtime_error("checkpoint: tensor " + name + " has shape " + shape_str(loaded.shape()) +
                               ", expected " + shape_str(p.shape()));
    p.vec() = loaded.vec();
  }

  const bool has_opt = by_name.count("opt.m." + params[0].first) > 0;
  if (has_opt) {
    state.has_optimizer = true;
    state.opt.beta1 = state.cfg.beta1;
    state.opt.beta2 = state.cfg.beta2;
    state.opt.eps = state.cfg.adam_eps;
    state.opt.weight_decay = state.cfg.weight_decay;
    state.opt.step_count = state.step;
    for (auto& [name, p] : params) {
      Tensor m = take("opt.m." + name);
      Tensor v = take("opt.v." + name);
      if (m.shape() != p.shape() || v.shape() != p.shape())
        throw std::runtime_error("checkpoint: optimizer state shape mismatch for " + name);
      state.opt.m.push_back(m.vec());
      state.opt.v.push_back(v.vec());
    }
  }
  if (!by_name.empty())
    throw std::runtime_error("checkpoint: unknown tensor name " + by_name.begin()->first + " in " + path);
  return state;
}

// ------------------------------------------------------------- training loop

namespace {

std::string fmt_metric(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

struct HistoryWriter {
  std::ofstream f;
  explicit HistoryWriter(const std::string& path) : f(path, std::ios::binary) {
    if (!f) throw std::runtime_error("train: cannot open history file " + path);
  }
  void add(int64_t step, const std::string& split, const std::string& metric, double value) {
    f << step << '\t' << split << '\t' << metric << '\t' << fmt_metric(value) << "\n";
  }
  void flush() { f.flush(); }
};

}  // namespace

TrainResult train_model(const TrainConfig& cfg_in, const std::string& resume_path, std::ostream& log) {
  TrainConfig cfg = cfg_in;
  cfg.finalize();
  if (cfg.train_data.empty()) throw std::runtime_error("train: train_data not set");
  Dataset train_ds = Dataset::load(cfg.train_data);
  Dataset val_ds;
  const bool has_val = !cfg.val_data.empty();
  if (has_val) val_ds = Dataset::load(cfg.val_data);

  Model model;
  AdamW opt;
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;
  opt.eps = cfg.adam_eps;
  opt.weight_decay = cfg.weight_decay;
  int64_t start_step = 0;
  if (!resume_path.empty()) {
    RestoredState state = restore_checkpoint(resume_path);
    if (serialize_config(state.cfg) != serialize_config(cfg))
      log << "train: note: resuming with the configuration stored in " << resume_path << "\n";
    cfg = state.cfg;
    model = std::move(state.model);
    if (!state.has_optimizer) throw std::runtime_error("train: checkpoint has no optimizer state, cannot resume");
    opt = std::move(state.opt);
    start_step = state.step;
  } else {
    Rng rng(cfg.seed);
    model = Model(cfg.model_config(), rng);
  }

  NamedParams<float> params = model.named_params();
  if (opt.m.empty()) opt.init(params);

  std::vector<TrainSample> samples = make_samples(train_ds, cfg.n_persons);
  if (samples.empty()) throw std::runtime_error("train: training set has no samples");
  const int64_t n_samples = static_cast<int64_t>(samples.size());
  const LrSchedule schedule = cfg.lr_schedule();
  const LossWeights weights = cfg.loss_weights();

  fs::create_directories(cfg.checkpoint_dir);
  const std::string history_path = (fs::path(cfg.checkpoint_dir) / "history.tsv").string();
  HistoryWriter history(history_path);

  TrainResult result;
  result.history_path = history_path;
  const std::string best_path = (fs::path(cfg.checkpoint_dir) / "best.shrn").string();
  const std::string final_path = (fs::path(cfg.checkpoint_dir) / "final.shrn").string();

  log << "train: " << variant_name(cfg.variant) << " variant, " << n_samples << " samples, " << cfg.total_steps
      << " steps, batch " << cfg.batch_size << ", threads " << cfg.threads << "\n";

  // epoch permutations are a pure function of (seed, epoch); cache the current one
  int64_t cached_epoch = -1;
  std::vector<int> order;
  auto sample_at = [&](int64_t pos) -> int {
    const int64_t epoch = pos / n_samples;
    if (epoch != cached_epoch) {
      order = epoch_order(cfg.seed, epoch, n_samples);
      cached_epoch = epoch;
    }
    return order[static_cast<size_t>(pos % n_samples)];
  };

  struct WorkerOut {
    Tape tape;
    double loss = 0.0, reg = 0.0, ang = 0.0, io = 0.0;
  };

  for (int64_t step = start_step + 1; step <= cfg.total_steps; ++step) {
    std::vector<int> batch(static_cast<size_t>(cfg.batch_size));
    for (int j = 0; j < cfg.batch_size; ++j)
      batch[static_cast<size_t>(j)] = sample_at((step - 1) * cfg.batch_size + j);

    std::vector<WorkerOut> outs(batch.size());
    const float inv_b = 1.0f / static_cast<float>(cfg.batch_size);
    parallel_for(cfg.threads, static_cast<int>(batch.size()), [&](int j) {
      WorkerOut& wo = outs[static_cast<size_t>(j)];
      TapeScope scope(wo.tape);
      PreparedSample prep = prepare_sample(train_ds, samples[static_cast<size_t>(batch[static_cast<size_t>(j)])],
                                           cfg, cfg.n_persons);
      ForwardResultT<float> fwd = model.forward(prep.image, prep.persons);
      GlobalLossT<float> gl = global_loss(fwd, prep.has_gt_heatmap ? &prep.gt_heatmap : nullptr, prep.targets,
                                          cfg.variant, weights);
      Tensor scaled = mul_scalar(gl.total, inv_b);
      wo.tape.backward_local(scaled);
      wo.loss = gl.total.item() * inv_b;
      wo.reg = gl.reg;
      wo.ang = gl.ang;
      wo.io = gl.io;
    });

    for (auto& [name, p] : params) {
      (void)name;
      p.zero_grad();
    }
    double batch_loss = 0.0;
    for (auto& wo : outs) {
      wo.tape.merge_leaf_grads();
      batch_loss += wo.loss;
      wo.tape.reset();
    }

    if (!std::isfinite(batch_loss)) {
      log << "train: non-finite loss at step " << step << ", aborting; last checkpoints retained\n";
      result.aborted_nonfinite = true;
      result.abort_step = step;
      result.steps_done = step - 1;
      history.flush();
      return result;
    }

    clip_global_grad_norm(params, cfg.clip_norm);
    const double lr = schedule.at(step);
    opt.step(params, lr);

    if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step == cfg.total_steps)) {
      history.add(step, "train", "loss", batch_loss);
      log << "step " << step << "  loss " << fmt_metric(batch_loss) << "  lr " << fmt_metric(lr) << std::endl;
    }
    const bool eval_now = has_val && cfg.eval_every > 0 && (step % cfg.eval_every == 0 || step == cfg.total_steps);
    if (eval_now) {
      MetricReport rep = evaluate_model(model, val_ds, cfg, cfg.n_persons, cfg.threads);
      history.add(step, "val", "avg_dist", rep.avg_dist);
      history.add(step, "val", "min_dist", rep.min_dist);
      if (rep.auc) history.add(step, "val", "auc", *rep.auc);
      if (rep.ap) history.add(step, "val", "ap", *rep.ap);
      log << "step " << step << "  val avg_dist " << fmt_metric(rep.avg_dist) << std::endl;
      if (rep.avg_dist < result.best_val_avg_dist) {
        result.best_val_avg_dist = rep.avg_dist;
        save_train_checkpoint(best_path, model, opt, step, cfg);
        result.best_checkpoint = best_path;
      }
    }
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.total_steps) {
      char name[32];
      std::snprintf(name, sizeof(name), "step_%08lld.shrn", static_cast<long long>(step));
      save_train_checkpoint((fs::path(cfg.checkpoint_dir) / name).string(), model, opt, step, cfg);
    }
    result.steps_done = step;
  }

  save_train_checkpoint(final_path, model, opt, cfg.total_steps, cfg);
  result.final_checkpoint = final_path;
  history.flush();
  return result;
}

}  // namespace sharingan
