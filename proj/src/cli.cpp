#include "sharingan/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sharingan/model_gradcheck.hpp"
#include "sharingan/trainer.hpp"

namespace sharingan {

namespace fs = std::filesystem;

namespace {

std::string fmt6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::vector<int> parse_np_spec(const std::string& spec, int fallback) {
  if (spec.empty()) return {fallback};
  std::vector<int> out;
  const size_t range = spec.find("..");
  if (range != std::string::npos) {
    const int lo = std::stoi(spec.substr(0, range));
    const int hi = std::stoi(spec.substr(range + 2));
    if (lo < 1 || hi < lo) throw std::runtime_error("eval: bad --np range '" + spec + "'");
    for (int i = lo; i <= hi; ++i) out.push_back(i);
    return out;
  }
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const int v = std::stoi(tok);
    if (v < 1) throw std::runtime_error("eval: bad --np value '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::runtime_error("eval: empty --np spec");
  return out;
}

std::array<double, 4> parse_box(const std::string& s) {
  std::array<double, 4> box{};
  std::stringstream ss(s);
  std::string tok;
  int i = 0;
  while (std::getline(ss, tok, ',')) {
    if (i >= 4) throw std::runtime_error("infer: malformed box '" + s + "'");
    try {
      box[static_cast<size_t>(i++)] = std::stod(tok);
    } catch (const std::exception&) {
      throw std::runtime_error("infer: malformed box '" + s + "'");
    }
  }
  if (i != 4) throw std::runtime_error("infer: malformed box '" + s + "'");
  if (!(box[0] >= 0 && box[0] <= box[2] && box[2] <= 1 && box[1] >= 0 && box[1] <= box[3] && box[3] <= 1))
    throw std::runtime_error("infer: box out of range '" + s + "'");
  return box;
}

}  // namespace

int cmd_gen_data(const GenDataArgs& args, std::ostream& out, std::ostream& err) {
  try {
    if (args.out.empty()) throw std::runtime_error("gen-data: --out is required");
    ToyParams p;
    p.image_size = args.image_size;
    p.n_persons = args.n_persons;
    p.n_objects = args.n_objects;
    p.annotators = args.annotators;
    p.jitter_sigma = args.jitter_sigma;
    p.p_out = args.p_out;
    // marker, disc and crop-window sizes scale with the scene
    p.marker_px = std::max(5, args.image_size / 9) | 1;
    p.object_r_px = std::max(3, args.image_size / 16);
    p.crop_window_px = std::max(11, args.image_size / 4) | 1;
    p.tick_px = std::max(2, p.marker_px / 4);
    const std::string ann = generate_dataset(args.out, args.seed, args.n_scenes, p);
    out << "wrote " << ann << " (" << args.n_scenes << " scenes)\n";
    return 0;
  } catch (const std::exception& ex) {
    err << ex.what() << "\n";
    return 1;
  }
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  try {
    TrainConfig cfg = load_config_file(args.config_path);
    if (args.threads > 0) cfg.threads = args.threads;
    out << "resolved configuration:\n" << serialize_config(cfg);
    TrainResult res = train_model(cfg, args.resume, out);
    if (res.aborted_nonfinite) {
      err << "train: aborted at step " << res.abort_step << " with non-finite loss\n";
      return 1;
    }
    out << "final checkpoint: " << res.final_checkpoint << "\n";
    if (!res.best_checkpoint.empty())
      out << "best checkpoint: " << res.best_checkpoint << " (val avg_dist " << fmt6(res.best_val_avg_dist) << ")\n";
    return 0;
  } catch (const std::exception& ex) {
    err << ex.what() << "\n";
    return 1;
  }
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  try {
    RestoredState state = restore_checkpoint(args.checkpoint);
    Dataset ds = Dataset::load(args.data);
    const std::vector<int> nps = parse_np_spec(args.np_spec, state.cfg.n_persons);
    for (int np : nps) {
      int use_np = np;
      if (state.cfg.variant == Variant::Heatmap && np != 1) {
        err << "eval: heatmap variant is single-person; evaluating with np=1\n";
        use_np = 1;
      }
      if (state.cfg.variant == Variant::Point && np > state.cfg.n_persons)
        err << "eval: np=" << np << " exceeds the trained capacity " << state.cfg.n_persons
            << "; evaluating beyond the training regime\n";
      MetricReport rep = evaluate_model(state.model, ds, state.cfg, use_np, args.threads);
      out << "np\t" << use_np << "\n" << format_metric_report(rep) << "\n";
    }
    return 0;
  } catch (const std::exception& ex) {
    err << ex.what() << "\n";
    return 1;
  }
}

int cmd_infer(const InferArgs& args, std::ostream& out, std::ostream& err) {
  try {
    RestoredState state = restore_checkpoint(args.checkpoint);
    const TrainConfig& cfg = state.cfg;
    ImageU8 raw = read_ppm(args.image);
    if (raw.w != cfg.image_size || raw.h != cfg.image_size)
      throw std::runtime_error("infer: image is " + std::to_string(raw.w) + "x" + std::to_string(raw.h) +
                               ", model expects " + std::to_string(cfg.image_size) + "x" +
                               std::to_string(cfg.image_size));
    Tensor image = image_to_tensor(raw, cfg.norm_mean, cfg.norm_std);

    std::vector<std::array<double, 4>> boxes;
    if (!args.boxes.empty()) {
      std::stringstream ss(args.boxes);
      std::string tok;
      while (std::getline(ss, tok, ';'))
        if (!tok.empty()) boxes.push_back(parse_box(tok));
    }
    if (!args.boxes_file.empty()) {
      std::ifstream f(args.boxes_file);
      if (!f) throw std::runtime_error("infer: cannot open boxes file " + args.boxes_file);
      std::string line;
      while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        for (char& c : line)
          if (c == ' ' || c == '\t') c = ',';
        boxes.push_back(parse_box(line));
      }
    }
    if (boxes.empty()) return 0;

    std::vector<PersonInput> persons;
    for (const auto& b : boxes) {
      PersonInput p;
      p.bbox = b;
      p.crop = crop_head(image, b, cfg.crop_size);
      persons.push_back(std::move(p));
    }

    int index = 0;
    auto emit = [&](double x, double y, double io, double gvx, double gvy) {
      out << index << '\t' << fmt6(x) << '\t' << fmt6(y) << '\t' << fmt6(io) << '\t' << fmt6(gvx) << '\t' << fmt6(gvy)
          << "\n";
      ++index;
    };
    if (cfg.variant == Variant::Point) {
      ForwardResultT<float> fwd = state.model.forward(image, persons);
      for (int i = 0; i < static_cast<int>(persons.size()); ++i)
        emit(fwd.points.at({i, 0}), fwd.points.at({i, 1}), fwd.inout_probs.at({i, 0}), fwd.gaze_vectors.at({i, 0}),
             fwd.gaze_vectors.at({i, 1}));
    } else {
      for (size_t i = 0; i < persons.size(); ++i) {
        ForwardResultT<float> fwd = state.model.forward(image, {persons[i]});
        auto [px, py] = heatmap_argmax(fwd.heatmap);
        emit(px, py, fwd.inout_probs.at({0, 0}), fwd.gaze_vectors.at({0, 0}), fwd.gaze_vectors.at({0, 1}));
        if (!args.dump_heatmap.empty()) {
          std::string path = args.dump_heatmap;
          if (persons.size() > 1) path += "." + std::to_string(i);
          std::ofstream hf(path, std::ios::binary);
          if (!hf) throw std::runtime_error("infer: cannot open " + path);
          for (int r = 0; r < kHeatmapSize; ++r) {
            for (int c = 0; c < kHeatmapSize; ++c) {
              if (c) hf << ' ';
              char buf[32];
              std::snprintf(buf, sizeof(buf), "%.8g", static_cast<double>(fwd.heatmap.scores.at({r, c})));
              hf << buf;
            }
            hf << "\n";
          }
        }
      }
    }
    return 0;
  } catch (const std::exception& ex) {
    err << ex.what() << "\n";
    return 1;
  }
}

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err) {
  try {
    if (args.scale != "micro") throw std::runtime_error("gradcheck: unknown scale '" + args.scale + "'");
    bool ok = true;
    for (Variant v : {Variant::Point, Variant::Heatmap}) {
      out << "=== " << variant_name(v) << " variant ===\n";
      GradCheckReport rep = run_model_grad_check(v, 7, args.h);
      out << rep.to_string(args.tol);
      ok = ok && rep.pass(args.tol);
    }
    return ok ? 0 : 1;
  } catch (const std::exception& ex) {
    err << ex.what() << "\n";
    return 1;
  }
}

int cmd_make_config(const MakeConfigArgs& args, std::ostream& out, std::ostream& err) {
  try {
    TrainConfig cfg;
    if (args.preset == "desk-point") {
      cfg = desk_point_config();
    } else if (args.preset == "desk-heatmap") {
      cfg = desk_heatmap_config();
    } else if (args.preset == "paper-point") {
      cfg.variant = Variant::Point;
      cfg.finalize();
    } else if (args.preset == "paper-heatmap") {
      cfg.variant = Variant::Heatmap;
      cfg.n_persons = 1;
      cfg.finalize();
    } else {
      throw std::runtime_error("make-config: unknown preset '" + args.preset + "'");
    }
    out << serialize_config(cfg);
    return 0;
  } catch (const std::exception& ex) {
    err << ex.what() << "\n";
    return 1;
  }
}

}  // namespace sharingan
