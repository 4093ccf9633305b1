#pragma once

#include "sharingan/decoders.hpp"
#include "sharingan/person.hpp"
#include "sharingan/vit.hpp"

namespace sharingan {

enum class Variant { Point, Heatmap };

inline const char* variant_name(Variant v) { return v == Variant::Point ? "point" : "heatmap"; }

struct ModelConfig {
  Variant variant = Variant::Point;
  int image_size = 224;
  int channels = 3;
  int patch = 16;
  int dim = 768;
  int layers = 12;
  int heads = 12;
  int n_persons = 6;  // token capacity N_p
  int crop_size = 225;
  int d_emb = 512;
  std::vector<int> backbone_channels = {32, 64, 128};
  int gpred_hidden = 128;
  std::vector<int> dpt_taps = {3, 6, 9, 12};
  std::vector<int> dpt_channels = {96, 192, 384, 768};
  int dpt_fusion = 256;
  double init_std = 0.02;

  int grid_h() const { return image_size / patch; }
  int grid_w() const { return image_size / patch; }
  int n_image_tokens() const { return grid_h() * grid_w(); }

  void validate() const {
    if (image_size <= 0 || patch <= 0 || image_size % patch != 0)
      throw std::invalid_argument("config: image_size must be a positive multiple of patch_size");
    if (dim % 4 != 0) throw std::invalid_argument("config: dim must be divisible by 4");
    if (dim % heads != 0) throw std::invalid_argument("config: dim must be divisible by heads");
    if (layers < 0) throw std::invalid_argument("config: layers must be >= 0");
    if (n_persons < 1) throw std::invalid_argument("config: n_persons must be >= 1");
    if (variant == Variant::Heatmap && n_persons != 1)
      throw std::invalid_argument("config: heatmap variant requires n_persons == 1");
    if (backbone_channels.size() != 3) throw std::invalid_argument("config: backbone_channels needs 3 widths");
    // 4 strided 3x3 convs with padding 1 need an odd size at every stage
    int s = crop_size;
    for (int i = 0; i < 3; ++i) {
      if (s < 3 || s % 2 == 0)
        throw std::invalid_argument("config: crop_size " + std::to_string(crop_size) +
                                    " incompatible with the backbone stride chain (use 16k+1, e.g. 49 or 225)");
      s = (s + 1) / 2;
    }
    if (s < 3 || s % 2 == 0)
      throw std::invalid_argument("config: crop_size " + std::to_string(crop_size) +
                                  " incompatible with the backbone stride chain (use 16k+1, e.g. 49 or 225)");
    if (variant == Variant::Heatmap) {
      if (dpt_taps.size() != 4) throw std::invalid_argument("config: dpt_taps needs exactly 4 layer indices");
      for (int t : dpt_taps)
        if (t < 1 || t > layers) throw std::invalid_argument("config: dpt tap layer outside 1..layers");
      if (dpt_channels.size() != 4) throw std::invalid_argument("config: dpt_channels needs 4 widths");
      if (dpt_fusion < 1) throw std::invalid_argument("config: dpt_fusion must be positive");
    }
  }
};

template <typename S>
struct ForwardResultT {
  TensorT<S> points;        // [N_p, 2], point variant
  HeatmapT<S> heatmap;      // heatmap variant
  TensorT<S> gaze_vectors;  // [N_p, 2], unit rows
  TensorT<S> inout_probs;   // [N_p, 1]
  TokenSequenceT<S> seq;    // assembled encoder input
  TensorT<S> person_tokens;  // [N_p, D] (the x_g rows)
  TensorT<S> x_out;          // [N_t, D]
};

template <typename S>
struct ModelT {
  ModelConfig cfg;
  LinearT<S> patch_embed;  // P_img
  TensorT<S> posenc;       // fixed [N, D]
  TensorT<S> global_token;
  GazeBackboneT<S> backbone;
  LinearT<S> p_gaze, p_bbox;
  MlpT<S> p_gpred;
  EncoderT<S> encoder;
  MlpT<S> point_head;
  DptDecoderT<S> dpt;
  MlpT<S> inout_head;

  ModelT() = default;

  ModelT(const ModelConfig& config, Rng& rng) : cfg(config) {
    cfg.validate();
    const int D = cfg.dim;
    patch_embed = LinearT<S>(cfg.patch * cfg.patch * cfg.channels, D, rng, cfg.init_std);
    posenc = posenc_2d<S>(cfg.grid_h(), cfg.grid_w(), D);
    global_token = TensorT<S>::zeros({1, D});
    init_gaussian(global_token, rng, cfg.init_std);
    global_token.set_requires_grad();
    backbone = GazeBackboneT<S>(cfg.crop_size, cfg.channels, cfg.backbone_channels, cfg.d_emb, rng);
    p_gaze = LinearT<S>(cfg.d_emb, D, rng, cfg.init_std);
    p_bbox = LinearT<S>(4, D, rng, cfg.init_std);
    p_gpred = MlpT<S>({cfg.d_emb, cfg.gpred_hidden, 2}, rng, cfg.init_std);
    encoder = EncoderT<S>(D, cfg.layers, cfg.heads, rng, cfg.init_std);
    if (cfg.variant == Variant::Point) point_head = make_point_decoder<S>(D, rng, cfg.init_std);
    if (cfg.variant == Variant::Heatmap) dpt = DptDecoderT<S>(D, cfg.dpt_channels, cfg.dpt_fusion, rng);
    inout_head = make_inout_head<S>(D, rng, cfg.init_std);
  }

  // image [H,W,C] -> positional-encoded tokens [N, D]
  TensorT<S> image_tokens(const TensorT<S>& image) const {
    PatchGridT<S> grid = patchify(image, cfg.patch);
    if (grid.grid_h != cfg.grid_h() || grid.grid_w != cfg.grid_w())
      throw std::invalid_argument("image_tokens: image " + shape_str(image.shape()) +
                                  " does not match configured size " + std::to_string(cfg.image_size));
    return add(patch_embed.forward(grid.vectors), posenc);
  }

  // head crops -> gaze embeddings [B, d_emb]
  TensorT<S> gaze_embeddings(const std::vector<PersonInputT<S>>& persons) const {
    return backbone.forward(stack_crops(persons));
  }

  // unit 2D gaze vectors [B, 2]
  TensorT<S> predict_gaze_vectors(const TensorT<S>& g_emb) const {
    return l2_normalize_lastdim(p_gpred.forward(g_emb), static_cast<S>(1e-8));
  }

  // location-aware person gaze tokens [B, D]: P_gaze(g_emb) + P_bbox(bbox)
  TensorT<S> make_gaze_tokens(const TensorT<S>& g_emb, const TensorT<S>& bboxes) const {
    return add(p_gaze.forward(g_emb), p_bbox.forward(bboxes));
  }

  ForwardResultT<S> forward(const TensorT<S>& image, const std::vector<PersonInputT<S>>& persons) const {
    if (persons.empty()) throw std::invalid_argument("forward: at least one person slot required");
    if (cfg.variant == Variant::Heatmap && persons.size() != 1)
      throw std::runtime_error("forward: heatmap variant accepts exactly one person, got " +
                               std::to_string(persons.size()));
    ForwardResultT<S> r;
    TensorT<S> x_img = image_tokens(image);
    TensorT<S> g_emb = gaze_embeddings(persons);
    r.gaze_vectors = predict_gaze_vectors(g_emb);
    r.person_tokens = make_gaze_tokens(g_emb, stack_bboxes(persons));
    r.seq = assemble(x_img, r.person_tokens, global_token);

    std::set<int> tap_set;
    if (cfg.variant == Variant::Heatmap) tap_set.insert(cfg.dpt_taps.begin(), cfg.dpt_taps.end());
    EncoderTapsT<S> taps;
    r.x_out = encoder.encode(r.seq, tap_set, cfg.variant == Variant::Heatmap ? &taps : nullptr);

    TensorT<S> person_out = slice_rows(r.x_out, r.seq.n_image, r.seq.n_person);  // [N_p, D]
    if (cfg.variant == Variant::Point) {
      r.points = point_head.forward(person_out);
    } else {
      std::vector<TensorT<S>> tap_list;
      for (int l : cfg.dpt_taps) tap_list.push_back(taps.at(l));
      r.heatmap = dpt.forward(tap_list, r.seq.n_image, cfg.grid_h(), cfg.grid_w());
    }
    r.inout_probs = inout_head.forward(concat<S>({person_out, r.person_tokens}, 1));
    return r;
  }

  NamedParams<S> named_params() const {
    NamedParams<S> out;
    patch_embed.params(out, "patch_embed");
    out.emplace_back("global_token", global_token);
    backbone.params(out, "backbone");
    p_gaze.params(out, "p_gaze");
    p_bbox.params(out, "p_bbox");
    p_gpred.params(out, "p_gpred");
    encoder.params(out, "encoder");
    if (cfg.variant == Variant::Point) point_head.params(out, "point_head");
    if (cfg.variant == Variant::Heatmap) dpt.params(out, "dpt");
    inout_head.params(out, "inout");
    return out;
  }
};

using Model = ModelT<float>;
using ModelD = ModelT<double>;

}  // namespace sharingan
