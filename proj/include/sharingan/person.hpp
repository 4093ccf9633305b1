#pragma once

#include <array>

#include "sharingan/nn.hpp"

namespace sharingan {

// One person's head crop plus its normalized head box. Pad slots carry an
// all-zero crop and a (0,0,0,0) box.
template <typename S>
struct PersonInputT {
  TensorT<S> crop;               // [crop,crop,C], standardized like the scene image
  std::array<double, 4> bbox{};  // x_min, y_min, x_max, y_max in [0,1]
  bool is_pad = false;

  static PersonInputT pad(int crop_size, int channels) {
    PersonInputT p;
    p.crop = TensorT<S>::zeros({crop_size, crop_size, channels});
    p.bbox = {0.0, 0.0, 0.0, 0.0};
    p.is_pad = true;
    return p;
  }

  void validate() const {
    if (!(bbox[0] >= 0.0 && bbox[0] <= bbox[2] && bbox[2] <= 1.0 && bbox[1] >= 0.0 && bbox[1] <= bbox[3] &&
          bbox[3] <= 1.0))
      throw std::invalid_argument("person: invalid head box");
  }
};

using PersonInput = PersonInputT<float>;

// 4 strided conv blocks and a global average pool; emits one embedding per
// head crop.
template <typename S>
struct GazeBackboneT {
  std::vector<Conv2dT<S>> convs;
  int crop_size = 0, channels = 0, d_emb = 0;

  GazeBackboneT() = default;
  GazeBackboneT(int crop_size_, int channels_, const std::vector<int>& widths, int d_emb_, Rng& rng)
      : crop_size(crop_size_), channels(channels_), d_emb(d_emb_) {
    if (widths.size() != 3) throw std::invalid_argument("gaze backbone: expected 3 intermediate widths");
    int cin = channels_;
    for (int w : widths) {
      convs.emplace_back(cin, w, 3, 2, 1, rng);
      cin = w;
    }
    convs.emplace_back(cin, d_emb_, 3, 2, 1, rng);
  }

  // crops: [B,C,h,w] -> [B, d_emb]
  TensorT<S> forward(const TensorT<S>& crops) const {
    if (crops.rank() != 4 || crops.dim(2) != crop_size || crops.dim(3) != crop_size)
      throw std::invalid_argument("gaze backbone: expected crops [B,C," + std::to_string(crop_size) + "," +
                                  std::to_string(crop_size) + "], got " + shape_str(crops.shape()));
    TensorT<S> h = crops;
    for (const auto& c : convs) h = gelu(c.forward(h));
    return global_avg_pool(h);
  }

  void params(NamedParams<S>& out, const std::string& prefix) const {
    for (size_t i = 0; i < convs.size(); ++i) convs[i].params(out, prefix + ".conv" + std::to_string(i));
  }
};

// [h,w,C] -> [C,h,w]
template <typename S>
TensorT<S> hwc_to_chw(const TensorT<S>& x) {
  if (x.rank() != 3) throw std::invalid_argument("hwc_to_chw: expected rank-3 input");
  return transpose(x, {2, 0, 1});
}

// Stack per-person crops into a [B,C,h,w] batch.
template <typename S>
TensorT<S> stack_crops(const std::vector<PersonInputT<S>>& persons) {
  if (persons.empty()) throw std::invalid_argument("stack_crops: no persons");
  const int h = persons[0].crop.dim(0), w = persons[0].crop.dim(1), c = persons[0].crop.dim(2);
  TensorT<S> out = TensorT<S>::zeros({static_cast<int>(persons.size()), c, h, w});
  for (size_t p = 0; p < persons.size(); ++p) {
    const auto& crop = persons[p].crop;
    if (crop.dim(0) != h || crop.dim(1) != w || crop.dim(2) != c)
      throw std::invalid_argument("stack_crops: inconsistent crop shapes");
    S* dst = out.data() + p * static_cast<size_t>(c) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch)
          dst[(static_cast<size_t>(ch) * h + y) * w + x] = crop.data()[(static_cast<size_t>(y) * w + x) * c + ch];
  }
  return out;
}

// Head boxes as a [B,4] tensor.
template <typename S>
TensorT<S> stack_bboxes(const std::vector<PersonInputT<S>>& persons) {
  TensorT<S> out = TensorT<S>::zeros({static_cast<int>(persons.size()), 4});
  for (size_t p = 0; p < persons.size(); ++p)
    for (int i = 0; i < 4; ++i) out.data()[p * 4 + i] = static_cast<S>(persons[p].bbox[i]);
  return out;
}

// Fill unused slots with pad persons; mask marks the real ones.
template <typename S>
std::pair<std::vector<PersonInputT<S>>, std::vector<bool>> pad_person_slots(
    const std::vector<PersonInputT<S>>& persons, int capacity, int crop_size, int channels) {
  if (static_cast<int>(persons.size()) > capacity)
    throw std::invalid_argument("person slots: " + std::to_string(persons.size()) + " persons exceed capacity " +
                                std::to_string(capacity));
  std::vector<PersonInputT<S>> slots = persons;
  std::vector<bool> mask(capacity, false);
  for (size_t i = 0; i < persons.size(); ++i) mask[i] = true;
  while (static_cast<int>(slots.size()) < capacity) slots.push_back(PersonInputT<S>::pad(crop_size, channels));
  return {std::move(slots), std::move(mask)};
}

}  // namespace sharingan
