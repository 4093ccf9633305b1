#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "sharingan/metrics.hpp"
#include "sharingan/person.hpp"

namespace sharingan {

struct ImageU8 {
  int w = 0, h = 0;
  std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel

  uint8_t* px(int x, int y) { return rgb.data() + (static_cast<size_t>(y) * w + x) * 3; }
  const uint8_t* px(int x, int y) const { return rgb.data() + (static_cast<size_t>(y) * w + x) * 3; }
};

// binary PPM (P6), 8-bit RGB
void write_ppm(const std::string& path, const ImageU8& img);
ImageU8 read_ppm(const std::string& path);

// One supervised instance: a person in an image with an in/out label and the
// annotated gaze points (empty allowed when the gaze is out of frame).
struct AnnotationRecord {
  std::string image_ref;
  std::array<double, 4> bbox{};  // x_min, y_min, x_max, y_max in [0,1]
  int inout = 0;
  std::vector<Vec2> gaze_points;

  void validate() const;
  Vec2 bbox_center() const { return {(bbox[0] + bbox[2]) / 2.0, (bbox[1] + bbox[3]) / 2.0}; }
  // training target: mean of the annotated points
  Vec2 target_point() const;
};

std::string serialize_record(const AnnotationRecord& r);
std::vector<AnnotationRecord> load_annotations(const std::string& path);
void save_annotations(const std::string& path, const std::vector<AnnotationRecord>& records,
                      const std::string& manifest_comment = "");

// ------------------------------------------------------------- toy gaze world

struct ToyParams {
  int image_size = 112;
  int n_persons = 4;
  int n_objects = 3;
  int marker_px = 13;      // person marker square side
  int tick_px = 3;         // orientation tick thickness
  int object_r_px = 7;     // target disc radius
  int crop_window_px = 27; // head crop window around the marker
  double p_out = 0.2;      // fraction of gazes leaving through the off-screen band
  int annotators = 1;      // >1 adds jittered copies of the gaze point
  double jitter_sigma = 0.02;
  int max_retries = 200;
};

struct ToyPerson {
  Vec2 center_px;  // marker center
  double theta = 0.0;
};

struct ToyObject {
  Vec2 center_px;
  int color_index = 0;
};

struct ToyScene {
  ImageU8 image;
  std::vector<ToyPerson> persons;
  std::vector<ToyObject> objects;
  std::vector<AnnotationRecord> records;  // one per person, image_ref unset
};

// palette used for object discs (exact values, flat fill)
const std::vector<std::array<uint8_t, 3>>& toy_object_palette();

// first object whose disc the ray (origin, theta) crosses with at least
// `margin_px` of clearance; ambiguous grazes return nullopt hits via the
// caller's resampling
struct RayHit {
  int object_index = -1;
  double t = 0.0;
};
std::optional<RayHit> ray_first_object(const Vec2& origin_px, double theta, const std::vector<ToyObject>& objects,
                                       double radius_px, double margin_px);
// whether some object is grazed within +-margin (direction is ambiguous)
bool ray_grazes_object(const Vec2& origin_px, double theta, const std::vector<ToyObject>& objects, double radius_px,
                       double margin_px);
// where the ray leaves the [0,size]x[0,size] square
Vec2 ray_exit_point(const Vec2& origin_px, double theta, int size);

// Deterministic in (seed, params). Throws on placement failure.
ToyScene gen_toy_scene(uint64_t seed, const ToyParams& params);

// Renders n_scenes toy scenes into dir: scene_%05d.ppm plus annotations.tsv
// with a manifest header. Returns the annotation file path.
std::string generate_dataset(const std::string& dir, uint64_t base_seed, int n_scenes, const ToyParams& params);

// ------------------------------------------------------------- model inputs

// u8 image -> [H,W,C] floats: scale to [0,1], then per-channel standardize
Tensor image_to_tensor(const ImageU8& img, const std::array<float, 3>& mean, const std::array<float, 3>& stddev);

// axis-aligned crop then bilinear resize to out_size x out_size
Tensor crop_head(const Tensor& image_hwc, const std::array<double, 4>& bbox, int out_size);

// A loaded annotation dataset with images, grouped by image in file order.
struct Dataset {
  std::string dir;
  std::vector<ImageU8> images;
  std::vector<std::string> image_names;
  std::vector<AnnotationRecord> records;
  std::vector<int> record_image;         // record index -> image index
  std::vector<std::vector<int>> groups;  // image index -> record indices

  static Dataset load(const std::string& annotation_path);
  int64_t n_records() const { return static_cast<int64_t>(records.size()); }
};

}  // namespace sharingan
