#include "sharingan/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "sharingan/rng.hpp"

namespace sharingan {

namespace fs = std::filesystem;

void write_ppm(const std::string& path, const ImageU8& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f << "P6\n" << img.w << " " << img.h << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!f) throw std::runtime_error("write_ppm: write failed for " + path);
}

ImageU8 read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw std::runtime_error("read_ppm: " + path + " is not a binary PPM");
  int w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  if (!f || w <= 0 || h <= 0 || maxval != 255) throw std::runtime_error("read_ppm: bad header in " + path);
  f.get();  // single whitespace after header
  ImageU8 img;
  img.w = w;
  img.h = h;
  img.rgb.resize(static_cast<size_t>(w) * h * 3);
  f.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.rgb.size()))
    throw std::runtime_error("read_ppm: truncated pixel data in " + path);
  return img;
}

void AnnotationRecord::validate() const {
  if (!(bbox[0] >= 0.0 && bbox[0] <= bbox[2] && bbox[2] <= 1.0 && bbox[1] >= 0.0 && bbox[1] <= bbox[3] &&
        bbox[3] <= 1.0))
    throw std::runtime_error("annotation: invalid head box for " + image_ref);
  if (inout != 0 && inout != 1) throw std::runtime_error("annotation: inout label must be 0 or 1");
  if (inout == 1 && gaze_points.empty())
    throw std::runtime_error("annotation: in-frame record without gaze points for " + image_ref);
  for (const auto& p : gaze_points)
    if (p.x < 0.0 || p.x > 1.0 || p.y < 0.0 || p.y > 1.0)
      throw std::runtime_error("annotation: gaze point outside [0,1]^2 for " + image_ref);
}

Vec2 AnnotationRecord::target_point() const {
  if (gaze_points.empty()) throw std::runtime_error("annotation: no gaze points for " + image_ref);
  Vec2 m;
  for (const auto& p : gaze_points) {
    m.x += p.x;
    m.y += p.y;
  }
  m.x /= static_cast<double>(gaze_points.size());
  m.y /= static_cast<double>(gaze_points.size());
  return m;
}

static std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string serialize_record(const AnnotationRecord& r) {
  std::ostringstream os;
  os << r.image_ref << '\t' << fmt6(r.bbox[0]) << '\t' << fmt6(r.bbox[1]) << '\t' << fmt6(r.bbox[2]) << '\t'
     << fmt6(r.bbox[3]) << '\t' << r.inout << '\t' << r.gaze_points.size();
  for (const auto& p : r.gaze_points) os << '\t' << fmt6(p.x) << '\t' << fmt6(p.y);
  return os.str();
}

static double parse_double_field(const std::string& s, int line_no, int field_no) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("annotations: line " + std::to_string(line_no) + " field " + std::to_string(field_no) +
                             ": not a number: '" + s + "'");
  }
}

std::vector<AnnotationRecord> load_annotations(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("annotations: cannot open " + path);
  std::vector<AnnotationRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, '\t')) fields.push_back(tok);
    if (fields.size() < 7)
      throw std::runtime_error("annotations: line " + std::to_string(line_no) + ": expected at least 7 fields, got " +
                               std::to_string(fields.size()));
    AnnotationRecord r;
    r.image_ref = fields[0];
    for (int i = 0; i < 4; ++i) r.bbox[static_cast<size_t>(i)] = parse_double_field(fields[1 + i], line_no, 2 + i);
    const double io = parse_double_field(fields[5], line_no, 6);
    r.inout = static_cast<int>(io);
    const int k = static_cast<int>(parse_double_field(fields[6], line_no, 7));
    if (k < 0 || static_cast<int>(fields.size()) != 7 + 2 * k)
      throw std::runtime_error("annotations: line " + std::to_string(line_no) + ": point count " + std::to_string(k) +
                               " does not match field count " + std::to_string(fields.size()));
    for (int i = 0; i < k; ++i) {
      Vec2 p;
      p.x = parse_double_field(fields[7 + 2 * i], line_no, 8 + 2 * i);
      p.y = parse_double_field(fields[8 + 2 * i], line_no, 9 + 2 * i);
      r.gaze_points.push_back(p);
    }
    try {
      r.validate();
    } catch (const std::exception& ex) {
      throw std::runtime_error("annotations: line " + std::to_string(line_no) + ": " + ex.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

void save_annotations(const std::string& path, const std::vector<AnnotationRecord>& records,
                      const std::string& manifest_comment) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("annotations: cannot open " + path + " for writing");
  if (!manifest_comment.empty()) f << "# " << manifest_comment << "\n";
  for (const auto& r : records) {
    r.validate();
    f << serialize_record(r) << "\n";
  }
  if (!f) throw std::runtime_error("annotations: write failed for " + path);
}

// ------------------------------------------------------------- toy gaze world

const std::vector<std::array<uint8_t, 3>>& toy_object_palette() {
  static const std::vector<std::array<uint8_t, 3>> palette = {
      {220, 40, 40}, {40, 170, 60}, {40, 80, 220}, {200, 40, 200}, {30, 180, 190}, {240, 140, 30}};
  return palette;
}

static constexpr uint8_t kBackground = 230;
static constexpr std::array<uint8_t, 3> kMarkerColor = {45, 45, 45};
static constexpr std::array<uint8_t, 3> kTickColor = {255, 200, 0};

std::optional<RayHit> ray_first_object(const Vec2& origin_px, double theta, const std::vector<ToyObject>& objects,
                                       double radius_px, double margin_px) {
  const double dx = std::cos(theta), dy = std::sin(theta);
  std::optional<RayHit> best;
  for (size_t i = 0; i < objects.size(); ++i) {
    const double ox = objects[i].center_px.x - origin_px.x;
    const double oy = objects[i].center_px.y - origin_px.y;
    const double t_closest = ox * dx + oy * dy;
    if (t_closest <= 0.0) continue;
    const double px = t_closest * dx - ox, py = t_closest * dy - oy;
    const double d = std::sqrt(px * px + py * py);
    if (d > radius_px - margin_px) continue;
    const double back = std::sqrt(std::max(0.0, radius_px * radius_px - d * d));
    const double t_enter = t_closest - back;
    if (!best || t_enter < best->t) best = RayHit{static_cast<int>(i), t_enter};
  }
  return best;
}

bool ray_grazes_object(const Vec2& origin_px, double theta, const std::vector<ToyObject>& objects, double radius_px,
                       double margin_px) {
  const double dx = std::cos(theta), dy = std::sin(theta);
  for (const auto& obj : objects) {
    const double ox = obj.center_px.x - origin_px.x;
    const double oy = obj.center_px.y - origin_px.y;
    const double t_closest = ox * dx + oy * dy;
    if (t_closest <= 0.0) continue;
    const double px = t_closest * dx - ox, py = t_closest * dy - oy;
    const double d = std::sqrt(px * px + py * py);
    if (d > radius_px - margin_px && d < radius_px + margin_px) return true;
  }
  return false;
}

Vec2 ray_exit_point(const Vec2& origin_px, double theta, int size) {
  const double dx = std::cos(theta), dy = std::sin(theta);
  double t_exit = 1e30;
  if (dx > 1e-12) t_exit = std::min(t_exit, (size - origin_px.x) / dx);
  if (dx < -1e-12) t_exit = std::min(t_exit, (0.0 - origin_px.x) / dx);
  if (dy > 1e-12) t_exit = std::min(t_exit, (size - origin_px.y) / dy);
  if (dy < -1e-12) t_exit = std::min(t_exit, (0.0 - origin_px.y) / dy);
  Vec2 e{origin_px.x + t_exit * dx, origin_px.y + t_exit * dy};
  e.x = std::min(std::max(e.x, 0.0), static_cast<double>(size));
  e.y = std::min(std::max(e.y, 0.0), static_cast<double>(size));
  return e;
}

static void fill_square(ImageU8& img, const Vec2& c, int side, const std::array<uint8_t, 3>& color) {
  const int half = side / 2;
  const int cx = static_cast<int>(c.x), cy = static_cast<int>(c.y);
  for (int y = std::max(0, cy - half); y <= std::min(img.h - 1, cy + half); ++y)
    for (int x = std::max(0, cx - half); x <= std::min(img.w - 1, cx + half); ++x)
      std::memcpy(img.px(x, y), color.data(), 3);
}

static void fill_disc(ImageU8& img, const Vec2& c, double r, const std::array<uint8_t, 3>& color) {
  for (int y = std::max(0, static_cast<int>(c.y - r) - 1); y <= std::min(img.h - 1, static_cast<int>(c.y + r) + 1);
       ++y)
    for (int x = std::max(0, static_cast<int>(c.x - r) - 1); x <= std::min(img.w - 1, static_cast<int>(c.x + r) + 1);
         ++x) {
      const double ddx = x + 0.5 - c.x, ddy = y + 0.5 - c.y;
      if (ddx * ddx + ddy * ddy <= r * r) std::memcpy(img.px(x, y), color.data(), 3);
    }
}

// thick segment from the marker center along theta
static void draw_tick(ImageU8& img, const Vec2& c, double theta, double len, double thickness,
                      const std::array<uint8_t, 3>& color) {
  const double dx = std::cos(theta), dy = std::sin(theta);
  const double half = thickness / 2.0;
  const int x0 = std::max(0, static_cast<int>(std::min(c.x, c.x + len * dx) - half) - 1);
  const int x1 = std::min(img.w - 1, static_cast<int>(std::max(c.x, c.x + len * dx) + half) + 1);
  const int y0 = std::max(0, static_cast<int>(std::min(c.y, c.y + len * dy) - half) - 1);
  const int y1 = std::min(img.h - 1, static_cast<int>(std::max(c.y, c.y + len * dy) + half) + 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5 - c.x, py = y + 0.5 - c.y;
      double t = px * dx + py * dy;
      t = std::min(std::max(t, 0.0), len);
      const double qx = px - t * dx, qy = py - t * dy;
      if (qx * qx + qy * qy <= half * half) std::memcpy(img.px(x, y), color.data(), 3);
    }
}

ToyScene gen_toy_scene(uint64_t seed, const ToyParams& p) {
  Rng rng(seed);
  const int S = p.image_size;
  const double tick_len = p.marker_px;
  const double marker_clear = p.marker_px / 2.0 + tick_len;

  // entity placement with pairwise separation, bounded retries
  ToyScene scene;
  const double marker_margin = p.crop_window_px / 2.0 + 1.0;
  const double object_margin = p.object_r_px + 2.0;
  auto place = [&](double margin, double min_sep_marker, double min_sep_object) -> std::optional<Vec2> {
    for (int attempt = 0; attempt < p.max_retries; ++attempt) {
      Vec2 c{rng.uniform(margin, S - margin), rng.uniform(margin, S - margin)};
      bool ok = true;
      for (const auto& m : scene.persons)
        if (dist(c, m.center_px) < min_sep_marker) ok = false;
      for (const auto& o : scene.objects)
        if (dist(c, o.center_px) < min_sep_object) ok = false;
      if (ok) return c;
    }
    return std::nullopt;
  };

  for (int i = 0; i < p.n_persons; ++i) {
    auto c = place(marker_margin, 2.0 * marker_clear + 2.0, marker_clear + p.object_r_px + 2.0);
    if (!c) throw std::runtime_error("toy scene: marker placement failed, re-seed or relax parameters");
    scene.persons.push_back({*c, 0.0});
  }
  for (int i = 0; i < p.n_objects; ++i) {
    auto c = place(object_margin, marker_clear + p.object_r_px + 2.0, 2.0 * p.object_r_px + 4.0);
    if (!c) throw std::runtime_error("toy scene: object placement failed, re-seed or relax parameters");
    scene.objects.push_back({*c, i % static_cast<int>(toy_object_palette().size())});
  }

  // orientations: rejection-sample theta for the desired in/out outcome;
  // grazing rays are ambiguous and always rejected
  const double graze_margin = 1.0;
  for (auto& person : scene.persons) {
    const bool want_out = rng.uniform() < p.p_out;
    double theta = 0.0;
    std::optional<RayHit> hit;
    bool out = false;
    bool found = false;
    for (int attempt = 0; attempt < p.max_retries; ++attempt) {
      theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
      if (ray_grazes_object(person.center_px, theta, scene.objects, p.object_r_px, graze_margin)) continue;
      hit = ray_first_object(person.center_px, theta, scene.objects, p.object_r_px, graze_margin);
      if (!hit) {
        const Vec2 e = ray_exit_point(person.center_px, theta, S);
        out = e.y <= 0.0;  // the off-screen band is the top edge
      } else {
        out = false;
      }
      if (out == want_out) {
        found = true;
        break;
      }
    }
    if (!found) {
      // keep the last sampled direction; the label follows the geometry
    }
    person.theta = theta;

    AnnotationRecord rec;
    const double half_w = p.crop_window_px / 2.0;
    double x0 = std::min(std::max(person.center_px.x - half_w, 0.0), static_cast<double>(S - p.crop_window_px));
    double y0 = std::min(std::max(person.center_px.y - half_w, 0.0), static_cast<double>(S - p.crop_window_px));
    rec.bbox = {x0 / S, y0 / S, (x0 + p.crop_window_px) / S, (y0 + p.crop_window_px) / S};

    Vec2 gt;
    if (hit) {
      gt = scene.objects[static_cast<size_t>(hit->object_index)].center_px;
      rec.inout = 1;
    } else {
      const Vec2 e = ray_exit_point(person.center_px, theta, S);
      if (e.y <= 0.0) {
        rec.inout = 0;
      } else {
        gt = e;
        rec.inout = 1;
      }
    }
    if (rec.inout == 1) {
      Vec2 base{std::min(std::max(gt.x / S, 0.0), 1.0), std::min(std::max(gt.y / S, 0.0), 1.0)};
      if (p.annotators <= 1) {
        rec.gaze_points.push_back(base);
      } else {
        for (int a = 0; a < p.annotators; ++a) {
          Vec2 j{base.x + rng.normal(0.0, p.jitter_sigma), base.y + rng.normal(0.0, p.jitter_sigma)};
          j.x = std::min(std::max(j.x, 0.0), 1.0);
          j.y = std::min(std::max(j.y, 0.0), 1.0);
          rec.gaze_points.push_back(j);
        }
      }
    }
    scene.records.push_back(std::move(rec));
  }

  // render: background, markers with ticks, then object discs
  scene.image.w = S;
  scene.image.h = S;
  scene.image.rgb.assign(static_cast<size_t>(S) * S * 3, kBackground);
  for (const auto& person : scene.persons) {
    fill_square(scene.image, person.center_px, p.marker_px, kMarkerColor);
    draw_tick(scene.image, person.center_px, person.theta, tick_len, p.tick_px, kTickColor);
  }
  for (const auto& obj : scene.objects)
    fill_disc(scene.image, obj.center_px, p.object_r_px, toy_object_palette()[static_cast<size_t>(obj.color_index)]);

  return scene;
}

std::string generate_dataset(const std::string& dir, uint64_t base_seed, int n_scenes, const ToyParams& p) {
  fs::create_directories(dir);
  std::vector<AnnotationRecord> records;
  for (int i = 0; i < n_scenes; ++i) {
    // placement failures for one sub-seed fall through to the next attempt
    ToyScene scene;
    bool ok = false;
    for (int attempt = 0; attempt < 16 && !ok; ++attempt) {
      try {
        scene = gen_toy_scene(mix_seed(base_seed, static_cast<uint64_t>(i) * 16 + attempt), p);
        ok = true;
      } catch (const std::runtime_error&) {
        if (attempt == 15) throw;
      }
    }
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%05d.ppm", i);
    write_ppm((fs::path(dir) / name).string(), scene.image);
    for (auto& r : scene.records) {
      r.image_ref = name;
      records.push_back(std::move(r));
    }
  }
  std::ostringstream manifest;
  manifest << "seed=" << base_seed << " params=image_size=" << p.image_size << ",n_persons=" << p.n_persons
           << ",n_objects=" << p.n_objects << ",marker_px=" << p.marker_px << ",object_r_px=" << p.object_r_px
           << ",crop_window_px=" << p.crop_window_px << ",p_out=" << p.p_out << ",annotators=" << p.annotators
           << ",jitter_sigma=" << p.jitter_sigma << ",n_scenes=" << n_scenes;
  const std::string ann_path = (fs::path(dir) / "annotations.tsv").string();
  save_annotations(ann_path, records, manifest.str());
  return ann_path;
}

// ------------------------------------------------------------- model inputs

Tensor image_to_tensor(const ImageU8& img, const std::array<float, 3>& mean, const std::array<float, 3>& stddev) {
  Tensor t = Tensor::zeros({img.h, img.w, 3});
  const size_t n = static_cast<size_t>(img.h) * img.w;
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) {
      const float v = static_cast<float>(img.rgb[i * 3 + static_cast<size_t>(c)]) / 255.0f;
      t.data()[i * 3 + static_cast<size_t>(c)] = (v - mean[static_cast<size_t>(c)]) / stddev[static_cast<size_t>(c)];
    }
  return t;
}

Tensor crop_head(const Tensor& image_hwc, const std::array<double, 4>& bbox, int out_size) {
  if (image_hwc.rank() != 3) throw std::invalid_argument("crop_head: expected [H,W,C] image");
  const int H = image_hwc.dim(0), W = image_hwc.dim(1), C = image_hwc.dim(2);
  const double x0 = bbox[0] * W, y0 = bbox[1] * H;
  const double bw = (bbox[2] - bbox[0]) * W, bh = (bbox[3] - bbox[1]) * H;
  if (bw <= 0.0 || bh <= 0.0) throw std::runtime_error("crop_head: zero-area head box");
  Tensor out = Tensor::zeros({out_size, out_size, C});
  for (int oy = 0; oy < out_size; ++oy) {
    double sy = y0 + (oy + 0.5) * bh / out_size - 0.5;
    sy = std::min(std::max(sy, 0.0), static_cast<double>(H - 1));
    const int iy0 = static_cast<int>(sy), iy1 = std::min(iy0 + 1, H - 1);
    const float wy = static_cast<float>(sy - iy0);
    for (int ox = 0; ox < out_size; ++ox) {
      double sx = x0 + (ox + 0.5) * bw / out_size - 0.5;
      sx = std::min(std::max(sx, 0.0), static_cast<double>(W - 1));
      const int ix0 = static_cast<int>(sx), ix1 = std::min(ix0 + 1, W - 1);
      const float wx = static_cast<float>(sx - ix0);
      for (int c = 0; c < C; ++c) {
        const float v00 = image_hwc.data()[(static_cast<size_t>(iy0) * W + ix0) * C + c];
        const float v01 = image_hwc.data()[(static_cast<size_t>(iy0) * W + ix1) * C + c];
        const float v10 = image_hwc.data()[(static_cast<size_t>(iy1) * W + ix0) * C + c];
        const float v11 = image_hwc.data()[(static_cast<size_t>(iy1) * W + ix1) * C + c];
        out.data()[(static_cast<size_t>(oy) * out_size + ox) * C + c] =
            (v00 * (1 - wx) + v01 * wx) * (1 - wy) + (v10 * (1 - wx) + v11 * wx) * wy;
      }
    }
  }
  return out;
}

Dataset Dataset::load(const std::string& annotation_path) {
  Dataset ds;
  ds.dir = fs::path(annotation_path).parent_path().string();
  ds.records = load_annotations(annotation_path);
  std::unordered_map<std::string, int> name_to_index;
  for (size_t ri = 0; ri < ds.records.size(); ++ri) {
    const std::string& ref = ds.records[ri].image_ref;
    auto it = name_to_index.find(ref);
    int idx;
    if (it == name_to_index.end()) {
      idx = static_cast<int>(ds.images.size());
      name_to_index.emplace(ref, idx);
      ds.images.push_back(read_ppm((fs::path(ds.dir) / ref).string()));
      ds.image_names.push_back(ref);
      ds.groups.emplace_back();
    } else {
      idx = it->second;
    }
    ds.record_image.push_back(idx);
    ds.groups[static_cast<size_t>(idx)].push_back(static_cast<int>(ri));
  }
  return ds;
}

}  // namespace sharingan
