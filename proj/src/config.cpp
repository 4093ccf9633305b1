#include "sharingan/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace sharingan {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "': not a number: '" + v + "'");
  }
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int64_t d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "': not an integer: '" + v + "'");
  }
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(static_cast<int>(parse_int(key, tok)));
  return out;
}

std::string fmt_int_list(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << v[i];
  }
  return os.str();
}

std::string fmt_f3(const std::array<float, 3>& v) {
  std::ostringstream os;
  os << fmt_double(v[0]) << ',' << fmt_double(v[1]) << ',' << fmt_double(v[2]);
  return os.str();
}

std::array<float, 3> parse_f3(const std::string& key, const std::string& v) {
  std::array<float, 3> out{};
  std::stringstream ss(v);
  std::string tok;
  int i = 0;
  while (std::getline(ss, tok, ',')) {
    if (i >= 3) throw std::runtime_error("config: key '" + key + "': expected 3 values");
    out[static_cast<size_t>(i++)] = static_cast<float>(parse_double(key, tok));
  }
  if (i != 3) throw std::runtime_error("config: key '" + key + "': expected 3 values");
  return out;
}

struct KeyHandler {
  const char* name;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

const std::vector<KeyHandler>& handlers() {
  static const std::vector<KeyHandler> h = {
      {"variant", [](const TrainConfig& c) { return std::string(variant_name(c.variant)); },
       [](TrainConfig& c, const std::string& v) {
         if (v == "point") c.variant = Variant::Point;
         else if (v == "heatmap") c.variant = Variant::Heatmap;
         else throw std::runtime_error("config: key 'variant': expected point or heatmap, got '" + v + "'");
       }},
      {"seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
       [](TrainConfig& c, const std::string& v) { c.seed = static_cast<uint64_t>(parse_int("seed", v)); }},
      {"image_size", [](const TrainConfig& c) { return std::to_string(c.image_size); },
       [](TrainConfig& c, const std::string& v) { c.image_size = static_cast<int>(parse_int("image_size", v)); }},
      {"channels", [](const TrainConfig& c) { return std::to_string(c.channels); },
       [](TrainConfig& c, const std::string& v) { c.channels = static_cast<int>(parse_int("channels", v)); }},
      {"patch_size", [](const TrainConfig& c) { return std::to_string(c.patch_size); },
       [](TrainConfig& c, const std::string& v) { c.patch_size = static_cast<int>(parse_int("patch_size", v)); }},
      {"dim", [](const TrainConfig& c) { return std::to_string(c.dim); },
       [](TrainConfig& c, const std::string& v) { c.dim = static_cast<int>(parse_int("dim", v)); }},
      {"layers", [](const TrainConfig& c) { return std::to_string(c.layers); },
       [](TrainConfig& c, const std::string& v) { c.layers = static_cast<int>(parse_int("layers", v)); }},
      {"heads", [](const TrainConfig& c) { return std::to_string(c.heads); },
       [](TrainConfig& c, const std::string& v) { c.heads = static_cast<int>(parse_int("heads", v)); }},
      {"n_persons", [](const TrainConfig& c) { return std::to_string(c.n_persons); },
       [](TrainConfig& c, const std::string& v) { c.n_persons = static_cast<int>(parse_int("n_persons", v)); }},
      {"crop_size", [](const TrainConfig& c) { return std::to_string(c.crop_size); },
       [](TrainConfig& c, const std::string& v) { c.crop_size = static_cast<int>(parse_int("crop_size", v)); }},
      {"d_emb", [](const TrainConfig& c) { return std::to_string(c.d_emb); },
       [](TrainConfig& c, const std::string& v) { c.d_emb = static_cast<int>(parse_int("d_emb", v)); }},
      {"backbone_channels", [](const TrainConfig& c) { return fmt_int_list(c.backbone_channels); },
       [](TrainConfig& c, const std::string& v) { c.backbone_channels = parse_int_list("backbone_channels", v); }},
      {"gpred_hidden", [](const TrainConfig& c) { return std::to_string(c.gpred_hidden); },
       [](TrainConfig& c, const std::string& v) { c.gpred_hidden = static_cast<int>(parse_int("gpred_hidden", v)); }},
      {"dpt_taps", [](const TrainConfig& c) { return fmt_int_list(c.dpt_taps); },
       [](TrainConfig& c, const std::string& v) { c.dpt_taps = parse_int_list("dpt_taps", v); }},
      {"dpt_channels", [](const TrainConfig& c) { return fmt_int_list(c.dpt_channels); },
       [](TrainConfig& c, const std::string& v) { c.dpt_channels = parse_int_list("dpt_channels", v); }},
      {"dpt_fusion", [](const TrainConfig& c) { return std::to_string(c.dpt_fusion); },
       [](TrainConfig& c, const std::string& v) { c.dpt_fusion = static_cast<int>(parse_int("dpt_fusion", v)); }},
      {"init_std", [](const TrainConfig& c) { return fmt_double(c.init_std); },
       [](TrainConfig& c, const std::string& v) { c.init_std = parse_double("init_std", v); }},
      {"norm_mean", [](const TrainConfig& c) { return fmt_f3(c.norm_mean); },
       [](TrainConfig& c, const std::string& v) { c.norm_mean = parse_f3("norm_mean", v); }},
      {"norm_std", [](const TrainConfig& c) { return fmt_f3(c.norm_std); },
       [](TrainConfig& c, const std::string& v) { c.norm_std = parse_f3("norm_std", v); }},
      {"base_lr", [](const TrainConfig& c) { return fmt_double(c.base_lr); },
       [](TrainConfig& c, const std::string& v) { c.base_lr = parse_double("base_lr", v); }},
      {"lr_min", [](const TrainConfig& c) { return fmt_double(c.lr_min); },
       [](TrainConfig& c, const std::string& v) { c.lr_min = parse_double("lr_min", v); }},
      {"weight_decay", [](const TrainConfig& c) { return fmt_double(c.weight_decay); },
       [](TrainConfig& c, const std::string& v) { c.weight_decay = parse_double("weight_decay", v); }},
      {"beta1", [](const TrainConfig& c) { return fmt_double(c.beta1); },
       [](TrainConfig& c, const std::string& v) { c.beta1 = parse_double("beta1", v); }},
      {"beta2", [](const TrainConfig& c) { return fmt_double(c.beta2); },
       [](TrainConfig& c, const std::string& v) { c.beta2 = parse_double("beta2", v); }},
      {"adam_eps", [](const TrainConfig& c) { return fmt_double(c.adam_eps); },
       [](TrainConfig& c, const std::string& v) { c.adam_eps = parse_double("adam_eps", v); }},
      {"clip_norm", [](const TrainConfig& c) { return fmt_double(c.clip_norm); },
       [](TrainConfig& c, const std::string& v) { c.clip_norm = parse_double("clip_norm", v); }},
      {"batch_size", [](const TrainConfig& c) { return std::to_string(c.batch_size); },
       [](TrainConfig& c, const std::string& v) { c.batch_size = static_cast<int>(parse_int("batch_size", v)); }},
      {"total_steps", [](const TrainConfig& c) { return std::to_string(c.total_steps); },
       [](TrainConfig& c, const std::string& v) { c.total_steps = parse_int("total_steps", v); }},
      {"warmup_steps", [](const TrainConfig& c) { return std::to_string(c.warmup_steps); },
       [](TrainConfig& c, const std::string& v) { c.warmup_steps = parse_int("warmup_steps", v); }},
      {"restart_period", [](const TrainConfig& c) { return std::to_string(c.restart_period); },
       [](TrainConfig& c, const std::string& v) { c.restart_period = parse_int("restart_period", v); }},
      {"restart_mult", [](const TrainConfig& c) { return fmt_double(c.restart_mult); },
       [](TrainConfig& c, const std::string& v) { c.restart_mult = parse_double("restart_mult", v); }},
      {"lambda_reg", [](const TrainConfig& c) { return fmt_double(c.lambda_reg); },
       [](TrainConfig& c, const std::string& v) { c.lambda_reg = parse_double("lambda_reg", v); }},
      {"lambda_ang", [](const TrainConfig& c) { return fmt_double(c.lambda_ang); },
       [](TrainConfig& c, const std::string& v) { c.lambda_ang = parse_double("lambda_ang", v); }},
      {"lambda_io", [](const TrainConfig& c) { return fmt_double(c.lambda_io); },
       [](TrainConfig& c, const std::string& v) { c.lambda_io = parse_double("lambda_io", v); }},
      {"gt_sigma", [](const TrainConfig& c) { return fmt_double(c.gt_sigma); },
       [](TrainConfig& c, const std::string& v) { c.gt_sigma = parse_double("gt_sigma", v); }},
      {"train_data", [](const TrainConfig& c) { return c.train_data; },
       [](TrainConfig& c, const std::string& v) { c.train_data = v; }},
      {"val_data", [](const TrainConfig& c) { return c.val_data; },
       [](TrainConfig& c, const std::string& v) { c.val_data = v; }},
      {"eval_every", [](const TrainConfig& c) { return std::to_string(c.eval_every); },
       [](TrainConfig& c, const std::string& v) { c.eval_every = parse_int("eval_every", v); }},
      {"checkpoint_every", [](const TrainConfig& c) { return std::to_string(c.checkpoint_every); },
       [](TrainConfig& c, const std::string& v) { c.checkpoint_every = parse_int("checkpoint_every", v); }},
      {"log_every", [](const TrainConfig& c) { return std::to_string(c.log_every); },
       [](TrainConfig& c, const std::string& v) { c.log_every = parse_int("log_every", v); }},
      {"checkpoint_dir", [](const TrainConfig& c) { return c.checkpoint_dir; },
       [](TrainConfig& c, const std::string& v) { c.checkpoint_dir = v; }},
      {"threads", [](const TrainConfig& c) { return std::to_string(c.threads); },
       [](TrainConfig& c, const std::string& v) { c.threads = static_cast<int>(parse_int("threads", v)); }},
  };
  return h;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::string serialize_config(const TrainConfig& cfg) {
  std::ostringstream os;
  for (const auto& h : handlers()) os << h.name << " = " << h.get(cfg) << "\n";
  return os.str();
}

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    bool known = false;
    for (const auto& h : handlers()) {
      if (key == h.name) {
        h.set(cfg, value);
        known = true;
        break;
      }
    }
    if (!known) throw std::runtime_error("config: unknown key '" + key + "'");
  }
  cfg.finalize();
  return cfg;
}

TrainConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return parse_config_text(os.str());
}

TrainConfig desk_point_config() {
  TrainConfig c;
  c.variant = Variant::Point;
  c.image_size = 112;
  c.dim = 64;
  c.layers = 4;
  c.heads = 4;
  c.n_persons = 4;
  c.crop_size = 33;
  c.d_emb = 64;
  c.backbone_channels = {8, 16, 32};
  c.gpred_hidden = 64;
  c.base_lr = 1e-3;
  c.batch_size = 8;
  c.total_steps = 3000;
  c.warmup_steps = 200;
  c.restart_period = 1000;
  c.eval_every = 250;
  c.checkpoint_every = 1000;
  c.log_every = 50;
  c.finalize();
  return c;
}

TrainConfig desk_heatmap_config() {
  TrainConfig c = desk_point_config();
  c.variant = Variant::Heatmap;
  c.n_persons = 1;
  c.dpt_taps = {1, 2, 3, 4};
  c.dpt_channels = {8, 16, 32, 64};
  c.dpt_fusion = 16;
  c.total_steps = 4000;
  c.lambda_reg = -1.0;
  c.finalize();
  return c;
}

ModelConfig micro_model_config(Variant variant) {
  ModelConfig m;
  m.variant = variant;
  m.image_size = 48;
  m.channels = 1;
  m.patch = 16;
  m.dim = 32;
  m.layers = 2;
  m.heads = 2;
  m.n_persons = variant == Variant::Heatmap ? 1 : 2;
  m.crop_size = 17;
  m.d_emb = 8;
  m.backbone_channels = {2, 4, 4};
  m.gpred_hidden = 16;
  m.dpt_taps = {1, 1, 2, 2};
  m.dpt_channels = {4, 8, 16, 32};
  m.dpt_fusion = 8;
  m.init_std = 0.1;  // keeps activations away from flat regions for finite differences
  return m;
}

}  // namespace sharingan
