#pragma once

#include <iostream>
#include <string>

namespace sharingan {

struct GenDataArgs {
  std::string out;
  uint64_t seed = 1;
  int n_scenes = 100;
  int n_persons = 4;
  int n_objects = 3;
  int image_size = 112;
  int annotators = 1;
  double jitter_sigma = 0.02;
  double p_out = 0.2;
};
int cmd_gen_data(const GenDataArgs& args, std::ostream& out, std::ostream& err);

struct TrainArgs {
  std::string config_path;
  std::string resume;
  int threads = 0;  // 0: keep the config value
};
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string np_spec;  // "4", "1,2,3" or "1..6"; empty: the trained capacity
  int threads = 1;
};
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);

struct InferArgs {
  std::string checkpoint;
  std::string image;
  std::string boxes;       // inline "x0,y0,x1,y1;x0,y0,x1,y1;..."
  std::string boxes_file;  // one box per line
  std::string dump_heatmap;
};
int cmd_infer(const InferArgs& args, std::ostream& out, std::ostream& err);

struct GradcheckArgs {
  std::string scale = "micro";
  double tol = 1e-4;
  double h = 1e-5;
};
int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err);

struct MakeConfigArgs {
  std::string preset = "desk-point";  // desk-point | desk-heatmap | paper-point | paper-heatmap
};
int cmd_make_config(const MakeConfigArgs& args, std::ostream& out, std::ostream& err);

}  // namespace sharingan
