#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "sharingan/cli.hpp"

int main(int argc, char** argv) {
  using namespace sharingan;
  CLI::App app{"gaze-following transformer: data generation, training, evaluation, inference, verification"};
  app.require_subcommand(1);

  int env_threads = 1;
  if (const char* e = std::getenv("SHARINGAN_THREADS")) {
    const int v = std::atoi(e);
    if (v > 0) env_threads = v;
  }

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a toy gaze-world dataset");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "base seed");
  gen_cmd->add_option("--n-scenes", gen.n_scenes, "number of scenes");
  gen_cmd->add_option("--n-persons", gen.n_persons, "persons per scene");
  gen_cmd->add_option("--n-objects", gen.n_objects, "objects per scene");
  gen_cmd->add_option("--image-size", gen.image_size, "scene size in pixels");
  gen_cmd->add_option("--annotators", gen.annotators, "gaze points per instance");
  gen_cmd->add_option("--jitter-sigma", gen.jitter_sigma, "annotator jitter stddev");
  gen_cmd->add_option("--p-out", gen.p_out, "fraction of out-of-frame gazes");

  TrainArgs train;
  train.threads = 0;
  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("--config", train.config_path, "config file")->required();
  train_cmd->add_option("--resume", train.resume, "checkpoint to resume from");
  train_cmd->add_option("--threads", train.threads, "worker threads (overrides config)");

  EvalArgs eval;
  eval.threads = env_threads;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data, "annotation file")->required();
  eval_cmd->add_option("--np", eval.np_spec, "persons per forward: K, K1,K2,... or LO..HI");
  eval_cmd->add_option("--threads", eval.threads, "worker threads");

  InferArgs infer;
  auto* infer_cmd = app.add_subcommand("infer", "predict gaze for head boxes in an image");
  infer_cmd->add_option("--checkpoint", infer.checkpoint, "checkpoint file")->required();
  infer_cmd->add_option("--image", infer.image, "PPM image")->required();
  infer_cmd->add_option("--boxes", infer.boxes, "inline boxes x0,y0,x1,y1;...");
  infer_cmd->add_option("--boxes-file", infer.boxes_file, "file with one box per line");
  infer_cmd->add_option("--dump-heatmap", infer.dump_heatmap, "write the 64x64 score grid (heatmap variant)");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full model");
  gc_cmd->add_option("--scale", gc.scale, "model scale (micro)");
  gc_cmd->add_option("--tol", gc.tol, "max relative error");
  gc_cmd->add_option("--fd-step", gc.h, "finite-difference step");

  MakeConfigArgs mk;
  auto* mk_cmd = app.add_subcommand("make-config", "print a preset config");
  mk_cmd->add_option("--preset", mk.preset, "desk-point | desk-heatmap | paper-point | paper-heatmap");

  CLI11_PARSE(app, argc, argv);

  if (gen_cmd->parsed()) return cmd_gen_data(gen, std::cout, std::cerr);
  if (train_cmd->parsed()) return cmd_train(train, std::cout, std::cerr);
  if (eval_cmd->parsed()) return cmd_eval(eval, std::cout, std::cerr);
  if (infer_cmd->parsed()) return cmd_infer(infer, std::cout, std::cerr);
  if (gc_cmd->parsed()) return cmd_gradcheck(gc, std::cout, std::cerr);
  if (mk_cmd->parsed()) return cmd_make_config(mk, std::cout, std::cerr);
  return 1;
}
