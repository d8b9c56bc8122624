// quiz: synthetic registration pairs, two-stage training, evaluation and
// point matching from the command line. Thin wrapper over the C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "quiz/quiz.h"

namespace {

int fail(quiz_status status) {
  std::cerr << "error: " << quiz_last_error() << "\n";
  return status == QUIZ_ERROR_INVALID_ARGUMENT ? 2 : 1;
}

struct VolumeHandle {
  quiz_volume* v = nullptr;
  ~VolumeHandle() { quiz_volume_free(v); }
};
struct LandmarksHandle {
  quiz_landmarks* l = nullptr;
  ~LandmarksHandle() { quiz_landmarks_free(l); }
};
struct ModelHandle {
  quiz_model* m = nullptr;
  ~ModelHandle() { quiz_model_free(m); }
};

int run_synth(int64_t n, const std::string& out, const quiz_synth_params& params) {
  if (auto s = quiz_synth_generate(&params, n, out.c_str())) return fail(s);
  std::cout << "wrote " << n << " pairs to " << out << "/pairs\n";
  return 0;
}

int run_train(const quiz_train_params& params, const std::string& dataset,
              const std::string& out) {
  if (auto s = quiz_train(&params, dataset.c_str(), out.c_str())) return fail(s);
  std::cout << "final checkpoint: " << out << "/final.qzck\n";
  return 0;
}

int run_eval(const std::string& model, const std::string& dataset,
             const std::string& out) {
  if (auto s = quiz_evaluate(model.c_str(), dataset.c_str(), out.c_str()))
    return fail(s);
  // echo the aggregate summary line for quick reading
  std::ifstream in(out);
  std::string line;
  while (std::getline(in, line)) {
    auto pos = line.find("\"summary\"");
    if (pos != std::string::npos) {
      std::cout << line.substr(line.find(':') + 2) << "\n";
      break;
    }
  }
  std::cout << "report: " << out << "\n";
  return 0;
}

int run_match(const std::string& model_path, const std::string& ref_path,
              const std::string& search_path, const std::string& queries_path,
              const std::string& out_path) {
  ModelHandle model;
  VolumeHandle ref, search;
  LandmarksHandle queries;
  if (auto s = quiz_model_load(model_path.c_str(), &model.m)) return fail(s);
  if (auto s = quiz_volume_load(ref_path.c_str(), &ref.v)) return fail(s);
  if (auto s = quiz_volume_load(search_path.c_str(), &search.v)) return fail(s);
  if (auto s = quiz_landmarks_load(queries_path.c_str(), &queries.l)) return fail(s);

  size_t n = quiz_landmarks_count(queries.l);
  std::vector<double> pts(n * 3), out_pts(n * 3);
  std::vector<const char*> names(n);
  for (size_t i = 0; i < n; ++i) {
    quiz_landmarks_point(queries.l, i, &pts[i * 3]);
    names[i] = quiz_landmarks_name(queries.l, i);
  }
  if (auto s = quiz_model_match(model.m, ref.v, search.v, pts.data(), n, out_pts.data(),
                                nullptr))
    return fail(s);

  LandmarksHandle result;
  if (auto s = quiz_landmarks_create(names.data(), out_pts.data(), n, &result.l))
    return fail(s);
  if (auto s = quiz_landmarks_save(result.l, out_path.c_str())) return fail(s);
  std::cout << "wrote " << n << " correspondences to " << out_path << "\n";
  return 0;
}

int run_warp(const std::string& in_path, const std::string& out_path,
             const std::vector<double>& shift) {
  VolumeHandle vol, warped;
  if (auto s = quiz_volume_load(in_path.c_str(), &vol.v)) return fail(s);
  double t[3] = {shift[0], shift[1], shift[2]};
  if (auto s = quiz_volume_translate(vol.v, t, &warped.v)) return fail(s);
  if (auto s = quiz_volume_save(warped.v, out_path.c_str())) return fail(s);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int run_plot(const std::string& model, const std::string& dataset,
             const std::string& csv, const std::string& svg) {
  if (auto s = quiz_plot_offsets(model.c_str(), dataset.c_str(), csv.c_str(),
                                 svg.c_str()))
    return fail(s);
  std::cout << "wrote " << csv << " and " << svg << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QUIZ query-point registration toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate synthetic pair directories");
  int64_t n = 10;
  std::string out_dir;
  quiz_synth_params sp;
  quiz_synth_params_default(&sp);
  synth->add_option("--n", n, "number of pairs")->required();
  synth->add_option("--out", out_dir, "output dataset directory")->required();
  synth->add_option("--seed", sp.seed, "root seed");
  synth->add_option("--side", sp.side, "reference cube side");
  synth->add_option("--crop-side", sp.crop_side, "search cube side");
  synth->add_option("--n-blobs", sp.n_blobs, "landmarks per pair");
  synth->add_option("--max-shift", sp.max_shift, "max |true shift| per axis (voxels)");
  synth->add_option("--noise-sigma", sp.noise_sigma, "search noise sigma");
  synth->add_option("--gamma", sp.modality_gamma, "search intensity remap exponent");

  // train
  auto* train = app.add_subcommand("train", "two-stage training");
  std::string dataset_dir, run_dir, config_path;
  quiz_train_params tp;
  quiz_train_params_default(&tp);
  train->add_option("--dataset", dataset_dir, "dataset directory")->required();
  train->add_option("--out", run_dir, "run directory for logs and checkpoints")
      ->required();
  train->add_option("--config", config_path, "JSON config (flags override it)");
  train->add_option("--lr", tp.lr, "learning rate");
  train->add_option("--batch_size", tp.batch_size, "pairs per step");
  train->add_option("--alpha", tp.alpha, "L_trans weight");
  train->add_option("--stage1_iters", tp.stage1_iters, "stage-1 iterations");
  train->add_option("--stage2_iters", tp.stage2_iters, "stage-2 iterations");
  train->add_option("--seed", tp.seed, "seed");
  train->add_option("--checkpoint_every", tp.checkpoint_every,
                    "periodic checkpoint interval (0 = off)");
  train->add_option("--dense_queries", tp.dense_queries,
                    "extra synthesized queries per pair per step");
  train->add_option("--input_size", tp.input_size, "model input cube side");
  train->add_option("--channels", tp.channels, "feature channels");
  train->add_option("--tf_layers", tp.tf_layers, "quizzer depth");
  train->add_option("--tf_heads", tp.tf_heads, "attention heads");
  train->add_option("--tf_dim", tp.tf_dim, "quizzer width");
  train->add_option("--mlp_hidden", tp.mlp_hidden, "head hidden width");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint over a dataset");
  std::string model_path, report_path = "report.json";
  eval->add_option("--model", model_path, "checkpoint path")->required();
  eval->add_option("--dataset", dataset_dir, "dataset directory")->required();
  eval->add_option("--out", report_path, "JSON report path");

  // match
  auto* match = app.add_subcommand("match", "predict correspondences for query points");
  std::string ref_path, search_path, queries_path, match_out;
  match->add_option("--model", model_path, "checkpoint path")->required();
  match->add_option("--ref", ref_path, "reference QVOL")->required();
  match->add_option("--search", search_path, "search QVOL")->required();
  match->add_option("--queries", queries_path, "query CSV (name,x,y,z)")->required();
  match->add_option("--out", match_out, "output CSV")->required();

  // warp
  auto* warp = app.add_subcommand("warp", "apply a voxel translation to a QVOL");
  std::string warp_in, warp_out;
  std::vector<double> shift;
  warp->add_option("--in", warp_in, "input QVOL")->required();
  warp->add_option("--out", warp_out, "output QVOL")->required();
  warp->add_option("--shift", shift, "tx ty tz in voxels")->expected(3)->required();

  // plot-offsets
  auto* plot = app.add_subcommand("plot-offsets",
                                  "per-axis prediction-error scatter (CSV + SVG)");
  std::string plot_csv, plot_svg;
  plot->add_option("--model", model_path, "checkpoint path")->required();
  plot->add_option("--dataset", dataset_dir, "dataset directory")->required();
  plot->add_option("--out-csv", plot_csv, "CSV output path")->required();
  plot->add_option("--out-svg", plot_svg, "SVG output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return run_synth(n, out_dir, sp);
    if (train->parsed()) {
      if (!config_path.empty()) {
        quiz_train_params file_params;
        if (auto s = quiz_train_params_from_json(config_path.c_str(), &file_params))
          return fail(s);
        // flags given on the command line win over the file
        quiz_train_params defaults;
        quiz_train_params_default(&defaults);
        if (!train->count("--lr")) tp.lr = file_params.lr;
        if (!train->count("--batch_size")) tp.batch_size = file_params.batch_size;
        if (!train->count("--alpha")) tp.alpha = file_params.alpha;
        if (!train->count("--stage1_iters")) tp.stage1_iters = file_params.stage1_iters;
        if (!train->count("--stage2_iters")) tp.stage2_iters = file_params.stage2_iters;
        if (!train->count("--seed")) tp.seed = file_params.seed;
        if (!train->count("--checkpoint_every"))
          tp.checkpoint_every = file_params.checkpoint_every;
        if (!train->count("--dense_queries"))
          tp.dense_queries = file_params.dense_queries;
        if (!train->count("--input_size")) tp.input_size = file_params.input_size;
        if (!train->count("--channels")) tp.channels = file_params.channels;
        if (!train->count("--tf_layers")) tp.tf_layers = file_params.tf_layers;
        if (!train->count("--tf_heads")) tp.tf_heads = file_params.tf_heads;
        if (!train->count("--tf_dim")) tp.tf_dim = file_params.tf_dim;
        if (!train->count("--mlp_hidden")) tp.mlp_hidden = file_params.mlp_hidden;
      }
      return run_train(tp, dataset_dir, run_dir);
    }
    if (eval->parsed()) return run_eval(model_path, dataset_dir, report_path);
    if (match->parsed())
      return run_match(model_path, ref_path, search_path, queries_path, match_out);
    if (warp->parsed()) return run_warp(warp_in, warp_out, shift);
    if (plot->parsed()) return run_plot(model_path, dataset_dir, plot_csv, plot_svg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
