#include "quiz/quiz.h"

#include <cstring>
#include <fstream>
#include <string>

#include "core/dataset.hpp"
#include "core/geometry.hpp"
#include "core/landmarks.hpp"
#include "core/model.hpp"
#include "core/synthetic.hpp"
#include "core/train.hpp"
#include "core/types.hpp"
#include "core/volume.hpp"

using quiz::Error;
using quiz::Vec3;

struct quiz_volume {
  quiz::Volume vol;
};
struct quiz_landmarks {
  quiz::LandmarkSet set;
};
struct quiz_model {
  quiz::QuizModel model;
};

namespace {

thread_local std::string g_last_error;

quiz_status status_of(const Error& e) {
  switch (e.kind()) {
    case Error::Kind::InvalidArgument: return QUIZ_ERROR_INVALID_ARGUMENT;
    case Error::Kind::Io: return QUIZ_ERROR_IO;
    case Error::Kind::Format: return QUIZ_ERROR_FORMAT;
    case Error::Kind::Runtime: return QUIZ_ERROR_RUNTIME;
  }
  return QUIZ_ERROR_RUNTIME;
}

template <typename Fn>
quiz_status guarded(Fn&& fn) {
  try {
    fn();
    return QUIZ_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return QUIZ_ERROR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return QUIZ_ERROR_RUNTIME;
  }
}

quiz_status need(bool ok, const char* what) {
  if (ok) return QUIZ_OK;
  g_last_error = std::string("null argument: ") + what;
  return QUIZ_ERROR_INVALID_ARGUMENT;
}

Vec3 vec_of(const double v[3]) { return {v[0], v[1], v[2]}; }

void vec_to(const Vec3& v, double out[3]) {
  out[0] = v.x;
  out[1] = v.y;
  out[2] = v.z;
}

}  // namespace

extern "C" {

const char* quiz_version(void) { return "quiz 0.1.0"; }

const char* quiz_last_error(void) { return g_last_error.c_str(); }

/* ---- volumes ------------------------------------------------------------ */

quiz_status quiz_volume_create(const int64_t dims_xyz[3], const double spacing_xyz[3],
                               const double origin_xyz[3], const float* data_zyx,
                               quiz_volume** out) {
  if (auto s = need(dims_xyz && spacing_xyz && origin_xyz && data_zyx && out, "create"))
    return s;
  return guarded([&] {
    quiz::Dims3 dims{dims_xyz[0], dims_xyz[1], dims_xyz[2]};
    std::vector<float> data(data_zyx, data_zyx + dims.count());
    *out = new quiz_volume{quiz::Volume(dims, vec_of(spacing_xyz), vec_of(origin_xyz),
                                        std::move(data))};
  });
}

quiz_status quiz_volume_load(const char* path, quiz_volume** out) {
  if (auto s = need(path && out, "load")) return s;
  return guarded([&] { *out = new quiz_volume{quiz::load_volume(path)}; });
}

quiz_status quiz_volume_save(const quiz_volume* vol, const char* path) {
  if (auto s = need(vol && path, "save")) return s;
  return guarded([&] { quiz::save_volume(vol->vol, path); });
}

void quiz_volume_free(quiz_volume* vol) { delete vol; }

void quiz_volume_dims(const quiz_volume* vol, int64_t out_xyz[3]) {
  out_xyz[0] = vol->vol.dims().x;
  out_xyz[1] = vol->vol.dims().y;
  out_xyz[2] = vol->vol.dims().z;
}

void quiz_volume_spacing(const quiz_volume* vol, double out_xyz[3]) {
  vec_to(vol->vol.spacing(), out_xyz);
}

void quiz_volume_origin(const quiz_volume* vol, double out_xyz[3]) {
  vec_to(vol->vol.origin(), out_xyz);
}

const float* quiz_volume_data(const quiz_volume* vol) { return vol->vol.data().data(); }

quiz_status quiz_volume_translate(const quiz_volume* vol, const double shift_xyz[3],
                                  quiz_volume** out) {
  if (auto s = need(vol && shift_xyz && out, "translate")) return s;
  return guarded([&] {
    *out = new quiz_volume{quiz::warp_translate(vol->vol, vec_of(shift_xyz))};
  });
}

quiz_status quiz_volume_resample(const quiz_volume* vol, const int64_t dims_xyz[3],
                                 const double spacing_xyz[3],
                                 const double* origin_xyz_or_null, quiz_volume** out) {
  if (auto s = need(vol && dims_xyz && spacing_xyz && out, "resample")) return s;
  return guarded([&] {
    quiz::Dims3 dims{dims_xyz[0], dims_xyz[1], dims_xyz[2]};
    Vec3 origin = origin_xyz_or_null ? vec_of(origin_xyz_or_null) : vol->vol.origin();
    *out = new quiz_volume{
        quiz::resample_to_reference(vol->vol, dims, vec_of(spacing_xyz), origin)};
  });
}

quiz_status quiz_volume_crop_resize(const quiz_volume* vol, const int64_t target_xyz[3],
                                    quiz_volume** out) {
  if (auto s = need(vol && target_xyz && out, "crop_resize")) return s;
  return guarded([&] {
    quiz::Dims3 target{target_xyz[0], target_xyz[1], target_xyz[2]};
    *out = new quiz_volume{quiz::crop_resize(vol->vol, target)};
  });
}

/* ---- landmarks ---------------------------------------------------------- */

quiz_status quiz_landmarks_load(const char* path, quiz_landmarks** out) {
  if (auto s = need(path && out, "landmarks_load")) return s;
  return guarded([&] { *out = new quiz_landmarks{quiz::load_landmarks(path)}; });
}

quiz_status quiz_landmarks_save(const quiz_landmarks* lm, const char* path) {
  if (auto s = need(lm && path, "landmarks_save")) return s;
  return guarded([&] { quiz::save_landmarks(lm->set, path); });
}

quiz_status quiz_landmarks_create(const char* const* names, const double* points_xyz,
                                  size_t count, quiz_landmarks** out) {
  if (auto s = need(names && points_xyz && out, "landmarks_create")) return s;
  return guarded([&] {
    quiz::LandmarkSet set;
    for (size_t i = 0; i < count; ++i) {
      set.names.emplace_back(names[i]);
      set.points.push_back(
          {points_xyz[i * 3], points_xyz[i * 3 + 1], points_xyz[i * 3 + 2]});
    }
    set.validate();
    *out = new quiz_landmarks{std::move(set)};
  });
}

void quiz_landmarks_free(quiz_landmarks* lm) { delete lm; }

size_t quiz_landmarks_count(const quiz_landmarks* lm) { return lm->set.size(); }

const char* quiz_landmarks_name(const quiz_landmarks* lm, size_t index) {
  if (index >= lm->set.size()) return nullptr;
  return lm->set.names[index].c_str();
}

quiz_status quiz_landmarks_point(const quiz_landmarks* lm, size_t index,
                                 double out_xyz[3]) {
  if (auto s = need(lm && out_xyz, "landmarks_point")) return s;
  if (index >= lm->set.size()) {
    g_last_error = "landmark index out of range";
    return QUIZ_ERROR_INVALID_ARGUMENT;
  }
  vec_to(lm->set.points[index], out_xyz);
  return QUIZ_OK;
}

/* ---- synthetic data ------------------------------------------------------ */

void quiz_synth_params_default(quiz_synth_params* params) {
  params->side = 64;
  params->crop_side = 48;
  params->n_blobs = 8;
  params->max_shift = 8;
  params->noise_sigma = 0.01;
  params->modality_gamma = 1.0;
  params->seed = 0;
}

quiz_status quiz_synth_generate(const quiz_synth_params* params, int64_t n,
                                const char* out_dir) {
  if (auto s = need(params && out_dir, "synth_generate")) return s;
  return guarded([&] {
    quiz::DatasetGenConfig cfg;
    cfg.base.side = params->side;
    cfg.base.crop_side = params->crop_side;
    cfg.base.n_blobs = params->n_blobs;
    cfg.base.noise_sigma = params->noise_sigma;
    cfg.base.modality_gamma = params->modality_gamma;
    cfg.max_shift = params->max_shift;
    cfg.seed = params->seed;
    quiz::generate_dataset(cfg, n, out_dir);
  });
}

quiz_status quiz_brute_force_translation(const quiz_volume* reference,
                                         const quiz_volume* search, int range,
                                         double out_shift_xyz[3]) {
  if (auto s = need(reference && search && out_shift_xyz, "brute_force")) return s;
  return guarded([&] {
    vec_to(quiz::brute_force_translation(reference->vol, search->vol, range),
           out_shift_xyz);
  });
}

/* ---- training / inference ------------------------------------------------ */

namespace {

quiz::TrainConfig train_config_of(const quiz_train_params& p) {
  quiz::TrainConfig cfg;
  cfg.lr = p.lr;
  cfg.batch_size = p.batch_size;
  cfg.alpha = p.alpha;
  cfg.stage1_iters = p.stage1_iters;
  cfg.stage2_iters = p.stage2_iters;
  cfg.seed = p.seed;
  cfg.checkpoint_every = p.checkpoint_every;
  cfg.dense_queries = p.dense_queries;
  cfg.model.input_size = p.input_size;
  cfg.model.channels = p.channels;
  cfg.model.tf_layers = p.tf_layers;
  cfg.model.tf_heads = p.tf_heads;
  cfg.model.tf_dim = p.tf_dim;
  cfg.model.mlp_hidden = p.mlp_hidden;
  return cfg;
}

void train_params_of(const quiz::TrainConfig& cfg, quiz_train_params* p) {
  p->lr = cfg.lr;
  p->batch_size = cfg.batch_size;
  p->alpha = cfg.alpha;
  p->stage1_iters = cfg.stage1_iters;
  p->stage2_iters = cfg.stage2_iters;
  p->seed = cfg.seed;
  p->checkpoint_every = cfg.checkpoint_every;
  p->dense_queries = cfg.dense_queries;
  p->input_size = cfg.model.input_size;
  p->channels = cfg.model.channels;
  p->tf_layers = cfg.model.tf_layers;
  p->tf_heads = cfg.model.tf_heads;
  p->tf_dim = cfg.model.tf_dim;
  p->mlp_hidden = cfg.model.mlp_hidden;
}

}  // namespace

void quiz_train_params_default(quiz_train_params* params) {
  train_params_of(quiz::TrainConfig{}, params);
}

quiz_status quiz_train_params_from_json(const char* path, quiz_train_params* params) {
  if (auto s = need(path && params, "train_params_from_json")) return s;
  return guarded(
      [&] { train_params_of(quiz::TrainConfig::from_json_file(path), params); });
}

quiz_status quiz_train(const quiz_train_params* params, const char* dataset_dir,
                       const char* run_dir) {
  if (auto s = need(params && dataset_dir && run_dir, "train")) return s;
  return guarded([&] {
    quiz::TrainConfig cfg = train_config_of(*params);
    cfg.dataset_dir = dataset_dir;
    quiz::train(cfg, run_dir);
  });
}

quiz_status quiz_model_load(const char* path, quiz_model** out) {
  if (auto s = need(path && out, "model_load")) return s;
  return guarded([&] { *out = new quiz_model{quiz::QuizModel::load(path)}; });
}

void quiz_model_free(quiz_model* model) { delete model; }

quiz_status quiz_model_save(const quiz_model* model, const char* path) {
  if (auto s = need(model && path, "model_save")) return s;
  return guarded([&] { model->model.save(path); });
}

quiz_status quiz_model_match(quiz_model* model, const quiz_volume* reference,
                             const quiz_volume* search, const double* queries_xyz,
                             size_t n, double* out_points_xyz, double* out_disp_xyz) {
  if (auto s = need(model && reference && search && queries_xyz && out_points_xyz,
                    "model_match"))
    return s;
  return guarded([&] {
    std::vector<Vec3> queries(n);
    for (size_t i = 0; i < n; ++i)
      queries[i] = {queries_xyz[i * 3], queries_xyz[i * 3 + 1], queries_xyz[i * 3 + 2]};
    quiz::ModelPredictor pred(model->model);
    std::vector<Vec3> pts = pred.match(reference->vol, search->vol, queries);
    for (size_t i = 0; i < n; ++i) {
      vec_to(pts[i], out_points_xyz + i * 3);
      if (out_disp_xyz) {
        Vec3 d_ref = search->vol.world_from_voxel(pts[i]);
        d_ref = reference->vol.voxel_from_world(d_ref) - queries[i];
        vec_to(d_ref, out_disp_xyz + i * 3);
      }
    }
  });
}

quiz_status quiz_model_predict_translation(quiz_model* model,
                                           const quiz_volume* reference,
                                           const quiz_volume* search,
                                           double out_shift_xyz[3]) {
  if (auto s = need(model && reference && search && out_shift_xyz, "predict")) return s;
  return guarded([&] {
    quiz::PairRecord rec;
    rec.id = "adhoc";
    rec.reference = reference->vol;
    rec.search = search->vol;
    // translation reduction does not need landmark files; use the volume
    // center and blob-free grid queries spread over the reference
    quiz::LandmarkSet q, qt;
    const quiz::Dims3& d = rec.reference.dims();
    int idx = 0;
    for (double fx : {0.3, 0.5, 0.7})
      for (double fy : {0.3, 0.5, 0.7})
        for (double fz : {0.3, 0.5, 0.7}) {
          q.names.push_back("g" + std::to_string(idx));
          q.points.push_back(
              {fx * double(d.x - 1), fy * double(d.y - 1), fz * double(d.z - 1)});
          qt.names.push_back("g" + std::to_string(idx));
          qt.points.push_back({0, 0, 0});
          ++idx;
        }
    rec.q = q;
    rec.q_t = qt;
    quiz::ModelPredictor pred(model->model);
    vec_to(pred.predict(rec), out_shift_xyz);
  });
}

quiz_status quiz_evaluate(const char* model_path, const char* dataset_dir,
                          const char* out_json_path) {
  if (auto s = need(model_path && dataset_dir && out_json_path, "evaluate")) return s;
  return guarded([&] {
    quiz::QuizModel model = quiz::QuizModel::load(model_path);
    quiz::ModelPredictor pred(model);
    quiz::EvalSummary summary =
        quiz::evaluate_dataset(pred, dataset_dir, quiz::deterministic_mode());
    std::ofstream out(out_json_path, std::ios::trunc);
    if (!out) quiz::throw_io(std::string("cannot write ") + out_json_path);
    out << summary.to_json() << "\n";
  });
}

quiz_status quiz_plot_offsets(const char* model_path, const char* dataset_dir,
                              const char* out_csv_path, const char* out_svg_path) {
  if (auto s = need(model_path && dataset_dir && out_csv_path && out_svg_path,
                    "plot_offsets"))
    return s;
  return guarded([&] {
    quiz::QuizModel model = quiz::QuizModel::load(model_path);
    quiz::ModelPredictor pred(model);
    quiz::plot_offsets(pred, dataset_dir, out_csv_path, out_svg_path);
  });
}

}  // extern "C"
