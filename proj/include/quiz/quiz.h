/* C interface to the quiz registration library.
 *
 * Conventions:
 *  - all functions returning quiz_status yield QUIZ_OK (0) on success; on
 *    failure they return a nonzero code and quiz_last_error() describes the
 *    problem (thread-local, valid until the next failing call on the thread)
 *  - coordinates, shifts, spacings and origins are (x, y, z)
 *  - volume payloads are row-major (z, y, x) with x fastest, float32
 *  - out-parameters are written only on success; handles are released with
 *    the matching *_free
 */
#ifndef QUIZ_H
#define QUIZ_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define QUIZ_API __declspec(dllexport)
#else
#define QUIZ_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum quiz_status {
  QUIZ_OK = 0,
  QUIZ_ERROR_INVALID_ARGUMENT = 1,
  QUIZ_ERROR_IO = 2,
  QUIZ_ERROR_FORMAT = 3,
  QUIZ_ERROR_RUNTIME = 4
} quiz_status;

typedef struct quiz_volume quiz_volume;
typedef struct quiz_landmarks quiz_landmarks;
typedef struct quiz_model quiz_model;

QUIZ_API const char* quiz_version(void);
QUIZ_API const char* quiz_last_error(void);

/* ---- volumes (QVOL: JSON header at path, raw payload at path + ".raw") -- */

QUIZ_API quiz_status quiz_volume_create(const int64_t dims_xyz[3],
                                        const double spacing_xyz[3],
                                        const double origin_xyz[3],
                                        const float* data_zyx, quiz_volume** out);
QUIZ_API quiz_status quiz_volume_load(const char* path, quiz_volume** out);
QUIZ_API quiz_status quiz_volume_save(const quiz_volume* vol, const char* path);
QUIZ_API void quiz_volume_free(quiz_volume* vol);

QUIZ_API void quiz_volume_dims(const quiz_volume* vol, int64_t out_xyz[3]);
QUIZ_API void quiz_volume_spacing(const quiz_volume* vol, double out_xyz[3]);
QUIZ_API void quiz_volume_origin(const quiz_volume* vol, double out_xyz[3]);
QUIZ_API const float* quiz_volume_data(const quiz_volume* vol);

/* Pull-semantics translation: out(v) = vol(v - shift), trilinear, zeros
 * outside; shift in voxels. */
QUIZ_API quiz_status quiz_volume_translate(const quiz_volume* vol,
                                           const double shift_xyz[3],
                                           quiz_volume** out);
/* Trilinear resample onto a new grid in world coordinates; pass NULL origin
 * to keep the source origin. */
QUIZ_API quiz_status quiz_volume_resample(const quiz_volume* vol,
                                          const int64_t dims_xyz[3],
                                          const double spacing_xyz[3],
                                          const double* origin_xyz_or_null,
                                          quiz_volume** out);
/* Center-crop to the target aspect then trilinear resize. */
QUIZ_API quiz_status quiz_volume_crop_resize(const quiz_volume* vol,
                                             const int64_t target_xyz[3],
                                             quiz_volume** out);

/* ---- landmarks (CSV: header name,x,y,z) -------------------------------- */

QUIZ_API quiz_status quiz_landmarks_load(const char* path, quiz_landmarks** out);
QUIZ_API quiz_status quiz_landmarks_save(const quiz_landmarks* lm, const char* path);
QUIZ_API quiz_status quiz_landmarks_create(const char* const* names,
                                           const double* points_xyz, size_t count,
                                           quiz_landmarks** out);
QUIZ_API void quiz_landmarks_free(quiz_landmarks* lm);
QUIZ_API size_t quiz_landmarks_count(const quiz_landmarks* lm);
QUIZ_API const char* quiz_landmarks_name(const quiz_landmarks* lm, size_t index);
QUIZ_API quiz_status quiz_landmarks_point(const quiz_landmarks* lm, size_t index,
                                          double out_xyz[3]);

/* ---- synthetic data ----------------------------------------------------- */

typedef struct quiz_synth_params {
  int64_t side;          /* reference cube side (default 64)  */
  int64_t crop_side;     /* search cube side (default 48)     */
  int64_t n_blobs;       /* landmarks per pair (default 8)    */
  int64_t max_shift;     /* |true shift| bound (default 8)    */
  double noise_sigma;    /* search noise (default 0.01)       */
  double modality_gamma; /* search intensity remap (default 1)*/
  uint64_t seed;
} quiz_synth_params;

QUIZ_API void quiz_synth_params_default(quiz_synth_params* params);
/* Writes <out_dir>/pairs/<id>/{ref.qvol, search.qvol, q.csv, q_t.csv,
 * meta.json} for n pairs. */
QUIZ_API quiz_status quiz_synth_generate(const quiz_synth_params* params, int64_t n,
                                         const char* out_dir);

/* Exhaustive integer-shift NCC search in [-range, range]^3; the returned
 * shift moves search content onto the reference grid. */
QUIZ_API quiz_status quiz_brute_force_translation(const quiz_volume* reference,
                                                  const quiz_volume* search, int range,
                                                  double out_shift_xyz[3]);

/* ---- training / inference ----------------------------------------------- */

typedef struct quiz_train_params {
  double lr;                /* default 1e-4 */
  int64_t batch_size;       /* default 2    */
  double alpha;             /* default 0.01 */
  int64_t stage1_iters;     /* default 1400 */
  int64_t stage2_iters;     /* default 600  */
  uint64_t seed;
  int64_t checkpoint_every; /* default 200, 0 disables */
  int64_t dense_queries;    /* extra synthesized queries per pair per step */
  /* model */
  int64_t input_size;       /* default 64  */
  int64_t channels;         /* default 64  */
  int64_t tf_layers;        /* default 4   */
  int64_t tf_heads;         /* default 4   */
  int64_t tf_dim;           /* default 128 */
  int64_t mlp_hidden;       /* default 256 */
} quiz_train_params;

QUIZ_API void quiz_train_params_default(quiz_train_params* params);
/* Loads a JSON config (same field names; model fields under "model"). */
QUIZ_API quiz_status quiz_train_params_from_json(const char* path,
                                                 quiz_train_params* params);
/* Two-stage training; writes logs and checkpoints into run_dir and the final
 * model to <run_dir>/final.qzck. */
QUIZ_API quiz_status quiz_train(const quiz_train_params* params, const char* dataset_dir,
                                const char* run_dir);

QUIZ_API quiz_status quiz_model_load(const char* path, quiz_model** out);
QUIZ_API void quiz_model_free(quiz_model* model);
QUIZ_API quiz_status quiz_model_save(const quiz_model* model, const char* path);

/* Predicted displacement queries: queries_xyz has n points on the reference
 * voxel grid; out_points_xyz receives correspondences in search voxel
 * coordinates. out_disp_xyz (optional) receives displacements in reference
 * voxels. */
QUIZ_API quiz_status quiz_model_match(quiz_model* model, const quiz_volume* reference,
                                      const quiz_volume* search,
                                      const double* queries_xyz, size_t n,
                                      double* out_points_xyz, double* out_disp_xyz);
/* Reduced prediction: the translation correcting the metadata-implied
 * placement of the search volume, in reference voxels. */
QUIZ_API quiz_status quiz_model_predict_translation(quiz_model* model,
                                                    const quiz_volume* reference,
                                                    const quiz_volume* search,
                                                    double out_shift_xyz[3]);

/* Evaluates a checkpoint over a dataset directory and writes the JSON report
 * (per-pair tre_mm/rtre/offset_mm/seconds_per_pair plus aggregates). */
QUIZ_API quiz_status quiz_evaluate(const char* model_path, const char* dataset_dir,
                                   const char* out_json_path);
/* Per-axis prediction-error scatter data as CSV and SVG. */
QUIZ_API quiz_status quiz_plot_offsets(const char* model_path, const char* dataset_dir,
                                       const char* out_csv_path,
                                       const char* out_svg_path);

#ifdef __cplusplus
}
#endif

#endif /* QUIZ_H */
