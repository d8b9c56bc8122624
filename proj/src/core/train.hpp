#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace quiz {

struct TrainConfig {
  double lr = 1e-4;
  int64_t batch_size = 2;
  double alpha = 0.01;
  int64_t stage1_iters = 1400;  // 70% of the 2000-iteration schedule
  int64_t stage2_iters = 600;
  uint64_t seed = 0;
  int64_t checkpoint_every = 200;  // 0 disables periodic checkpoints
  std::string dataset_dir;
  int ncc_window = 0;  // 0 = global NCC in the stage-2 loss
  // Extra per-step query points synthesized from the pair's constant
  // displacement (dense-point training); 0 trains on stored landmarks only.
  int64_t dense_queries = 24;
  ModelConfig model;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  static TrainConfig from_json_file(const std::string& path);
};

// True when QUIZ_DETERMINISTIC=1: reported timings are zeroed so repeated
// runs produce byte-identical logs and reports.
bool deterministic_mode();

// Two-stage training: stage 1 optimizes L_pair only, stage 2 adds
// alpha * L_trans through the position resetter. Losses are logged to
// stage1.csv / stage2.csv in the run directory, probe-batch losses to
// probe.csv, checkpoints to stage1.qzck / final.qzck (+ periodic).
class Trainer {
public:
  Trainer(const TrainConfig& cfg, const std::string& run_dir);
  ~Trainer();

  void run_stage1();
  void run_stage2();
  void run();  // both stages

  QuizModel& model() { return *model_; }
  const std::vector<PairRecord>& pairs() const { return pairs_; }
  // L_pair on the fixed unaugmented probe batch.
  double probe_l_pair();

private:
  struct StepResult {
    double l_pair = 0.0;
    double l_trans = 0.0;
    std::vector<std::string> batch_ids;
  };
  StepResult step(bool with_trans);
  void checkpoint_if_due(int64_t iter);

  TrainConfig cfg_;
  std::string run_dir_;
  std::vector<PairRecord> pairs_;
  std::unique_ptr<QuizModel> model_;
  std::unique_ptr<nn::Adam> adam_;
  Rng data_rng_;
  int64_t global_iter_ = 0;
  std::vector<size_t> probe_indices_;
};

// Convenience wrapper: train per config, write artifacts, return the final
// checkpoint path.
std::string train(const TrainConfig& cfg, const std::string& run_dir);

// ---------------------------------------------------------------------------
// Evaluation

// A translation predictor maps a pair to the translation (in reference-grid
// voxels) that corrects the metadata-implied placement of the search volume;
// directly comparable to the dataset's true_shift.
class TranslationPredictor {
public:
  virtual ~TranslationPredictor() = default;
  virtual Vec3 predict(const PairRecord& pair) = 0;
};

class ZeroPredictor : public TranslationPredictor {
public:
  Vec3 predict(const PairRecord&) override { return {0, 0, 0}; }
};

// Returns the dataset's own ground truth; a perfect stub for harness tests.
class PerfectPredictor : public TranslationPredictor {
public:
  Vec3 predict(const PairRecord& pair) override;
};

// Brute-force NCC search around the implied placement.
class OraclePredictor : public TranslationPredictor {
public:
  explicit OraclePredictor(int range) : range_(range) {}
  Vec3 predict(const PairRecord& pair) override;

private:
  int range_;
};

class ModelPredictor : public TranslationPredictor {
public:
  explicit ModelPredictor(QuizModel& model) : model_(model) {}
  Vec3 predict(const PairRecord& pair) override;
  // Per-point correspondences in search voxel coordinates (for `match`).
  std::vector<Vec3> match(const Volume& reference, const Volume& search,
                          const std::vector<Vec3>& queries);

private:
  QuizModel& model_;
};

struct EvalSummary {
  std::vector<MetricsReport> pairs;
  double improved_fraction = 0.0;  // pairs with TRE below the zero-predictor TRE
  std::string to_json() const;
};

// Runs the predictor over every pair; TRE against landmark ground truth,
// offset against meta.json when present. zero_timing replaces wall-clock
// fields with 0 for reproducible reports.
EvalSummary evaluate_dataset(TranslationPredictor& pred, const std::string& dataset_dir,
                             bool zero_timing);

// Per-axis prediction-error scatter data (CSV) and a small SVG rendering.
void plot_offsets(TranslationPredictor& pred, const std::string& dataset_dir,
                  const std::string& csv_path, const std::string& svg_path);

}  // namespace quiz
