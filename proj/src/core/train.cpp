#include "train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "augment.hpp"
#include "geometry.hpp"

namespace fs = std::filesystem;

namespace quiz {

void TrainConfig::validate() const {
  if (!(lr > 0)) throw_invalid("lr must be > 0");
  if (batch_size < 1) throw_invalid("batch_size must be >= 1");
  if (alpha < 0) throw_invalid("alpha must be >= 0");
  if (stage1_iters < 0 || stage2_iters < 0) throw_invalid("iteration counts must be >= 0");
  if (checkpoint_every < 0) throw_invalid("checkpoint_every must be >= 0");
  if (ncc_window < 0 || (ncc_window > 0 && ncc_window % 2 == 0))
    throw_invalid("ncc_window must be 0 or odd");
  if (dense_queries < 0) throw_invalid("dense_queries must be >= 0");
  model.validate();
}

std::string TrainConfig::to_json() const {
  nlohmann::json j;
  j["lr"] = lr;
  j["batch_size"] = batch_size;
  j["alpha"] = alpha;
  j["stage1_iters"] = stage1_iters;
  j["stage2_iters"] = stage2_iters;
  j["seed"] = seed;
  j["checkpoint_every"] = checkpoint_every;
  j["dataset_dir"] = dataset_dir;
  j["ncc_window"] = ncc_window;
  j["dense_queries"] = dense_queries;
  j["model"] = nlohmann::json::parse(model.to_json());
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig cfg;
  try {
    auto j = nlohmann::json::parse(text);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.stage1_iters = j.value("stage1_iters", cfg.stage1_iters);
    cfg.stage2_iters = j.value("stage2_iters", cfg.stage2_iters);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
    cfg.dataset_dir = j.value("dataset_dir", cfg.dataset_dir);
    cfg.ncc_window = j.value("ncc_window", cfg.ncc_window);
    cfg.dense_queries = j.value("dense_queries", cfg.dense_queries);
    if (j.contains("model")) cfg.model = ModelConfig::from_json(j.at("model").dump());
  } catch (const nlohmann::json::exception& e) {
    throw_format(std::string("invalid train config JSON: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_io("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(text);
}

bool deterministic_mode() {
  const char* v = std::getenv("QUIZ_DETERMINISTIC");
  return v && std::string(v) == "1";
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct Sample {
  AssembledPair assembled;
  std::string id;
};

// When every stored landmark carries the same displacement (the generator
// guarantees this for synthetic pairs), any point is a valid query; densify
// the supervision with extra points sharing that displacement.
void densify_queries(const PairRecord& rec, LandmarkSet& q, LandmarkSet& q_t,
                     int64_t extra, Rng& rng) {
  if (extra <= 0 || rec.q.size() < 2) return;
  Vec3 d0 = rec.q.points[0] - rec.q_t.points[0];
  for (size_t i = 1; i < rec.q.size(); ++i) {
    Vec3 di = rec.q.points[i] - rec.q_t.points[i];
    if (std::abs(di.x - d0.x) > 1e-6 || std::abs(di.y - d0.y) > 1e-6 ||
        std::abs(di.z - d0.z) > 1e-6)
      return;  // not a constant-displacement pair
  }
  const Dims3& sd = rec.search.dims();
  for (int64_t i = 0; i < extra; ++i) {
    Vec3 qt{rng.uniform(1.0, double(sd.x - 2)), rng.uniform(1.0, double(sd.y - 2)),
            rng.uniform(1.0, double(sd.z - 2))};
    Vec3 qq = qt + d0;
    if (!rec.reference.in_bounds(qq)) continue;
    std::string name = "dense" + std::to_string(i);
    q.names.push_back(name);
    q.points.push_back(qq);
    q_t.names.push_back(name);
    q_t.points.push_back(qt);
  }
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, const std::string& run_dir)
    : cfg_(cfg), run_dir_(run_dir),
      data_rng_(cfg.seed ^ 0x9E3779B97F4A7C15ull) {
  cfg_.validate();
  if (cfg_.dataset_dir.empty()) throw_invalid("dataset_dir is required");

  for (const std::string& id : list_pair_ids(cfg_.dataset_dir))
    pairs_.push_back(load_pair(cfg_.dataset_dir, id));

  std::error_code ec;
  fs::create_directories(run_dir_, ec);
  if (ec) throw_io("cannot create run directory: " + run_dir_);

  model_ = std::make_unique<QuizModel>(cfg_.model, cfg_.seed);
  adam_ = std::make_unique<nn::Adam>(model_->params(), cfg_.lr);

  size_t probe_n = std::min<size_t>(pairs_.size(), size_t(2 * cfg_.batch_size));
  for (size_t i = 0; i < probe_n; ++i) probe_indices_.push_back(i);

  std::ofstream cf(fs::path(run_dir_) / "config.json", std::ios::trunc);
  cf << cfg_.to_json() << "\n";
}

Trainer::~Trainer() = default;

double Trainer::probe_l_pair() {
  double sum = 0.0;
  int64_t n_points = 0;
  int64_t s = cfg_.model.input_size;
  for (size_t idx : probe_indices_) {
    const PairRecord& rec = pairs_[idx];
    AssembledPair ap = assemble_pair(rec.reference, rec.search, rec.q, rec.q_t, s);
    Tensor x({2, 1, s, s, s});
    std::memcpy(x.data(), ap.reference.data(), size_t(ap.reference.numel()) * 4);
    std::memcpy(x.data() + ap.reference.numel(), ap.search.data(),
                size_t(ap.search.numel()) * 4);
    Tensor enc = model_->encoder_forward(x);
    Tensor mem = model_->tokens_from_merged(model_->merge_features(enc, 0, 1));
    Tensor d = model_->quizzer_forward(mem, ap.q_model);
    for (size_t i = 0; i < ap.q_model.size(); ++i) {
      Vec3 di{double(d[int64_t(i) * 3]), double(d[int64_t(i) * 3 + 1]),
              double(d[int64_t(i) * 3 + 2])};
      Vec3 r = di - ap.target_model[i];
      sum += r.x * r.x + r.y * r.y + r.z * r.z;
      ++n_points;
    }
  }
  return sum / double(std::max<int64_t>(n_points, 1));
}

Trainer::StepResult Trainer::step(bool with_trans) {
  const int64_t B = cfg_.batch_size;
  const int64_t s = cfg_.model.input_size;
  adam_->zero_grad();

  std::vector<Sample> batch;
  batch.reserve(size_t(B));
  for (int64_t b = 0; b < B; ++b) {
    size_t idx = size_t(data_rng_.uniform_int(0, int64_t(pairs_.size()) - 1));
    const PairRecord& rec = pairs_[idx];
    LandmarkSet q = rec.q, q_t = rec.q_t;
    densify_queries(rec, q, q_t, cfg_.dense_queries, data_rng_);
    // one augmentation draw per pair per step; redraw when every landmark
    // would leave the frame
    AugmentedPair aug;
    bool ok = false;
    for (int attempt = 0; attempt < 8 && !ok; ++attempt) {
      AugmentSpec spec = sample_spec(data_rng_);
      try {
        aug = augment_pair(rec.reference, rec.search, q, q_t, spec);
        ok = true;
      } catch (const Error&) {
      }
    }
    if (!ok) aug = {rec.reference, rec.search, q, q_t};
    Sample sample{assemble_pair(aug.reference, aug.search, aug.q, aug.q_t, s), rec.id};
    batch.push_back(std::move(sample));
  }

  int64_t n_total = 0;
  for (const Sample& smp : batch) n_total += int64_t(smp.assembled.q_model.size());

  Tensor x({2 * B, 1, s, s, s});
  int64_t vox = s * s * s;
  for (int64_t b = 0; b < B; ++b) {
    std::memcpy(x.data() + b * vox, batch[size_t(b)].assembled.reference.data(),
                size_t(vox) * 4);
    std::memcpy(x.data() + (B + b) * vox, batch[size_t(b)].assembled.search.data(),
                size_t(vox) * 4);
  }

  Tensor enc = model_->encoder_forward(x);
  Tensor grad_enc(enc.shape());

  double lp_sum = 0.0, lt_sum = 0.0;
  for (int64_t b = 0; b < B; ++b) {
    const AssembledPair& ap = batch[size_t(b)].assembled;
    int64_t n = int64_t(ap.q_model.size());
    Tensor mem = model_->tokens_from_merged(model_->merge_features(enc, b, B + b));
    Tensor d = model_->quizzer_forward(mem, ap.q_model);

    Tensor grad_d(d.shape());
    for (int64_t i = 0; i < n; ++i) {
      Vec3 di{double(d[i * 3]), double(d[i * 3 + 1]), double(d[i * 3 + 2])};
      Vec3 r = di - ap.target_model[size_t(i)];
      lp_sum += r.x * r.x + r.y * r.y + r.z * r.z;
      grad_d[i * 3 + 0] = float(2.0 * r.x / double(n_total));
      grad_d[i * 3 + 1] = float(2.0 * r.y / double(n_total));
      grad_d[i * 3 + 2] = float(2.0 * r.z / double(n_total));
    }

    if (with_trans) {
      std::vector<Vec3> dv(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i)
        dv[size_t(i)] = {double(d[i * 3]), double(d[i * 3 + 1]), double(d[i * 3 + 2])};
      Vec3 m = reduce_mean_displacement(dv);
      Tensor warped = position_reset(ap.search, m);
      if (cfg_.ncc_window == 0) {
        Tensor grad_w(warped.shape());
        double nccv = ncc_global_grad(ap.reference.data(), warped.data(), warped.numel(),
                                      grad_w.data());
        lt_sum += -nccv;
        if (cfg_.alpha != 0.0) {
          Vec3 dncc_dm = position_reset_shift_grad(ap.search, m, grad_w);
          Vec3 gm = dncc_dm * (-cfg_.alpha / double(B));
          for (int64_t i = 0; i < n; ++i) {
            grad_d[i * 3 + 0] += float(gm.x / double(n));
            grad_d[i * 3 + 1] += float(gm.y / double(n));
            grad_d[i * 3 + 2] += float(gm.z / double(n));
          }
        }
      } else {
        // local NCC is metric-only; no gradient contribution
        Volume rv({s, s, s}, {1, 1, 1}, {0, 0, 0},
                  std::vector<float>(ap.reference.data(),
                                     ap.reference.data() + ap.reference.numel()));
        Volume wv({s, s, s}, {1, 1, 1}, {0, 0, 0},
                  std::vector<float>(warped.data(), warped.data() + warped.numel()));
        lt_sum += l_trans(rv, wv, cfg_.ncc_window);
      }
    }

    Tensor grad_mem({mem.dim(0), mem.dim(1)});
    model_->quizzer_backward(grad_d, grad_mem);
    model_->scatter_token_grad(grad_mem, grad_enc, b, B + b);
  }
  model_->encoder_backward(grad_enc);
  adam_->step();

  StepResult res;
  res.l_pair = lp_sum / double(n_total);
  res.l_trans = with_trans ? lt_sum / double(B) : 0.0;
  for (const Sample& smp : batch) res.batch_ids.push_back(smp.id);

  if (!std::isfinite(res.l_pair) || !std::isfinite(res.l_trans)) {
    nlohmann::json dump;
    dump["iteration"] = global_iter_;
    dump["batch_ids"] = res.batch_ids;
    dump["l_pair"] = res.l_pair;
    dump["l_trans"] = res.l_trans;
    std::ofstream df(fs::path(run_dir_) / "diverged.json", std::ios::trunc);
    df << dump.dump(2) << "\n";
    std::string ids;
    for (const auto& id : res.batch_ids) ids += id + " ";
    throw_runtime("non-finite loss at iteration " + std::to_string(global_iter_) +
                  " (batch: " + ids + "); diagnostics in diverged.json");
  }
  return res;
}

void Trainer::checkpoint_if_due(int64_t iter) {
  if (cfg_.checkpoint_every <= 0) return;
  if (iter % cfg_.checkpoint_every != 0) return;
  char name[32];
  std::snprintf(name, sizeof name, "ckpt_%06lld.qzck", (long long)iter);
  model_->save((fs::path(run_dir_) / name).string());
}

void Trainer::run_stage1() {
  std::ofstream log(fs::path(run_dir_) / "stage1.csv", std::ios::trunc);
  std::ofstream probe(fs::path(run_dir_) / "probe.csv", std::ios::trunc);
  log << "iter,l_pair\n";
  probe << "iter,l_pair\n";
  probe << global_iter_ << "," << fmt9(probe_l_pair()) << "\n";
  probe.flush();
  for (int64_t it = 0; it < cfg_.stage1_iters; ++it) {
    StepResult res = step(false);
    log << global_iter_ << "," << fmt9(res.l_pair) << "\n";
    ++global_iter_;
    checkpoint_if_due(global_iter_);
    if (cfg_.checkpoint_every > 0 && global_iter_ % cfg_.checkpoint_every == 0) {
      probe << global_iter_ << "," << fmt9(probe_l_pair()) << "\n";
      probe.flush();
    }
    log.flush();
  }
  probe << global_iter_ << "," << fmt9(probe_l_pair()) << "\n";
  model_->save((fs::path(run_dir_) / "stage1.qzck").string());
}

void Trainer::run_stage2() {
  std::ofstream log(fs::path(run_dir_) / "stage2.csv", std::ios::trunc);
  log << "iter,l_pair,l_trans,total\n";
  for (int64_t it = 0; it < cfg_.stage2_iters; ++it) {
    StepResult res = step(true);
    double total = res.l_pair + cfg_.alpha * res.l_trans;
    log << global_iter_ << "," << fmt9(res.l_pair) << "," << fmt9(res.l_trans) << ","
        << fmt9(total) << "\n";
    ++global_iter_;
    checkpoint_if_due(global_iter_);
    log.flush();
  }
  model_->save((fs::path(run_dir_) / "final.qzck").string());
}

void Trainer::run() {
  run_stage1();
  run_stage2();
}

std::string train(const TrainConfig& cfg, const std::string& run_dir) {
  Trainer trainer(cfg, run_dir);
  trainer.run();
  return (fs::path(run_dir) / "final.qzck").string();
}

// ---------------------------------------------------------------------------
// Evaluation

Vec3 PerfectPredictor::predict(const PairRecord& pair) {
  if (!pair.true_shift) throw_invalid("pair has no ground-truth shift: " + pair.id);
  return *pair.true_shift;
}

Vec3 OraclePredictor::predict(const PairRecord& pair) {
  return oracle_true_shift(pair.reference, pair.search, range_);
}

Vec3 ModelPredictor::predict(const PairRecord& pair) {
  AssembledPair ap = assemble_pair(pair.reference, pair.search, pair.q, pair.q_t,
                                   model_.config().input_size);
  FeatureMap fm = model_.encode(ap.reference, ap.search);
  fm.provenance = pair.id;
  std::vector<Vec3> d = model_.quiz(fm, ap.q_model);
  Vec3 m_model = reduce_mean_displacement(d);
  Vec3 m_ref = m_model * ap.model_to_ref_scale;
  return -m_ref;
}

std::vector<Vec3> ModelPredictor::match(const Volume& reference, const Volume& search,
                                        const std::vector<Vec3>& queries) {
  // queries live on the reference grid; fabricate the landmark plumbing
  LandmarkSet q, qt;
  for (size_t i = 0; i < queries.size(); ++i) {
    q.names.push_back("q" + std::to_string(i));
    q.points.push_back(queries[i]);
    qt.names.push_back("q" + std::to_string(i));
    qt.points.push_back({0, 0, 0});
  }
  AssembledPair ap = assemble_pair(reference, search, q, qt, model_.config().input_size);
  FeatureMap fm = model_.encode(ap.reference, ap.search);
  std::vector<Vec3> d = model_.quiz(fm, ap.q_model);
  std::vector<Vec3> out(queries.size());
  for (size_t i = 0; i < queries.size(); ++i) {
    Vec3 d_ref = d[i] * ap.model_to_ref_scale;
    Vec3 corr_ref = queries[i] + d_ref;
    out[i] = search.voxel_from_world(reference.world_from_voxel(corr_ref));
  }
  return out;
}

EvalSummary evaluate_dataset(TranslationPredictor& pred, const std::string& dataset_dir,
                             bool zero_timing) {
  std::vector<std::string> ids = list_pair_ids(dataset_dir);
  EvalSummary summary;
  int64_t improved = 0;
  for (const std::string& id : ids) {
    PairRecord rec = load_pair(dataset_dir, id);
    auto t0 = std::chrono::steady_clock::now();
    Vec3 t_pred = pred.predict(rec);
    auto t1 = std::chrono::steady_clock::now();

    const Vec3& sp = rec.reference.spacing();
    Vec3 m_ref = -t_pred;

    std::vector<Vec3> pred_mm, gt_mm, base_mm;
    for (size_t i = 0; i < rec.q.size(); ++i) {
      Vec3 corr = rec.q.points[i] + m_ref;
      Vec3 gt = search_to_ref_voxel(rec.reference, rec.search, rec.q_t.points[i]);
      pred_mm.push_back(corr * sp);
      gt_mm.push_back(gt * sp);
      base_mm.push_back(rec.q.points[i] * sp);
    }

    MetricsReport rep;
    rep.id = id;
    rep.tre_mm = tre(pred_mm, gt_mm);
    rep.tre_mm_baseline = tre(base_mm, gt_mm);
    rep.rtre = rtre(rep.tre_mm, rec.reference.extent_mm());
    rep.seconds_per_pair =
        zero_timing ? 0.0 : std::chrono::duration<double>(t1 - t0).count();
    if (rec.true_shift) {
      Vec3 axes = (t_pred - *rec.true_shift) * sp;
      rep.offset_mm_axes = axes;
      rep.offset_mm = axes.norm();
      rep.predicted_shift = t_pred;
      rep.true_shift = *rec.true_shift;
    }
    if (rep.tre_mm < rep.tre_mm_baseline) ++improved;
    summary.pairs.push_back(rep);
  }
  summary.improved_fraction = double(improved) / double(summary.pairs.size());
  return summary;
}

void plot_offsets(TranslationPredictor& pred, const std::string& dataset_dir,
                  const std::string& csv_path, const std::string& svg_path) {
  std::vector<std::string> ids = list_pair_ids(dataset_dir);
  struct Row {
    std::string id;
    Vec3 err;
  };
  std::vector<Row> rows;
  for (const std::string& id : ids) {
    PairRecord rec = load_pair(dataset_dir, id);
    if (!rec.true_shift) continue;
    Vec3 t_pred = pred.predict(rec);
    rows.push_back({id, (t_pred - *rec.true_shift) * rec.reference.spacing()});
  }
  if (rows.empty()) throw_invalid("plot_offsets: no pair carries a ground-truth shift");

  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw_io("cannot write " + csv_path);
  csv << "pair_id,err_x_mm,err_y_mm,err_z_mm\n";
  for (const Row& r : rows)
    csv << r.id << "," << fmt9(r.err.x) << "," << fmt9(r.err.y) << "," << fmt9(r.err.z)
        << "\n";

  // one panel per axis, pair index against error in mm
  double lim = 1.0;
  for (const Row& r : rows)
    for (int a = 0; a < 3; ++a) lim = std::max(lim, std::abs(r.err[a]));
  lim = std::ceil(lim);

  const int W = 720, panel_h = 150, margin = 45;
  const int H = 3 * panel_h + 2 * margin;
  std::ofstream svg(svg_path, std::ios::trunc);
  if (!svg) throw_io("cannot write " + svg_path);
  char buf[256];
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<text x=\"" << margin << "\" y=\"18\">per-axis translation error (mm), "
      << rows.size() << " pairs</text>\n";
  const char* axis_names[3] = {"x", "y", "z"};
  double x0 = margin, x1 = W - 15;
  for (int a = 0; a < 3; ++a) {
    double top = margin + a * panel_h;
    double mid = top + panel_h / 2.0 - 10;
    double half = panel_h / 2.0 - 25;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                  "stroke=\"#999\"/>\n",
                  x0, mid, x1, mid);
    svg << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"8\" y=\"%.1f\">%s</text>\n", mid + 4,
                  axis_names[a]);
    svg << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"8\" y=\"%.1f\">+%.0f</text>\n",
                  mid - half + 4, lim);
    svg << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"8\" y=\"%.1f\">-%.0f</text>\n",
                  mid + half + 4, lim);
    svg << buf;
    for (size_t i = 0; i < rows.size(); ++i) {
      double px = rows.size() > 1
                      ? x0 + (x1 - x0) * double(i) / double(rows.size() - 1)
                      : (x0 + x1) / 2;
      double py = mid - rows[i].err[a] / lim * half;
      std::snprintf(buf, sizeof buf,
                    "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"3\" fill=\"#3366cc\" "
                    "fill-opacity=\"0.7\"/>\n",
                    px, py);
      svg << buf;
    }
  }
  svg << "</svg>\n";
}

}  // namespace quiz
