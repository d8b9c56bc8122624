#include "dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "rng.hpp"

namespace fs = std::filesystem;

namespace quiz {

namespace {

std::string pair_dir(const std::string& root, const std::string& id) {
  return (fs::path(root) / "pairs" / id).string();
}

std::string pair_id(int64_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04lld", (long long)i);
  return buf;
}

}  // namespace

void write_pair(const std::string& root, const std::string& id, const SyntheticPair& pair,
                const SyntheticPairSpec& spec) {
  fs::path dir = pair_dir(root, id);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw_io("cannot create dataset directory: " + dir.string());

  save_volume(pair.reference, (dir / "ref.qvol").string());
  save_volume(pair.search, (dir / "search.qvol").string());
  save_landmarks(pair.q, (dir / "q.csv").string());
  save_landmarks(pair.q_t, (dir / "q_t.csv").string());

  nlohmann::json meta;
  meta["spec"] = nlohmann::json::parse(spec.to_json());
  meta["true_shift"] = {pair.true_shift.x, pair.true_shift.y, pair.true_shift.z};
  meta["extraction_corner"] = {pair.extraction_corner.x, pair.extraction_corner.y,
                               pair.extraction_corner.z};
  std::ofstream mf(dir / "meta.json", std::ios::trunc);
  if (!mf) throw_io("cannot write meta.json in " + dir.string());
  mf << meta.dump(2) << "\n";
}

std::vector<std::string> generate_dataset(const DatasetGenConfig& cfg, int64_t n,
                                          const std::string& root) {
  if (n < 1) throw_invalid("generate_dataset: n must be >= 1");
  int64_t half = (cfg.base.side - cfg.base.crop_side) / 2;
  if (cfg.max_shift < 0 || cfg.max_shift > half)
    throw_invalid("max_shift must be in [0, (side-crop_side)/2]");

  Rng rng(cfg.seed);
  std::vector<std::string> ids;
  for (int64_t i = 0; i < n; ++i) {
    SyntheticPairSpec spec = cfg.base;
    spec.true_shift = {double(rng.uniform_int(-cfg.max_shift, cfg.max_shift)),
                       double(rng.uniform_int(-cfg.max_shift, cfg.max_shift)),
                       double(rng.uniform_int(-cfg.max_shift, cfg.max_shift))};
    spec.seed = rng.next_u64();
    SyntheticPair pair = gen_pair(spec);
    std::string id = pair_id(i);
    write_pair(root, id, pair, spec);
    ids.push_back(id);
  }
  return ids;
}

std::vector<std::string> list_pair_ids(const std::string& root) {
  fs::path dir = fs::path(root) / "pairs";
  if (!fs::exists(dir)) throw_io("dataset has no pairs/ directory: " + root);
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) ids.push_back(entry.path().filename().string());
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw_io("dataset is empty: " + root);
  return ids;
}

PairRecord load_pair(const std::string& root, const std::string& id) {
  fs::path dir = pair_dir(root, id);
  PairRecord rec;
  rec.id = id;
  rec.reference = load_volume((dir / "ref.qvol").string());
  rec.search = load_volume((dir / "search.qvol").string());
  rec.q = load_landmarks((dir / "q.csv").string());
  rec.q_t = load_landmarks((dir / "q_t.csv").string());
  if (!paired(rec.q, rec.q_t))
    throw_format("landmark files are not paired in " + dir.string());
  rec.q.validate_bounds(rec.reference);
  rec.q_t.validate_bounds(rec.search);

  fs::path meta = dir / "meta.json";
  if (fs::exists(meta)) {
    std::ifstream mf(meta);
    nlohmann::json j;
    try {
      mf >> j;
      if (j.contains("true_shift")) {
        auto t = j.at("true_shift");
        rec.true_shift = Vec3{t.at(0).get<double>(), t.at(1).get<double>(),
                              t.at(2).get<double>()};
      }
      if (j.contains("spec"))
        rec.spec = SyntheticPairSpec::from_json(j.at("spec").dump());
    } catch (const nlohmann::json::exception& e) {
      throw_format("invalid meta.json in " + dir.string() + ": " + e.what());
    }
  }
  return rec;
}

// ---------------------------------------------------------------------------

Vec3 search_to_ref_voxel(const Volume& reference, const Volume& search, const Vec3& p) {
  return reference.voxel_from_world(search.world_from_voxel(p));
}

AssembledPair assemble_pair(const Volume& reference, const Volume& search,
                            const LandmarkSet& q, const LandmarkSet& q_t,
                            int64_t input_size) {
  if (!paired(q, q_t)) throw_invalid("assemble_pair: landmark sets are not paired");
  if (q.empty()) throw_invalid("assemble_pair: empty landmark set");

  Volume search_on_ref = resample_to_reference(search, reference.dims(),
                                               reference.spacing(), reference.origin());
  Dims3 cube{input_size, input_size, input_size};
  AxisMap map = crop_resize_map(reference.dims(), cube);
  Volume ref_model = normalize_minmax(crop_resize(reference, cube));
  Volume search_model = normalize_minmax(crop_resize(search_on_ref, cube));

  AssembledPair out;
  out.reference = Tensor({input_size, input_size, input_size}, ref_model.data());
  out.search = Tensor({input_size, input_size, input_size}, search_model.data());
  out.model_to_ref_scale = map.scale;
  out.q_model.reserve(q.size());
  out.target_model.reserve(q.size());
  for (size_t i = 0; i < q.size(); ++i) {
    Vec3 qm = map.invert(q.points[i]);
    Vec3 qt_ref = search_to_ref_voxel(reference, search, q_t.points[i]);
    Vec3 qtm = map.invert(qt_ref);
    out.q_model.push_back(qm);
    out.target_model.push_back(qtm - qm);
  }
  return out;
}

}  // namespace quiz
