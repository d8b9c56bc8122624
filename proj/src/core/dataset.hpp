#pragma once

#include <optional>
#include <string>
#include <vector>

#include "landmarks.hpp"
#include "model.hpp"
#include "synthetic.hpp"
#include "tensor.hpp"
#include "volume.hpp"

namespace quiz {

// On-disk layout: <root>/pairs/<id>/{ref.qvol, search.qvol, q.csv, q_t.csv,
// meta.json}. meta.json records the generator spec and ground truth shift.

struct DatasetGenConfig {
  SyntheticPairSpec base;       // true_shift ignored; drawn per pair
  int64_t max_shift = 8;        // integer shifts drawn uniformly in [-m, m]^3
  uint64_t seed = 0;
};

// Writes n pair directories; returns their ids.
std::vector<std::string> generate_dataset(const DatasetGenConfig& cfg, int64_t n,
                                          const std::string& root);

struct PairRecord {
  std::string id;
  Volume reference;
  Volume search;
  LandmarkSet q;
  LandmarkSet q_t;
  std::optional<Vec3> true_shift;  // absent when meta.json is missing
  std::optional<SyntheticPairSpec> spec;
};

std::vector<std::string> list_pair_ids(const std::string& root);
PairRecord load_pair(const std::string& root, const std::string& id);
void write_pair(const std::string& root, const std::string& id, const SyntheticPair& pair,
                const SyntheticPairSpec& spec);

// ---------------------------------------------------------------------------
// Model-input assembly. The search volume is resampled onto the reference
// grid in world coordinates, both volumes are crop_resized to the model cube
// and min-max normalized, and landmarks follow the same maps. Displacements
// predicted on the model grid convert back to reference voxels through
// `model_to_ref_scale`.

struct AssembledPair {
  Tensor reference;  // [s, s, s], values in [0,1]
  Tensor search;     // [s, s, s]
  std::vector<Vec3> q_model;       // queries on the model grid
  std::vector<Vec3> target_model;  // q_t - q on the model grid
  Vec3 model_to_ref_scale;         // per-axis: d_ref = d_model * scale
};

AssembledPair assemble_pair(const Volume& reference, const Volume& search,
                            const LandmarkSet& q, const LandmarkSet& q_t,
                            int64_t input_size);

// Maps a point in search voxel coordinates onto the reference voxel grid via
// world coordinates.
Vec3 search_to_ref_voxel(const Volume& reference, const Volume& search, const Vec3& p);

}  // namespace quiz
