#pragma once

#include <string>

#include "landmarks.hpp"
#include "types.hpp"
#include "volume.hpp"

namespace quiz {

// Phantom pair generator standing in for clinical data: a reference volume
// of Gaussian blobs over a smooth background, and a search subvolume cropped
// at a known offset from the centered position.
struct SyntheticPairSpec {
  int64_t side = 64;       // reference cube side
  int64_t crop_side = 48;  // search subvolume side
  int64_t n_blobs = 8;
  // Deviation of the extraction corner from the centered crop, in voxels.
  // Integer components keep the extraction an exact copy.
  Vec3 true_shift{0.0, 0.0, 0.0};
  double noise_sigma = 0.0;     // additive Gaussian noise on the search
  double modality_gamma = 1.0;  // intensity remap exponent on the search
  uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static SyntheticPairSpec from_json(const std::string& text);

  Vec3 centered_corner() const {
    double pad = double(side - crop_side) / 2.0;
    return {pad, pad, pad};
  }
  Vec3 extraction_corner() const { return centered_corner() + true_shift; }
};

struct SyntheticPair {
  Volume reference;
  Volume search;
  LandmarkSet q;    // blob centers, reference voxel coordinates
  LandmarkSet q_t;  // the same points in search voxel coordinates
  Vec3 true_shift;
  Vec3 extraction_corner;
};

// The search volume's origin records the *centered* placement, not the true
// corner; recovering true_shift is the registration problem.
SyntheticPair gen_pair(const SyntheticPairSpec& spec);

// Exhaustive integer-shift search maximizing global NCC over the overlap
// region, searching t in [-range, range]^3. Shifting the search content by
// the returned t best aligns it with the reference (search voxel v matches
// reference voxel v + t). Ties break to the lexicographically smallest
// (tx, ty, tz); shifts with empty overlap are skipped.
Vec3 brute_force_translation(const Volume& reference, const Volume& search, int range);
// Same, over an explicit inclusive search box.
Vec3 brute_force_translation_box(const Volume& reference, const Volume& search,
                                 const Dims3& lo, const Dims3& hi);

// Oracle for generated pairs: searches around the metadata-implied centered
// placement and reports the deviation from it, directly comparable to
// SyntheticPairSpec::true_shift.
Vec3 oracle_true_shift(const Volume& reference, const Volume& search, int range);

}  // namespace quiz
