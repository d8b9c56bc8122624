#pragma once

#include <array>
#include <string>

#include "landmarks.hpp"
#include "rng.hpp"
#include "types.hpp"
#include "volume.hpp"

namespace quiz {

// One augmentation draw: exactly one kind per spec, no stacking.
struct AugmentSpec {
  enum class Kind { Translate, Scale, Flip, AxisSwap };

  Kind kind = Kind::Translate;
  // Translate: shift as a fraction of each axis extent (|frac| <= 0.25 so at
  // least half the volume stays in frame). Stored relative because the spec
  // is drawn before any volume is known.
  Vec3 shift_frac{0.0, 0.0, 0.0};
  // Scale: isotropic factor about the volume center, in [0.8, 1.25].
  double scale = 1.0;
  // Flip: axis index, 0=x 1=y 2=z.
  int flip_axis = 0;
  // AxisSwap: permutation p of (0,1,2); output axis a takes input axis p[a].
  std::array<int, 3> perm{0, 1, 2};
  uint64_t seed = 0;

  void validate() const;
  bool is_identity() const;

  std::string to_json() const;
  static AugmentSpec from_json(const std::string& text);
};

// Uniform draw over the four kinds with parameters in the ranges above.
AugmentSpec sample_spec(Rng& rng);

// Applies the spec to one volume (its own dims resolve relative parameters).
Volume augment_volume(const Volume& vol, const AugmentSpec& spec);

// Transforms both volumes of a pair by the same spec (each resolved against
// its own frame), transports both landmark sets, and drops any pair whose
// point leaves either frame. Throws if no landmark pair survives.
struct AugmentedPair {
  Volume reference;
  Volume search;
  LandmarkSet q;
  LandmarkSet q_t;
};
AugmentedPair augment_pair(const Volume& reference, const Volume& search,
                           const LandmarkSet& q, const LandmarkSet& q_t,
                           const AugmentSpec& spec);

}  // namespace quiz
