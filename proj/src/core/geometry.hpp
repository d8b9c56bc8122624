#pragma once

#include <array>
#include <vector>

#include "augment.hpp"
#include "types.hpp"
#include "volume.hpp"

namespace quiz {

// Translation-only rigid transform: 4x4 homogeneous matrix whose rotation
// block is pinned to the identity.
class RigidTransform {
public:
  RigidTransform() = default;
  explicit RigidTransform(const Vec3& translation) : t_(translation) {
    if (!t_.finite()) throw_invalid("non-finite translation");
  }

  const Vec3& translation() const { return t_; }

  // Row-major homogeneous matrix; rows map (x, y, z, 1).
  std::array<std::array<double, 4>, 4> matrix() const {
    return {{{1, 0, 0, t_.x}, {0, 1, 0, t_.y}, {0, 0, 1, t_.z}, {0, 0, 0, 1}}};
  }

  RigidTransform compose(const RigidTransform& other) const {
    return RigidTransform(t_ + other.t_);
  }

private:
  Vec3 t_{0.0, 0.0, 0.0};
};

// Exact arithmetic on points, no interpolation.
std::vector<Vec3> apply_transform(const RigidTransform& m, const std::vector<Vec3>& points);

// Pull-semantics translation warp: out(v) = vol(v - t), trilinear, zeros
// outside. Content moves by +t; differentiable in t (see model module).
Volume warp_translate(const Volume& vol, const Vec3& t);

// Moves points the way augment_volume moves voxel content, so sampling the
// augmented volume at a transformed point matches sampling the original at
// the original point. dims is the owning (pre-augment) volume's grid.
std::vector<Vec3> transform_landmarks(const AugmentSpec& aug, const std::vector<Vec3>& pts,
                                      Dims3 dims);
Vec3 transform_landmark(const AugmentSpec& aug, const Vec3& p, Dims3 dims);

}  // namespace quiz
