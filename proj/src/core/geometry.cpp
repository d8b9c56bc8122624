#include "geometry.hpp"

#include <cmath>

namespace quiz {

std::vector<Vec3> apply_transform(const RigidTransform& m, const std::vector<Vec3>& points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const Vec3& p : points) {
    if (!p.finite()) throw_invalid("non-finite point in apply_transform");
    out.push_back(p + m.translation());
  }
  return out;
}

Volume warp_translate(const Volume& vol, const Vec3& t) {
  if (!t.finite()) throw_invalid("non-finite translation in warp_translate");
  if (t.x == 0.0 && t.y == 0.0 && t.z == 0.0) return vol;
  AxisMap map;
  map.offset = -t;
  return resample_affine(vol, vol.dims(), map, vol.spacing(), vol.origin());
}

Vec3 transform_landmark(const AugmentSpec& aug, const Vec3& p, Dims3 dims) {
  switch (aug.kind) {
    case AugmentSpec::Kind::Translate:
      return p + aug.shift_frac * dims.as_vec();
    case AugmentSpec::Kind::Scale: {
      Vec3 c{double(dims.x - 1) / 2, double(dims.y - 1) / 2, double(dims.z - 1) / 2};
      return c + (p - c) * aug.scale;
    }
    case AugmentSpec::Kind::Flip: {
      Vec3 out = p;
      out[aug.flip_axis] = double(dims[aug.flip_axis] - 1) - p[aug.flip_axis];
      return out;
    }
    case AugmentSpec::Kind::AxisSwap: {
      // output axis a holds what input axis perm[a] held
      Vec3 out;
      for (int a = 0; a < 3; ++a) out[a] = p[aug.perm[a]];
      return out;
    }
  }
  throw_invalid("unsupported augmentation kind");
}

std::vector<Vec3> transform_landmarks(const AugmentSpec& aug, const std::vector<Vec3>& pts,
                                      Dims3 dims) {
  aug.validate();
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const Vec3& p : pts) out.push_back(transform_landmark(aug, p, dims));
  return out;
}

}  // namespace quiz
