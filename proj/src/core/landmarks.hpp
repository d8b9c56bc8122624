#pragma once

#include <string>
#include <vector>

#include "types.hpp"
#include "volume.hpp"

namespace quiz {

// Named correspondence points in continuous voxel coordinates of an
// associated volume. Paired sets share identical name lists in identical
// order.
struct LandmarkSet {
  std::vector<std::string> names;
  std::vector<Vec3> points;

  size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  // Throws on duplicate names or name/point count mismatch.
  void validate() const;
  // Additionally requires every point inside [0, dim-1] per axis.
  void validate_bounds(const Volume& vol) const;
};

// True when both sets carry the same names in the same order.
bool paired(const LandmarkSet& a, const LandmarkSet& b);

// CSV schema: header `name,x,y,z`, one row per point, coordinates printed
// with 9 significant digits.
LandmarkSet load_landmarks(const std::string& path);
void save_landmarks(const LandmarkSet& set, const std::string& path);

}  // namespace quiz
