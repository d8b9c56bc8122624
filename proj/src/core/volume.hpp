#pragma once

#include <string>
#include <vector>

#include "types.hpp"

namespace quiz {

// 3-D scalar intensity grid with physical spacing (mm/voxel) and world
// origin (mm). Data is stored (z, y, x) with x varying fastest, matching
// the QVOL payload layout; all public coordinates are (x, y, z).
class Volume {
public:
  Volume() = default;
  Volume(Dims3 dims, Vec3 spacing, Vec3 origin, std::vector<float> data);
  Volume(Dims3 dims, Vec3 spacing, Vec3 origin, float fill = 0.0f);

  const Dims3& dims() const { return dims_; }
  const Vec3& spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  void set_origin(const Vec3& o) { origin_ = o; }
  void set_spacing(const Vec3& s);

  int64_t size() const { return dims_.count(); }
  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  float at(int64_t x, int64_t y, int64_t z) const {
    return data_[(z * dims_.y + y) * dims_.x + x];
  }
  float& at(int64_t x, int64_t y, int64_t z) {
    return data_[(z * dims_.y + y) * dims_.x + x];
  }
  bool contains(int64_t x, int64_t y, int64_t z) const {
    return x >= 0 && x < dims_.x && y >= 0 && y < dims_.y && z >= 0 && z < dims_.z;
  }
  // Bounds for continuous landmark coordinates: [0, dim-1] per axis.
  bool in_bounds(const Vec3& p) const {
    return p.x >= 0 && p.x <= double(dims_.x - 1) && p.y >= 0 &&
           p.y <= double(dims_.y - 1) && p.z >= 0 && p.z <= double(dims_.z - 1);
  }

  Vec3 world_from_voxel(const Vec3& p) const { return origin_ + p * spacing_; }
  Vec3 voxel_from_world(const Vec3& w) const { return (w - origin_) / spacing_; }
  // Physical extent dims*spacing in mm.
  Vec3 extent_mm() const { return dims_.as_vec() * spacing_; }
  Vec3 center_voxel() const {
    return {double(dims_.x - 1) / 2, double(dims_.y - 1) / 2, double(dims_.z - 1) / 2};
  }

  // Throws if any intensity is NaN/Inf.
  void require_finite(const std::string& context) const;

  bool same_grid(const Volume& o) const {
    return dims_ == o.dims_ && spacing_ == o.spacing_ && origin_ == o.origin_;
  }

private:
  Dims3 dims_;
  Vec3 spacing_{1.0, 1.0, 1.0};
  Vec3 origin_{0.0, 0.0, 0.0};
  std::vector<float> data_;
};

// QVOL: JSON header at `path`, raw little-endian float32 payload at
// `path + ".raw"` (x fastest, then y, then z).
Volume load_volume(const std::string& path);
void save_volume(const Volume& vol, const std::string& path);

// Trilinear resample onto a new grid, in world coordinates. The target grid
// keeps the source origin unless one is given; voxels mapping outside the
// source get 0.
Volume resample_to_reference(const Volume& vol, Dims3 target_dims, Vec3 target_spacing);
Volume resample_to_reference(const Volume& vol, Dims3 target_dims, Vec3 target_spacing,
                             Vec3 target_origin);

// Per-axis affine voxel map src_coord = scale*out_index + offset, shared by
// crop_resize and dataset assembly so landmarks can follow volumes exactly.
struct AxisMap {
  Vec3 scale{1.0, 1.0, 1.0};
  Vec3 offset{0.0, 0.0, 0.0};

  Vec3 apply(const Vec3& out_index) const { return scale * out_index + offset; }
  Vec3 invert(const Vec3& src_coord) const { return (src_coord - offset) / scale; }
  AxisMap then(const AxisMap& inner) const {
    // inner maps this->apply's output onward: src = inner(scale*k + offset)
    return {inner.scale * scale, inner.scale * offset + inner.offset};
  }
};

// Map of the crop_resize operation: output index -> source voxel coordinate.
AxisMap crop_resize_map(Dims3 src_dims, Dims3 target);

// Center-crop to the largest centered region with the target aspect, then
// trilinear resize; spacing grows/shrinks so the cropped physical extent is
// preserved and the physical center stays fixed.
Volume crop_resize(const Volume& vol, Dims3 target);

// Generic sampler used by the operations above: out(k) = vol(map(k)),
// trilinear, zero outside the source.
Volume resample_affine(const Volume& vol, Dims3 out_dims, const AxisMap& map,
                       Vec3 out_spacing, Vec3 out_origin);

// Trilinear point sample in continuous voxel coordinates, zero outside.
// Raw variants operate on a bare (z,y,x)-ordered array so the model code can
// sample tensors without wrapping them in Volumes.
float trilinear_raw(const float* data, const Dims3& d, const Vec3& p);
// Variant returning the spatial gradient of the interpolant at p.
float trilinear_raw_grad(const float* data, const Dims3& d, const Vec3& p, Vec3* grad);

inline float sample_trilinear(const Volume& vol, const Vec3& p) {
  return trilinear_raw(vol.data().data(), vol.dims(), p);
}
inline float sample_trilinear_grad(const Volume& vol, const Vec3& p, Vec3* grad) {
  return trilinear_raw_grad(vol.data().data(), vol.dims(), p, grad);
}

// Per-volume min-max rescale to [0,1]; constant volumes map to all zeros.
Volume normalize_minmax(const Volume& vol);

}  // namespace quiz
