#include "volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace quiz {

namespace {

void validate_grid(const Dims3& dims, const Vec3& spacing) {
  if (dims.x < 2 || dims.y < 2 || dims.z < 2)
    throw_invalid("volume dimensions must each be >= 2, got " + std::to_string(dims.x) +
                  "x" + std::to_string(dims.y) + "x" + std::to_string(dims.z));
  if (!(spacing.x > 0 && spacing.y > 0 && spacing.z > 0))
    throw_invalid("non-positive spacing");
  if (!spacing.finite()) throw_invalid("non-finite spacing");
}

}  // namespace

Volume::Volume(Dims3 dims, Vec3 spacing, Vec3 origin, std::vector<float> data)
    : dims_(dims), spacing_(spacing), origin_(origin), data_(std::move(data)) {
  validate_grid(dims_, spacing_);
  if (int64_t(data_.size()) != dims_.count())
    throw_invalid("data size does not match dimensions");
  if (!origin_.finite()) throw_invalid("non-finite origin");
}

Volume::Volume(Dims3 dims, Vec3 spacing, Vec3 origin, float fill)
    : dims_(dims), spacing_(spacing), origin_(origin),
      data_(size_t(dims.count()), fill) {
  validate_grid(dims_, spacing_);
  if (!origin_.finite()) throw_invalid("non-finite origin");
}

void Volume::set_spacing(const Vec3& s) {
  if (!(s.x > 0 && s.y > 0 && s.z > 0) || !s.finite()) throw_invalid("non-positive spacing");
  spacing_ = s;
}

void Volume::require_finite(const std::string& context) const {
  for (float v : data_)
    if (!std::isfinite(v)) throw_invalid(context + ": non-finite intensity value");
}

// ---------------------------------------------------------------------------
// QVOL I/O

static_assert(sizeof(float) == 4, "QVOL requires 32-bit floats");

namespace {

std::string payload_path(const std::string& header_path) { return header_path + ".raw"; }

void write_le_f32(std::ofstream& out, const std::vector<float>& data) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data.data()),
              std::streamsize(data.size() * 4));
  } else {
    std::vector<uint32_t> buf(data.size());
    for (size_t i = 0; i < data.size(); ++i) {
      uint32_t u = std::bit_cast<uint32_t>(data[i]);
      buf[i] = ((u & 0xffu) << 24) | ((u & 0xff00u) << 8) | ((u >> 8) & 0xff00u) | (u >> 24);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * 4));
  }
}

void read_le_f32(std::ifstream& in, std::vector<float>& data) {
  in.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size() * 4));
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& f : data) {
      uint32_t u = std::bit_cast<uint32_t>(f);
      u = ((u & 0xffu) << 24) | ((u & 0xff00u) << 8) | ((u >> 8) & 0xff00u) | (u >> 24);
      f = std::bit_cast<float>(u);
    }
  }
}

}  // namespace

void save_volume(const Volume& vol, const std::string& path) {
  if (vol.size() == 0) throw_invalid("cannot save empty volume");
  vol.require_finite("save_volume");

  nlohmann::json header;
  header["dims"] = {vol.dims().z, vol.dims().y, vol.dims().x};
  header["spacing"] = {vol.spacing().z, vol.spacing().y, vol.spacing().x};
  header["origin"] = {vol.origin().z, vol.origin().y, vol.origin().x};
  header["dtype"] = "f32";
  header["order"] = "zyx";

  std::ofstream hf(path, std::ios::trunc);
  if (!hf) throw_io("cannot open for writing: " + path);
  hf << header.dump() << "\n";
  hf.close();
  if (!hf) throw_io("write failed: " + path);

  std::ofstream pf(payload_path(path), std::ios::binary | std::ios::trunc);
  if (!pf) throw_io("cannot open for writing: " + payload_path(path));
  write_le_f32(pf, vol.data());
  pf.close();
  if (!pf) throw_io("write failed: " + payload_path(path));
}

Volume load_volume(const std::string& path) {
  std::ifstream hf(path);
  if (!hf) throw_io("cannot open volume header: " + path);
  nlohmann::json header;
  try {
    hf >> header;
  } catch (const nlohmann::json::exception& e) {
    throw_format("invalid QVOL header " + path + ": " + e.what());
  }

  Dims3 dims;
  Vec3 spacing, origin;
  try {
    auto d = header.at("dims");
    auto s = header.at("spacing");
    auto o = header.at("origin");
    if (d.size() != 3 || s.size() != 3 || o.size() != 3)
      throw_format("QVOL header fields must be 3-vectors: " + path);
    dims = {d.at(2).get<int64_t>(), d.at(1).get<int64_t>(), d.at(0).get<int64_t>()};
    spacing = {s.at(2).get<double>(), s.at(1).get<double>(), s.at(0).get<double>()};
    origin = {o.at(2).get<double>(), o.at(1).get<double>(), o.at(0).get<double>()};
    if (header.at("dtype").get<std::string>() != "f32")
      throw_format("unsupported dtype in " + path);
    if (header.at("order").get<std::string>() != "zyx")
      throw_format("unsupported order in " + path);
  } catch (const nlohmann::json::exception& e) {
    throw_format("invalid QVOL header " + path + ": " + e.what());
  }
  validate_grid(dims, spacing);

  std::ifstream pf(payload_path(path), std::ios::binary | std::ios::ate);
  if (!pf) throw_io("cannot open volume payload: " + payload_path(path));
  int64_t bytes = pf.tellg();
  if (bytes != dims.count() * 4)
    throw_format("payload size mismatch for " + path + ": expected " +
                 std::to_string(dims.count() * 4) + " bytes, found " + std::to_string(bytes));
  pf.seekg(0);
  std::vector<float> data(size_t(dims.count()));
  read_le_f32(pf, data);
  if (!pf) throw_io("read failed: " + payload_path(path));

  Volume vol(dims, spacing, origin, std::move(data));
  vol.require_finite("load_volume(" + path + ")");
  return vol;
}

// ---------------------------------------------------------------------------
// Sampling and resampling

float trilinear_raw(const float* data, const Dims3& d, const Vec3& p) {
  double fx = std::floor(p.x), fy = std::floor(p.y), fz = std::floor(p.z);
  int64_t x0 = int64_t(fx), y0 = int64_t(fy), z0 = int64_t(fz);
  double wx = p.x - fx, wy = p.y - fy, wz = p.z - fz;

  auto pick = [&](int64_t x, int64_t y, int64_t z) -> double {
    bool in = x >= 0 && x < d.x && y >= 0 && y < d.y && z >= 0 && z < d.z;
    return in ? double(data[(z * d.y + y) * d.x + x]) : 0.0;
  };

  double c00 = pick(x0, y0, z0) * (1 - wx) + pick(x0 + 1, y0, z0) * wx;
  double c10 = pick(x0, y0 + 1, z0) * (1 - wx) + pick(x0 + 1, y0 + 1, z0) * wx;
  double c01 = pick(x0, y0, z0 + 1) * (1 - wx) + pick(x0 + 1, y0, z0 + 1) * wx;
  double c11 = pick(x0, y0 + 1, z0 + 1) * (1 - wx) + pick(x0 + 1, y0 + 1, z0 + 1) * wx;
  double c0 = c00 * (1 - wy) + c10 * wy;
  double c1 = c01 * (1 - wy) + c11 * wy;
  return float(c0 * (1 - wz) + c1 * wz);
}

float trilinear_raw_grad(const float* data, const Dims3& d, const Vec3& p, Vec3* grad) {
  double fx = std::floor(p.x), fy = std::floor(p.y), fz = std::floor(p.z);
  int64_t x0 = int64_t(fx), y0 = int64_t(fy), z0 = int64_t(fz);
  double wx = p.x - fx, wy = p.y - fy, wz = p.z - fz;

  auto pick = [&](int64_t x, int64_t y, int64_t z) -> double {
    bool in = x >= 0 && x < d.x && y >= 0 && y < d.y && z >= 0 && z < d.z;
    return in ? double(data[(z * d.y + y) * d.x + x]) : 0.0;
  };

  double v000 = pick(x0, y0, z0), v100 = pick(x0 + 1, y0, z0);
  double v010 = pick(x0, y0 + 1, z0), v110 = pick(x0 + 1, y0 + 1, z0);
  double v001 = pick(x0, y0, z0 + 1), v101 = pick(x0 + 1, y0, z0 + 1);
  double v011 = pick(x0, y0 + 1, z0 + 1), v111 = pick(x0 + 1, y0 + 1, z0 + 1);

  double c00 = v000 * (1 - wx) + v100 * wx;
  double c10 = v010 * (1 - wx) + v110 * wx;
  double c01 = v001 * (1 - wx) + v101 * wx;
  double c11 = v011 * (1 - wx) + v111 * wx;
  double c0 = c00 * (1 - wy) + c10 * wy;
  double c1 = c01 * (1 - wy) + c11 * wy;

  if (grad) {
    double gx0 = (v100 - v000) * (1 - wy) + (v110 - v010) * wy;
    double gx1 = (v101 - v001) * (1 - wy) + (v111 - v011) * wy;
    grad->x = gx0 * (1 - wz) + gx1 * wz;
    grad->y = (c10 - c00) * (1 - wz) + (c11 - c01) * wz;
    grad->z = c1 - c0;
  }
  return float(c0 * (1 - wz) + c1 * wz);
}

Volume resample_affine(const Volume& vol, Dims3 out_dims, const AxisMap& map,
                       Vec3 out_spacing, Vec3 out_origin) {
  Volume out(out_dims, out_spacing, out_origin);
  float* dst = out.data().data();
#pragma omp parallel for schedule(static)
  for (int64_t z = 0; z < out_dims.z; ++z) {
    double sz = map.scale.z * double(z) + map.offset.z;
    for (int64_t y = 0; y < out_dims.y; ++y) {
      double sy = map.scale.y * double(y) + map.offset.y;
      int64_t row = (z * out_dims.y + y) * out_dims.x;
      for (int64_t x = 0; x < out_dims.x; ++x) {
        double sx = map.scale.x * double(x) + map.offset.x;
        dst[row + x] = sample_trilinear(vol, {sx, sy, sz});
      }
    }
  }
  return out;
}

Volume resample_to_reference(const Volume& vol, Dims3 target_dims, Vec3 target_spacing) {
  return resample_to_reference(vol, target_dims, target_spacing, vol.origin());
}

Volume resample_to_reference(const Volume& vol, Dims3 target_dims, Vec3 target_spacing,
                             Vec3 target_origin) {
  validate_grid(target_dims, target_spacing);
  // target index k -> world -> source voxel coordinate, an affine map per axis
  AxisMap map;
  map.scale = target_spacing / vol.spacing();
  map.offset = (target_origin - vol.origin()) / vol.spacing();
  return resample_affine(vol, target_dims, map, target_spacing, target_origin);
}

AxisMap crop_resize_map(Dims3 src_dims, Dims3 target) {
  if (target.x < 2 || target.y < 2 || target.z < 2)
    throw_invalid("crop_resize target must be >= 2 per axis");
  // Uniform zoom s chosen so s*target fits the source on every axis.
  double s = std::min({double(src_dims.x) / double(target.x),
                       double(src_dims.y) / double(target.y),
                       double(src_dims.z) / double(target.z)});
  AxisMap map;
  map.scale = {s, s, s};
  for (int a = 0; a < 3; ++a) {
    double extent = s * double(target[a]);
    double start = (double(src_dims[a]) - extent) / 2.0;
    // half-voxel convention: output cell centers sweep the cropped extent
    map.offset[a] = start + (s - 1.0) / 2.0;
  }
  return map;
}

Volume crop_resize(const Volume& vol, Dims3 target) {
  AxisMap map = crop_resize_map(vol.dims(), target);
  Vec3 out_spacing = vol.spacing() * map.scale;
  Vec3 out_origin = vol.origin() + map.offset * vol.spacing();
  return resample_affine(vol, target, map, out_spacing, out_origin);
}

Volume normalize_minmax(const Volume& vol) {
  auto [mn_it, mx_it] = std::minmax_element(vol.data().begin(), vol.data().end());
  float mn = *mn_it, mx = *mx_it;
  Volume out = vol;
  if (mx <= mn) {
    std::fill(out.data().begin(), out.data().end(), 0.0f);
    return out;
  }
  float inv = 1.0f / (mx - mn);
  for (auto& v : out.data()) v = (v - mn) * inv;
  return out;
}

}  // namespace quiz
