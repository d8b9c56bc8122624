#include "augment.hpp"

#include <algorithm>

#include <json.hpp>

#include "geometry.hpp"

namespace quiz {

namespace {

const char* kind_name(AugmentSpec::Kind k) {
  switch (k) {
    case AugmentSpec::Kind::Translate: return "translate";
    case AugmentSpec::Kind::Scale: return "scale";
    case AugmentSpec::Kind::Flip: return "flip";
    case AugmentSpec::Kind::AxisSwap: return "axis_swap";
  }
  return "?";
}

AugmentSpec::Kind kind_from_name(const std::string& s) {
  if (s == "translate") return AugmentSpec::Kind::Translate;
  if (s == "scale") return AugmentSpec::Kind::Scale;
  if (s == "flip") return AugmentSpec::Kind::Flip;
  if (s == "axis_swap") return AugmentSpec::Kind::AxisSwap;
  throw_invalid("unknown augmentation kind: " + s);
}

}  // namespace

void AugmentSpec::validate() const {
  switch (kind) {
    case Kind::Translate:
      for (int a = 0; a < 3; ++a)
        if (!(std::abs(shift_frac[a]) <= 0.25))
          throw_invalid("translate shift fraction exceeds 0.25");
      break;
    case Kind::Scale:
      if (!(scale >= 0.8 && scale <= 1.25))
        throw_invalid("scale factor outside [0.8, 1.25]");
      break;
    case Kind::Flip:
      if (flip_axis < 0 || flip_axis > 2) throw_invalid("flip axis out of range");
      break;
    case Kind::AxisSwap: {
      std::array<int, 3> sorted = perm;
      std::sort(sorted.begin(), sorted.end());
      if (sorted != std::array<int, 3>{0, 1, 2})
        throw_invalid("axis permutation must be a permutation of (0,1,2)");
      break;
    }
  }
}

bool AugmentSpec::is_identity() const {
  switch (kind) {
    case Kind::Translate:
      return shift_frac.x == 0 && shift_frac.y == 0 && shift_frac.z == 0;
    case Kind::Scale: return scale == 1.0;
    case Kind::Flip: return false;
    case Kind::AxisSwap: return perm == std::array<int, 3>{0, 1, 2};
  }
  return false;
}

std::string AugmentSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = kind_name(kind);
  j["seed"] = seed;
  switch (kind) {
    case Kind::Translate: j["shift_frac"] = {shift_frac.x, shift_frac.y, shift_frac.z}; break;
    case Kind::Scale: j["scale"] = scale; break;
    case Kind::Flip: j["axis"] = flip_axis; break;
    case Kind::AxisSwap: j["perm"] = {perm[0], perm[1], perm[2]}; break;
  }
  return j.dump();
}

AugmentSpec AugmentSpec::from_json(const std::string& text) {
  AugmentSpec spec;
  try {
    auto j = nlohmann::json::parse(text);
    spec.kind = kind_from_name(j.at("kind").get<std::string>());
    spec.seed = j.value("seed", uint64_t(0));
    switch (spec.kind) {
      case Kind::Translate: {
        auto s = j.at("shift_frac");
        spec.shift_frac = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
        break;
      }
      case Kind::Scale: spec.scale = j.at("scale").get<double>(); break;
      case Kind::Flip: spec.flip_axis = j.at("axis").get<int>(); break;
      case Kind::AxisSwap: {
        auto p = j.at("perm");
        spec.perm = {p.at(0).get<int>(), p.at(1).get<int>(), p.at(2).get<int>()};
        break;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw_format(std::string("invalid AugmentSpec JSON: ") + e.what());
  }
  spec.validate();
  return spec;
}

AugmentSpec sample_spec(Rng& rng) {
  AugmentSpec spec;
  spec.seed = rng.next_u64();
  switch (rng.uniform_int(0, 3)) {
    case 0:
      spec.kind = AugmentSpec::Kind::Translate;
      for (int a = 0; a < 3; ++a) spec.shift_frac[a] = rng.uniform(-0.25, 0.25);
      break;
    case 1:
      spec.kind = AugmentSpec::Kind::Scale;
      spec.scale = rng.uniform(0.8, 1.25);
      break;
    case 2:
      spec.kind = AugmentSpec::Kind::Flip;
      spec.flip_axis = int(rng.uniform_int(0, 2));
      break;
    default: {
      spec.kind = AugmentSpec::Kind::AxisSwap;
      std::array<int, 3> p{0, 1, 2};
      // Fisher-Yates, identity allowed
      for (int i = 2; i > 0; --i) std::swap(p[i], p[rng.uniform_int(0, i)]);
      spec.perm = p;
      break;
    }
  }
  spec.validate();
  return spec;
}

namespace {

Volume flip_volume(const Volume& vol, int axis) {
  const Dims3& d = vol.dims();
  Volume out(d, vol.spacing(), vol.origin());
  const float* src = vol.data().data();
  float* dst = out.data().data();
  for (int64_t z = 0; z < d.z; ++z)
    for (int64_t y = 0; y < d.y; ++y)
      for (int64_t x = 0; x < d.x; ++x) {
        int64_t sx = axis == 0 ? d.x - 1 - x : x;
        int64_t sy = axis == 1 ? d.y - 1 - y : y;
        int64_t sz = axis == 2 ? d.z - 1 - z : z;
        dst[(z * d.y + y) * d.x + x] = src[(sz * d.y + sy) * d.x + sx];
      }
  return out;
}

Volume swap_volume(const Volume& vol, const std::array<int, 3>& perm) {
  const Dims3& d = vol.dims();
  Dims3 od;
  Vec3 osp, oor;
  for (int a = 0; a < 3; ++a) {
    od[a] = d[perm[a]];
    osp[a] = vol.spacing()[perm[a]];
    oor[a] = vol.origin()[perm[a]];
  }
  Volume out(od, osp, oor);
  const float* src = vol.data().data();
  float* dst = out.data().data();
  // out(v) = in(u) with u[perm[a]] = v[a]
  int64_t v[3];
  int64_t u[3];
  for (v[2] = 0; v[2] < od.z; ++v[2])
    for (v[1] = 0; v[1] < od.y; ++v[1])
      for (v[0] = 0; v[0] < od.x; ++v[0]) {
        for (int a = 0; a < 3; ++a) u[perm[a]] = v[a];
        dst[(v[2] * od.y + v[1]) * od.x + v[0]] = src[(u[2] * d.y + u[1]) * d.x + u[0]];
      }
  return out;
}

}  // namespace

Volume augment_volume(const Volume& vol, const AugmentSpec& spec) {
  spec.validate();
  const Dims3& d = vol.dims();
  switch (spec.kind) {
    case AugmentSpec::Kind::Translate:
      return warp_translate(vol, spec.shift_frac * d.as_vec());
    case AugmentSpec::Kind::Scale: {
      if (spec.scale == 1.0) return vol;
      // out(v) = in(c + (v - c)/f): content scales by f about the center
      Vec3 c = vol.center_voxel();
      AxisMap map;
      double inv = 1.0 / spec.scale;
      map.scale = {inv, inv, inv};
      map.offset = c * (1.0 - inv);
      return resample_affine(vol, d, map, vol.spacing(), vol.origin());
    }
    case AugmentSpec::Kind::Flip: return flip_volume(vol, spec.flip_axis);
    case AugmentSpec::Kind::AxisSwap: return swap_volume(vol, spec.perm);
  }
  throw_invalid("unsupported augmentation kind");
}

AugmentedPair augment_pair(const Volume& reference, const Volume& search,
                           const LandmarkSet& q, const LandmarkSet& q_t,
                           const AugmentSpec& spec) {
  spec.validate();
  if (!paired(q, q_t)) throw_invalid("augment_pair: landmark sets are not paired");

  AugmentedPair out;
  out.reference = augment_volume(reference, spec);
  out.search = augment_volume(search, spec);

  std::vector<Vec3> tq = transform_landmarks(spec, q.points, reference.dims());
  std::vector<Vec3> tqt = transform_landmarks(spec, q_t.points, search.dims());

  for (size_t i = 0; i < tq.size(); ++i) {
    if (!out.reference.in_bounds(tq[i]) || !out.search.in_bounds(tqt[i])) continue;
    out.q.names.push_back(q.names[i]);
    out.q.points.push_back(tq[i]);
    out.q_t.names.push_back(q_t.names[i]);
    out.q_t.points.push_back(tqt[i]);
  }
  if (out.q.empty())
    throw_invalid("augmentation left no landmark pair in frame");
  return out;
}

}  // namespace quiz
