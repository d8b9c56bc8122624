#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "rng.hpp"

namespace quiz {

void SyntheticPairSpec::validate() const {
  if (side < 16) throw_invalid("synthetic side must be >= 16");
  if (crop_side < 8 || crop_side >= side)
    throw_invalid("crop_side must be in [8, side)");
  if (n_blobs < 3) throw_invalid("n_blobs must be >= 3");
  double half = double(side - crop_side) / 2.0;
  for (int a = 0; a < 3; ++a)
    if (std::abs(true_shift[a]) > half)
      throw_invalid("true_shift does not fit: |shift| must be <= (side-crop_side)/2");
  if (noise_sigma < 0) throw_invalid("noise_sigma must be >= 0");
  if (!(modality_gamma > 0)) throw_invalid("modality_gamma must be > 0");
}

std::string SyntheticPairSpec::to_json() const {
  nlohmann::json j;
  j["side"] = side;
  j["crop_side"] = crop_side;
  j["n_blobs"] = n_blobs;
  j["true_shift"] = {true_shift.x, true_shift.y, true_shift.z};
  j["noise_sigma"] = noise_sigma;
  j["modality_gamma"] = modality_gamma;
  j["seed"] = seed;
  return j.dump();
}

SyntheticPairSpec SyntheticPairSpec::from_json(const std::string& text) {
  SyntheticPairSpec s;
  try {
    auto j = nlohmann::json::parse(text);
    s.side = j.value("side", s.side);
    s.crop_side = j.value("crop_side", s.crop_side);
    s.n_blobs = j.value("n_blobs", s.n_blobs);
    if (j.contains("true_shift")) {
      auto t = j.at("true_shift");
      s.true_shift = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
    }
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.modality_gamma = j.value("modality_gamma", s.modality_gamma);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw_format(std::string("invalid synthetic spec JSON: ") + e.what());
  }
  s.validate();
  return s;
}

namespace {

void add_gaussian(Volume& vol, const Vec3& center, double sigma, double amp) {
  const Dims3& d = vol.dims();
  // truncate at 4 sigma
  int64_t r = int64_t(std::ceil(4.0 * sigma));
  int64_t x0 = std::max<int64_t>(0, int64_t(center.x) - r);
  int64_t x1 = std::min<int64_t>(d.x - 1, int64_t(center.x) + r);
  int64_t y0 = std::max<int64_t>(0, int64_t(center.y) - r);
  int64_t y1 = std::min<int64_t>(d.y - 1, int64_t(center.y) + r);
  int64_t z0 = std::max<int64_t>(0, int64_t(center.z) - r);
  int64_t z1 = std::min<int64_t>(d.z - 1, int64_t(center.z) + r);
  double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (int64_t z = z0; z <= z1; ++z) {
    double dz = double(z) - center.z;
    for (int64_t y = y0; y <= y1; ++y) {
      double dy = double(y) - center.y;
      double base = dz * dz + dy * dy;
      for (int64_t x = x0; x <= x1; ++x) {
        double dx = double(x) - center.x;
        vol.at(x, y, z) += float(amp * std::exp(-(base + dx * dx) * inv2s2));
      }
    }
  }
}

bool is_integer_vec(const Vec3& v) {
  return v.x == std::floor(v.x) && v.y == std::floor(v.y) && v.z == std::floor(v.z);
}

}  // namespace

SyntheticPair gen_pair(const SyntheticPairSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  int64_t side = spec.side, crop = spec.crop_side;

  Volume reference({side, side, side}, {1, 1, 1}, {0, 0, 0});

  // smooth background texture
  for (int i = 0; i < 2; ++i) {
    Vec3 c{rng.uniform(0, double(side)), rng.uniform(0, double(side)),
           rng.uniform(0, double(side))};
    add_gaussian(reference, c, rng.uniform(14.0, 24.0), rng.uniform(0.05, 0.15));
  }

  // salient blobs; centers placed so every landmark stays inside the crop
  Vec3 corner = spec.extraction_corner();
  std::vector<Vec3> centers;
  for (int64_t i = 0; i < spec.n_blobs; ++i) {
    Vec3 c;
    for (int attempt = 0; attempt < 64; ++attempt) {
      for (int a = 0; a < 3; ++a) {
        double lo = std::max(2.0, corner[a] + 2.0);
        double hi = std::min(double(side - 3), corner[a] + double(crop) - 3.0);
        c[a] = rng.uniform(lo, hi);
      }
      bool apart = true;
      for (const Vec3& o : centers)
        if ((c - o).norm() < 8.0) { apart = false; break; }
      if (apart) break;
    }
    centers.push_back(c);
    add_gaussian(reference, c, rng.uniform(3.0, 5.5), rng.uniform(0.6, 1.0));
  }

  // extraction: search voxel v corresponds to reference voxel v + corner
  Volume search({crop, crop, crop}, reference.spacing(),
                reference.origin() + spec.centered_corner() * reference.spacing());
  if (is_integer_vec(corner)) {
    int64_t cx = int64_t(corner.x), cy = int64_t(corner.y), cz = int64_t(corner.z);
    for (int64_t z = 0; z < crop; ++z)
      for (int64_t y = 0; y < crop; ++y)
        for (int64_t x = 0; x < crop; ++x)
          search.at(x, y, z) = reference.at(x + cx, y + cy, z + cz);
  } else {
    AxisMap map;
    map.offset = corner;
    search = resample_affine(reference, {crop, crop, crop}, map, search.spacing(),
                             search.origin());
  }

  if (spec.modality_gamma != 1.0) {
    float mx = *std::max_element(search.data().begin(), search.data().end());
    if (mx > 0) {
      for (auto& v : search.data())
        v = float(std::pow(std::max(0.0, double(v) / mx), spec.modality_gamma) * mx);
    }
  }
  if (spec.noise_sigma > 0) {
    for (auto& v : search.data()) v += float(rng.normal(0.0, spec.noise_sigma));
  }

  SyntheticPair pair;
  pair.true_shift = spec.true_shift;
  pair.extraction_corner = corner;
  for (size_t i = 0; i < centers.size(); ++i) {
    Vec3 qt = centers[i] - corner;
    if (!search.in_bounds(qt)) continue;  // dropped pairwise
    std::string name = "p" + std::to_string(i);
    pair.q.names.push_back(name);
    pair.q.points.push_back(centers[i]);
    pair.q_t.names.push_back(name);
    pair.q_t.points.push_back(qt);
  }
  if (pair.q.size() < 3)
    throw_runtime("gen_pair: fewer than 3 landmark pairs survive the crop");
  pair.reference = std::move(reference);
  pair.search = std::move(search);
  return pair;
}

// ---------------------------------------------------------------------------
// Brute-force translation oracle

namespace {

struct ShiftScore {
  double score = -std::numeric_limits<double>::infinity();
  Dims3 shift{0, 0, 0};
  bool valid = false;

  // prefer higher score; break ties toward lexicographically smaller shift
  bool better_than(const ShiftScore& o) const {
    if (!valid) return false;
    if (!o.valid) return true;
    if (score != o.score) return score > o.score;
    if (shift.x != o.shift.x) return shift.x < o.shift.x;
    if (shift.y != o.shift.y) return shift.y < o.shift.y;
    return shift.z < o.shift.z;
  }
};

// Global NCC over the overlap when search content is shifted by t.
ShiftScore score_shift(const Volume& ref, const Volume& search, const Dims3& t) {
  const Dims3& rd = ref.dims();
  const Dims3& sd = search.dims();
  int64_t x0 = std::max<int64_t>(0, t.x), x1 = std::min(rd.x, sd.x + t.x);
  int64_t y0 = std::max<int64_t>(0, t.y), y1 = std::min(rd.y, sd.y + t.y);
  int64_t z0 = std::max<int64_t>(0, t.z), z1 = std::min(rd.z, sd.z + t.z);
  ShiftScore out;
  out.shift = t;
  int64_t n = (x1 - x0) * (y1 - y0) * (z1 - z0);
  if (n <= 0) return out;  // empty overlap: skipped

  const float* rp = ref.data().data();
  const float* sp = search.data().data();
  double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  for (int64_t z = z0; z < z1; ++z)
    for (int64_t y = y0; y < y1; ++y) {
      const float* rrow = rp + (z * rd.y + y) * rd.x;
      const float* srow = sp + ((z - t.z) * sd.y + (y - t.y)) * sd.x - t.x;
      for (int64_t x = x0; x < x1; ++x) {
        double a = rrow[x], b = srow[x];
        sa += a;
        sb += b;
        sab += a * b;
        saa += a * a;
        sbb += b * b;
      }
    }
  double dn = double(n);
  double cov = sab - sa * sb / dn;
  double va = saa - sa * sa / dn;
  double vb = sbb - sb * sb / dn;
  out.score = cov / std::sqrt(std::max(va, 0.0) * std::max(vb, 0.0) + 1e-8);
  out.valid = true;
  return out;
}

}  // namespace

Vec3 brute_force_translation_box(const Volume& reference, const Volume& search,
                                 const Dims3& lo, const Dims3& hi) {
  if (lo.x > hi.x || lo.y > hi.y || lo.z > hi.z)
    throw_invalid("brute force: empty search box");
  int64_t nx = hi.x - lo.x + 1;
  std::vector<ShiftScore> best_per_x(static_cast<size_t>(nx));
#pragma omp parallel for schedule(dynamic)
  for (int64_t ix = 0; ix < nx; ++ix) {
    ShiftScore best;
    for (int64_t ty = lo.y; ty <= hi.y; ++ty)
      for (int64_t tz = lo.z; tz <= hi.z; ++tz) {
        ShiftScore s = score_shift(reference, search, {lo.x + ix, ty, tz});
        if (s.better_than(best)) best = s;
      }
    best_per_x[size_t(ix)] = best;
  }
  ShiftScore best;
  for (const ShiftScore& s : best_per_x)
    if (s.better_than(best)) best = s;
  if (!best.valid) throw_runtime("brute force: no shift with nonempty overlap");
  return best.shift.as_vec();
}

Vec3 brute_force_translation(const Volume& reference, const Volume& search, int range) {
  if (range < 0) throw_invalid("brute force: negative range");
  int64_t r = range;
  return brute_force_translation_box(reference, search, {-r, -r, -r}, {r, r, r});
}

Vec3 oracle_true_shift(const Volume& reference, const Volume& search, int range) {
  // centered placement implied by the volumes' world origins
  Vec3 pad = (search.origin() - reference.origin()) / reference.spacing();
  Dims3 base{int64_t(std::llround(pad.x)), int64_t(std::llround(pad.y)),
             int64_t(std::llround(pad.z))};
  int64_t r = range;
  Dims3 lo{base.x - r, base.y - r, base.z - r};
  Dims3 hi{base.x + r, base.y + r, base.z + r};
  Vec3 corner = brute_force_translation_box(reference, search, lo, hi);
  return corner - pad;
}

}  // namespace quiz
