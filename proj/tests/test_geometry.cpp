#include <doctest.h>

#include <cmath>

#include "core/geometry.hpp"
#include "core/metrics.hpp"
#include "core/model.hpp"
#include "testutil.hpp"

using namespace quiz;

TEST_CASE("rigid transform matrix layout") {
  RigidTransform m({1.5, -2.0, 3.0});
  auto mat = m.matrix();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) CHECK(mat[r][c] == (r == c ? 1.0 : 0.0));
  CHECK(mat[0][3] == 1.5);
  CHECK(mat[1][3] == -2.0);
  CHECK(mat[2][3] == 3.0);
  CHECK(mat[3][0] == 0.0);
  CHECK(mat[3][3] == 1.0);
}

TEST_CASE("apply_transform: identity, translation, additivity") {
  std::vector<Vec3> pts{{0, 0, 0}, {1, 2, 3}, {-4, 5.5, 6}};
  auto same = apply_transform(RigidTransform({0, 0, 0}), pts);
  CHECK(same == pts);

  auto moved = apply_transform(RigidTransform({1, 2, 3}), {{0, 0, 0}});
  CHECK(moved[0] == Vec3{1, 2, 3});

  // dyadic-rational draws keep every sum exactly representable, so the
  // additivity property can be checked for exact equality
  Rng rng(5);
  auto dyadic = [&] { return double(rng.uniform_int(-10240, 10240)) / 1024.0; };
  for (int trial = 0; trial < 50; ++trial) {
    Vec3 t1{dyadic(), dyadic(), dyadic()};
    Vec3 t2{dyadic(), dyadic(), dyadic()};
    Vec3 p{dyadic(), dyadic(), dyadic()};
    auto separate =
        apply_transform(RigidTransform(t2), apply_transform(RigidTransform(t1), {p}));
    auto composed = apply_transform(RigidTransform(t1).compose(RigidTransform(t2)), {p});
    CHECK(separate[0] == composed[0]);  // exact
  }
}

TEST_CASE("warp_translate zero shift is bit-identical") {
  Volume vol = test::random_volume({9, 8, 7}, 21);
  Volume out = warp_translate(vol, {0, 0, 0});
  CHECK(out.data() == vol.data());
}

TEST_CASE("warp_translate integer shift equals the array-shift oracle") {
  Volume vol = test::random_volume({10, 9, 8}, 22);
  Vec3 t{3, -2, 1};
  Volume out = warp_translate(vol, t);
  for (int64_t z = 0; z < 8; ++z)
    for (int64_t y = 0; y < 9; ++y)
      for (int64_t x = 0; x < 10; ++x) {
        int64_t sx = x - 3, sy = y + 2, sz = z - 1;
        float expect =
            vol.contains(sx, sy, sz) ? vol.at(sx, sy, sz) : 0.0f;
        CHECK(out.at(x, y, z) == expect);  // exact on overlap, zero outside
      }
}

TEST_CASE("warp_translate half-voxel shift on a linear ramp") {
  Volume vol = test::ramp_volume({12, 6, 6}, 1.0, {2.0, 0.0, 0.0});
  Volume out = warp_translate(vol, {0.5, 0, 0});
  // interior: out(x) = ramp(x - 0.5) = 1 + 2x - 1
  for (int64_t x = 1; x < 12; ++x)
    CHECK(std::abs(out.at(x, 3, 3) - (1.0 + 2.0 * x - 1.0)) < 1e-5);
}

TEST_CASE("warp then inverse warp is bounded by interpolation error") {
  // sum of gaussians with amp <= 3, sigma >= 4: per-warp trilinear error is
  // below (3/8) * sum_amp / sigma_min^2; two warps double it
  Volume vol = test::smooth_phantom({20, 20, 20}, 23, 4, 4.0, 7.0);
  Vec3 t{1.3, -0.7, 2.1};
  Volume back = warp_translate(warp_translate(vol, t), -t);
  double bound = 2.0 * 2.0 * (3.0 / 8.0) * 4.0 / (4.0 * 4.0);
  for (int64_t z = 4; z < 16; ++z)
    for (int64_t y = 4; y < 16; ++y)
      for (int64_t x = 4; x < 16; ++x)
        CHECK(std::abs(back.at(x, y, z) - vol.at(x, y, z)) < bound);
}

TEST_CASE("landmark transport: flip, swap, scale") {
  Dims3 dims{10, 12, 14};

  AugmentSpec flip;
  flip.kind = AugmentSpec::Kind::Flip;
  flip.flip_axis = 0;
  Vec3 p{2.5, 3, 4};
  Vec3 out = transform_landmark(flip, p, dims);
  CHECK(out == Vec3{9 - 2.5, 3, 4});

  AugmentSpec swap;
  swap.kind = AugmentSpec::Kind::AxisSwap;
  swap.perm = {2, 1, 0};  // x <-> z
  out = transform_landmark(swap, {1, 2, 3}, dims);
  CHECK(out == Vec3{3, 2, 1});

  AugmentSpec scale;
  scale.kind = AugmentSpec::Kind::Scale;
  scale.scale = 1.25;
  Vec3 c{4.5, 5.5, 6.5};
  out = transform_landmark(scale, {6.5, 5.5, 6.5}, dims);
  CHECK(out.x == doctest::Approx(c.x + 1.25 * 2.0));
  CHECK(out.y == doctest::Approx(5.5));
}

TEST_CASE("sampling consistency for every augmentation kind") {
  // wide low-amplitude blobs keep the trilinear error bound
  // (3/8)*sum_amp/sigma_min^2 below the 1e-3 tolerance
  Volume vol = test::smooth_phantom({32, 32, 32}, 31, 2, 22.0, 28.0, 0.3, 0.5);
  std::vector<Vec3> pts{{10.0, 14.0, 12.0}, {16.0, 8.0, 18.0}, {20.0, 20.0, 10.0}};

  auto check_consistency = [&](const AugmentSpec& spec, double tol) {
    Volume aug = augment_volume(vol, spec);
    auto moved = transform_landmarks(spec, pts, vol.dims());
    for (size_t i = 0; i < pts.size(); ++i) {
      double before = sample_trilinear(vol, pts[i]);
      double after = sample_trilinear(aug, moved[i]);
      CHECK(std::abs(before - after) <= tol);
    }
  };

  AugmentSpec flip;
  flip.kind = AugmentSpec::Kind::Flip;
  flip.flip_axis = 1;
  check_consistency(flip, 1e-6);  // exact reindexing

  AugmentSpec swap;
  swap.kind = AugmentSpec::Kind::AxisSwap;
  swap.perm = {1, 2, 0};
  check_consistency(swap, 1e-6);

  AugmentSpec shift;
  shift.kind = AugmentSpec::Kind::Translate;
  shift.shift_frac = {2.0 / 16, -1.0 / 16, 3.0 / 16};  // integer voxel shift
  check_consistency(shift, 1e-6);

  AugmentSpec frac;
  frac.kind = AugmentSpec::Kind::Translate;
  frac.shift_frac = {0.0371, -0.0211, 0.0153};
  check_consistency(frac, 1e-3);  // smooth phantom, interpolation error only

  AugmentSpec scale;
  scale.kind = AugmentSpec::Kind::Scale;
  scale.scale = 1.25;
  check_consistency(scale, 1e-3);
}

TEST_CASE("dNCC/dt matches central finite differences") {
  // acceptance-style gradient check at non-integer shifts
  Volume fixed = test::smooth_phantom({16, 16, 16}, 41, 4, 4.0, 6.0);
  Volume moving = test::smooth_phantom({16, 16, 16}, 42, 4, 4.0, 6.0);
  Tensor mv({16, 16, 16},
            std::vector<float>(moving.data().begin(), moving.data().end()));

  Rng rng(43);
  const double h = 1e-3;
  for (int trial = 0; trial < 5; ++trial) {
    Vec3 t{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    for (int a = 0; a < 3; ++a) t[a] = std::floor(t[a]) + rng.uniform(0.25, 0.75);

    Tensor warped = position_reset(mv, t);
    Tensor grad_w(warped.shape());
    ncc_global_grad(fixed.data().data(), warped.data(), warped.numel(), grad_w.data());
    Vec3 analytic = position_reset_shift_grad(mv, t, grad_w);

    for (int a = 0; a < 3; ++a) {
      Vec3 tp = t, tm = t;
      tp[a] += h;
      tm[a] -= h;
      Tensor wp = position_reset(mv, tp), wm = position_reset(mv, tm);
      double np = ncc_global(fixed.data().data(), wp.data(), wp.numel());
      double nm = ncc_global(fixed.data().data(), wm.data(), wm.numel());
      double fd = (np - nm) / (2 * h);
      CHECK(std::abs(analytic[a] - fd) / std::max(1e-8, std::abs(fd)) < 1e-3);
    }
  }
}
