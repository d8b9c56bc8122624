#include <doctest.h>

#include <cmath>

#include "core/geometry.hpp"
#include "core/metrics.hpp"
#include "testutil.hpp"

using namespace quiz;

TEST_CASE("l_pair golden values") {
  // perfect prediction
  std::vector<Vec3> q{{1, 2, 3}, {4, 5, 6}};
  std::vector<Vec3> qt{{2, 2, 3}, {4, 7, 6}};
  std::vector<Vec3> perfect{{1, 0, 0}, {0, 2, 0}};
  CHECK(l_pair_loss(perfect, q, qt) == doctest::Approx(0.0));

  // zero prediction, offset (3,4,0): 3^2 + 4^2 = 25
  CHECK(l_pair_loss({{0, 0, 0}}, {{0, 0, 0}}, {{3, 4, 0}}) == doctest::Approx(25.0));

  CHECK_THROWS_AS(l_pair_loss({}, {}, {}), Error);
  CHECK_THROWS_AS(l_pair_loss({{0, 0, 0}}, {{0, 0, 0}}, {}), Error);
}

TEST_CASE("l_pair matches an independent double-loop computation") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    size_t n = size_t(rng.uniform_int(1, 40));
    std::vector<Vec3> d(n), q(n), qt(n);
    for (size_t i = 0; i < n; ++i) {
      for (int a = 0; a < 3; ++a) {
        d[i][a] = rng.uniform(-5, 5);
        q[i][a] = rng.uniform(0, 60);
        qt[i][a] = rng.uniform(0, 60);
      }
    }
    // naive oracle with explicit component loop
    double sum = 0;
    for (size_t i = 0; i < n; ++i) {
      double norm2 = 0;
      for (int a = 0; a < 3; ++a) {
        double r = d[i][a] + q[i][a] - qt[i][a];
        norm2 += r * r;
      }
      sum += norm2;
    }
    CHECK(l_pair_loss(d, q, qt) == doctest::Approx(sum / double(n)).epsilon(1e-6));
  }
}

TEST_CASE("l_pair gradient matches finite differences") {
  Rng rng(8);
  std::vector<Vec3> d(6), q(6), qt(6);
  for (size_t i = 0; i < 6; ++i)
    for (int a = 0; a < 3; ++a) {
      d[i][a] = rng.uniform(-3, 3);
      q[i][a] = rng.uniform(0, 20);
      qt[i][a] = rng.uniform(0, 20);
    }
  std::vector<Vec3> grad;
  l_pair_loss(d, q, qt, &grad);
  const double h = 1e-3;
  for (int trial = 0; trial < 20; ++trial) {
    size_t i = size_t(rng.uniform_int(0, 5));
    int a = int(rng.uniform_int(0, 2));
    auto dp = d, dm = d;
    dp[i][a] += h;
    dm[i][a] -= h;
    double fd = (l_pair_loss(dp, q, qt) - l_pair_loss(dm, q, qt)) / (2 * h);
    CHECK(std::abs(grad[i][a] - fd) / std::max(1e-8, std::abs(fd)) < 1e-3);
  }
}

TEST_CASE("ncc properties") {
  Volume a = test::smooth_phantom({12, 12, 12}, 1);
  Volume b = test::smooth_phantom({12, 12, 12}, 2);

  CHECK(ncc(a, a) == doctest::Approx(1.0).epsilon(1e-6));

  // positive affine invariance
  Volume scaled = a;
  for (auto& v : scaled.data()) v = 2.5f * v + 0.75f;
  CHECK(ncc(a, scaled) == doctest::Approx(1.0).epsilon(1e-6));

  // anti-correlation
  Volume neg = a;
  for (auto& v : neg.data()) v = -v;
  CHECK(ncc(a, neg) == doctest::Approx(-1.0).epsilon(1e-6));

  // symmetry
  CHECK(std::abs(ncc(a, b) - ncc(b, a)) < 1e-9);

  // zero variance is finite zero
  Volume flat({12, 12, 12}, {1, 1, 1}, {0, 0, 0}, 2.0f);
  double v = ncc(a, flat);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(0.0).epsilon(1e-9));

  // window validation
  CHECK_THROWS_AS(ncc(a, b, 4), Error);
  Volume small({6, 6, 6}, {1, 1, 1}, {0, 0, 0}, 0.0f);
  CHECK_THROWS_AS(ncc(a, small), Error);
}

TEST_CASE("local ncc agrees with a naive per-window oracle") {
  Volume a = test::smooth_phantom({10, 10, 10}, 3, 3, 2.5, 5.0);
  Volume b = test::smooth_phantom({10, 10, 10}, 4, 3, 2.5, 5.0);
  const int w = 5, r = w / 2;

  double acc = 0;
  int64_t count = 0;
  for (int64_t z = r; z < 10 - r; ++z)
    for (int64_t y = r; y < 10 - r; ++y)
      for (int64_t x = r; x < 10 - r; ++x) {
        double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
        for (int64_t dz = -r; dz <= r; ++dz)
          for (int64_t dy = -r; dy <= r; ++dy)
            for (int64_t dx = -r; dx <= r; ++dx) {
              double av = a.at(x + dx, y + dy, z + dz);
              double bv = b.at(x + dx, y + dy, z + dz);
              sa += av; sb += bv; sab += av * bv; saa += av * av; sbb += bv * bv;
            }
        double m = double(w) * w * w;
        double cov = sab - sa * sb / m;
        double va = saa - sa * sa / m, vb = sbb - sb * sb / m;
        ++count;
        if (va <= 1e-12 || vb <= 1e-12) continue;
        acc += cov / std::sqrt(va * vb + 1e-8);
      }

  CHECK(ncc(a, b, w) == doctest::Approx(acc / double(count)).epsilon(1e-9));
}

TEST_CASE("local ncc: zero-variance windows contribute zero") {
  Volume a({9, 9, 9}, {1, 1, 1}, {0, 0, 0}, 0.0f);
  Volume b = test::random_volume({9, 9, 9}, 5);
  a.at(4, 4, 4) = 1.0f;  // all but the central windows are flat in a
  double v = ncc(a, b, 3);
  CHECK(std::isfinite(v));
}

TEST_CASE("l_trans golden cases and monotonicity") {
  Volume a = test::smooth_phantom({16, 16, 16}, 6, 4, 3.0, 6.0);
  CHECK(l_trans(a, a) == doctest::Approx(-1.0).epsilon(1e-6));

  Volume neg = a;
  for (auto& v : neg.data()) v = -v;
  CHECK(l_trans(a, neg) == doctest::Approx(1.0).epsilon(1e-6));

  // misalignment 0, 2, 4 voxels gives non-decreasing l_trans
  double prev = -2.0;
  for (double shift : {0.0, 2.0, 4.0}) {
    Volume moved = warp_translate(a, {shift, 0, 0});
    double lt = l_trans(a, moved);
    CHECK(lt >= prev - 1e-12);
    prev = lt;
  }
}

TEST_CASE("total_loss arithmetic and report invariant") {
  LossReport r = total_loss(25.0, -1.0, 0.01);
  CHECK(r.total == doctest::Approx(24.99).epsilon(1e-12));
  CHECK(std::abs(r.total - (r.l_pair + r.alpha * r.l_trans)) < 1e-9);

  CHECK(total_loss(3.5, 0.9, 0.0).total == doctest::Approx(3.5));
  CHECK(total_loss(0.0, -1.0, 0.01).alpha == 0.01);
  CHECK_THROWS_AS(total_loss(-1.0, 0.0, 0.01), Error);
}

TEST_CASE("tre golden values") {
  std::vector<Vec3> a{{1, 2, 3}, {4, 5, 6}};
  CHECK(tre(a, a) == doctest::Approx(0.0));

  std::vector<Vec3> b{{2, 4, 5}, {5, 7, 8}};  // both offset by (1,2,2)
  CHECK(tre(a, b) == doctest::Approx(3.0));

  CHECK(tre({{0, 0, 0}}, {{3, 4, 0}}) == doctest::Approx(5.0));

  CHECK_THROWS_AS(tre({}, {}), Error);
  CHECK_THROWS_AS(tre(a, {{0, 0, 0}}), Error);
}

TEST_CASE("tre is translation invariant") {
  Rng rng(7);
  std::vector<Vec3> a(8), b(8);
  for (int i = 0; i < 8; ++i)
    for (int c = 0; c < 3; ++c) {
      a[size_t(i)][c] = rng.uniform(-50, 50);
      b[size_t(i)][c] = rng.uniform(-50, 50);
    }
  Vec3 shift{12.25, -3.5, 8.0};
  auto as = a, bs = b;
  for (auto& p : as) p = p + shift;
  for (auto& p : bs) p = p + shift;
  CHECK(tre(a, b) == tre(as, bs));  // exact: identical differences
}

TEST_CASE("rtre golden values") {
  CHECK(rtre(0.0, {128, 128, 128}) == doctest::Approx(0.0));
  CHECK(rtre(3.0, {128, 128, 128}) == doctest::Approx(0.013532).epsilon(1e-3));
  CHECK(std::abs(rtre(3.0, {128, 128, 128}) - 3.0 / (128.0 * std::sqrt(3.0))) < 1e-12);
}
