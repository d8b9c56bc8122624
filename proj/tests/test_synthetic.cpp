#include <doctest.h>

#include <cmath>
#include <limits>

#include "core/synthetic.hpp"
#include "testutil.hpp"

using namespace quiz;

TEST_CASE("zero shift, no noise, gamma 1: search equals the centered crop") {
  SyntheticPairSpec spec;
  spec.side = 32;
  spec.crop_side = 24;
  spec.n_blobs = 5;
  spec.seed = 7;
  SyntheticPair pair = gen_pair(spec);

  REQUIRE(pair.search.dims() == Dims3{24, 24, 24});
  for (int64_t z = 0; z < 24; ++z)
    for (int64_t y = 0; y < 24; ++y)
      for (int64_t x = 0; x < 24; ++x)
        CHECK(pair.search.at(x, y, z) == pair.reference.at(x + 4, y + 4, z + 4));

  // q_t - q is constant and equals -extraction_corner
  for (size_t i = 0; i < pair.q.size(); ++i) {
    Vec3 d = pair.q_t.points[i] - pair.q.points[i];
    CHECK(d == -pair.extraction_corner);
  }
  CHECK(pair.extraction_corner == Vec3{4, 4, 4});
  CHECK(pair.true_shift == Vec3{0, 0, 0});
}

TEST_CASE("landmark pairs satisfy q_t - q == -corner for random specs") {
  Rng rng(8);
  for (int trial = 0; trial < 6; ++trial) {
    SyntheticPairSpec spec;
    spec.side = 40;
    spec.crop_side = 28;
    spec.n_blobs = 6;
    spec.true_shift = {double(rng.uniform_int(-6, 6)), double(rng.uniform_int(-6, 6)),
                       double(rng.uniform_int(-6, 6))};
    spec.noise_sigma = 0.02;
    spec.modality_gamma = 1.2;
    spec.seed = rng.next_u64();
    SyntheticPair pair = gen_pair(spec);
    REQUIRE(pair.q.size() >= 3);
    for (size_t i = 0; i < pair.q.size(); ++i)
      CHECK((pair.q_t.points[i] - pair.q.points[i]) == -pair.extraction_corner);
  }
}

TEST_CASE("generation is bit-reproducible from the seed") {
  SyntheticPairSpec spec;
  spec.side = 32;
  spec.crop_side = 20;
  spec.true_shift = {3, -2, 5};
  spec.noise_sigma = 0.05;
  spec.seed = 1234;
  SyntheticPair a = gen_pair(spec);
  SyntheticPair b = gen_pair(spec);
  CHECK(a.reference.data() == b.reference.data());
  CHECK(a.search.data() == b.search.data());
  CHECK(a.q.points == b.q.points);
  CHECK(a.q_t.points == b.q_t.points);
}

TEST_CASE("spec validation") {
  SyntheticPairSpec spec;
  spec.side = 32;
  spec.crop_side = 24;
  spec.true_shift = {5, 0, 0};  // (side-crop)/2 = 4 < 5
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.true_shift = {4, 0, 0};
  CHECK_NOTHROW(spec.validate());
  spec.n_blobs = 2;
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("brute force recovers the exact crop corner") {
  Volume ref = test::smooth_phantom({24, 24, 24}, 9, 5, 2.5, 5.0);
  // interior crop at corner (5, 2, 7)
  Volume crop({10, 10, 10}, {1, 1, 1}, {0, 0, 0});
  for (int64_t z = 0; z < 10; ++z)
    for (int64_t y = 0; y < 10; ++y)
      for (int64_t x = 0; x < 10; ++x) crop.at(x, y, z) = ref.at(x + 5, y + 2, z + 7);

  Vec3 found = brute_force_translation(ref, crop, 9);
  CHECK(found == Vec3{5, 2, 7});
}

TEST_CASE("brute force tie-break on constant images") {
  Volume a({8, 8, 8}, {1, 1, 1}, {0, 0, 0}, 1.0f);
  Volume b({8, 8, 8}, {1, 1, 1}, {0, 0, 0}, 2.0f);
  Vec3 found = brute_force_translation(a, b, 2);
  CHECK(found == Vec3{-2, -2, -2});  // lexicographically smallest in range
}

TEST_CASE("brute force matches an independent double-loop implementation") {
  // second implementation: naive overlap loop with direct Pearson formula
  auto naive = [](const Volume& ref, const Volume& search, int range) {
    Vec3 best{0, 0, 0};
    double best_score = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (int tx = -range; tx <= range; ++tx)
      for (int ty = -range; ty <= range; ++ty)
        for (int tz = -range; tz <= range; ++tz) {
          std::vector<double> av, bv;
          for (int64_t z = 0; z < search.dims().z; ++z)
            for (int64_t y = 0; y < search.dims().y; ++y)
              for (int64_t x = 0; x < search.dims().x; ++x) {
                int64_t rx = x + tx, ry = y + ty, rz = z + tz;
                if (!ref.contains(rx, ry, rz)) continue;
                av.push_back(ref.at(rx, ry, rz));
                bv.push_back(search.at(x, y, z));
              }
          if (av.empty()) continue;
          double n = double(av.size());
          double ma = 0, mb = 0;
          for (size_t i = 0; i < av.size(); ++i) {
            ma += av[i];
            mb += bv[i];
          }
          ma /= n;
          mb /= n;
          double cov = 0, va = 0, vb = 0;
          for (size_t i = 0; i < av.size(); ++i) {
            cov += (av[i] - ma) * (bv[i] - mb);
            va += (av[i] - ma) * (av[i] - ma);
            vb += (bv[i] - mb) * (bv[i] - mb);
          }
          double score = cov / std::sqrt(va * vb + 1e-8);
          if (score > best_score) {
            best_score = score;
            best = {double(tx), double(ty), double(tz)};
            any = true;
          }
        }
    REQUIRE(any);
    return best;
  };

  Rng rng(10);
  for (int trial = 0; trial < 4; ++trial) {
    Volume ref = test::random_volume({16, 16, 16}, rng.next_u64());
    Volume search = test::random_volume({12, 12, 12}, rng.next_u64());
    Vec3 a = brute_force_translation(ref, search, 4);
    Vec3 b = naive(ref, search, 4);
    CHECK(a == b);
  }
}

TEST_CASE("oracle is invariant under positive affine intensity remap") {
  SyntheticPairSpec spec;
  spec.side = 36;
  spec.crop_side = 24;
  spec.true_shift = {4, -3, 2};
  spec.seed = 77;
  SyntheticPair pair = gen_pair(spec);

  Vec3 base = oracle_true_shift(pair.reference, pair.search, 6);
  CHECK(base == pair.true_shift);

  Volume remapped = pair.search;
  for (auto& v : remapped.data()) v = 3.0f * v + 10.0f;
  Vec3 affine = oracle_true_shift(pair.reference, remapped, 6);
  CHECK(affine == pair.true_shift);
}

TEST_CASE("oracle recovers noisy pairs within one voxel per axis") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    SyntheticPairSpec spec;
    spec.side = 40;
    spec.crop_side = 28;
    spec.n_blobs = 6;
    spec.noise_sigma = 0.05;
    spec.true_shift = {double(rng.uniform_int(-5, 5)), double(rng.uniform_int(-5, 5)),
                       double(rng.uniform_int(-5, 5))};
    spec.seed = rng.next_u64();
    SyntheticPair pair = gen_pair(spec);
    Vec3 found = oracle_true_shift(pair.reference, pair.search, 6);
    CHECK(std::abs(found.x - spec.true_shift.x) <= 1.0);
    CHECK(std::abs(found.y - spec.true_shift.y) <= 1.0);
    CHECK(std::abs(found.z - spec.true_shift.z) <= 1.0);
  }
}

TEST_CASE("empty-overlap shifts are skipped") {
  Volume a = test::random_volume({8, 8, 8}, 31);
  Volume b = test::random_volume({8, 8, 8}, 32);
  // range so large that some shifts have empty overlap; must not throw
  CHECK_NOTHROW(brute_force_translation(a, b, 10));
}
