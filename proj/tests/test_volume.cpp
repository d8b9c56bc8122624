#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "core/landmarks.hpp"
#include "core/volume.hpp"
#include "testutil.hpp"

using namespace quiz;
using test::TmpDir;

TEST_CASE("qvol round-trip is bit-identical") {
  TmpDir tmp("qvol");
  Volume vol = test::random_volume({4, 4, 4}, 1);
  vol.set_origin({1.5, -2.0, 3.0});
  vol.set_spacing({0.5, 1.0, 2.0});
  save_volume(vol, tmp.file("v.qvol"));

  CHECK(std::filesystem::file_size(tmp.file("v.qvol.raw")) == 256);

  Volume back = load_volume(tmp.file("v.qvol"));
  CHECK(back.dims() == vol.dims());
  CHECK(back.spacing() == vol.spacing());
  CHECK(back.origin() == vol.origin());
  CHECK(back.data() == vol.data());
}

TEST_CASE("qvol payload size is dims product times four") {
  TmpDir tmp("qvol_size");
  Volume vol({128, 128, 128}, {1, 1, 1}, {0, 0, 0}, 0.25f);
  save_volume(vol, tmp.file("big.qvol"));
  CHECK(std::filesystem::file_size(tmp.file("big.qvol.raw")) == 8388608);
}

TEST_CASE("qvol header/payload mismatch is rejected") {
  TmpDir tmp("qvol_bad");
  Volume vol = test::random_volume({4, 4, 4}, 2);
  save_volume(vol, tmp.file("v.qvol"));
  std::filesystem::resize_file(tmp.file("v.qvol.raw"), 255);
  CHECK_THROWS_WITH_AS(load_volume(tmp.file("v.qvol")),
                       doctest::Contains("payload size mismatch"), Error);
}

TEST_CASE("qvol load errors") {
  TmpDir tmp("qvol_err");
  CHECK_THROWS_AS(load_volume(tmp.file("missing.qvol")), Error);

  // non-positive spacing in the header
  {
    std::ofstream h(tmp.file("bad.qvol"));
    h << R"({"dims":[4,4,4],"spacing":[0.0,1.0,1.0],"origin":[0,0,0],)"
      << R"("dtype":"f32","order":"zyx"})" << "\n";
  }
  {
    std::ofstream p(tmp.file("bad.qvol.raw"), std::ios::binary);
    std::vector<float> zeros(64, 0.0f);
    p.write(reinterpret_cast<const char*>(zeros.data()), 256);
  }
  CHECK_THROWS_WITH_AS(load_volume(tmp.file("bad.qvol")),
                       doctest::Contains("spacing"), Error);

  // non-finite payload
  {
    std::ofstream h(tmp.file("nan.qvol"));
    h << R"({"dims":[4,4,4],"spacing":[1,1,1],"origin":[0,0,0],)"
      << R"("dtype":"f32","order":"zyx"})" << "\n";
    std::vector<float> data(64, 1.0f);
    data[10] = std::numeric_limits<float>::quiet_NaN();
    std::ofstream p(tmp.file("nan.qvol.raw"), std::ios::binary);
    p.write(reinterpret_cast<const char*>(data.data()), 256);
  }
  CHECK_THROWS_WITH_AS(load_volume(tmp.file("nan.qvol")),
                       doctest::Contains("non-finite"), Error);
}

TEST_CASE("saving a NaN volume fails before writing") {
  TmpDir tmp("qvol_nan");
  Volume vol({4, 4, 4}, {1, 1, 1}, {0, 0, 0}, 1.0f);
  vol.at(1, 2, 3) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(save_volume(vol, tmp.file("v.qvol")), Error);
  CHECK_FALSE(std::filesystem::exists(tmp.file("v.qvol.raw")));
}

TEST_CASE("header order: dims are [D,H,W], spacing [sz,sy,sx]") {
  TmpDir tmp("qvol_order");
  Volume vol({5, 6, 7}, {0.5, 1.0, 2.0}, {1, 2, 3}, 0.0f);  // x=5 y=6 z=7
  save_volume(vol, tmp.file("v.qvol"));
  std::ifstream h(tmp.file("v.qvol"));
  std::string header((std::istreambuf_iterator<char>(h)),
                     std::istreambuf_iterator<char>());
  CHECK(header.find("\"dims\":[7,6,5]") != std::string::npos);
  CHECK(header.find("\"spacing\":[2.0,1.0,0.5]") != std::string::npos);
  CHECK(header.find("\"origin\":[3.0,2.0,1.0]") != std::string::npos);
}

TEST_CASE("resample identity returns the input within 1e-6") {
  Volume vol = test::smooth_phantom({12, 10, 8}, 3);
  Volume out = resample_to_reference(vol, vol.dims(), vol.spacing());
  REQUIRE(out.dims() == vol.dims());
  for (int64_t i = 0; i < vol.size(); ++i)
    CHECK(std::abs(out.data()[size_t(i)] - vol.data()[size_t(i)]) <= 1e-6f);
}

TEST_CASE("resample of a constant volume stays constant inside") {
  Volume vol({8, 8, 8}, {2, 2, 2}, {0, 0, 0}, 3.25f);
  Volume out = resample_to_reference(vol, {11, 11, 11}, {1.0, 1.0, 1.0});
  // voxels whose support lies inside the source: world in [0, 14] -> index 0..14
  for (int64_t z = 0; z < 11; ++z)
    for (int64_t y = 0; y < 11; ++y)
      for (int64_t x = 0; x < 11; ++x)
        CHECK(out.at(x, y, z) == doctest::Approx(3.25).epsilon(1e-6));
}

TEST_CASE("ramp upsample matches the analytic ramp") {
  // derived oracle: trilinear interpolation reproduces a linear field
  // exactly, so the upsampled volume must equal the closed-form ramp
  Volume vol = test::ramp_volume({8, 8, 8}, 0.5, {1.0, 2.0, -0.5});
  Volume out = resample_to_reference(vol, {16, 16, 16}, {0.5, 0.5, 0.5});
  for (int64_t z = 0; z < 15; ++z)
    for (int64_t y = 0; y < 15; ++y)
      for (int64_t x = 0; x < 15; ++x) {
        // world == source voxel coordinate here (unit spacing source)
        double expect = 0.5 + 1.0 * (0.5 * x) + 2.0 * (0.5 * y) - 0.5 * (0.5 * z);
        CHECK(std::abs(out.at(x, y, z) - expect) < 1e-5);
      }
}

TEST_CASE("resample uses world coordinates (origin offset)") {
  Volume vol = test::ramp_volume({8, 8, 8}, 0.0, {1.0, 0.0, 0.0});
  // target grid shifted by +2mm in x: value at target voxel x is x+2
  Volume out = resample_to_reference(vol, {4, 4, 4}, {1, 1, 1}, Vec3{2, 0, 0});
  for (int64_t x = 0; x < 4; ++x) CHECK(out.at(x, 1, 1) == doctest::Approx(x + 2.0));
}

TEST_CASE("crop_resize identity") {
  Volume vol = test::smooth_phantom({16, 16, 16}, 4);
  Volume out = crop_resize(vol, {16, 16, 16});
  for (int64_t i = 0; i < vol.size(); ++i)
    CHECK(std::abs(out.data()[size_t(i)] - vol.data()[size_t(i)]) <= 1e-6f);
  CHECK(out.spacing() == vol.spacing());
}

TEST_CASE("crop_resize 64->32 doubles the spacing") {
  Volume vol({64, 64, 64}, {1, 1, 1}, {0, 0, 0}, 1.0f);
  Volume out = crop_resize(vol, {32, 32, 32});
  CHECK(out.dims() == Dims3{32, 32, 32});
  CHECK(out.spacing().x == doctest::Approx(2.0));
  CHECK(out.spacing().y == doctest::Approx(2.0));
  CHECK(out.spacing().z == doctest::Approx(2.0));
}

TEST_CASE("crop_resize keeps a centered impulse centered") {
  Volume vol({31, 31, 31}, {1, 1, 1}, {0, 0, 0}, 0.0f);
  vol.at(15, 15, 15) = 1.0f;
  Volume out = crop_resize(vol, {16, 16, 16});
  int64_t best = 0;
  for (int64_t i = 1; i < out.size(); ++i)
    if (out.data()[size_t(i)] > out.data()[size_t(best)]) best = i;
  REQUIRE(out.data()[size_t(best)] > 0.0f);
  int64_t bx = best % 16, by = (best / 16) % 16, bz = best / 256;
  CHECK(std::abs(double(bx) - 7.5) <= 1.0);
  CHECK(std::abs(double(by) - 7.5) <= 1.0);
  CHECK(std::abs(double(bz) - 7.5) <= 1.0);
}

TEST_CASE("crop_resize preserves the physical center") {
  Rng rng(9);
  for (int trial = 0; trial < 8; ++trial) {
    Dims3 src{rng.uniform_int(8, 40), rng.uniform_int(8, 40), rng.uniform_int(8, 40)};
    Dims3 dst{rng.uniform_int(4, 24), rng.uniform_int(4, 24), rng.uniform_int(4, 24)};
    Volume vol(src, {1.5, 1.0, 0.5}, {3, -2, 7}, 0.0f);
    AxisMap map = crop_resize_map(src, dst);
    Vec3 out_spacing = vol.spacing() * map.scale;
    // world coordinate of the output grid center must match the input center
    Vec3 in_center = vol.world_from_voxel(vol.center_voxel());
    Vec3 out_center_voxel{double(dst.x - 1) / 2, double(dst.y - 1) / 2,
                          double(dst.z - 1) / 2};
    Vec3 src_coord = map.apply(out_center_voxel);
    Vec3 out_center = vol.world_from_voxel(src_coord);
    for (int a = 0; a < 3; ++a)
      CHECK(std::abs(out_center[a] - in_center[a]) <= out_spacing[a] / 2 + 1e-9);
  }
}

TEST_CASE("landmark csv basics") {
  TmpDir tmp("lm");
  {
    std::ofstream f(tmp.file("two.csv"));
    f << "name,x,y,z\nalpha,1.5,2,3\nbeta,4,5.25,6\n";
  }
  LandmarkSet set = load_landmarks(tmp.file("two.csv"));
  REQUIRE(set.size() == 2);
  CHECK(set.names[0] == "alpha");
  CHECK(set.points[1].y == doctest::Approx(5.25));

  {
    std::ofstream f(tmp.file("dup.csv"));
    f << "name,x,y,z\np,1,2,3\np,4,5,6\n";
  }
  CHECK_THROWS_WITH_AS(load_landmarks(tmp.file("dup.csv")),
                       doctest::Contains("duplicate"), Error);

  {
    std::ofstream f(tmp.file("bad.csv"));
    f << "name,x,y,z\np,1,2\n";
  }
  CHECK_THROWS_WITH_AS(load_landmarks(tmp.file("bad.csv")),
                       doctest::Contains("malformed"), Error);

  {
    std::ofstream f(tmp.file("junk.csv"));
    f << "name,x,y,z\np,1,2,notanumber\n";
  }
  CHECK_THROWS_AS(load_landmarks(tmp.file("junk.csv")), Error);
}

TEST_CASE("landmark save/load round-trip under 1e-6") {
  TmpDir tmp("lm_rt");
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    LandmarkSet set;
    for (int i = 0; i < 20; ++i) {
      set.names.push_back("p" + std::to_string(i));
      set.points.push_back(
          {rng.uniform(0, 511), rng.uniform(0, 511), rng.uniform(0, 108)});
    }
    save_landmarks(set, tmp.file("rt.csv"));
    LandmarkSet back = load_landmarks(tmp.file("rt.csv"));
    REQUIRE(back.size() == set.size());
    double max_err = 0;
    for (size_t i = 0; i < set.size(); ++i) {
      CHECK(back.names[i] == set.names[i]);
      for (int a = 0; a < 3; ++a)
        max_err = std::max(max_err, std::abs(back.points[i][a] - set.points[i][a]));
    }
    CHECK(max_err < 1e-6);
  }
}

TEST_CASE("landmark bounds validation") {
  Volume vol({8, 8, 8}, {1, 1, 1}, {0, 0, 0}, 0.0f);
  LandmarkSet set;
  set.names = {"in", "out"};
  set.points = {{3, 3, 3}, {7.5, 3, 3}};
  CHECK_THROWS_WITH_AS(set.validate_bounds(vol), doctest::Contains("out of bounds"),
                       Error);
  set.points[1] = {7, 3, 3};
  CHECK_NOTHROW(set.validate_bounds(vol));
}

TEST_CASE("volume invariants enforced at construction") {
  CHECK_THROWS_AS(Volume({1, 4, 4}, {1, 1, 1}, {0, 0, 0}, 0.0f), Error);
  CHECK_THROWS_AS(Volume({4, 4, 4}, {0, 1, 1}, {0, 0, 0}, 0.0f), Error);
  CHECK_THROWS_AS(Volume({4, 4, 4}, {-1, 1, 1}, {0, 0, 0}, 0.0f), Error);
}
