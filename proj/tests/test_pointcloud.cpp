#include <doctest.h>

#include <set>

#include "pcac/pointcloud.hpp"
#include "pcac/rng.hpp"

#include "testutil.hpp"

using namespace pcac;

namespace {

PointCloud random_cloud(Index n, uint64_t seed) {
  Rng rng(seed);
  PointCloud pc;
  pc.positions.resize(n, 3);
  pc.colors.resize(n, 3);
  for (Index c = 0; c < 3; ++c)
    for (Index r = 0; r < n; ++r) {
      pc.positions(r, c) = rng.uniform(-5, 5);
      pc.colors(r, c) = rng.uniform(0, 1);
    }
  return pc;
}

}  // namespace

TEST_CASE("color space endpoints") {
  MatX<double> rgb(2, 3);
  rgb << 0, 0, 0, 1, 1, 1;
  const MatX<double> yuv = rgb_to_yuv(rgb);
  CHECK(yuv(0, 0) == doctest::Approx(0.0));
  CHECK(yuv(0, 1) == doctest::Approx(0.5));
  CHECK(yuv(0, 2) == doctest::Approx(0.5));
  CHECK(yuv(1, 0) == doctest::Approx(1.0));
  CHECK(yuv(1, 1) == doctest::Approx(0.5));
  CHECK(yuv(1, 2) == doctest::Approx(0.5));
}

TEST_CASE("color round trip is tight for 10^4 random colors") {
  Rng rng(21);
  MatX<double> rgb(10000, 3);
  for (Index c = 0; c < 3; ++c)
    for (Index r = 0; r < rgb.rows(); ++r) rgb(r, c) = rng.uniform(0, 1);
  const MatX<double> back = yuv_to_rgb(rgb_to_yuv(rgb));
  CHECK((back - rgb).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("validate rejects malformed clouds") {
  PointCloud pc = random_cloud(4, 1);
  CHECK_NOTHROW(validate(pc));
  pc.colors(1, 2) = 1.5;
  CHECK_THROWS_AS(validate(pc), PreconditionError);
  pc = random_cloud(4, 1);
  pc.colors.conservativeResize(3, 3);
  CHECK_THROWS_AS(validate(pc), PreconditionError);
  pc = random_cloud(4, 1);
  pc.positions(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(validate(pc), PreconditionError);
}

TEST_CASE("one full patch covers every point exactly once") {
  const PointCloud pc = random_cloud(2048, 2);
  const std::vector<Patch> patches = make_patches(pc, 2048);
  REQUIRE(patches.size() == 1);
  const Patch& p = patches[0];
  REQUIRE(p.size() == 2048);
  std::set<Index> parents;
  for (const Index parent : p.parent_indices) {
    CHECK(parent >= 0);
    parents.insert(parent);
  }
  CHECK(parents.size() == 2048);  // a permutation, no filler
}

TEST_CASE("n = patch_size + 1 still partitions the cloud") {
  const PointCloud pc = random_cloud(2049, 3);
  const std::vector<Patch> patches = make_patches(pc, 2048);
  REQUIRE(patches.size() == 2);
  std::set<Index> parents;
  Index owned = 0;
  for (const Patch& p : patches) {
    CHECK(p.size() == 2048);
    for (const Index parent : p.parent_indices)
      if (parent >= 0) {
        ++owned;
        CHECK(parents.insert(parent).second);  // no repeats
      }
  }
  CHECK(owned == 2049);
  CHECK(*parents.begin() == 0);
  CHECK(*parents.rbegin() == 2048);
}

TEST_CASE("patches are normalized into the unit ball") {
  const PointCloud pc = random_cloud(1000, 4);
  for (const Patch& p : make_patches(pc, 256)) {
    CHECK(p.positions.colwise().mean().norm() < 1e-9);
    CHECK(p.positions.rowwise().norm().maxCoeff() <= 1.0 + 1e-12);
    // denormalize returns to parent coordinates
    const Mat3<double> orig = p.denormalize();
    for (Index r = 0; r < p.size(); ++r)
      if (p.parent_indices[static_cast<size_t>(r)] >= 0)
        CHECK((orig.row(r) - pc.positions.row(p.parent_indices[static_cast<size_t>(r)])).norm() <
              1e-9);
  }
}

TEST_CASE("patching is deterministic") {
  const PointCloud pc = random_cloud(5000, 5);
  const std::vector<Patch> a = make_patches(pc, 512);
  const std::vector<Patch> b = make_patches(pc, 512);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].positions == b[i].positions);
    CHECK(a[i].parent_indices == b[i].parent_indices);
  }
}

TEST_CASE("empty cloud is rejected") {
  PointCloud pc;
  pc.positions.resize(0, 3);
  pc.colors.resize(0, 3);
  CHECK_THROWS_WITH_AS(make_patches(pc, 2048), doctest::Contains("empty"),
                       PreconditionError);
}

TEST_CASE("merging original patch colors reproduces the cloud") {
  const PointCloud pc = random_cloud(3000, 6);
  const std::vector<Patch> patches = make_patches(pc, 512);
  std::vector<Mat3<double>> colors;
  for (const Patch& p : patches) colors.push_back(p.colors);
  const Mat3<double> merged = merge_patches(patches, colors, pc.size());
  CHECK(merged == pc.colors);
}

TEST_CASE("merge rejects incomplete coverage") {
  const PointCloud pc = random_cloud(600, 7);
  std::vector<Patch> patches = make_patches(pc, 512);
  std::vector<Mat3<double>> colors;
  for (const Patch& p : patches) colors.push_back(p.colors);
  CHECK_THROWS_AS(merge_patches({patches[0]}, {colors[0]}, pc.size()), PreconditionError);
  colors.pop_back();
  CHECK_THROWS_AS(merge_patches(patches, colors, pc.size()), PreconditionError);
}
