#include "adafusion/preprocess.hpp"

#include "oracles.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace adafusion;

namespace {

Matrix randomCloud(int n, Rng& rng, double lo = -40.0, double hi = 40.0) {
  Matrix cloud(n, 3);
  for (int i = 0; i < n; ++i) {
    cloud(i, 0) = rng.uniform(lo, hi);
    cloud(i, 1) = rng.uniform(lo, hi);
    cloud(i, 2) = rng.uniform(-5.0, 21.0);
  }
  return cloud;
}

}  // namespace

TEST_CASE("removeGround filters by z threshold, order preserved") {
  Matrix points(3, 3);
  points << 1, 0, -0.1, 2, 0, 0.5, 3, 0, 2.0;
  const Matrix kept = removeGround(points, 0.2);
  REQUIRE(kept.rows() == 2);
  CHECK(kept(0, 2) == 0.5);
  CHECK(kept(1, 2) == 2.0);
  CHECK(kept(0, 0) == 2);

  CHECK(removeGround(Matrix(0, 3), 0.2).rows() == 0);
}

TEST_CASE("removeGround equals the pointwise predicate on 10k points") {
  Rng rng(31);
  const Matrix cloud = randomCloud(10000, rng);
  const double threshold = 0.7;
  const Matrix kept = removeGround(cloud, threshold);
  Eigen::Index expected = 0;
  for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
    if (cloud(i, 2) > threshold) {
      REQUIRE(expected < kept.rows());
      CHECK((kept.row(expected) - cloud.row(i)).norm() == 0.0);
      ++expected;
    }
  }
  CHECK(kept.rows() == expected);
}

TEST_CASE("voxelize sets the single cell containing a centered point") {
  VoxelGridSpec spec;
  spec.min_corner = Eigen::Vector3d(0, 0, 0);
  spec.max_corner = Eigen::Vector3d(2, 2, 2);
  spec.resolution = {2, 2, 2};
  Matrix point(1, 3);
  point << 1.0, 1.0, 1.0;
  const VoxelGrid grid = voxelize(point, spec);
  CHECK(grid.occupancy.sum() == 1.0);
  CHECK(grid.occupancy(0, (1 * 2 + 1) * 2 + 1) == 1.0);
}

TEST_CASE("voxelize of an empty cloud is all zero") {
  const VoxelGrid grid = voxelize(Matrix(0, 3), VoxelGridSpec{});
  CHECK(grid.occupancy.sum() == 0.0);
  CHECK(grid.occupancy.cols() == 72 * 72 * 48);
}

TEST_CASE("voxelize boundary handling: max-boundary clamps, out-of-bounds drop") {
  VoxelGridSpec spec;
  spec.min_corner = Eigen::Vector3d(0, 0, 0);
  spec.max_corner = Eigen::Vector3d(4, 4, 4);
  spec.resolution = {4, 4, 4};
  Matrix points(3, 3);
  points << 4.0, 4.0, 4.0,   // exactly on the max corner -> last cell
      -0.01, 1.0, 1.0,       // outside -> ignored
      4.01, 1.0, 1.0;        // outside -> ignored
  const VoxelGrid grid = voxelize(points, spec);
  CHECK(grid.occupancy.sum() == 1.0);
  CHECK(grid.occupancy(0, (3 * 4 + 3) * 4 + 3) == 1.0);
}

TEST_CASE("voxelize equals the per-cell membership oracle on 5000 points") {
  Rng rng(17);
  VoxelGridSpec spec;
  spec.min_corner = Eigen::Vector3d(-8, -8, -2);
  spec.max_corner = Eigen::Vector3d(8, 8, 6);
  spec.resolution = {12, 10, 8};
  const Matrix cloud = randomCloud(5000, rng, -9.0, 9.0);
  const VoxelGrid grid = voxelize(cloud, spec);
  const Matrix expected = oracles::naiveVoxelize(cloud, spec);
  CHECK(testsupport::maxAbsDiff(grid.occupancy, expected) == 0.0);
}

TEST_CASE("voxelize is permutation invariant and unions monotonically") {
  Rng rng(23);
  VoxelGridSpec spec;
  spec.min_corner = Eigen::Vector3d(-10, -10, -2);
  spec.max_corner = Eigen::Vector3d(10, 10, 8);
  spec.resolution = {9, 9, 5};
  const Matrix a = randomCloud(800, rng, -11, 11);
  const Matrix b = randomCloud(700, rng, -11, 11);

  Matrix shuffled = a;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(a.rows()));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  for (std::size_t i = 0; i < order.size(); ++i) {
    shuffled.row(static_cast<Eigen::Index>(i)) = a.row(order[i]);
  }
  CHECK(testsupport::maxAbsDiff(voxelize(a, spec).occupancy,
                                voxelize(shuffled, spec).occupancy) == 0.0);

  Matrix both(a.rows() + b.rows(), 3);
  both << a, b;
  const Matrix grid_union = voxelize(both, spec).occupancy;
  const Matrix grid_or =
      voxelize(a, spec).occupancy.cwiseMax(voxelize(b, spec).occupancy);
  CHECK(testsupport::maxAbsDiff(grid_union, grid_or) == 0.0);
}

TEST_CASE("prepareImage maps 8-bit extremes to the [-1, 1] range ends") {
  const CropRect full{};
  const auto zeros = prepareImage(ImageU8::filled(8, 10, 0), full, 8, 10);
  CHECK(zeros.pixels.minCoeff() == -1.0);
  CHECK(zeros.pixels.maxCoeff() == -1.0);

  const auto bright = prepareImage(ImageU8::filled(8, 10, 255), full, 8, 10);
  CHECK(bright.pixels.minCoeff() == 1.0);

  const auto mid = prepareImage(ImageU8::filled(8, 10, 128), full, 8, 10);
  CHECK(mid.pixels(0, 0) == doctest::Approx(128.0 / 127.5 - 1.0).epsilon(1e-12));
}

TEST_CASE("prepareImage crops and resizes") {
  ImageU8 raw = ImageU8::filled(16, 16, 0);
  for (int r = 8; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      for (int ch = 0; ch < 3; ++ch) raw.at(r, c, ch) = 255;
    }
  }
  const auto bottom = prepareImage(raw, CropRect{8, 0, 8, 16}, 4, 8);
  CHECK(bottom.pixels.minCoeff() == 1.0);

  CHECK_THROWS_AS(prepareImage(raw, CropRect{8, 8, 16, 16}, 4, 4), ValidationError);
  CHECK_THROWS_AS(prepareImage(raw, CropRect{-1, 0, 4, 4}, 4, 4), ValidationError);
}

TEST_CASE("augment with neutral parameters is the identity") {
  Rng rng(5);
  NormalizedImage image;
  image.height = 4;
  image.width = 6;
  image.pixels = testsupport::randomMatrix(3, 24, rng, 0.9);
  Matrix points = randomCloud(50, rng);

  AugmentParams neutral;
  neutral.photometric_low = neutral.photometric_high = 1.0;
  neutral.jitter_sigma = 0.0;

  NormalizedImage image_copy = image;
  Matrix points_copy = points;
  Rng augment_rng(1);
  augment(image_copy, points_copy, neutral, augment_rng);
  CHECK(testsupport::maxAbsDiff(image.pixels, image_copy.pixels) < 1e-12);
  CHECK(testsupport::maxAbsDiff(points, points_copy) < 1e-12);
}

TEST_CASE("augment stays in range, clips jitter, and is seed-deterministic") {
  Rng rng(6);
  NormalizedImage image;
  image.height = 6;
  image.width = 8;
  image.pixels = testsupport::randomMatrix(3, 48, rng, 1.0);
  Matrix points = randomCloud(200, rng);

  AugmentParams params;  // defaults: +/-20% photometric, sigma 0.05, clip 0.1
  NormalizedImage out1 = image;
  Matrix pts1 = points;
  Rng r1(99);
  augment(out1, pts1, params, r1);
  CHECK(out1.pixels.maxCoeff() <= 1.0);
  CHECK(out1.pixels.minCoeff() >= -1.0);
  CHECK((pts1 - points).cwiseAbs().maxCoeff() <= params.jitter_clip + 1e-12);

  NormalizedImage out2 = image;
  Matrix pts2 = points;
  Rng r2(99);
  augment(out2, pts2, params, r2);
  CHECK(testsupport::maxAbsDiff(out1.pixels, out2.pixels) == 0.0);
  CHECK(testsupport::maxAbsDiff(pts1, pts2) == 0.0);
}

TEST_CASE("estimateGroundZ tracks the lower z percentile") {
  Matrix points(100, 3);
  for (int i = 0; i < 100; ++i) {
    points(i, 0) = 0;
    points(i, 1) = 0;
    points(i, 2) = i * 0.1;  // z in [0, 9.9]
  }
  const double ground = estimateGroundZ(points);
  CHECK(ground == doctest::Approx(0.4).epsilon(1e-9));
  CHECK(estimateGroundZ(Matrix(0, 3)) == 0.0);
}
