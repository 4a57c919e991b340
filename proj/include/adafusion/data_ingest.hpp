#pragma once

#include "adafusion/common.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace adafusion {

/// One timestamp-associated (image, point cloud) observation with its
/// ground-truth position.
struct Frame {
  std::string frame_id;
  std::string sequence_id;
  double timestamp = 0.0;
  std::string image_ref;
  std::string cloud_ref;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

/// Labelled training pair: y = +1 for a true match (distance <= d_pos),
/// y = -1 for a wrong match (distance >= d_neg).
struct PairLabel {
  std::string frame_a;
  std::string frame_b;
  int y = 0;
};

/// Axis-aligned square test region in the ground plane.
struct TestBox {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double side = 0.0;

  bool contains(const Eigen::Vector2d& p) const {
    return std::abs(p.x() - center.x()) <= side / 2.0 &&
           std::abs(p.y() - center.y()) <= side / 2.0;
  }
};

/// Geographically disjoint train/test partition of a frame set.
struct DatasetSplit {
  std::vector<Frame> train_frames;
  std::vector<Frame> test_frames;
  std::vector<TestBox> test_boxes;
};

struct TimestampedRef {
  double timestamp = 0.0;
  std::string ref;
};

/// Pairs each image with the nearest-in-time unused cloud within max_dt.
/// Unmatched entries on either side are dropped; when two clouds are
/// equidistant the earlier one wins. Output frames carry the image
/// timestamp and are sorted by it; positions and ids are left for the
/// caller to fill.
std::vector<Frame> associateFrames(const std::vector<TimestampedRef>& image_index,
                                   const std::vector<TimestampedRef>& cloud_index,
                                   double max_dt);

/// Keeps the first frame, then every frame whose cumulative path length
/// since the last kept frame reaches `spacing` meters.
std::vector<Frame> selectFramesByDistance(const std::vector<Frame>& frames, double spacing);

/// Assigns each frame to the test set iff its position lies inside some box.
DatasetSplit splitRegions(const std::vector<Frame>& frames, const std::vector<TestBox>& boxes);

/// Emits every true-match pair (unordered, ground distance <= d_pos) and per
/// query up to `neg_cap` wrong-match pairs (distance >= d_neg), sampled
/// uniformly without replacement from the eligible set.
std::vector<PairLabel> minePairs(const std::vector<Frame>& frames, double d_pos, double d_neg,
                                 int neg_cap, Rng& rng);

}  // namespace adafusion
