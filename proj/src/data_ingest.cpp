#include "adafusion/data_ingest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace adafusion {

namespace {

void requireSorted(const std::vector<TimestampedRef>& index, const char* label) {
  for (std::size_t i = 1; i < index.size(); ++i) {
    if (index[i].timestamp < index[i - 1].timestamp) {
      throw ValidationError(std::string(label) + " index is not sorted by timestamp");
    }
  }
}

}  // namespace

std::vector<Frame> associateFrames(const std::vector<TimestampedRef>& image_index,
                                   const std::vector<TimestampedRef>& cloud_index,
                                   double max_dt) {
  if (max_dt <= 0.0) throw ValidationError("max_dt must be positive");
  requireSorted(image_index, "image");
  requireSorted(cloud_index, "cloud");

  std::vector<bool> used(cloud_index.size(), false);
  std::vector<Frame> frames;
  frames.reserve(image_index.size());
  std::size_t window_lo = 0;
  for (const TimestampedRef& image : image_index) {
    while (window_lo < cloud_index.size() &&
           cloud_index[window_lo].timestamp < image.timestamp - max_dt) {
      ++window_lo;
    }
    std::size_t best = cloud_index.size();
    double best_dt = max_dt;
    for (std::size_t j = window_lo; j < cloud_index.size(); ++j) {
      if (cloud_index[j].timestamp > image.timestamp + max_dt) break;
      if (used[j]) continue;
      const double dt = std::abs(cloud_index[j].timestamp - image.timestamp);
      // strict < keeps the earlier cloud on equidistant candidates
      if (dt < best_dt || (dt == best_dt && best == cloud_index.size())) {
        best_dt = dt;
        best = j;
      }
    }
    if (best == cloud_index.size()) continue;
    used[best] = true;
    Frame frame;
    frame.timestamp = image.timestamp;
    frame.image_ref = image.ref;
    frame.cloud_ref = cloud_index[best].ref;
    frames.push_back(std::move(frame));
  }
  return frames;
}

std::vector<Frame> selectFramesByDistance(const std::vector<Frame>& frames, double spacing) {
  if (spacing <= 0.0) throw ValidationError("spacing must be positive");
  std::vector<Frame> kept;
  if (frames.empty()) return kept;
  kept.push_back(frames.front());
  double travelled = 0.0;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    travelled += (frames[i].position - frames[i - 1].position).norm();
    if (travelled >= spacing) {
      kept.push_back(frames[i]);
      travelled = 0.0;
    }
  }
  return kept;
}

DatasetSplit splitRegions(const std::vector<Frame>& frames, const std::vector<TestBox>& boxes) {
  for (const TestBox& box : boxes) {
    if (box.side <= 0.0) throw ValidationError("test box side must be positive");
  }
  DatasetSplit split;
  split.test_boxes = boxes;
  for (const Frame& frame : frames) {
    const Eigen::Vector2d p = frame.position.head<2>();
    const bool in_test = std::any_of(boxes.begin(), boxes.end(),
                                     [&](const TestBox& box) { return box.contains(p); });
    (in_test ? split.test_frames : split.train_frames).push_back(frame);
  }
  return split;
}

std::vector<PairLabel> minePairs(const std::vector<Frame>& frames, double d_pos, double d_neg,
                                 int neg_cap, Rng& rng) {
  if (d_pos >= d_neg) throw ValidationError("d_pos must be smaller than d_neg");
  if (neg_cap < 0) throw ValidationError("neg_cap must be non-negative");
  const std::size_t n = frames.size();
  std::vector<PairLabel> pairs;
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < n; ++i) {
    eligible.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = (frames[i].position - frames[j].position).norm();
      if (j > i && d <= d_pos) {
        pairs.push_back({frames[i].frame_id, frames[j].frame_id, +1});
      }
      if (d >= d_neg) eligible.push_back(j);
    }
    // partial Fisher-Yates draws min(neg_cap, |eligible|) without replacement
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(neg_cap),
                                                   eligible.size());
    for (std::size_t t = 0; t < take; ++t) {
      const std::size_t pick = t + static_cast<std::size_t>(rng.below(eligible.size() - t));
      std::swap(eligible[t], eligible[pick]);
      pairs.push_back({frames[i].frame_id, frames[eligible[t]].frame_id, -1});
    }
  }
  return pairs;
}

}  // namespace adafusion
