#include "adafusion/data_ingest.hpp"
#include "adafusion/synthetic.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace adafusion;

namespace {

Frame frameAt(const std::string& id, double x, double y, double t = 0.0) {
  Frame f;
  f.frame_id = id;
  f.timestamp = t;
  f.position = Eigen::Vector3d(x, y, 0.0);
  return f;
}

std::vector<TimestampedRef> refs(const std::vector<double>& stamps, const std::string& prefix) {
  std::vector<TimestampedRef> out;
  for (std::size_t i = 0; i < stamps.size(); ++i) {
    out.push_back({stamps[i], prefix + std::to_string(i)});
  }
  return out;
}

}  // namespace

TEST_CASE("associateFrames pairs nearest in time within max_dt") {
  const auto frames = associateFrames(refs({0.0, 1.0}, "img"), refs({0.05, 1.2}, "cld"), 0.1);
  REQUIRE(frames.size() == 1);
  CHECK(frames[0].image_ref == "img0");
  CHECK(frames[0].cloud_ref == "cld0");
  CHECK(frames[0].timestamp == 0.0);
}

TEST_CASE("associateFrames matches identical stamps one-to-one") {
  const std::vector<double> stamps{0.0, 0.5, 1.0, 1.5};
  const auto frames = associateFrames(refs(stamps, "img"), refs(stamps, "cld"), 0.01);
  REQUIRE(frames.size() == stamps.size());
  for (std::size_t i = 0; i < stamps.size(); ++i) {
    CHECK(frames[i].image_ref == "img" + std::to_string(i));
    CHECK(frames[i].cloud_ref == "cld" + std::to_string(i));
  }
}

TEST_CASE("associateFrames equals the greedy O(n^2) oracle on random stamps") {
  Rng rng(42);
  for (int round = 0; round < 3; ++round) {
    std::vector<double> image_stamps, cloud_stamps;
    for (int i = 0; i < 1000; ++i) image_stamps.push_back(rng.uniform(0.0, 100.0));
    for (int i = 0; i < 1000; ++i) cloud_stamps.push_back(rng.uniform(0.0, 100.0));
    std::sort(image_stamps.begin(), image_stamps.end());
    std::sort(cloud_stamps.begin(), cloud_stamps.end());
    const auto images = refs(image_stamps, "img");
    const auto clouds = refs(cloud_stamps, "cld");

    const auto frames = associateFrames(images, clouds, 0.05);
    const auto expected = oracles::naiveAssociate(images, clouds, 0.05);
    REQUIRE(frames.size() == expected.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
      CHECK(frames[i].image_ref == expected[i].first);
      CHECK(frames[i].cloud_ref == expected[i].second);
    }
  }
}

TEST_CASE("associateFrames is symmetric under swapping roles away from ties") {
  Rng rng(7);
  std::vector<double> a_stamps, b_stamps;
  double t = 0.0;
  for (int i = 0; i < 200; ++i) {
    t += rng.uniform(0.2, 1.0);
    a_stamps.push_back(t);
    b_stamps.push_back(t + rng.uniform(-0.04, 0.04));
  }
  std::sort(b_stamps.begin(), b_stamps.end());
  const auto side_a = refs(a_stamps, "a");
  const auto side_b = refs(b_stamps, "b");

  std::set<std::pair<std::string, std::string>> forward, reversed;
  for (const auto& f : associateFrames(side_a, side_b, 0.05)) {
    forward.insert({f.image_ref, f.cloud_ref});
  }
  for (const auto& f : associateFrames(side_b, side_a, 0.05)) {
    reversed.insert({f.cloud_ref, f.image_ref});
  }
  CHECK(forward == reversed);
}

TEST_CASE("associateFrames validates input") {
  CHECK_THROWS_AS(associateFrames(refs({1.0, 0.5}, "img"), refs({0.0}, "cld"), 0.1),
                  ValidationError);
  CHECK_THROWS_AS(associateFrames(refs({0.0}, "img"), refs({0.0}, "cld"), 0.0), ValidationError);
  CHECK(associateFrames({}, {}, 0.1).empty());
}

TEST_CASE("selectFramesByDistance keeps frames every spacing meters") {
  std::vector<Frame> frames;
  for (double x : {0.0, 3.0, 6.0, 9.0, 12.0, 15.0}) {
    frames.push_back(frameAt("f" + std::to_string(static_cast<int>(x)), x, 0.0, x));
  }
  const auto kept = selectFramesByDistance(frames, 10.0);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].position.x() == 0.0);
  CHECK(kept[1].position.x() == 12.0);
}

TEST_CASE("selectFramesByDistance collapses a stationary trajectory") {
  std::vector<Frame> frames(5, frameAt("f", 2.0, 2.0));
  CHECK(selectFramesByDistance(frames, 10.0).size() == 1);
  CHECK(selectFramesByDistance({frames[0]}, 10.0).size() == 1);
}

TEST_CASE("selectFramesByDistance honors the re-walked path length") {
  Rng rng(3);
  std::vector<Frame> frames;
  Eigen::Vector3d pos(0, 0, 0);
  for (int i = 0; i < 500; ++i) {
    pos += Eigen::Vector3d(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), 0.0);
    frames.push_back(frameAt("f" + std::to_string(i), pos.x(), pos.y(), i));
  }
  const auto kept = selectFramesByDistance(frames, 10.0);
  REQUIRE(kept.size() > 1);
  // re-integrate the raw path between consecutive kept frames
  std::size_t cursor = 0;
  for (std::size_t k = 1; k < kept.size(); ++k) {
    while (frames[cursor].frame_id != kept[k - 1].frame_id) ++cursor;
    std::size_t end = cursor;
    while (frames[end].frame_id != kept[k].frame_id) ++end;
    double walked = 0.0;
    for (std::size_t i = cursor + 1; i <= end; ++i) {
      walked += (frames[i].position - frames[i - 1].position).norm();
    }
    CHECK(walked >= 10.0);
    cursor = end;
  }
}

TEST_CASE("splitRegions assigns by containment") {
  const TestBox box{Eigen::Vector2d(0, 0), 100.0};
  const auto inside = splitRegions({frameAt("a", 5, 5)}, {box});
  CHECK(inside.test_frames.size() == 1);
  CHECK(inside.train_frames.empty());

  const auto outside = splitRegions({frameAt("b", 51, 0)}, {box});
  CHECK(outside.train_frames.size() == 1);
  CHECK(outside.test_frames.empty());
}

TEST_CASE("splitRegions matches pointwise containment on random frames") {
  Rng rng(11);
  std::vector<Frame> frames;
  for (int i = 0; i < 1000; ++i) {
    frames.push_back(
        frameAt("f" + std::to_string(i), rng.uniform(-200, 200), rng.uniform(-200, 200)));
  }
  const std::vector<TestBox> boxes{{Eigen::Vector2d(-80, -80), 100.0},
                                   {Eigen::Vector2d(50, 20), 60.0},
                                   {Eigen::Vector2d(120, -40), 80.0}};
  const DatasetSplit split = splitRegions(frames, boxes);
  CHECK(split.train_frames.size() + split.test_frames.size() == frames.size());
  auto contained = [&](const Frame& f) {
    return std::any_of(boxes.begin(), boxes.end(),
                       [&](const TestBox& b) { return b.contains(f.position.head<2>()); });
  };
  for (const Frame& f : split.test_frames) CHECK(contained(f));
  for (const Frame& f : split.train_frames) CHECK(!contained(f));
}

TEST_CASE("minePairs emits threshold-correct labels") {
  Rng rng(0);
  const auto one_positive =
      minePairs({frameAt("a", 0, 0), frameAt("b", 5, 0)}, 10.0, 50.0, 10, rng);
  REQUIRE(one_positive.size() == 1);
  CHECK(one_positive[0].y == 1);

  const auto dead_zone = minePairs({frameAt("a", 0, 0), frameAt("b", 30, 0)}, 10.0, 50.0, 10, rng);
  CHECK(dead_zone.empty());

  CHECK_THROWS_AS(minePairs({frameAt("a", 0, 0)}, 50.0, 10.0, 10, rng), ValidationError);
}

TEST_CASE("minePairs equals the distance-matrix oracle on 200 random frames") {
  Rng rng(9);
  std::vector<Frame> frames;
  for (int i = 0; i < 200; ++i) {
    frames.push_back(
        frameAt("f" + std::to_string(i), rng.uniform(0, 300), rng.uniform(0, 300)));
  }
  const auto expected = oracles::naiveMinePairs(frames, 10.0, 50.0);
  Rng mine_rng(1);
  // neg_cap >= n makes the subsample exhaustive
  const auto pairs = minePairs(frames, 10.0, 50.0, 200, mine_rng);
  std::set<std::pair<std::string, std::string>> positives, negatives;
  for (const auto& p : pairs) {
    if (p.y == 1) {
      positives.insert({p.frame_a, p.frame_b});
    } else {
      negatives.insert({p.frame_a, p.frame_b});
    }
  }
  CHECK(positives == expected.positives);
  CHECK(negatives == expected.negatives);
}

TEST_CASE("minePairs caps negatives per query") {
  Rng rng(2);
  std::vector<Frame> frames;
  for (int i = 0; i < 20; ++i) frames.push_back(frameAt("f" + std::to_string(i), 100.0 * i, 0));
  const auto pairs = minePairs(frames, 10.0, 50.0, 3, rng);
  std::map<std::string, int> per_query;
  for (const auto& p : pairs) {
    CHECK(p.y == -1);
    per_query[p.frame_a] += 1;
  }
  for (const auto& [query, count] : per_query) CHECK(count <= 3);
  CHECK(per_query.size() == frames.size());
}

TEST_CASE("generateSyntheticDataset is a pure function of the spec") {
  SyntheticSpec spec;
  spec.n_places = 2;
  spec.n_revisits = 1;
  spec.seed = 7;
  const auto a = generateSyntheticDataset(spec);
  const auto b = generateSyntheticDataset(spec);
  REQUIRE(a.observations.size() == b.observations.size());
  for (std::size_t i = 0; i < a.observations.size(); ++i) {
    CHECK(a.observations[i].image.pixels == b.observations[i].image.pixels);
    CHECK((a.observations[i].cloud - b.observations[i].cloud).norm() == 0.0);
    CHECK((a.observations[i].frame.position - b.observations[i].frame.position).norm() == 0.0);
    CHECK(a.observations[i].frame.frame_id == b.observations[i].frame.frame_id);
  }
}

TEST_CASE("synthetic places stay >= 60 m apart and revisits within 5 m") {
  SyntheticSpec spec;
  spec.n_places = 30;
  spec.n_revisits = 2;
  spec.seed = 3;
  const auto data = generateSyntheticDataset(spec);
  for (int p = 0; p < spec.n_places; ++p) {
    for (int q = p + 1; q < spec.n_places; ++q) {
      CHECK((syntheticPlaceCenter(p) - syntheticPlaceCenter(q)).norm() >= 60.0 - 1e-9);
    }
  }
  // group observations by place via their construction order (s * places + p)
  const int n_seq = spec.n_revisits + 1;
  for (int p = 0; p < spec.n_places; ++p) {
    for (int s = 0; s < n_seq; ++s) {
      for (int s2 = s + 1; s2 < n_seq; ++s2) {
        const auto& a = data.observations[static_cast<std::size_t>(s * spec.n_places + p)];
        const auto& b = data.observations[static_cast<std::size_t>(s2 * spec.n_places + p)];
        CHECK((a.frame.position - b.frame.position).norm() <= 5.0);
      }
    }
  }
}

TEST_CASE("synthetic positives match the combinatorial count") {
  SyntheticSpec spec;
  spec.n_places = 100;
  spec.n_revisits = 3;
  spec.seed = 1;
  const auto data = generateSyntheticDataset(spec);
  std::vector<Frame> frames = syntheticFrames(data);
  Rng rng(5);
  const auto pairs = minePairs(frames, 10.0, 50.0, 1, rng);
  int positives = 0;
  for (const auto& p : pairs) positives += p.y == 1 ? 1 : 0;
  CHECK(positives == 100 * 6);  // n_places * C(4, 2)
}

TEST_CASE("generateSyntheticDataset rejects degenerate specs") {
  SyntheticSpec spec;
  spec.n_places = 1;
  CHECK_THROWS_AS(generateSyntheticDataset(spec), ValidationError);
}
