#pragma once

#include "adafusion/common.hpp"
#include "adafusion/data_ingest.hpp"
#include "adafusion/image_io.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace adafusion {

/// Per-place discriminability profile of the synthetic data. A "rich"
/// modality carries a place-specific pattern; a "poor" one is the same
/// featureless content everywhere (noise-only across observations).
enum class ModalityProfile { kVisualRich, kLidarRich, kBothRich, kBothPoor };

ModalityProfile parseModalityProfile(const std::string& name);
std::string modalityProfileName(ModalityProfile profile);

struct SyntheticSpec {
  int n_places = 10;
  int n_revisits = 1;  // observations per place = n_revisits + 1, one per sequence
  std::vector<ModalityProfile> profiles;  // cycled over places; empty -> mixed cycle
  std::uint64_t seed = 0;
  int image_height = 40;
  int image_width = 56;
  int points_per_cloud = 1200;
};

struct SyntheticObservation {
  Frame frame;
  ImageU8 image;
  Matrix cloud;  // N x 3, sensor frame
};

/// A full in-memory dataset: one sequence per revisit pass, each visiting
/// every place once. Place centers sit on a 60 m grid; revisit positions
/// stay within 2 m of their center.
struct SyntheticDataset {
  std::vector<std::string> sequence_ids;
  std::vector<SyntheticObservation> observations;  // grouped by sequence, time-ordered
};

/// Pure function of the spec: distinct places are >= 60 m apart, revisits of
/// one place land within 5 m of each other, and all content derives from
/// `seed` alone.
SyntheticDataset generateSyntheticDataset(const SyntheticSpec& spec);

/// Place-center helper shared with tests: the world position of place i.
Eigen::Vector2d syntheticPlaceCenter(int place);

/// All frames of a dataset in generation order.
std::vector<Frame> syntheticFrames(const SyntheticDataset& dataset);

}  // namespace adafusion
