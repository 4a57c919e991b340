#include "adafusion/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace adafusion {

namespace {

std::string formatTimestamp(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", t);
  return buf;
}

ImageU8 renderMosaicImage(int height, int width, Rng& place_rng, Rng& obs_rng) {
  constexpr int kBlockRows = 6;
  constexpr int kBlockCols = 8;
  std::array<std::array<std::uint8_t, 3>, kBlockRows * kBlockCols> palette;
  for (auto& color : palette) {
    for (auto& ch : color) ch = static_cast<std::uint8_t>(40 + place_rng.below(200));
  }
  ImageU8 image = ImageU8::filled(height, width, 0);
  const int shift = static_cast<int>(obs_rng.below(21)) - 10;  // global brightness jitter
  for (int r = 0; r < height; ++r) {
    const int br = std::min(r * kBlockRows / height, kBlockRows - 1);
    for (int c = 0; c < width; ++c) {
      const int bc = std::min(c * kBlockCols / width, kBlockCols - 1);
      const auto& color = palette[static_cast<std::size_t>(br * kBlockCols + bc)];
      for (int ch = 0; ch < 3; ++ch) {
        const int noise = static_cast<int>(obs_rng.below(17)) - 8;
        image.at(r, c, ch) = static_cast<std::uint8_t>(
            std::clamp(static_cast<int>(color[static_cast<std::size_t>(ch)]) + shift + noise, 0,
                       255));
      }
    }
  }
  return image;
}

ImageU8 renderDarkImage(int height, int width, Rng& obs_rng) {
  ImageU8 image = ImageU8::filled(height, width, 0);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        const int noise = static_cast<int>(obs_rng.below(13)) - 6;
        image.at(r, c, ch) = static_cast<std::uint8_t>(std::clamp(30 + noise, 0, 255));
      }
    }
  }
  return image;
}

struct Pillar {
  double cx, cy, radius, height;
};

Matrix renderStructuredCloud(int total_points, Rng& place_rng, Rng& obs_rng) {
  constexpr int kPillars = 6;
  std::array<Pillar, kPillars> pillars;
  for (auto& pillar : pillars) {
    pillar.cx = place_rng.uniform(-10.0, 10.0);
    pillar.cy = place_rng.uniform(-10.0, 10.0);
    pillar.radius = place_rng.uniform(0.4, 1.2);
    pillar.height = place_rng.uniform(3.0, 8.0);
  }
  const int ground = total_points / 5;
  const int structure = total_points - ground;
  Matrix cloud(total_points, 3);
  Eigen::Index row = 0;
  for (int i = 0; i < ground; ++i, ++row) {
    cloud(row, 0) = obs_rng.uniform(-12.0, 12.0);
    cloud(row, 1) = obs_rng.uniform(-12.0, 12.0);
    cloud(row, 2) = obs_rng.uniform(-0.05, 0.05);
  }
  for (int i = 0; i < structure; ++i, ++row) {
    const auto& pillar = pillars[static_cast<std::size_t>(i % kPillars)];
    const double theta = obs_rng.uniform(0.0, 2.0 * std::numbers::pi);
    cloud(row, 0) = pillar.cx + pillar.radius * std::cos(theta);
    cloud(row, 1) = pillar.cy + pillar.radius * std::sin(theta);
    cloud(row, 2) = obs_rng.uniform(0.2, pillar.height);
  }
  return cloud;
}

Matrix renderCorridorCloud(int total_points, Rng& obs_rng) {
  const int ground = total_points / 5;
  Matrix cloud(total_points, 3);
  Eigen::Index row = 0;
  for (int i = 0; i < ground; ++i, ++row) {
    cloud(row, 0) = obs_rng.uniform(-12.0, 12.0);
    cloud(row, 1) = obs_rng.uniform(-12.0, 12.0);
    cloud(row, 2) = obs_rng.uniform(-0.05, 0.05);
  }
  for (; row < cloud.rows(); ++row) {
    const double side = (row % 2 == 0) ? 3.0 : -3.0;
    cloud(row, 0) = obs_rng.uniform(-12.0, 12.0);
    cloud(row, 1) = side + obs_rng.uniform(-0.02, 0.02);
    cloud(row, 2) = obs_rng.uniform(0.2, 4.0);
  }
  return cloud;
}

}  // namespace

ModalityProfile parseModalityProfile(const std::string& name) {
  if (name == "visual_rich") return ModalityProfile::kVisualRich;
  if (name == "lidar_rich") return ModalityProfile::kLidarRich;
  if (name == "both_rich") return ModalityProfile::kBothRich;
  if (name == "both_poor") return ModalityProfile::kBothPoor;
  throw ValidationError("unknown modality profile '" + name + "'");
}

std::string modalityProfileName(ModalityProfile profile) {
  switch (profile) {
    case ModalityProfile::kVisualRich: return "visual_rich";
    case ModalityProfile::kLidarRich: return "lidar_rich";
    case ModalityProfile::kBothRich: return "both_rich";
    case ModalityProfile::kBothPoor: return "both_poor";
  }
  return "unknown";
}

Eigen::Vector2d syntheticPlaceCenter(int place) {
  return Eigen::Vector2d(60.0 * (place % 10), 60.0 * (place / 10));
}

SyntheticDataset generateSyntheticDataset(const SyntheticSpec& spec) {
  if (spec.n_places < 2) throw ValidationError("synthetic dataset needs at least 2 places");
  if (spec.n_revisits < 0) throw ValidationError("n_revisits must be non-negative");
  if (spec.image_height < 12 || spec.image_width < 16) {
    throw ValidationError("synthetic image resolution too small");
  }
  if (spec.points_per_cloud < 100) {
    throw ValidationError("points_per_cloud too small for a usable cloud");
  }

  const std::vector<ModalityProfile> default_cycle{
      ModalityProfile::kVisualRich, ModalityProfile::kLidarRich, ModalityProfile::kBothRich,
      ModalityProfile::kBothPoor};
  const std::vector<ModalityProfile>& cycle =
      spec.profiles.empty() ? default_cycle : spec.profiles;

  SyntheticDataset out;
  const int n_sequences = spec.n_revisits + 1;
  for (int s = 0; s < n_sequences; ++s) {
    char name[16];
    std::snprintf(name, sizeof(name), "seq%02d", s);
    out.sequence_ids.emplace_back(name);
  }

  for (int s = 0; s < n_sequences; ++s) {
    for (int p = 0; p < spec.n_places; ++p) {
      const ModalityProfile profile = cycle[static_cast<std::size_t>(p) % cycle.size()];
      Rng place_image_rng(mixSeed(spec.seed, "place_image", p));
      Rng place_cloud_rng(mixSeed(spec.seed, "place_cloud", p));
      Rng obs_rng(mixSeed(spec.seed, "observation", s, p));

      SyntheticObservation obs;
      const bool visual_rich =
          profile == ModalityProfile::kVisualRich || profile == ModalityProfile::kBothRich;
      const bool lidar_rich =
          profile == ModalityProfile::kLidarRich || profile == ModalityProfile::kBothRich;
      obs.image = visual_rich
                      ? renderMosaicImage(spec.image_height, spec.image_width, place_image_rng,
                                          obs_rng)
                      : renderDarkImage(spec.image_height, spec.image_width, obs_rng);
      obs.cloud = lidar_rich
                      ? renderStructuredCloud(spec.points_per_cloud, place_cloud_rng, obs_rng)
                      : renderCorridorCloud(spec.points_per_cloud, obs_rng);

      const double offset_radius = 2.0 * std::sqrt(obs_rng.uniform());
      const double offset_angle = obs_rng.uniform(0.0, 2.0 * std::numbers::pi);
      const Eigen::Vector2d center = syntheticPlaceCenter(p);
      obs.frame.position = Eigen::Vector3d(center.x() + offset_radius * std::cos(offset_angle),
                                           center.y() + offset_radius * std::sin(offset_angle),
                                           0.0);
      const std::int64_t micros = static_cast<std::int64_t>(p) * 2000000 + s * 1000;
      obs.frame.timestamp = static_cast<double>(micros) * 1e-6;
      obs.frame.sequence_id = out.sequence_ids[static_cast<std::size_t>(s)];
      obs.frame.frame_id =
          obs.frame.sequence_id + "/" + formatTimestamp(obs.frame.timestamp);
      out.observations.push_back(std::move(obs));
    }
  }
  return out;
}

std::vector<Frame> syntheticFrames(const SyntheticDataset& dataset) {
  std::vector<Frame> frames;
  frames.reserve(dataset.observations.size());
  for (const auto& obs : dataset.observations) frames.push_back(obs.frame);
  return frames;
}

}  // namespace adafusion
