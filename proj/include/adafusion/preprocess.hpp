#pragma once

#include "adafusion/common.hpp"
#include "adafusion/data_ingest.hpp"
#include "adafusion/image_io.hpp"
#include "adafusion/tensor.hpp"

#include <array>

namespace adafusion {

/// Physical bounds and resolution of the voxelization.
struct VoxelGridSpec {
  Eigen::Vector3d min_corner{-36.0, -36.0, -4.0};
  Eigen::Vector3d max_corner{36.0, 36.0, 20.0};
  std::array<int, 3> resolution{72, 72, 48};

  GridShape shape() const {
    return GridShape::volume(resolution[0], resolution[1], resolution[2]);
  }
};

/// Binary occupancy rasterization of a point cloud: a single-channel volume
/// whose cells are 1 iff some point falls inside them.
struct VoxelGrid {
  VoxelGridSpec spec;
  Matrix occupancy;  // 1 x (X*Y*Z), position order as GridShape

  GridShape shape() const { return spec.shape(); }
};

/// Crop/resize/normalized RGB image with values in [-1, 1].
struct NormalizedImage {
  int height = 0;
  int width = 0;
  Matrix pixels;  // 3 x (height*width), row-major positions

  GridShape shape() const { return GridShape::plane(height, width); }
};

struct CropRect {
  int row = 0;
  int col = 0;
  int height = 0;  // 0 means full extent
  int width = 0;
};

/// Keeps points with z strictly above the threshold; order preserved.
/// Points are assumed expressed in a gravity-aligned sensor frame.
Matrix removeGround(const Matrix& points, double z_threshold);

/// Percentile-of-z ground height estimate (nearest-rank, default 5th).
double estimateGroundZ(const Matrix& points, double percentile = 5.0);

/// Rasterizes points into a binary grid; cell (i,j,k) = 1 iff some in-bounds
/// point maps to it via floor((p - min) / cell). Points exactly on the max
/// boundary clamp into the last cell; out-of-bounds points are ignored.
VoxelGrid voxelize(const Matrix& points, const VoxelGridSpec& spec);

/// Crop, bilinear-resize to (out_height, out_width) and map 8-bit values
/// v -> v / 127.5 - 1.
NormalizedImage prepareImage(const ImageU8& raw, const CropRect& crop, int out_height,
                             int out_width);

struct AugmentParams {
  double photometric_low = 0.8;   // brightness/contrast/saturation factor range
  double photometric_high = 1.2;
  double jitter_sigma = 0.05;     // per-coordinate Gaussian point jitter, meters
  double jitter_clip = 0.1;
};

/// Training-time augmentation: random brightness/contrast/saturation on the
/// image (re-clamped to [-1, 1]) and clipped Gaussian jitter on the points.
/// Applied before voxelization.
void augment(NormalizedImage& image, Matrix& points, const AugmentParams& params, Rng& rng);

/// Everything needed to turn a raw frame into network inputs.
struct PreprocessParams {
  CropRect crop;  // height/width 0 -> full extent
  int out_height = 300;
  int out_width = 400;
  VoxelGridSpec voxel;
  double ground_clearance = 0.2;  // meters above the estimated ground height
  bool augment_enabled = true;
  AugmentParams augment;
};

/// A frame with its modality data preprocessed up to (but not including)
/// augmentation and voxelization.
struct PreparedFrame {
  Frame frame;
  NormalizedImage image;
  Matrix points;  // ground-removed cloud, N x 3
};

PreparedFrame prepareFrame(const Frame& frame, const ImageU8& raw_image, const Matrix& cloud,
                           const PreprocessParams& params);

}  // namespace adafusion
