#include "adafusion/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace adafusion {

Matrix removeGround(const Matrix& points, double z_threshold) {
  if (points.size() > 0 && points.cols() != 3) {
    throw ValidationError("point cloud must be N x 3");
  }
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if (points(i, 2) > z_threshold) keep.push_back(i);
  }
  Matrix out(static_cast<Eigen::Index>(keep.size()), 3);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = points.row(keep[i]);
  }
  return out;
}

double estimateGroundZ(const Matrix& points, double percentile) {
  if (points.rows() == 0) return 0.0;
  std::vector<double> z(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) z[static_cast<std::size_t>(i)] = points(i, 2);
  std::sort(z.begin(), z.end());
  const auto rank = static_cast<std::size_t>(
      std::clamp(percentile / 100.0 * static_cast<double>(z.size() - 1), 0.0,
                 static_cast<double>(z.size() - 1)));
  return z[rank];
}

VoxelGrid voxelize(const Matrix& points, const VoxelGridSpec& spec) {
  for (int a = 0; a < 3; ++a) {
    if (spec.resolution[a] <= 0) throw ValidationError("voxel resolution must be positive");
    if (!(spec.max_corner[a] > spec.min_corner[a])) {
      throw ValidationError("voxel bounds are degenerate");
    }
  }
  if (points.size() > 0 && points.cols() != 3) {
    throw ValidationError("point cloud must be N x 3");
  }
  VoxelGrid grid;
  grid.spec = spec;
  const GridShape shape = spec.shape();
  grid.occupancy = Matrix::Zero(1, shape.count());
  const Eigen::Vector3d extent = spec.max_corner - spec.min_corner;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    int idx[3];
    bool inside = true;
    for (int a = 0; a < 3; ++a) {
      const double p = points(i, a);
      if (p < spec.min_corner[a] || p > spec.max_corner[a]) {
        inside = false;
        break;
      }
      const double cell = extent[a] / spec.resolution[a];
      idx[a] = std::min(static_cast<int>(std::floor((p - spec.min_corner[a]) / cell)),
                        spec.resolution[a] - 1);
    }
    if (!inside) continue;
    grid.occupancy(0, (static_cast<Eigen::Index>(idx[0]) * shape.dim[1] + idx[1]) * shape.dim[2] +
                          idx[2]) = 1.0;
  }
  return grid;
}

NormalizedImage prepareImage(const ImageU8& raw, const CropRect& crop, int out_height,
                             int out_width) {
  if (out_height <= 0 || out_width <= 0) {
    throw ValidationError("output resolution must be positive");
  }
  CropRect c = crop;
  if (c.height == 0 && c.width == 0) {
    c = CropRect{0, 0, raw.height, raw.width};
  }
  if (c.row < 0 || c.col < 0 || c.height <= 0 || c.width <= 0 ||
      c.row + c.height > raw.height || c.col + c.width > raw.width) {
    throw ValidationError("crop rectangle lies outside the image");
  }

  NormalizedImage out;
  out.height = out_height;
  out.width = out_width;
  out.pixels.resize(3, static_cast<Eigen::Index>(out_height) * out_width);
  const double row_scale = static_cast<double>(c.height) / out_height;
  const double col_scale = static_cast<double>(c.width) / out_width;
  for (int r = 0; r < out_height; ++r) {
    double src_r = (r + 0.5) * row_scale - 0.5;
    src_r = std::clamp(src_r, 0.0, static_cast<double>(c.height - 1));
    const int r0 = static_cast<int>(std::floor(src_r));
    const int r1 = std::min(r0 + 1, c.height - 1);
    const double fr = src_r - r0;
    for (int col = 0; col < out_width; ++col) {
      double src_c = (col + 0.5) * col_scale - 0.5;
      src_c = std::clamp(src_c, 0.0, static_cast<double>(c.width - 1));
      const int c0 = static_cast<int>(std::floor(src_c));
      const int c1 = std::min(c0 + 1, c.width - 1);
      const double fc = src_c - c0;
      for (int ch = 0; ch < 3; ++ch) {
        const double v00 = raw.at(c.row + r0, c.col + c0, ch);
        const double v01 = raw.at(c.row + r0, c.col + c1, ch);
        const double v10 = raw.at(c.row + r1, c.col + c0, ch);
        const double v11 = raw.at(c.row + r1, c.col + c1, ch);
        const double v = (1 - fr) * ((1 - fc) * v00 + fc * v01) +
                         fr * ((1 - fc) * v10 + fc * v11);
        out.pixels(ch, static_cast<Eigen::Index>(r) * out_width + col) = v / 127.5 - 1.0;
      }
    }
  }
  return out;
}

void augment(NormalizedImage& image, Matrix& points, const AugmentParams& params, Rng& rng) {
  const double brightness = rng.uniform(params.photometric_low, params.photometric_high);
  const double contrast = rng.uniform(params.photometric_low, params.photometric_high);
  const double saturation = rng.uniform(params.photometric_low, params.photometric_high);

  // photometric ops act in [0, 1] space
  Matrix u = (image.pixels.array() + 1.0) / 2.0;
  u *= brightness;
  Eigen::RowVectorXd gray =
      0.299 * u.row(0) + 0.587 * u.row(1) + 0.114 * u.row(2);
  const double mean_gray = gray.mean();
  u = (contrast * (u.array() - mean_gray) + mean_gray).matrix();
  for (int ch = 0; ch < 3; ++ch) {
    u.row(ch) = saturation * (u.row(ch) - gray) + gray;
  }
  image.pixels = (2.0 * u.array() - 1.0).min(1.0).max(-1.0).matrix();

  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (int a = 0; a < 3; ++a) {
      const double noise = std::clamp(rng.normal(0.0, params.jitter_sigma), -params.jitter_clip,
                                      params.jitter_clip);
      points(i, a) += noise;
    }
  }
}

PreparedFrame prepareFrame(const Frame& frame, const ImageU8& raw_image, const Matrix& cloud,
                           const PreprocessParams& params) {
  PreparedFrame out;
  out.frame = frame;
  out.image = prepareImage(raw_image, params.crop, params.out_height, params.out_width);
  const double ground = estimateGroundZ(cloud);
  out.points = removeGround(cloud, ground + params.ground_clearance);
  return out;
}

}  // namespace adafusion
