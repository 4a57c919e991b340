#pragma once

#include "adafusion/common.hpp"

#include <algorithm>
#include <array>
#include <string>

namespace adafusion {

/// Spatial extent of a feature map: rank 2 for images (H, W), rank 3 for
/// voxel grids (X, Y, Z). Unused trailing dims are 1.
struct GridShape {
  std::array<int, 3> dim{1, 1, 1};
  int rank = 2;

  static GridShape plane(int height, int width) {
    return GridShape{{height, width, 1}, 2};
  }
  static GridShape volume(int x, int y, int z) {
    return GridShape{{x, y, z}, 3};
  }

  int count() const { return dim[0] * dim[1] * dim[2]; }

  bool operator==(const GridShape& other) const {
    return rank == other.rank && dim == other.dim;
  }
  bool operator!=(const GridShape& other) const { return !(*this == other); }

  std::string str() const {
    std::string s = std::to_string(dim[0]);
    for (int i = 1; i < rank; ++i) s += "x" + std::to_string(dim[i]);
    return s;
  }
};

/// A batch of dense feature maps stored channels-by-position: `data` has one
/// row per channel and one column per (sample, position), sample b occupying
/// columns [b*N, (b+1)*N). Positions are row-major over the grid:
/// (h, w) -> h*W + w and (x, y, z) -> (x*Y + y)*Z + z.
template <typename S>
struct FeatureBatchT {
  MatrixX<S> data;
  GridShape shape;
  int batch = 0;

  FeatureBatchT() = default;
  FeatureBatchT(MatrixX<S> values, GridShape grid, int batch_size)
      : data(std::move(values)), shape(grid), batch(batch_size) {}

  static FeatureBatchT zeros(int channels, GridShape grid, int batch_size) {
    return FeatureBatchT(
        MatrixX<S>::Zero(channels, static_cast<Eigen::Index>(grid.count()) * batch_size),
        grid, batch_size);
  }

  int channels() const { return static_cast<int>(data.rows()); }
  int positions() const { return shape.count(); }
  bool empty() const { return data.size() == 0; }

  auto sample(int b) {
    return data.middleCols(static_cast<Eigen::Index>(b) * positions(), positions());
  }
  auto sample(int b) const {
    return data.middleCols(static_cast<Eigen::Index>(b) * positions(), positions());
  }
};

using FeatureBatch = FeatureBatchT<Real>;

namespace detail {

/// Visits the contiguous column runs of the per-sample map
/// dst(:, p) <- src(:, p + off), calling fn(dst_col, src_col, run_length).
/// Runs follow the innermost non-trivial axis (y for planes, z for volumes).
template <typename F>
void forEachShiftRun(const GridShape& shape, int batch, const std::array<int, 3>& off, F&& fn) {
  const int X = shape.dim[0], Y = shape.dim[1], Z = shape.dim[2];
  const int n = shape.count();
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index base = static_cast<Eigen::Index>(b) * n;
    if (Z == 1 && off[2] == 0) {
      const int y0 = std::max(0, -off[1]);
      const int y1 = std::min(Y, Y - off[1]);
      if (y0 >= y1) continue;
      for (int x = 0; x < X; ++x) {
        const int sx = x + off[0];
        if (sx < 0 || sx >= X) continue;
        fn(base + static_cast<Eigen::Index>(x) * Y + y0,
           base + static_cast<Eigen::Index>(sx) * Y + y0 + off[1], y1 - y0);
      }
    } else {
      const int z0 = std::max(0, -off[2]);
      const int z1 = std::min(Z, Z - off[2]);
      if (z0 >= z1) continue;
      for (int x = 0; x < X; ++x) {
        const int sx = x + off[0];
        if (sx < 0 || sx >= X) continue;
        for (int y = 0; y < Y; ++y) {
          const int sy = y + off[1];
          if (sy < 0 || sy >= Y) continue;
          fn(base + (static_cast<Eigen::Index>(x) * Y + y) * Z + z0,
             base + (static_cast<Eigen::Index>(sx) * Y + sy) * Z + z0 + off[2], z1 - z0);
        }
      }
    }
  }
}

}  // namespace detail

/// dst(:, p) = src(:, p + off) per sample, zero where p + off leaves the grid.
template <typename S>
void shiftInto(MatrixX<S>& dst, const MatrixX<S>& src, const GridShape& shape,
               int batch, const std::array<int, 3>& off) {
  dst.setZero();
  const auto channels = src.rows();
  detail::forEachShiftRun(shape, batch, off,
                          [&](Eigen::Index d, Eigen::Index s, int len) {
                            dst.block(0, d, channels, len) = src.block(0, s, channels, len);
                          });
}

/// dst(:, p) += src(:, p + off) per sample, skipping positions that map
/// outside the grid.
template <typename S>
void accumulateShifted(MatrixX<S>& dst, const MatrixX<S>& src, const GridShape& shape,
                       int batch, const std::array<int, 3>& off) {
  const auto channels = src.rows();
  detail::forEachShiftRun(shape, batch, off,
                          [&](Eigen::Index d, Eigen::Index s, int len) {
                            dst.block(0, d, channels, len) += src.block(0, s, channels, len);
                          });
}

}  // namespace adafusion
