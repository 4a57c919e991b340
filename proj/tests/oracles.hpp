#pragma once

// Independent reference implementations used as test oracles. Everything in
// here is written as plain element loops, deliberately sharing no code with
// the library implementations it checks.

#include "adafusion/data_ingest.hpp"
#include "adafusion/preprocess.hpp"
#include "adafusion/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracles {

using adafusion::FeatureBatch;
using adafusion::Frame;
using adafusion::GridShape;
using adafusion::Matrix;
using adafusion::Real;
using adafusion::Vector;

inline int positionIndex(const GridShape& shape, int x, int y, int z) {
  return (x * shape.dim[1] + y) * shape.dim[2] + z;
}

/// Same-size zero-padded convolution by explicit loops. Offsets enumerate in
/// row-major order, matching the weight layout C_out x (K * C_in).
inline FeatureBatch naiveConv(const FeatureBatch& input, const Matrix& weight,
                              const Matrix& bias, int kernel) {
  const int rank = input.shape.rank;
  const int in_channels = input.channels();
  const int out_channels = static_cast<int>(weight.rows());
  const int half = kernel / 2;
  std::vector<std::array<int, 3>> offsets;
  if (rank == 2) {
    for (int dy = -half; dy <= half; ++dy)
      for (int dx = -half; dx <= half; ++dx) offsets.push_back({dy, dx, 0});
  } else {
    for (int dx = -half; dx <= half; ++dx)
      for (int dy = -half; dy <= half; ++dy)
        for (int dz = -half; dz <= half; ++dz) offsets.push_back({dx, dy, dz});
  }
  FeatureBatch out = FeatureBatch::zeros(out_channels, input.shape, input.batch);
  const auto& dim = input.shape.dim;
  for (int b = 0; b < input.batch; ++b) {
    for (int oc = 0; oc < out_channels; ++oc) {
      for (int x = 0; x < dim[0]; ++x) {
        for (int y = 0; y < dim[1]; ++y) {
          for (int z = 0; z < dim[2]; ++z) {
            Real acc = bias(oc, 0);
            for (std::size_t k = 0; k < offsets.size(); ++k) {
              const int sx = x + offsets[k][0];
              const int sy = y + offsets[k][1];
              const int sz = z + offsets[k][2];
              if (sx < 0 || sx >= dim[0] || sy < 0 || sy >= dim[1] || sz < 0 || sz >= dim[2]) {
                continue;
              }
              for (int ic = 0; ic < in_channels; ++ic) {
                acc += weight(oc, static_cast<Eigen::Index>(k) * in_channels + ic) *
                       input.sample(b)(ic, positionIndex(input.shape, sx, sy, sz));
              }
            }
            out.sample(b)(oc, positionIndex(input.shape, x, y, z)) = acc;
          }
        }
      }
    }
  }
  return out;
}

/// Per-channel mean by explicit summation loops.
inline Matrix naiveGap(const FeatureBatch& x) {
  Matrix out = Matrix::Zero(x.channels(), x.batch);
  for (int b = 0; b < x.batch; ++b) {
    for (int c = 0; c < x.channels(); ++c) {
      Real sum = 0;
      for (int p = 0; p < x.positions(); ++p) sum += x.sample(b)(c, p);
      out(c, b) = sum / x.positions();
    }
  }
  return out;
}

inline Matrix naiveSoftmaxRows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Real row_max = logits(r, 0);
    for (Eigen::Index c = 1; c < logits.cols(); ++c) row_max = std::max(row_max, logits(r, c));
    Real denom = 0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      out(r, c) = std::exp(logits(r, c) - row_max);
      denom += out(r, c);
    }
    for (Eigen::Index c = 0; c < logits.cols(); ++c) out(r, c) /= denom;
  }
  return out;
}

/// Spatial attention by loops: S = softmax_rows(K^T Q), out(c, n) =
/// sum_m S(n, m) V(c, m).
inline Matrix naiveSpatialAttention(const Matrix& q, const Matrix& k, const Matrix& v) {
  const Eigen::Index channels = q.rows(), n = q.cols();
  Matrix logits(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      Real acc = 0;
      for (Eigen::Index c = 0; c < channels; ++c) acc += k(c, i) * q(c, j);
      logits(i, j) = acc;
    }
  }
  const Matrix s = naiveSoftmaxRows(logits);
  Matrix out(channels, n);
  for (Eigen::Index c = 0; c < channels; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Real acc = 0;
      for (Eigen::Index m = 0; m < n; ++m) acc += s(i, m) * v(c, m);
      out(c, i) = acc;
    }
  }
  return out;
}

/// Channel attention by loops: S = softmax_rows(Q K^T), out = S V.
inline Matrix naiveChannelAttention(const Matrix& q, const Matrix& k, const Matrix& v) {
  const Eigen::Index channels = q.rows(), n = q.cols();
  Matrix logits(channels, channels);
  for (Eigen::Index i = 0; i < channels; ++i) {
    for (Eigen::Index j = 0; j < channels; ++j) {
      Real acc = 0;
      for (Eigen::Index m = 0; m < n; ++m) acc += q(i, m) * k(j, m);
      logits(i, j) = acc;
    }
  }
  const Matrix s = naiveSoftmaxRows(logits);
  Matrix out(channels, n);
  for (Eigen::Index c = 0; c < channels; ++c) {
    for (Eigen::Index m = 0; m < n; ++m) {
      Real acc = 0;
      for (Eigen::Index j = 0; j < channels; ++j) acc += s(c, j) * v(j, m);
      out(c, m) = acc;
    }
  }
  return out;
}

/// Dense layer by loops, optional activation applied elementwise.
inline Matrix naiveDense(const Matrix& weight, const Matrix& bias, const Matrix& x,
                         const char* activation = "none") {
  Matrix out(weight.rows(), x.cols());
  for (Eigen::Index o = 0; o < weight.rows(); ++o) {
    for (Eigen::Index b = 0; b < x.cols(); ++b) {
      Real acc = bias(o, 0);
      for (Eigen::Index i = 0; i < weight.cols(); ++i) acc += weight(o, i) * x(i, b);
      if (std::string(activation) == "relu") acc = std::max(acc, Real(0));
      if (std::string(activation) == "sigmoid") acc = Real(1) / (Real(1) + std::exp(-acc));
      out(o, b) = acc;
    }
  }
  return out;
}

/// Pairwise margin hinge loss on L1 distance, scalar loops.
inline Real naiveLoss(const Vector& f1, const Vector& f2, int y, Real margin, Real slack) {
  Real d = 0;
  for (Eigen::Index i = 0; i < f1.size(); ++i) d += std::abs(f1(i) - f2(i));
  const Real z = (y == 1) ? d - (margin - slack) : (margin + slack) - d;
  return z > 0 ? z : 0;
}

/// Per-cell scan: cell is set iff any point maps into it.
inline Matrix naiveVoxelize(const Matrix& points, const adafusion::VoxelGridSpec& spec) {
  const GridShape shape = spec.shape();
  Matrix grid = Matrix::Zero(1, shape.count());
  for (int ix = 0; ix < spec.resolution[0]; ++ix) {
    for (int iy = 0; iy < spec.resolution[1]; ++iy) {
      for (int iz = 0; iz < spec.resolution[2]; ++iz) {
        const int idx[3] = {ix, iy, iz};
        bool occupied = false;
        for (Eigen::Index p = 0; p < points.rows() && !occupied; ++p) {
          bool matches = true;
          for (int a = 0; a < 3 && matches; ++a) {
            const double cell =
                (spec.max_corner[a] - spec.min_corner[a]) / spec.resolution[a];
            const double lo = spec.min_corner[a] + idx[a] * cell;
            const double hi = spec.min_corner[a] + (idx[a] + 1) * cell;
            const double v = points(p, a);
            const bool last = idx[a] == spec.resolution[a] - 1;
            // interior cells are [lo, hi); the last cell also takes v == max
            if (!(v >= lo && (v < hi || (last && v <= spec.max_corner[a])))) matches = false;
            // boundary rule: floor() assigns v == hi to the next cell
            if (matches && !last && v == hi) matches = false;
          }
          if (matches) occupied = true;
        }
        if (occupied) grid(0, positionIndex(shape, ix, iy, iz)) = 1.0;
      }
    }
  }
  return grid;
}

/// O(n^2) greedy association: images in time order grab the nearest unused
/// cloud within max_dt, earlier cloud on ties.
inline std::vector<std::pair<std::string, std::string>> naiveAssociate(
    const std::vector<adafusion::TimestampedRef>& images,
    const std::vector<adafusion::TimestampedRef>& clouds, double max_dt) {
  std::vector<bool> used(clouds.size(), false);
  std::vector<std::pair<std::string, std::string>> matches;
  for (const auto& image : images) {
    std::size_t best = clouds.size();
    double best_dt = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < clouds.size(); ++j) {
      if (used[j]) continue;
      const double dt = std::abs(clouds[j].timestamp - image.timestamp);
      if (dt > max_dt) continue;
      if (dt < best_dt) {
        best_dt = dt;
        best = j;
      }
    }
    if (best == clouds.size()) continue;
    used[best] = true;
    matches.emplace_back(image.ref, clouds[best].ref);
  }
  return matches;
}

/// Full distance-matrix pair mining (no negative cap).
struct NaivePairs {
  std::set<std::pair<std::string, std::string>> positives;
  std::set<std::pair<std::string, std::string>> negatives;  // directed (query, other)
};

inline NaivePairs naiveMinePairs(const std::vector<Frame>& frames, double d_pos, double d_neg) {
  NaivePairs out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    for (std::size_t j = 0; j < frames.size(); ++j) {
      if (i == j) continue;
      const double d = (frames[i].position - frames[j].position).norm();
      if (j > i && d <= d_pos) out.positives.insert({frames[i].frame_id, frames[j].frame_id});
      if (d >= d_neg) out.negatives.insert({frames[i].frame_id, frames[j].frame_id});
    }
  }
  return out;
}

/// Exhaustive KNN: full distance vector, stable sort by (distance, id).
inline std::vector<int> naiveKnn(const Matrix& db, const std::vector<std::string>& ids,
                                 const Vector& query, int n, bool l2) {
  std::vector<std::pair<double, int>> scored;
  for (Eigen::Index i = 0; i < db.cols(); ++i) {
    double d = 0;
    for (Eigen::Index r = 0; r < db.rows(); ++r) {
      const double diff = db(r, i) - query(r);
      d += l2 ? diff * diff : std::abs(diff);
    }
    if (l2) d = std::sqrt(d);
    scored.emplace_back(d, static_cast<int>(i));
  }
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return ids[static_cast<std::size_t>(a.second)] < ids[static_cast<std::size_t>(b.second)];
  });
  std::vector<int> out;
  for (int i = 0; i < n; ++i) out.push_back(scored[static_cast<std::size_t>(i)].second);
  return out;
}

/// Full-matrix recall adjudication: for each query with >= 1 true positive,
/// success at N iff some true positive ranks in the top N.
inline std::map<int, double> naiveRecall(const Matrix& query_desc, const Matrix& query_pos,
                                         const Matrix& db_desc, const Matrix& db_pos,
                                         const std::vector<std::string>& db_ids,
                                         const std::vector<int>& ns, double d_tp, bool l2) {
  std::map<int, int> successes;
  for (int n : ns) successes[n] = 0;
  int counted = 0;
  for (Eigen::Index q = 0; q < query_desc.cols(); ++q) {
    std::vector<bool> is_tp(static_cast<std::size_t>(db_desc.cols()));
    bool any_tp = false;
    for (Eigen::Index j = 0; j < db_desc.cols(); ++j) {
      double geo = 0;
      for (int a = 0; a < 3; ++a) {
        const double diff = db_pos(a, j) - query_pos(a, q);
        geo += diff * diff;
      }
      is_tp[static_cast<std::size_t>(j)] = std::sqrt(geo) <= d_tp;
      any_tp = any_tp || is_tp[static_cast<std::size_t>(j)];
    }
    if (!any_tp) continue;
    ++counted;
    const std::vector<int> ranked =
        naiveKnn(db_desc, db_ids, query_desc.col(q), static_cast<int>(db_desc.cols()), l2);
    for (int n : ns) {
      bool hit = false;
      for (int r = 0; r < std::min<int>(n, static_cast<int>(ranked.size())); ++r) {
        if (is_tp[static_cast<std::size_t>(ranked[static_cast<std::size_t>(r)])]) {
          hit = true;
          break;
        }
      }
      if (hit) ++successes[n];
    }
  }
  std::map<int, double> recall;
  for (int n : ns) {
    recall[n] = counted == 0 ? 0.0 : static_cast<double>(successes[n]) / counted;
  }
  return recall;
}

}  // namespace oracles
