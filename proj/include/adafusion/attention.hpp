#pragma once

#include "adafusion/common.hpp"
#include "adafusion/layers.hpp"
#include "adafusion/tensor.hpp"

#include <string>
#include <vector>

namespace adafusion {

/// Row-wise softmax with max subtraction, so rows sum to 1 and stay finite
/// for large logits.
template <typename S>
MatrixX<S> softmaxRows(const MatrixX<S>& logits) {
  MatrixX<S> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const S row_max = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - row_max).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// Gradient through softmaxRows: given s = softmax(z) and ds, returns dz.
template <typename S>
MatrixX<S> softmaxRowsBackward(const MatrixX<S>& softmax, const MatrixX<S>& grad) {
  MatrixX<S> prod = softmax.cwiseProduct(grad);
  VectorX<S> row_sums = prod.rowwise().sum();
  return prod - (softmax.array().colwise() * row_sums.array()).matrix();
}

/// Spatial self-attention over flattened positions: with q, k, v of shape
/// C x N, forms S_s = softmaxRows(k' q) in R^{NxN} and returns v * S_s'.
/// The same expression serves planar and volumetric maps.
template <typename S>
MatrixX<S> spatialAttention(const MatrixX<S>& q, const MatrixX<S>& k, const MatrixX<S>& v) {
  MatrixX<S> s = softmaxRows<S>(k.transpose() * q);
  return v * s.transpose();
}

/// Channel self-attention: S_c = softmaxRows(q k') in R^{CxC}, output S_c v.
template <typename S>
MatrixX<S> channelAttention(const MatrixX<S>& q, const MatrixX<S>& k, const MatrixX<S>& v) {
  MatrixX<S> s = softmaxRows<S>(q * k.transpose());
  return s * v;
}

/// Nearest-neighbor resampling to `target`; index map i -> i * src / dst.
template <typename S>
FeatureBatchT<S> nearestResample(const FeatureBatchT<S>& x, const GridShape& target) {
  if (target.rank != x.shape.rank) throw ValidationError("resample rank mismatch");
  for (int a = 0; a < target.rank; ++a) {
    if (target.dim[a] > x.shape.dim[a]) {
      throw ValidationError("resample target " + target.str() + " exceeds source " +
                            x.shape.str());
    }
  }
  if (target == x.shape) return x;
  FeatureBatchT<S> out = FeatureBatchT<S>::zeros(x.channels(), target, x.batch);
  const int Y = x.shape.dim[1], Z = x.shape.dim[2];
  const int TY = target.dim[1], TZ = target.dim[2];
  for (int b = 0; b < x.batch; ++b) {
    auto in = x.sample(b);
    auto dst = out.sample(b);
    for (int tx = 0; tx < target.dim[0]; ++tx) {
      const int sx = tx * x.shape.dim[0] / target.dim[0];
      for (int ty = 0; ty < TY; ++ty) {
        const int sy = ty * Y / TY;
        for (int tz = 0; tz < TZ; ++tz) {
          const int sz = tz * Z / TZ;
          dst.col((static_cast<Eigen::Index>(tx) * TY + ty) * TZ + tz) =
              in.col((static_cast<Eigen::Index>(sx) * Y + sy) * Z + sz);
        }
      }
    }
  }
  return out;
}

/// Scatter-add adjoint of nearestResample back onto `source`-shaped maps.
template <typename S>
FeatureBatchT<S> nearestResampleBackward(const FeatureBatchT<S>& grad, const GridShape& source) {
  if (grad.shape == source) return grad;
  FeatureBatchT<S> out = FeatureBatchT<S>::zeros(grad.channels(), source, grad.batch);
  const int Y = source.dim[1], Z = source.dim[2];
  const int TY = grad.shape.dim[1], TZ = grad.shape.dim[2];
  for (int b = 0; b < grad.batch; ++b) {
    auto g = grad.sample(b);
    auto dst = out.sample(b);
    for (int tx = 0; tx < grad.shape.dim[0]; ++tx) {
      const int sx = tx * source.dim[0] / grad.shape.dim[0];
      for (int ty = 0; ty < TY; ++ty) {
        const int sy = ty * Y / TY;
        for (int tz = 0; tz < TZ; ++tz) {
          const int sz = tz * Z / TZ;
          dst.col((static_cast<Eigen::Index>(sx) * Y + sy) * Z + sz) +=
              g.col((static_cast<Eigen::Index>(tx) * TY + ty) * TZ + tz);
        }
      }
    }
  }
  return out;
}

/// The attention block: kernel-1 Q/K/V projections of a backbone tap, dual
/// spatial + channel self-attention, channel concatenation, kernel-1 fusion
/// to `out_channels`, and nearest downsampling to a common grid.
template <typename S>
class AttentionBlockT {
 public:
  AttentionBlockT() = default;
  AttentionBlockT(int tap_channels, int out_channels, int rank, Rng& rng)
      : query_(tap_channels, tap_channels, 1, rank, rng),
        key_(tap_channels, tap_channels, 1, rank, rng),
        value_(tap_channels, tap_channels, 1, rank, rng),
        fuse_(2 * tap_channels, out_channels, 1, rank, rng) {}

  FeatureBatchT<S> forward(const FeatureBatchT<S>& tap, const GridShape& target, bool train) {
    FeatureBatchT<S> q = query_.forward(tap, train);
    FeatureBatchT<S> k = key_.forward(tap, train);
    FeatureBatchT<S> v = value_.forward(tap, train);
    const int channels = q.channels();
    FeatureBatchT<S> cat(MatrixX<S>(2 * channels, q.data.cols()), q.shape, q.batch);
    if (train) {
      spatial_maps_.assign(static_cast<std::size_t>(q.batch), MatrixX<S>());
      channel_maps_.assign(static_cast<std::size_t>(q.batch), MatrixX<S>());
      q_cache_ = q;
      k_cache_ = k;
      v_cache_ = v;
    }
    for (int b = 0; b < q.batch; ++b) {
      MatrixX<S> qs = q.sample(b);
      MatrixX<S> ks = k.sample(b);
      MatrixX<S> vs = v.sample(b);
      MatrixX<S> ss = softmaxRows<S>(ks.transpose() * qs);
      MatrixX<S> sc = softmaxRows<S>(qs * ks.transpose());
      cat.sample(b).topRows(channels) = vs * ss.transpose();
      cat.sample(b).bottomRows(channels) = sc * vs;
      if (train) {
        spatial_maps_[static_cast<std::size_t>(b)] = std::move(ss);
        channel_maps_[static_cast<std::size_t>(b)] = std::move(sc);
      }
    }
    FeatureBatchT<S> fused = fuse_.forward(cat, train);
    pre_resample_shape_ = fused.shape;
    return nearestResample(fused, target);
  }

  FeatureBatchT<S> backward(const FeatureBatchT<S>& grad_out) {
    FeatureBatchT<S> g_fused = nearestResampleBackward(grad_out, pre_resample_shape_);
    FeatureBatchT<S> g_cat = fuse_.backward(g_fused);
    const int channels = q_cache_.channels();
    FeatureBatchT<S> gq = FeatureBatchT<S>::zeros(channels, q_cache_.shape, q_cache_.batch);
    FeatureBatchT<S> gk = FeatureBatchT<S>::zeros(channels, q_cache_.shape, q_cache_.batch);
    FeatureBatchT<S> gv = FeatureBatchT<S>::zeros(channels, q_cache_.shape, q_cache_.batch);
    for (int b = 0; b < q_cache_.batch; ++b) {
      MatrixX<S> qs = q_cache_.sample(b);
      MatrixX<S> ks = k_cache_.sample(b);
      MatrixX<S> vs = v_cache_.sample(b);
      const MatrixX<S>& ss = spatial_maps_[static_cast<std::size_t>(b)];
      const MatrixX<S>& sc = channel_maps_[static_cast<std::size_t>(b)];
      MatrixX<S> g_spa = g_cat.sample(b).topRows(channels);
      MatrixX<S> g_cha = g_cat.sample(b).bottomRows(channels);

      // out_s = v * ss', ss = softmaxRows(ks' qs)
      gv.sample(b) += g_spa * ss;
      MatrixX<S> d_ss = g_spa.transpose() * vs;
      MatrixX<S> d_ls = softmaxRowsBackward(ss, d_ss);
      gk.sample(b) += qs * d_ls.transpose();
      gq.sample(b) += ks * d_ls;

      // out_c = sc * v, sc = softmaxRows(qs ks')
      MatrixX<S> d_sc = g_cha * vs.transpose();
      gv.sample(b) += sc.transpose() * g_cha;
      MatrixX<S> d_lc = softmaxRowsBackward(sc, d_sc);
      gq.sample(b) += d_lc * ks;
      gk.sample(b) += d_lc.transpose() * qs;
    }
    FeatureBatchT<S> grad_tap = query_.backward(gq);
    grad_tap.data += key_.backward(gk).data;
    grad_tap.data += value_.backward(gv).data;
    return grad_tap;
  }

  void collectParams(const std::string& prefix, std::vector<ParamRefT<S>>& out) {
    query_.collectParams(prefix + ".query", out);
    key_.collectParams(prefix + ".key", out);
    value_.collectParams(prefix + ".value", out);
    fuse_.collectParams(prefix + ".fuse", out);
  }

 private:
  ConvT<S> query_, key_, value_, fuse_;
  std::vector<MatrixX<S>> spatial_maps_, channel_maps_;
  FeatureBatchT<S> q_cache_, k_cache_, v_cache_;
  GridShape pre_resample_shape_;
};

using AttentionBlock = AttentionBlockT<Real>;

}  // namespace adafusion
