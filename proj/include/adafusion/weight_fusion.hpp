#pragma once

#include "adafusion/common.hpp"
#include "adafusion/layers.hpp"
#include "adafusion/tensor.hpp"

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace adafusion {

/// Sigmoid-bounded per-modality weights for one frame.
struct AdaptiveWeights {
  Real alpha_image = 0.5;
  Real alpha_lidar = 0.5;
};

/// A frame's weighted global descriptor together with the weights that
/// produced it.
struct WeightedDescriptor {
  Vector f_prime;
  AdaptiveWeights weights;
  std::string frame_id;
};

/// Merges the per-scale attention maps of one modality: channel
/// concatenation followed by a kernel-1 conv down to `out_channels`.
template <typename S>
class IntraFusionT {
 public:
  IntraFusionT() = default;
  IntraFusionT(int per_scale_channels, int scales, int out_channels, int rank, Rng& rng)
      : scales_(scales),
        per_scale_channels_(per_scale_channels),
        conv_(per_scale_channels * scales, out_channels, 1, rank, rng) {}

  FeatureBatchT<S> forward(const std::vector<FeatureBatchT<S>>& attn, bool train) {
    if (static_cast<int>(attn.size()) != scales_) {
      throw ValidationError("intra fusion expects " + std::to_string(scales_) + " scales");
    }
    for (const auto& a : attn) {
      if (a.shape != attn.front().shape || a.batch != attn.front().batch) {
        throw ValidationError("intra fusion inputs must share one spatial size");
      }
    }
    FeatureBatchT<S> cat(MatrixX<S>(per_scale_channels_ * scales_, attn.front().data.cols()),
                         attn.front().shape, attn.front().batch);
    for (int i = 0; i < scales_; ++i) {
      cat.data.middleRows(static_cast<Eigen::Index>(i) * per_scale_channels_,
                          per_scale_channels_) = attn[static_cast<std::size_t>(i)].data;
    }
    return conv_.forward(cat, train);
  }

  std::vector<FeatureBatchT<S>> backward(const FeatureBatchT<S>& grad_out) {
    FeatureBatchT<S> g_cat = conv_.backward(grad_out);
    std::vector<FeatureBatchT<S>> grads;
    grads.reserve(static_cast<std::size_t>(scales_));
    for (int i = 0; i < scales_; ++i) {
      grads.emplace_back(
          MatrixX<S>(g_cat.data.middleRows(static_cast<Eigen::Index>(i) * per_scale_channels_,
                                           per_scale_channels_)),
          g_cat.shape, g_cat.batch);
    }
    return grads;
  }

  void collectParams(const std::string& prefix, std::vector<ParamRefT<S>>& out) {
    conv_.collectParams(prefix, out);
  }

 private:
  int scales_ = 0;
  int per_scale_channels_ = 0;
  ConvT<S> conv_;
};

/// Inter-modality fusion head: the pooled attention vectors of both
/// modalities are concatenated and passed through fully-connected layers
/// (ReLU on the hidden ones, sigmoid on the output) to yield
/// (alpha_image, alpha_lidar) per sample.
template <typename S>
class FusionHeadT {
 public:
  FusionHeadT() = default;
  FusionHeadT(int per_modality_features, const std::array<int, 2>& hidden, Rng& rng)
      : per_modality_(per_modality_features),
        fc1_(2 * per_modality_features, hidden[0], Activation::kRelu, rng),
        fc2_(hidden[0], hidden[1], Activation::kRelu, rng),
        fc3_(hidden[1], 2, Activation::kSigmoid, rng) {}

  /// a_image, a_lidar: per-modality pooled vectors, one column per sample.
  MatrixX<S> forward(const MatrixX<S>& a_image, const MatrixX<S>& a_lidar, bool train) {
    if (a_image.rows() != per_modality_ || a_lidar.rows() != per_modality_) {
      throw ValidationError("fusion head expects vectors of length " +
                            std::to_string(per_modality_));
    }
    MatrixX<S> joint(2 * per_modality_, a_image.cols());
    joint.topRows(per_modality_) = a_image;
    joint.bottomRows(per_modality_) = a_lidar;
    return fc3_.forward(fc2_.forward(fc1_.forward(joint, train), train), train);
  }

  /// Returns (grad a_image, grad a_lidar).
  std::pair<MatrixX<S>, MatrixX<S>> backward(const MatrixX<S>& grad_alphas) {
    MatrixX<S> g = fc1_.backward(fc2_.backward(fc3_.backward(grad_alphas)));
    return {g.topRows(per_modality_), g.bottomRows(per_modality_)};
  }

  void collectParams(const std::string& prefix, std::vector<ParamRefT<S>>& out) {
    fc1_.collectParams(prefix + ".fc1", out);
    fc2_.collectParams(prefix + ".fc2", out);
    fc3_.collectParams(prefix + ".fc3", out);
  }

 private:
  int per_modality_ = 0;
  DenseT<S> fc1_, fc2_, fc3_;
};

/// Assembles weighted global descriptors: column b is
/// [alpha_image(b) * f_image(:,b); alpha_lidar(b) * f_lidar(:,b)].
template <typename S>
MatrixX<S> weightedDescriptor(const MatrixX<S>& f_image, const MatrixX<S>& f_lidar,
                              const MatrixX<S>& alphas) {
  if (f_image.rows() != f_lidar.rows()) {
    throw ValidationError("modality feature lengths differ: " + std::to_string(f_image.rows()) +
                          " vs " + std::to_string(f_lidar.rows()));
  }
  if (f_image.cols() != f_lidar.cols() || alphas.rows() != 2 || alphas.cols() != f_image.cols()) {
    throw ValidationError("weighted descriptor batch mismatch");
  }
  MatrixX<S> out(f_image.rows() + f_lidar.rows(), f_image.cols());
  out.topRows(f_image.rows()) = f_image * alphas.row(0).asDiagonal();
  out.bottomRows(f_lidar.rows()) = f_lidar * alphas.row(1).asDiagonal();
  return out;
}

using FusionHead = FusionHeadT<Real>;
using IntraFusion = IntraFusionT<Real>;

}  // namespace adafusion
