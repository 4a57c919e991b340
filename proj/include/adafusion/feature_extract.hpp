#pragma once

#include "adafusion/common.hpp"
#include "adafusion/layers.hpp"
#include "adafusion/tensor.hpp"

#include <array>
#include <memory>
#include <string>
#include <vector>

namespace adafusion {

/// Global average pooling: per-channel mean over all spatial positions of
/// each sample, collapsing a feature map to one vector per sample.
template <typename S>
MatrixX<S> globalAveragePool(const FeatureBatchT<S>& x) {
  MatrixX<S> out(x.channels(), x.batch);
  for (int b = 0; b < x.batch; ++b) out.col(b) = x.sample(b).rowwise().mean();
  return out;
}

/// Adjoint of globalAveragePool: spreads each per-channel gradient uniformly
/// over the sample's positions.
template <typename S>
FeatureBatchT<S> globalAveragePoolBackward(const MatrixX<S>& grad, const GridShape& shape,
                                           int batch) {
  FeatureBatchT<S> out = FeatureBatchT<S>::zeros(static_cast<int>(grad.rows()), shape, batch);
  const S scale = S(1) / S(shape.count());
  for (int b = 0; b < batch; ++b) out.sample(b).colwise() = (grad.col(b) * scale).eval();
  return out;
}

/// Basic-block output widths per backbone stage.
struct BackboneWidths {
  std::vector<int> stage1, stage2, stage3;

  static BackboneWidths imageDefault() { return {{64, 64}, {64, 128}, {128, 128}}; }
  static BackboneWidths voxelDefault() { return {{32}, {64, 64}, {128}}; }
  static BackboneWidths imageUniform(int w) { return {{w, w}, {w, w}, {w, w}}; }
  static BackboneWidths voxelUniform(int w) { return {{w}, {w, w}, {w}}; }

  int finalChannels() const { return stage3.back(); }
};

enum class StageOpKind { kBlock, kMaxPool, kAvgPool, kBatchNorm };

struct StageOp {
  StageOpKind kind;
  int channels = 0;
};

/// Composition of one backbone: three stages of basic blocks interleaved
/// with kernel-2/stride-2 pooling (max for images, average for voxel grids)
/// and a BatchNorm ahead of the last pooling.
struct ConvStackSpec {
  int input_channels = 3;
  int rank = 2;
  std::array<std::vector<StageOp>, 3> stages;

  static ConvStackSpec image(const BackboneWidths& w = BackboneWidths::imageDefault()) {
    ConvStackSpec spec;
    spec.input_channels = 3;
    spec.rank = 2;
    for (int c : w.stage1) {
      spec.stages[0].push_back({StageOpKind::kBlock, c});
      spec.stages[0].push_back({StageOpKind::kMaxPool});
    }
    for (int c : w.stage2) spec.stages[1].push_back({StageOpKind::kBlock, c});
    spec.stages[1].push_back({StageOpKind::kMaxPool});
    for (int c : w.stage3) spec.stages[2].push_back({StageOpKind::kBlock, c});
    spec.stages[2].push_back({StageOpKind::kBatchNorm});
    spec.stages[2].push_back({StageOpKind::kMaxPool});
    return spec;
  }

  static ConvStackSpec voxel(const BackboneWidths& w = BackboneWidths::voxelDefault()) {
    ConvStackSpec spec;
    spec.input_channels = 1;
    spec.rank = 3;
    for (int c : w.stage1) spec.stages[0].push_back({StageOpKind::kBlock, c});
    spec.stages[0].push_back({StageOpKind::kAvgPool});
    for (int c : w.stage2) spec.stages[1].push_back({StageOpKind::kBlock, c});
    spec.stages[1].push_back({StageOpKind::kAvgPool});
    for (int c : w.stage3) spec.stages[2].push_back({StageOpKind::kBlock, c});
    spec.stages[2].push_back({StageOpKind::kBatchNorm});
    spec.stages[2].push_back({StageOpKind::kAvgPool});
    return spec;
  }

  int finalChannels() const {
    int c = input_channels;
    for (const auto& stage : stages) {
      for (const auto& op : stage) {
        if (op.kind == StageOpKind::kBlock) c = op.channels;
      }
    }
    return c;
  }
};

namespace detail {

template <typename S>
class StageNode {
 public:
  StageNode(const StageOp& op, int in_channels, int rank, Rng& rng) : kind_(op.kind) {
    switch (op.kind) {
      case StageOpKind::kBlock:
        block_ = std::make_unique<BasicBlockT<S>>(in_channels, op.channels, rank, rng);
        out_channels_ = op.channels;
        break;
      case StageOpKind::kMaxPool:
        pool_ = std::make_unique<PoolT<S>>(PoolKind::kMax);
        out_channels_ = in_channels;
        break;
      case StageOpKind::kAvgPool:
        pool_ = std::make_unique<PoolT<S>>(PoolKind::kAvg);
        out_channels_ = in_channels;
        break;
      case StageOpKind::kBatchNorm:
        bn_ = std::make_unique<BatchNormT<S>>(in_channels);
        out_channels_ = in_channels;
        break;
    }
  }

  FeatureBatchT<S> forward(const FeatureBatchT<S>& x, bool train) {
    if (block_) return block_->forward(x, train);
    if (pool_) return pool_->forward(x, train);
    return bn_->forward(x, train);
  }

  FeatureBatchT<S> backward(const FeatureBatchT<S>& grad) {
    if (block_) return block_->backward(grad);
    if (pool_) return pool_->backward(grad);
    return bn_->backward(grad);
  }

  void collectParams(const std::string& prefix, std::vector<ParamRefT<S>>& out) {
    if (block_) block_->collectParams(prefix, out);
    if (bn_) bn_->collectParams(prefix, out);
  }

  void collectBuffers(const std::string& prefix, std::vector<BufferRefT<S>>& out) {
    if (bn_) bn_->collectBuffers(prefix, out);
  }

  StageOpKind kind() const { return kind_; }
  int outChannels() const { return out_channels_; }

 private:
  StageOpKind kind_;
  int out_channels_ = 0;
  std::unique_ptr<BasicBlockT<S>> block_;
  std::unique_ptr<PoolT<S>> pool_;
  std::unique_ptr<BatchNormT<S>> bn_;
};

}  // namespace detail

/// One feature-extraction backbone. forward() yields the final local feature
/// map plus the three per-stage taps feeding the attention branch.
template <typename S>
class BackboneT {
 public:
  BackboneT() = default;
  BackboneT(const ConvStackSpec& spec, Rng& rng) : spec_(spec) {
    int channels = spec.input_channels;
    for (int s = 0; s < 3; ++s) {
      int block_index = 0;
      for (const StageOp& op : spec.stages[static_cast<std::size_t>(s)]) {
        std::string name = "stage" + std::to_string(s + 1) + ".";
        switch (op.kind) {
          case StageOpKind::kBlock:
            name += "block" + std::to_string(++block_index);
            break;
          case StageOpKind::kBatchNorm:
            name += "bn";
            break;
          default:
            name += "pool";
            break;
        }
        stages_[static_cast<std::size_t>(s)].emplace_back(
            std::make_pair(name, detail::StageNode<S>(op, channels, spec.rank, rng)));
        channels = stages_[static_cast<std::size_t>(s)].back().second.outChannels();
      }
      tap_channels_[static_cast<std::size_t>(s)] = channels;
    }
  }

  struct Output {
    FeatureBatchT<S> final_map;             // same tensor as taps[2]
    std::array<FeatureBatchT<S>, 3> taps;   // per-stage outputs
  };

  Output forward(const FeatureBatchT<S>& input, bool train) {
    if (input.channels() != spec_.input_channels || input.shape.rank != spec_.rank) {
      throw ValidationError("backbone input expects " +
                            std::to_string(spec_.input_channels) + " channels of rank " +
                            std::to_string(spec_.rank));
    }
    Output out;
    FeatureBatchT<S> x = input;
    for (int s = 0; s < 3; ++s) {
      for (auto& [name, node] : stages_[static_cast<std::size_t>(s)]) {
        x = node.forward(x, train);
      }
      out.taps[static_cast<std::size_t>(s)] = x;
    }
    out.final_map = x;
    return out;
  }

  /// Backward through the three stages; stage_grads[i] is the gradient on
  /// stage i's output (leave a grad empty for zero). Returns the input grad.
  FeatureBatchT<S> backward(std::array<FeatureBatchT<S>, 3> stage_grads) {
    FeatureBatchT<S> grad;
    for (int s = 2; s >= 0; --s) {
      FeatureBatchT<S>& extra = stage_grads[static_cast<std::size_t>(s)];
      if (grad.empty()) {
        grad = std::move(extra);
      } else if (!extra.empty()) {
        grad.data += extra.data;
      }
      if (grad.empty()) continue;
      auto& stage = stages_[static_cast<std::size_t>(s)];
      for (auto it = stage.rbegin(); it != stage.rend(); ++it) {
        grad = it->second.backward(grad);
      }
    }
    return grad;
  }

  void collectParams(const std::string& prefix, std::vector<ParamRefT<S>>& out) {
    for (auto& stage : stages_) {
      for (auto& [name, node] : stage) node.collectParams(prefix + "." + name, out);
    }
  }

  void collectBuffers(const std::string& prefix, std::vector<BufferRefT<S>>& out) {
    for (auto& stage : stages_) {
      for (auto& [name, node] : stage) node.collectBuffers(prefix + "." + name, out);
    }
  }

  const ConvStackSpec& spec() const { return spec_; }
  std::array<int, 3> tapChannels() const { return tap_channels_; }
  int finalChannels() const { return tap_channels_[2]; }

 private:
  ConvStackSpec spec_;
  std::array<std::vector<std::pair<std::string, detail::StageNode<S>>>, 3> stages_;
  std::array<int, 3> tap_channels_{0, 0, 0};
};

using Backbone = BackboneT<Real>;

}  // namespace adafusion
