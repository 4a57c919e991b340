#pragma once

#include "adafusion/attention.hpp"
#include "adafusion/common.hpp"
#include "adafusion/feature_extract.hpp"
#include "adafusion/tensor.hpp"
#include "adafusion/weight_fusion.hpp"

#include <array>
#include <string>
#include <vector>

namespace adafusion {

/// Hyper-parameters fixing the network structure. The descriptor dimension
/// knob scales only the final backbone widths (each modality contributes
/// half the descriptor); earlier widths stay as configured.
struct ModelConfig {
  BackboneWidths image_widths = BackboneWidths::imageDefault();
  BackboneWidths voxel_widths = BackboneWidths::voxelDefault();
  int attention_channels = 64;   // per-scale attention output channels
  int fusion_channels = 128;     // intra-modality fused channels (C3)
  std::array<int, 2> head_hidden{64, 32};
  bool adaptive_weights = true;
  int image_height = 300;
  int image_width = 400;
  std::array<int, 3> voxel_resolution{72, 72, 48};

  int descriptorDim() const {
    return image_widths.finalChannels() + voxel_widths.finalChannels();
  }

  void setDescriptorDim(int dim) {
    if (dim <= 0 || dim % 2 != 0) {
      throw ValidationError("descriptor dimension must be a positive even integer");
    }
    const int half = dim / 2;
    image_widths.stage3 = {half, half};
    voxel_widths.stage3 = {half};
  }

  /// Desk-scale model: every width 8, small inputs.
  static ModelConfig width8() {
    ModelConfig cfg;
    cfg.image_widths = BackboneWidths::imageUniform(8);
    cfg.voxel_widths = BackboneWidths::voxelUniform(8);
    cfg.attention_channels = 8;
    cfg.fusion_channels = 8;
    cfg.image_height = 40;
    cfg.image_width = 56;
    cfg.voxel_resolution = {16, 16, 8};
    return cfg;
  }
};

/// The AdaFusion network: two convolutional backbones, a per-scale dual
/// attention branch per modality, intra- and inter-modality fusion, and the
/// weighted global descriptor assembly. With adaptive weights disabled the
/// descriptor degenerates to the plain concatenation of both features.
class AdaFusionNet {
 public:
  AdaFusionNet(const ModelConfig& config, Rng& rng);

  struct Forward {
    Matrix f_image;      // C1 x B global visual features
    Matrix f_lidar;      // C1 x B global LiDAR features
    Matrix alphas;       // 2 x B adaptive weights (ones when disabled)
    Matrix descriptors;  // 2*C1 x B weighted descriptors
  };

  Forward forward(const FeatureBatch& images, const FeatureBatch& voxels, bool train);

  /// Accumulates parameter gradients for d(loss)/d(descriptors).
  void backward(const Matrix& descriptor_grad);

  void zeroGrad();

  std::vector<ParamRef> params();
  std::vector<BufferRef> buffers();

  const ModelConfig& config() const { return config_; }
  int descriptorDim() const { return config_.descriptorDim(); }

 private:
  ModelConfig config_;
  Backbone image_backbone_, voxel_backbone_;
  std::array<AttentionBlock, 3> image_attention_, voxel_attention_;
  IntraFusion image_intra_, voxel_intra_;
  FusionHead head_;

  // forward caches for backward
  Matrix f_image_, f_lidar_, alphas_;
  GridShape image_map_shape_, voxel_map_shape_;
  GridShape image_attn_shape_, voxel_attn_shape_;
  int batch_ = 0;
};

}  // namespace adafusion
