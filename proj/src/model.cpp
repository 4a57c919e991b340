#include "adafusion/model.hpp"

namespace adafusion {

namespace {

void addGrad(FeatureBatch& dst, FeatureBatch&& src) {
  if (dst.empty()) {
    dst = std::move(src);
  } else {
    dst.data += src.data;
  }
}

}  // namespace

AdaFusionNet::AdaFusionNet(const ModelConfig& config, Rng& rng)
    : config_(config),
      image_backbone_(ConvStackSpec::image(config.image_widths), rng),
      voxel_backbone_(ConvStackSpec::voxel(config.voxel_widths), rng) {
  if (config.image_widths.finalChannels() != config.voxel_widths.finalChannels()) {
    throw ValidationError("both backbones must end at the same channel count");
  }
  const auto image_taps = image_backbone_.tapChannels();
  const auto voxel_taps = voxel_backbone_.tapChannels();
  for (int i = 0; i < 3; ++i) {
    image_attention_[static_cast<std::size_t>(i)] =
        AttentionBlock(image_taps[static_cast<std::size_t>(i)], config.attention_channels, 2, rng);
  }
  for (int i = 0; i < 3; ++i) {
    voxel_attention_[static_cast<std::size_t>(i)] =
        AttentionBlock(voxel_taps[static_cast<std::size_t>(i)], config.attention_channels, 3, rng);
  }
  image_intra_ = IntraFusion(config.attention_channels, 3, config.fusion_channels, 2, rng);
  voxel_intra_ = IntraFusion(config.attention_channels, 3, config.fusion_channels, 3, rng);
  head_ = FusionHead(config.fusion_channels, config.head_hidden, rng);
}

AdaFusionNet::Forward AdaFusionNet::forward(const FeatureBatch& images,
                                            const FeatureBatch& voxels, bool train) {
  if (images.shape != GridShape::plane(config_.image_height, config_.image_width)) {
    throw ValidationError("image input shape " + images.shape.str() + ", expected " +
                          GridShape::plane(config_.image_height, config_.image_width).str());
  }
  const GridShape voxel_shape = GridShape::volume(
      config_.voxel_resolution[0], config_.voxel_resolution[1], config_.voxel_resolution[2]);
  if (voxels.shape != voxel_shape) {
    throw ValidationError("voxel input shape " + voxels.shape.str() + ", expected " +
                          voxel_shape.str());
  }
  if (images.batch != voxels.batch) throw ValidationError("modality batch sizes differ");

  auto image_out = image_backbone_.forward(images, train);
  auto voxel_out = voxel_backbone_.forward(voxels, train);

  Forward result;
  result.f_image = globalAveragePool(image_out.final_map);
  result.f_lidar = globalAveragePool(voxel_out.final_map);
  batch_ = images.batch;
  image_map_shape_ = image_out.final_map.shape;
  voxel_map_shape_ = voxel_out.final_map.shape;

  if (config_.adaptive_weights) {
    std::vector<FeatureBatch> image_attn, voxel_attn;
    image_attn.reserve(3);
    voxel_attn.reserve(3);
    for (int i = 0; i < 3; ++i) {
      image_attn.push_back(image_attention_[static_cast<std::size_t>(i)].forward(
          image_out.taps[static_cast<std::size_t>(i)], image_map_shape_, train));
      voxel_attn.push_back(voxel_attention_[static_cast<std::size_t>(i)].forward(
          voxel_out.taps[static_cast<std::size_t>(i)], voxel_map_shape_, train));
    }
    FeatureBatch fused_image = image_intra_.forward(image_attn, train);
    FeatureBatch fused_voxel = voxel_intra_.forward(voxel_attn, train);
    image_attn_shape_ = fused_image.shape;
    voxel_attn_shape_ = fused_voxel.shape;
    Matrix a_image = globalAveragePool(fused_image);
    Matrix a_lidar = globalAveragePool(fused_voxel);
    result.alphas = head_.forward(a_image, a_lidar, train);
  } else {
    result.alphas = Matrix::Ones(2, images.batch);
  }

  result.descriptors = weightedDescriptor(result.f_image, result.f_lidar, result.alphas);
  if (train) {
    f_image_ = result.f_image;
    f_lidar_ = result.f_lidar;
    alphas_ = result.alphas;
  }
  return result;
}

void AdaFusionNet::backward(const Matrix& descriptor_grad) {
  const int c1 = config_.image_widths.finalChannels();
  if (descriptor_grad.rows() != 2 * c1 || descriptor_grad.cols() != batch_) {
    throw ValidationError("descriptor gradient shape mismatch");
  }
  Matrix g_top = descriptor_grad.topRows(c1);
  Matrix g_bottom = descriptor_grad.bottomRows(c1);

  Matrix g_f_image = g_top * alphas_.row(0).asDiagonal();
  Matrix g_f_lidar = g_bottom * alphas_.row(1).asDiagonal();

  std::array<FeatureBatch, 3> image_grads, voxel_grads;
  addGrad(image_grads[2], globalAveragePoolBackward(g_f_image, image_map_shape_, batch_));
  addGrad(voxel_grads[2], globalAveragePoolBackward(g_f_lidar, voxel_map_shape_, batch_));

  if (config_.adaptive_weights) {
    Matrix g_alphas(2, batch_);
    g_alphas.row(0) = g_top.cwiseProduct(f_image_).colwise().sum();
    g_alphas.row(1) = g_bottom.cwiseProduct(f_lidar_).colwise().sum();
    auto [g_a_image, g_a_lidar] = head_.backward(g_alphas);
    auto image_attn_grads =
        image_intra_.backward(globalAveragePoolBackward(g_a_image, image_attn_shape_, batch_));
    auto voxel_attn_grads =
        voxel_intra_.backward(globalAveragePoolBackward(g_a_lidar, voxel_attn_shape_, batch_));
    for (int i = 0; i < 3; ++i) {
      addGrad(image_grads[static_cast<std::size_t>(i)],
              image_attention_[static_cast<std::size_t>(i)].backward(
                  image_attn_grads[static_cast<std::size_t>(i)]));
      addGrad(voxel_grads[static_cast<std::size_t>(i)],
              voxel_attention_[static_cast<std::size_t>(i)].backward(
                  voxel_attn_grads[static_cast<std::size_t>(i)]));
    }
  }

  image_backbone_.backward(std::move(image_grads));
  voxel_backbone_.backward(std::move(voxel_grads));
}

void AdaFusionNet::zeroGrad() {
  for (auto& p : params()) p.grad->setZero();
}

std::vector<ParamRef> AdaFusionNet::params() {
  std::vector<ParamRef> out;
  image_backbone_.collectParams("image_backbone", out);
  voxel_backbone_.collectParams("voxel_backbone", out);
  for (int i = 0; i < 3; ++i) {
    image_attention_[static_cast<std::size_t>(i)].collectParams(
        "image_attention." + std::to_string(i + 1), out);
  }
  for (int i = 0; i < 3; ++i) {
    voxel_attention_[static_cast<std::size_t>(i)].collectParams(
        "voxel_attention." + std::to_string(i + 1), out);
  }
  image_intra_.collectParams("image_intra_fuse", out);
  voxel_intra_.collectParams("voxel_intra_fuse", out);
  head_.collectParams("fusion_head", out);
  return out;
}

std::vector<BufferRef> AdaFusionNet::buffers() {
  std::vector<BufferRef> out;
  image_backbone_.collectBuffers("image_backbone", out);
  voxel_backbone_.collectBuffers("voxel_backbone", out);
  return out;
}

}  // namespace adafusion
