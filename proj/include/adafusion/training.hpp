#pragma once

#include "adafusion/common.hpp"
#include "adafusion/data_ingest.hpp"
#include "adafusion/model.hpp"
#include "adafusion/preprocess.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace adafusion {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 16;  // pairs per step; split evenly between labels
  double lr_init = 8e-4;
  double lr_decay = 0.9;
  int patience = 20;     // evaluations without AR@1 improvement before decay
  int eval_every = 2000; // batches between validation evaluations
  double margin = 1.0;   // m
  double slack = 0.5;    // a
  double d_pos = 10.0;
  double d_neg = 50.0;
  double val_d_tp = 20.0;  // validation true-positive radius
  int neg_cap = 20;        // negatives sampled per query, resampled each epoch
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

/// Pairwise margin-based hinge loss on the L1 descriptor distance:
/// y=+1 -> max(d - (m - a), 0), y=-1 -> max((m + a) - d, 0).
Real pairwiseMarginLoss(const Vector& f1, const Vector& f2, int y, Real margin, Real slack);

/// Loss plus subgradients in f1 and f2 (0 at hinge and |.| kinks).
Real pairwiseMarginLossGrad(const Vector& f1, const Vector& f2, int y, Real margin, Real slack,
                            Vector& grad_f1, Vector& grad_f2);

/// Adam over a fixed parameter set; gradients are read from the ParamRefs.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<ParamRef> params, double beta1, double beta2, double eps);

  void step(double lr);

 private:
  struct Slot {
    ParamRef ref;
    Matrix m, v;
  };
  std::vector<Slot> slots_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

/// Versioned parameter archive: model config, all parameters and BatchNorm
/// running statistics, plus the hash of the run config it was trained under.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint64_t config_hash = 0;
  ModelConfig model_config;
  std::vector<std::pair<std::string, Matrix>> tensors;

  static Checkpoint fromModel(AdaFusionNet& net, std::uint64_t config_hash);

  /// Copies tensors back into a net built from the same config.
  void restore(AdaFusionNet& net) const;

  /// Builds a fresh model and restores this checkpoint into it.
  AdaFusionNet buildModel() const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  /// FNV-1a over the serialized archive.
  std::uint64_t contentHash() const;
};

struct TrainLogRow {
  long step = 0;
  double loss = 0;   // mean training loss since the previous evaluation
  double ar1 = 0;    // validation AR@1
  double lr = 0;
  double alpha_i_mean = 0;
  double alpha_p_mean = 0;
};

/// CSV with header step,loss,ar1,lr,alpha_i_mean,alpha_p_mean; floats are
/// printed with round-trip precision so identical runs give identical files.
void writeTrainLog(const std::filesystem::path& path, const std::vector<TrainLogRow>& log);
std::string renderTrainLog(const std::vector<TrainLogRow>& log);

struct TrainDataset {
  std::vector<PreparedFrame> train_frames;
  std::vector<PreparedFrame> val_frames;
  PreprocessParams preprocess;
};

struct TrainResult {
  Checkpoint best;
  double best_ar1 = 0.0;
  long best_step = 0;
  std::vector<double> step_losses;
  std::vector<TrainLogRow> log;
  long steps = 0;
  double final_lr = 0.0;
};

/// Splits frames into (train, val) by holding out roughly `fraction` of the
/// occupied `cell_size`-meter grid cells, keeping the split geographic.
std::pair<std::vector<PreparedFrame>, std::vector<PreparedFrame>> splitValidationByRegion(
    const std::vector<PreparedFrame>& frames, double fraction, double cell_size = 60.0);

/// Stacks prepared frames into network inputs; when `augment_rng` is given
/// and augmentation is enabled, photometric jitter and point jitter are
/// applied per occurrence before voxelization.
std::pair<FeatureBatch, FeatureBatch> makeInputs(const std::vector<const PreparedFrame*>& frames,
                                                 const PreprocessParams& params,
                                                 Rng* augment_rng);

/// Embeds frames in inference mode; returns (descriptors dim x n, alphas 2 x n).
std::pair<Matrix, Matrix> embedFrames(AdaFusionNet& net, const std::vector<PreparedFrame>& frames,
                                      const PreprocessParams& params, int chunk = 32);

/// Runs the training loop: balanced positive/negative batches over epochs,
/// Adam with evaluation-driven LR decay, best-AR@1 checkpointing.
TrainResult train(const ModelConfig& model_config, const TrainConfig& config,
                  const TrainDataset& data, std::uint64_t config_hash);

}  // namespace adafusion
