#include "adafusion/training.hpp"

#include "adafusion/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace adafusion {

namespace {

constexpr char kCheckpointMagic[8] = {'A', 'D', 'A', 'F', 'C', 'K', 'P', 'T'};

void writeWidths(std::ostream& out, const BackboneWidths& w) {
  for (const auto* stage : {&w.stage1, &w.stage2, &w.stage3}) {
    io::writeU32(out, static_cast<std::uint32_t>(stage->size()));
    for (int c : *stage) io::writeU32(out, static_cast<std::uint32_t>(c));
  }
}

BackboneWidths readWidths(std::istream& in) {
  BackboneWidths w;
  for (auto* stage : {&w.stage1, &w.stage2, &w.stage3}) {
    const std::uint32_t n = io::readU32(in, "stage widths");
    if (n == 0 || n > 16) throw IoError("implausible stage width count");
    stage->resize(n);
    for (auto& c : *stage) c = static_cast<int>(io::readU32(in, "stage width"));
  }
  return w;
}

std::string formatReal(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs <= 0 || batch_size <= 0 || patience <= 0 || eval_every <= 0 || neg_cap <= 0) {
    throw ValidationError("train config counts must be positive");
  }
  if (batch_size % 2 != 0) {
    throw ValidationError("batch_size must be even (balanced pair batches)");
  }
  if (!(slack > 0.0) || !(slack < margin)) {
    throw ValidationError("margin/slack must satisfy 0 < a < m");
  }
  if (!(lr_decay > 0.0 && lr_decay < 1.0)) {
    throw ValidationError("lr_decay must lie in (0, 1)");
  }
  if (!(lr_init > 0.0)) throw ValidationError("lr_init must be positive");
  if (!(d_pos < d_neg)) throw ValidationError("d_pos must be smaller than d_neg");
}

Real pairwiseMarginLoss(const Vector& f1, const Vector& f2, int y, Real margin, Real slack) {
  if (f1.size() != f2.size()) throw ValidationError("descriptor lengths differ");
  if (y != 1 && y != -1) throw ValidationError("pair label must be +1 or -1");
  const Real d = (f1 - f2).lpNorm<1>();
  if (y == 1) return std::max(d - (margin - slack), Real(0));
  return std::max((margin + slack) - d, Real(0));
}

Real pairwiseMarginLossGrad(const Vector& f1, const Vector& f2, int y, Real margin, Real slack,
                            Vector& grad_f1, Vector& grad_f2) {
  if (f1.size() != f2.size()) throw ValidationError("descriptor lengths differ");
  if (y != 1 && y != -1) throw ValidationError("pair label must be +1 or -1");
  const Vector diff = f1 - f2;
  const Real d = diff.lpNorm<1>();
  grad_f1 = Vector::Zero(f1.size());
  grad_f2 = Vector::Zero(f1.size());
  const Real z = (y == 1) ? d - (margin - slack) : (margin + slack) - d;
  if (z <= Real(0)) return Real(0);
  // subgradient of |x| with convention sign(0) = 0
  Vector sign = diff.unaryExpr([](Real v) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); });
  if (y == 1) {
    grad_f1 = sign;
    grad_f2 = -sign;
  } else {
    grad_f1 = -sign;
    grad_f2 = sign;
  }
  return z;
}

Adam::Adam(std::vector<ParamRef> params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  slots_.reserve(params.size());
  for (auto& p : params) {
    Slot slot{p, Matrix::Zero(p.value->rows(), p.value->cols()),
              Matrix::Zero(p.value->rows(), p.value->cols())};
    slots_.push_back(std::move(slot));
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (Slot& slot : slots_) {
    const Matrix& g = *slot.ref.grad;
    slot.m = beta1_ * slot.m + (1.0 - beta1_) * g;
    slot.v = (beta2_ * slot.v.array() + (1.0 - beta2_) * g.array().square()).matrix();
    slot.ref.value->array() -=
        lr * (slot.m.array() / bc1) / ((slot.v.array() / bc2).sqrt() + eps_);
  }
}

Checkpoint Checkpoint::fromModel(AdaFusionNet& net, std::uint64_t config_hash) {
  Checkpoint ckpt;
  ckpt.config_hash = config_hash;
  ckpt.model_config = net.config();
  for (const auto& p : net.params()) ckpt.tensors.emplace_back(p.name, *p.value);
  for (const auto& b : net.buffers()) ckpt.tensors.emplace_back(b.name, *b.value);
  return ckpt;
}

void Checkpoint::restore(AdaFusionNet& net) const {
  std::map<std::string, const Matrix*> lookup;
  for (const auto& [name, tensor] : tensors) lookup[name] = &tensor;
  auto assign = [&](const std::string& name, Matrix* dst) {
    auto it = lookup.find(name);
    if (it == lookup.end()) throw IoError("checkpoint is missing tensor " + name);
    if (it->second->rows() != dst->rows() || it->second->cols() != dst->cols()) {
      throw IoError("checkpoint tensor " + name + " has mismatched shape");
    }
    *dst = *it->second;
  };
  for (auto& p : net.params()) assign(p.name, p.value);
  for (auto& b : net.buffers()) assign(b.name, b.value);
}

AdaFusionNet Checkpoint::buildModel() const {
  Rng rng(0);
  AdaFusionNet net(model_config, rng);
  restore(net);
  return net;
}

std::string Checkpoint::serialize() const {
  std::ostringstream out(std::ios::binary);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  io::writeU32(out, kFormatVersion);
  io::writeU64(out, config_hash);
  writeWidths(out, model_config.image_widths);
  writeWidths(out, model_config.voxel_widths);
  io::writeU32(out, static_cast<std::uint32_t>(model_config.attention_channels));
  io::writeU32(out, static_cast<std::uint32_t>(model_config.fusion_channels));
  io::writeU32(out, static_cast<std::uint32_t>(model_config.head_hidden[0]));
  io::writeU32(out, static_cast<std::uint32_t>(model_config.head_hidden[1]));
  io::writeU32(out, model_config.adaptive_weights ? 1 : 0);
  io::writeU32(out, static_cast<std::uint32_t>(model_config.image_height));
  io::writeU32(out, static_cast<std::uint32_t>(model_config.image_width));
  for (int a = 0; a < 3; ++a) {
    io::writeU32(out, static_cast<std::uint32_t>(model_config.voxel_resolution[a]));
  }
  io::writeU32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    io::writeString(out, name);
    io::writeMatrix(out, tensor);
  }
  return std::move(out).str();
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  char magic[8];
  io::readRaw(in, magic, sizeof(magic), "magic");
  if (!std::equal(magic, magic + 8, kCheckpointMagic)) {
    throw IoError("not a checkpoint archive");
  }
  const std::uint32_t version = io::readU32(in, "format version");
  if (version != kFormatVersion) {
    throw IoError("unsupported checkpoint format version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config_hash = io::readU64(in, "config hash");
  ckpt.model_config.image_widths = readWidths(in);
  ckpt.model_config.voxel_widths = readWidths(in);
  ckpt.model_config.attention_channels = static_cast<int>(io::readU32(in, "attention channels"));
  ckpt.model_config.fusion_channels = static_cast<int>(io::readU32(in, "fusion channels"));
  ckpt.model_config.head_hidden[0] = static_cast<int>(io::readU32(in, "head hidden"));
  ckpt.model_config.head_hidden[1] = static_cast<int>(io::readU32(in, "head hidden"));
  ckpt.model_config.adaptive_weights = io::readU32(in, "adaptive flag") != 0;
  ckpt.model_config.image_height = static_cast<int>(io::readU32(in, "image height"));
  ckpt.model_config.image_width = static_cast<int>(io::readU32(in, "image width"));
  for (int a = 0; a < 3; ++a) {
    ckpt.model_config.voxel_resolution[a] = static_cast<int>(io::readU32(in, "voxel resolution"));
  }
  const std::uint32_t count = io::readU32(in, "tensor count");
  if (count > 4096) throw IoError("implausible tensor count");
  ckpt.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = io::readString(in, "tensor name");
    Matrix tensor = io::readMatrix(in, name.c_str());
    ckpt.tensors.emplace_back(std::move(name), std::move(tensor));
  }
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize(std::move(buffer).str());
}

std::uint64_t Checkpoint::contentHash() const {
  const std::string bytes = serialize();
  return fnv1a64(bytes.data(), bytes.size());
}

std::string renderTrainLog(const std::vector<TrainLogRow>& log) {
  std::string out = "step,loss,ar1,lr,alpha_i_mean,alpha_p_mean\n";
  for (const TrainLogRow& row : log) {
    out += std::to_string(row.step) + "," + formatReal(row.loss) + "," + formatReal(row.ar1) +
           "," + formatReal(row.lr) + "," + formatReal(row.alpha_i_mean) + "," +
           formatReal(row.alpha_p_mean) + "\n";
  }
  return out;
}

void writeTrainLog(const std::filesystem::path& path, const std::vector<TrainLogRow>& log) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write training log " + path.string());
  out << renderTrainLog(log);
}

std::pair<std::vector<PreparedFrame>, std::vector<PreparedFrame>> splitValidationByRegion(
    const std::vector<PreparedFrame>& frames, double fraction, double cell_size) {
  std::pair<std::vector<PreparedFrame>, std::vector<PreparedFrame>> out;
  if (frames.empty()) return out;
  if (fraction <= 0.0) {
    out.first = frames;
    return out;
  }
  auto cellOf = [&](const PreparedFrame& f) {
    const auto cx = static_cast<long>(std::floor(f.frame.position.x() / cell_size));
    const auto cy = static_cast<long>(std::floor(f.frame.position.y() / cell_size));
    return std::pair<long, long>(cx, cy);
  };
  std::map<std::pair<long, long>, int> cell_order;
  for (const auto& f : frames) cell_order.emplace(cellOf(f), 0);
  int index = 0;
  for (auto& [key, value] : cell_order) value = index++;
  const int stride = std::max(2, static_cast<int>(std::lround(1.0 / fraction)));
  for (const auto& f : frames) {
    const bool held_out = cell_order[cellOf(f)] % stride == 0;
    (held_out ? out.second : out.first).push_back(f);
  }
  if (out.first.empty()) {  // degenerate geography: keep everything trainable
    out.first = std::move(out.second);
    out.second.clear();
  }
  return out;
}

std::pair<FeatureBatch, FeatureBatch> makeInputs(const std::vector<const PreparedFrame*>& frames,
                                                 const PreprocessParams& params,
                                                 Rng* augment_rng) {
  if (frames.empty()) throw ValidationError("makeInputs needs at least one frame");
  const int batch = static_cast<int>(frames.size());
  const GridShape image_shape = frames.front()->image.shape();
  const GridShape voxel_shape = params.voxel.shape();
  FeatureBatch images = FeatureBatch::zeros(3, image_shape, batch);
  FeatureBatch voxels = FeatureBatch::zeros(1, voxel_shape, batch);
  for (int b = 0; b < batch; ++b) {
    const PreparedFrame& pf = *frames[static_cast<std::size_t>(b)];
    if (pf.image.shape() != image_shape) {
      throw ValidationError("frames in one batch must share the image resolution");
    }
    if (augment_rng != nullptr && params.augment_enabled) {
      NormalizedImage image = pf.image;
      Matrix points = pf.points;
      augment(image, points, params.augment, *augment_rng);
      images.sample(b) = image.pixels;
      voxels.sample(b) = voxelize(points, params.voxel).occupancy;
    } else {
      images.sample(b) = pf.image.pixels;
      voxels.sample(b) = voxelize(pf.points, params.voxel).occupancy;
    }
  }
  return {std::move(images), std::move(voxels)};
}

std::pair<Matrix, Matrix> embedFrames(AdaFusionNet& net, const std::vector<PreparedFrame>& frames,
                                      const PreprocessParams& params, int chunk) {
  const int dim = net.descriptorDim();
  Matrix descriptors(dim, static_cast<Eigen::Index>(frames.size()));
  Matrix alphas(2, static_cast<Eigen::Index>(frames.size()));
  for (std::size_t start = 0; start < frames.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t stop = std::min(frames.size(), start + static_cast<std::size_t>(chunk));
    std::vector<const PreparedFrame*> slice;
    slice.reserve(stop - start);
    for (std::size_t i = start; i < stop; ++i) slice.push_back(&frames[i]);
    auto [images, voxels] = makeInputs(slice, params, nullptr);
    auto out = net.forward(images, voxels, false);
    descriptors.middleCols(static_cast<Eigen::Index>(start),
                           static_cast<Eigen::Index>(stop - start)) = out.descriptors;
    alphas.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(stop - start)) =
        out.alphas;
  }
  return {std::move(descriptors), std::move(alphas)};
}

namespace {

/// Leave-one-out AR@1 over the validation frames: a query succeeds when its
/// nearest other descriptor (L1) lies within val_d_tp meters; queries with
/// no possible true positive are excluded from the denominator.
double validationAr1(const Matrix& descriptors, const std::vector<PreparedFrame>& frames,
                     double d_tp) {
  const Eigen::Index n = descriptors.cols();
  int counted = 0;
  int hits = 0;
  for (Eigen::Index q = 0; q < n; ++q) {
    bool has_tp = false;
    Eigen::Index best = -1;
    double best_dist = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == q) continue;
      const double geo = (frames[static_cast<std::size_t>(q)].frame.position -
                          frames[static_cast<std::size_t>(j)].frame.position)
                             .norm();
      if (geo <= d_tp) has_tp = true;
      const double dist = (descriptors.col(q) - descriptors.col(j)).lpNorm<1>();
      if (best < 0 || dist < best_dist) {
        best = j;
        best_dist = dist;
      }
    }
    if (!has_tp || best < 0) continue;
    ++counted;
    const double geo = (frames[static_cast<std::size_t>(q)].frame.position -
                        frames[static_cast<std::size_t>(best)].frame.position)
                           .norm();
    if (geo <= d_tp) ++hits;
  }
  return counted == 0 ? 0.0 : static_cast<double>(hits) / counted;
}

struct PairIndex {
  std::vector<std::pair<int, int>> positives;
  std::vector<std::vector<int>> negative_candidates;  // per query
};

PairIndex buildPairIndex(const std::vector<PreparedFrame>& frames, double d_pos, double d_neg) {
  PairIndex index;
  const int n = static_cast<int>(frames.size());
  index.negative_candidates.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = (frames[static_cast<std::size_t>(i)].frame.position -
                        frames[static_cast<std::size_t>(j)].frame.position)
                           .norm();
      if (j > i && d <= d_pos) index.positives.emplace_back(i, j);
      if (d >= d_neg) index.negative_candidates[static_cast<std::size_t>(i)].push_back(j);
    }
  }
  return index;
}

std::vector<std::pair<int, int>> sampleNegatives(const PairIndex& index, int neg_cap, Rng& rng) {
  std::vector<std::pair<int, int>> negatives;
  for (std::size_t i = 0; i < index.negative_candidates.size(); ++i) {
    std::vector<int> pool = index.negative_candidates[i];
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(neg_cap), pool.size());
    for (std::size_t t = 0; t < take; ++t) {
      const std::size_t pick = t + static_cast<std::size_t>(rng.below(pool.size() - t));
      std::swap(pool[t], pool[pick]);
      negatives.emplace_back(static_cast<int>(i), pool[t]);
    }
  }
  return negatives;
}

}  // namespace

TrainResult train(const ModelConfig& model_config, const TrainConfig& config,
                  const TrainDataset& data, std::uint64_t config_hash) {
  config.validate();
  if (data.train_frames.size() < 2) {
    throw ValidationError("training needs at least two frames");
  }

  Rng init_rng(mixSeed(config.seed, "init"));
  AdaFusionNet net(model_config, init_rng);
  Adam adam(net.params(), config.adam_beta1, config.adam_beta2, config.adam_eps);

  const PairIndex pair_index = buildPairIndex(data.train_frames, config.d_pos, config.d_neg);
  if (pair_index.positives.empty()) {
    throw ValidationError("no positive pairs in the training set");
  }

  TrainResult result;
  result.best_ar1 = -1.0;
  double lr = config.lr_init;
  int evals_since_improvement = 0;
  long step = 0;
  double loss_accum = 0.0;
  long loss_count = 0;
  const int half_batch = config.batch_size / 2;

  auto evaluate = [&]() {
    if (data.val_frames.empty()) return;
    auto [descriptors, alphas] = embedFrames(net, data.val_frames, data.preprocess);
    const double ar1 = validationAr1(descriptors, data.val_frames, config.val_d_tp);
    TrainLogRow row;
    row.step = step;
    row.loss = loss_count > 0 ? loss_accum / static_cast<double>(loss_count) : 0.0;
    row.ar1 = ar1;
    row.lr = lr;
    row.alpha_i_mean = alphas.row(0).mean();
    row.alpha_p_mean = alphas.row(1).mean();
    result.log.push_back(row);
    loss_accum = 0.0;
    loss_count = 0;
    if (ar1 > result.best_ar1) {
      result.best_ar1 = ar1;
      result.best_step = step;
      result.best = Checkpoint::fromModel(net, config_hash);
      evals_since_improvement = 0;
    } else {
      ++evals_since_improvement;
      if (evals_since_improvement >= config.patience) {
        lr *= config.lr_decay;
        evals_since_improvement = 0;
      }
    }
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng epoch_rng(mixSeed(config.seed, "epoch", epoch));
    Rng augment_rng(mixSeed(config.seed, "augment", epoch));

    std::vector<std::pair<int, int>> positives = pair_index.positives;
    std::vector<std::pair<int, int>> negatives =
        sampleNegatives(pair_index, config.neg_cap, epoch_rng);
    if (negatives.empty()) {
      throw ValidationError("no negative pairs available for training");
    }
    epoch_rng.shuffle(positives);
    epoch_rng.shuffle(negatives);

    const std::size_t batches = std::max((positives.size() + half_batch - 1) / half_batch,
                                         (negatives.size() + half_batch - 1) / half_batch);
    for (std::size_t batch_id = 0; batch_id < batches; ++batch_id) {
      std::vector<std::pair<int, int>> batch_pairs;
      std::vector<int> labels;
      for (int k = 0; k < half_batch; ++k) {
        batch_pairs.push_back(
            positives[(batch_id * static_cast<std::size_t>(half_batch) + k) % positives.size()]);
        labels.push_back(+1);
      }
      for (int k = 0; k < half_batch; ++k) {
        batch_pairs.push_back(
            negatives[(batch_id * static_cast<std::size_t>(half_batch) + k) % negatives.size()]);
        labels.push_back(-1);
      }

      std::vector<const PreparedFrame*> slots;
      slots.reserve(batch_pairs.size() * 2);
      for (const auto& [a, b] : batch_pairs) {
        slots.push_back(&data.train_frames[static_cast<std::size_t>(a)]);
        slots.push_back(&data.train_frames[static_cast<std::size_t>(b)]);
      }
      auto [images, voxels] = makeInputs(slots, data.preprocess, &augment_rng);
      auto out = net.forward(images, voxels, true);

      const int pairs = static_cast<int>(batch_pairs.size());
      Matrix descriptor_grad = Matrix::Zero(out.descriptors.rows(), out.descriptors.cols());
      double batch_loss = 0.0;
      for (int p = 0; p < pairs; ++p) {
        Vector g1, g2;
        const Vector f1 = out.descriptors.col(2 * p);
        const Vector f2 = out.descriptors.col(2 * p + 1);
        batch_loss += pairwiseMarginLossGrad(f1, f2, labels[static_cast<std::size_t>(p)],
                                             config.margin, config.slack, g1, g2);
        descriptor_grad.col(2 * p) = g1 / pairs;
        descriptor_grad.col(2 * p + 1) = g2 / pairs;
      }
      batch_loss /= pairs;
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite training loss " + std::to_string(batch_loss) +
                           " at step " + std::to_string(step + 1) + " (lr=" +
                           std::to_string(lr) + ", epoch=" + std::to_string(epoch) + ")");
      }

      net.zeroGrad();
      net.backward(descriptor_grad);
      adam.step(lr);

      ++step;
      result.step_losses.push_back(batch_loss);
      loss_accum += batch_loss;
      ++loss_count;
      if (step % config.eval_every == 0) evaluate();
    }
  }

  // closing evaluation so the best checkpoint and log reflect the final state
  if (!data.val_frames.empty() && (result.log.empty() || result.log.back().step != step)) {
    evaluate();
  }
  if (result.best_ar1 < 0.0) {
    result.best = Checkpoint::fromModel(net, config_hash);
    result.best_ar1 = 0.0;
    result.best_step = step;
  }
  result.steps = step;
  result.final_lr = lr;
  return result;
}

}  // namespace adafusion
