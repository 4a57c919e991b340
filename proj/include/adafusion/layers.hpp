#pragma once

#include "adafusion/common.hpp"
#include "adafusion/tensor.hpp"

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace adafusion {

template <typename S>
struct ParamRefT {
  std::string name;
  MatrixX<S>* value;
  MatrixX<S>* grad;
};

template <typename S>
struct BufferRefT {
  std::string name;
  MatrixX<S>* value;
};

using ParamRef = ParamRefT<Real>;
using BufferRef = BufferRefT<Real>;

/// He-uniform fill, deterministic in the matrix' storage order.
template <typename S>
void heUniformInit(MatrixX<S>& weight, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  S* p = weight.data();
  for (Eigen::Index i = 0; i < weight.size(); ++i) {
    p[i] = static_cast<S>(rng.uniform(-bound, bound));
  }
}

/// Convolution with odd kernel, stride 1 and same-size zero padding over
/// rank-2 or rank-3 grids. Weight layout is C_out x (K * C_in), K enumerating
/// kernel offsets in fixed row-major order; a kernel-1 conv degenerates to a
/// per-position channel mix and accepts either rank.
template <typename S>
class ConvT {
 public:
  ConvT() = default;
  ConvT(int in_channels, int out_channels, int kernel, int rank, Rng& rng)
      : in_channels_(in_channels),
        out_channels_(out_channels),
        kernel_(kernel),
        rank_(rank) {
    if (kernel <= 0 || kernel % 2 == 0) throw ValidationError("conv kernel must be odd");
    if (rank != 2 && rank != 3) throw ValidationError("conv rank must be 2 or 3");
    const int taps = kernelTaps();
    weight.resize(out_channels, static_cast<Eigen::Index>(taps) * in_channels);
    heUniformInit(weight, taps * in_channels, rng);
    bias = MatrixX<S>::Zero(out_channels, 1);
    weight_grad = MatrixX<S>::Zero(weight.rows(), weight.cols());
    bias_grad = MatrixX<S>::Zero(out_channels, 1);
  }

  int kernelTaps() const {
    int taps = 1;
    for (int r = 0; r < rank_; ++r) taps *= kernel_;
    return taps;
  }

  FeatureBatchT<S> forward(const FeatureBatchT<S>& x, bool train) {
    if (x.channels() != in_channels_) {
      throw ValidationError("conv input has " + std::to_string(x.channels()) +
                            " channels, expected " + std::to_string(in_channels_));
    }
    if (kernel_ > 1 && x.shape.rank != rank_) {
      throw ValidationError("conv input rank mismatch");
    }
    FeatureBatchT<S> out(MatrixX<S>(out_channels_, x.data.cols()), x.shape, x.batch);
    out.data.colwise() = bias.col(0);
    if (kernel_ == 1) {
      out.data.noalias() += weight * x.data;
    } else {
      MatrixX<S> shifted(in_channels_, x.data.cols());
      int k = 0;
      forEachOffset([&](const std::array<int, 3>& off) {
        shiftInto(shifted, x.data, x.shape, x.batch, off);
        out.data.noalias() +=
            weight.middleCols(static_cast<Eigen::Index>(k) * in_channels_, in_channels_) * shifted;
        ++k;
      });
    }
    input_cache_ = train ? x : FeatureBatchT<S>{};
    return out;
  }

  FeatureBatchT<S> backward(const FeatureBatchT<S>& grad_out) {
    const FeatureBatchT<S>& x = input_cache_;
    if (x.empty()) throw ValidationError("conv backward without cached forward");
    bias_grad.col(0) += grad_out.data.rowwise().sum();
    FeatureBatchT<S> grad_in(MatrixX<S>::Zero(in_channels_, x.data.cols()), x.shape, x.batch);
    if (kernel_ == 1) {
      weight_grad.noalias() += grad_out.data * x.data.transpose();
      grad_in.data.noalias() = weight.transpose() * grad_out.data;
    } else {
      MatrixX<S> shifted(in_channels_, x.data.cols());
      MatrixX<S> back(in_channels_, x.data.cols());
      int k = 0;
      forEachOffset([&](const std::array<int, 3>& off) {
        const auto block =
            weight.middleCols(static_cast<Eigen::Index>(k) * in_channels_, in_channels_);
        shiftInto(shifted, x.data, x.shape, x.batch, off);
        weight_grad.middleCols(static_cast<Eigen::Index>(k) * in_channels_, in_channels_)
            .noalias() += grad_out.data * shifted.transpose();
        back.noalias() = block.transpose() * grad_out.data;
        accumulateShifted(grad_in.data, back, x.shape, x.batch, {-off[0], -off[1], -off[2]});
        ++k;
      });
    }
    return grad_in;
  }

  void collectParams(const std::string& prefix, std::vector<ParamRefT<S>>& out) {
    out.push_back({prefix + ".weight", &weight, &weight_grad});
    out.push_back({prefix + ".bias", &bias, &bias_grad});
  }

  int outChannels() const { return out_channels_; }

  MatrixX<S> weight, bias, weight_grad, bias_grad;

 private:
  template <typename F>
  void forEachOffset(F&& fn) const {
    const int h = kernel_ / 2;
    if (rank_ == 2) {
      for (int dy = -h; dy <= h; ++dy)
        for (int dx = -h; dx <= h; ++dx) fn(std::array<int, 3>{dy, dx, 0});
    } else {
      for (int dx = -h; dx <= h; ++dx)
        for (int dy = -h; dy <= h; ++dy)
          for (int dz = -h; dz <= h; ++dz) fn(std::array<int, 3>{dx, dy, dz});
    }
  }

  int in_channels_ = 0, out_channels_ = 0, kernel_ = 3, rank_ = 2;
  FeatureBatchT<S> input_cache_;
};

/// Rectifier with mask taken from the cached output (derivative 0 at 0).
template <typename S>
class ReluT {
 public:
  FeatureBatchT<S> forward(const FeatureBatchT<S>& x, bool train) {
    FeatureBatchT<S> out(x.data.cwiseMax(S(0)), x.shape, x.batch);
    if (train) mask_ = (out.data.array() > S(0)).template cast<S>();
    return out;
  }

  FeatureBatchT<S> backward(const FeatureBatchT<S>& grad_out) {
    return FeatureBatchT<S>(grad_out.data.cwiseProduct(mask_), grad_out.shape, grad_out.batch);
  }

 private:
  MatrixX<S> mask_;
};

enum class PoolKind { kMax, kAvg };

/// Non-overlapping pooling with kernel = stride = 2; odd extents drop the
/// trailing slice (floor division).
template <typename S>
class PoolT {
 public:
  PoolT() = default;
  explicit PoolT(PoolKind kind) : kind_(kind) {}

  FeatureBatchT<S> forward(const FeatureBatchT<S>& x, bool train) {
    GridShape out_shape = x.shape;
    for (int a = 0; a < x.shape.rank; ++a) {
      if (x.shape.dim[a] < 2) {
        throw ValidationError("input spatial extent " + x.shape.str() + " too small to pool");
      }
      out_shape.dim[a] = x.shape.dim[a] / 2;
    }
    FeatureBatchT<S> out = FeatureBatchT<S>::zeros(x.channels(), out_shape, x.batch);
    const int windows = 1 << x.shape.rank;
    for (int b = 0; b < x.batch; ++b) {
      auto in = x.sample(b);
      auto dst = out.sample(b);
      forEachWindow(out_shape, x.shape, [&](Eigen::Index out_col,
                                            const std::array<Eigen::Index, 8>& cols) {
        if (kind_ == PoolKind::kMax) {
          auto acc = dst.col(out_col);
          acc = in.col(cols[0]);
          for (int w = 1; w < windows; ++w) acc = acc.cwiseMax(in.col(cols[w]));
        } else {
          auto acc = dst.col(out_col);
          acc = in.col(cols[0]);
          for (int w = 1; w < windows; ++w) acc += in.col(cols[w]);
          acc /= S(windows);
        }
      });
    }
    if (train) {
      input_cache_ = x;
      out_shape_ = out_shape;
    }
    return out;
  }

  FeatureBatchT<S> backward(const FeatureBatchT<S>& grad_out) {
    const FeatureBatchT<S>& x = input_cache_;
    if (x.empty()) throw ValidationError("pool backward without cached forward");
    FeatureBatchT<S> grad_in = FeatureBatchT<S>::zeros(x.channels(), x.shape, x.batch);
    const int windows = 1 << x.shape.rank;
    const int channels = x.channels();
    for (int b = 0; b < x.batch; ++b) {
      auto in = x.sample(b);
      auto gout = grad_out.sample(b);
      auto gin = grad_in.sample(b);
      forEachWindow(out_shape_, x.shape, [&](Eigen::Index out_col,
                                             const std::array<Eigen::Index, 8>& cols) {
        if (kind_ == PoolKind::kAvg) {
          for (int w = 0; w < windows; ++w) gin.col(cols[w]) += gout.col(out_col) / S(windows);
        } else {
          for (int c = 0; c < channels; ++c) {
            int best = 0;
            S best_val = in(c, cols[0]);
            for (int w = 1; w < windows; ++w) {
              if (in(c, cols[w]) > best_val) {
                best_val = in(c, cols[w]);
                best = w;
              }
            }
            gin(c, cols[best]) += gout(c, out_col);
          }
        }
      });
    }
    return grad_in;
  }

 private:
  template <typename F>
  void forEachWindow(const GridShape& out_shape, const GridShape& in_shape, F&& fn) const {
    const int rank = in_shape.rank;
    const int OX = out_shape.dim[0], OY = out_shape.dim[1], OZ = out_shape.dim[2];
    const int Y = in_shape.dim[1], Z = in_shape.dim[2];
    std::array<Eigen::Index, 8> cols{};
    for (int x = 0; x < OX; ++x) {
      for (int y = 0; y < OY; ++y) {
        for (int z = 0; z < OZ; ++z) {
          const Eigen::Index out_col =
              (static_cast<Eigen::Index>(x) * OY + y) * OZ + z;
          int w = 0;
          for (int dx = 0; dx < 2; ++dx) {
            for (int dy = 0; dy < 2; ++dy) {
              if (rank == 2) {
                cols[w++] = static_cast<Eigen::Index>(2 * x + dx) * Y + (2 * y + dy);
              } else {
                for (int dz = 0; dz < 2; ++dz) {
                  cols[w++] = (static_cast<Eigen::Index>(2 * x + dx) * Y + (2 * y + dy)) * Z +
                              (2 * z + dz);
                }
              }
            }
          }
          fn(out_col, cols);
        }
      }
    }
  }

  PoolKind kind_ = PoolKind::kMax;
  FeatureBatchT<S> input_cache_;
  GridShape out_shape_;
};

/// Channel-wise batch normalization over (batch, positions). Training uses
/// batch statistics and updates running estimates; inference uses the
/// running estimates.
template <typename S>
class BatchNormT {
 public:
  BatchNormT() = default;
  explicit BatchNormT(int channels, S momentum = S(0.1), S eps = S(1e-5))
      : momentum_(momentum), eps_(eps) {
    gamma = MatrixX<S>::Ones(channels, 1);
    beta = MatrixX<S>::Zero(channels, 1);
    gamma_grad = MatrixX<S>::Zero(channels, 1);
    beta_grad = MatrixX<S>::Zero(channels, 1);
    running_mean = MatrixX<S>::Zero(channels, 1);
    running_var = MatrixX<S>::Ones(channels, 1);
  }

  FeatureBatchT<S> forward(const FeatureBatchT<S>& x, bool train) {
    const Eigen::Index m = x.data.cols();
    FeatureBatchT<S> out(MatrixX<S>(x.data.rows(), m), x.shape, x.batch);
    if (train) {
      VectorX<S> mean = x.data.rowwise().mean();
      MatrixX<S> centered = x.data.colwise() - mean;
      VectorX<S> var = centered.array().square().rowwise().mean().matrix();
      inv_std_ = (var.array() + eps_).rsqrt().matrix();
      xhat_ = (centered.array().colwise() * inv_std_.array()).matrix();
      out.data =
          ((xhat_.array().colwise() * gamma.col(0).array()).colwise() + beta.col(0).array())
              .matrix();
      running_mean.col(0) = (S(1) - momentum_) * running_mean.col(0) + momentum_ * mean;
      const S unbias = m > 1 ? S(m) / S(m - 1) : S(1);
      running_var.col(0) = (S(1) - momentum_) * running_var.col(0) + momentum_ * unbias * var;
    } else {
      VectorX<S> scale =
          (gamma.col(0).array() * (running_var.col(0).array() + eps_).rsqrt()).matrix();
      MatrixX<S> centered = x.data.colwise() - running_mean.col(0);
      out.data =
          ((centered.array().colwise() * scale.array()).colwise() + beta.col(0).array()).matrix();
    }
    return out;
  }

  FeatureBatchT<S> backward(const FeatureBatchT<S>& grad_out) {
    if (xhat_.size() == 0) throw ValidationError("batchnorm backward without cached forward");
    const Eigen::Index m = grad_out.data.cols();
    VectorX<S> sum_g = grad_out.data.rowwise().sum();
    VectorX<S> sum_gx = grad_out.data.cwiseProduct(xhat_).rowwise().sum();
    beta_grad.col(0) += sum_g;
    gamma_grad.col(0) += sum_gx;
    MatrixX<S> term = grad_out.data.colwise() - (sum_g / S(m));
    term -= (xhat_.array().colwise() * (sum_gx / S(m)).array()).matrix();
    VectorX<S> scale = (gamma.col(0).array() * inv_std_.array()).matrix();
    return FeatureBatchT<S>((term.array().colwise() * scale.array()).matrix(), grad_out.shape,
                            grad_out.batch);
  }

  void collectParams(const std::string& prefix, std::vector<ParamRefT<S>>& out) {
    out.push_back({prefix + ".gamma", &gamma, &gamma_grad});
    out.push_back({prefix + ".beta", &beta, &beta_grad});
  }

  void collectBuffers(const std::string& prefix, std::vector<BufferRefT<S>>& out) {
    out.push_back({prefix + ".running_mean", &running_mean});
    out.push_back({prefix + ".running_var", &running_var});
  }

  MatrixX<S> gamma, beta, gamma_grad, beta_grad;
  MatrixX<S> running_mean, running_var;

 private:
  S momentum_ = S(0.1);
  S eps_ = S(1e-5);
  MatrixX<S> xhat_;
  VectorX<S> inv_std_;
};

/// Two (3x3 conv, stride 1, padding 1 -> ReLU) stages; spatial size preserved.
template <typename S>
class BasicBlockT {
 public:
  BasicBlockT() = default;
  BasicBlockT(int in_channels, int out_channels, int rank, Rng& rng)
      : conv1_(in_channels, out_channels, 3, rank, rng),
        conv2_(out_channels, out_channels, 3, rank, rng) {}

  FeatureBatchT<S> forward(const FeatureBatchT<S>& x, bool train) {
    return relu2_.forward(conv2_.forward(relu1_.forward(conv1_.forward(x, train), train), train),
                          train);
  }

  FeatureBatchT<S> backward(const FeatureBatchT<S>& grad_out) {
    return conv1_.backward(relu1_.backward(conv2_.backward(relu2_.backward(grad_out))));
  }

  void collectParams(const std::string& prefix, std::vector<ParamRefT<S>>& out) {
    conv1_.collectParams(prefix + ".conv1", out);
    conv2_.collectParams(prefix + ".conv2", out);
  }

  int outChannels() const { return conv2_.outChannels(); }

 private:
  ConvT<S> conv1_, conv2_;
  ReluT<S> relu1_, relu2_;
};

enum class Activation { kNone, kRelu, kSigmoid };

/// Fully-connected layer y = act(W x + b) over column-stacked inputs.
template <typename S>
class DenseT {
 public:
  DenseT() = default;
  DenseT(int in_features, int out_features, Activation act, Rng& rng) : act_(act) {
    weight.resize(out_features, in_features);
    heUniformInit(weight, in_features, rng);
    bias = MatrixX<S>::Zero(out_features, 1);
    weight_grad = MatrixX<S>::Zero(out_features, in_features);
    bias_grad = MatrixX<S>::Zero(out_features, 1);
  }

  MatrixX<S> forward(const MatrixX<S>& x, bool train) {
    if (x.rows() != weight.cols()) {
      throw ValidationError("dense input has " + std::to_string(x.rows()) +
                            " features, expected " + std::to_string(weight.cols()));
    }
    MatrixX<S> out = (weight * x).colwise() + bias.col(0);
    switch (act_) {
      case Activation::kNone:
        break;
      case Activation::kRelu:
        out = out.cwiseMax(S(0));
        break;
      case Activation::kSigmoid:
        out = out.unaryExpr([](S z) {
          if (z >= S(0)) return S(1) / (S(1) + std::exp(-z));
          const S e = std::exp(z);
          return e / (S(1) + e);
        });
        break;
    }
    if (train) {
      input_cache_ = x;
      output_cache_ = out;
    }
    return out;
  }

  MatrixX<S> backward(const MatrixX<S>& grad_out) {
    if (input_cache_.size() == 0) throw ValidationError("dense backward without cached forward");
    MatrixX<S> gz = grad_out;
    switch (act_) {
      case Activation::kNone:
        break;
      case Activation::kRelu:
        gz = gz.cwiseProduct((output_cache_.array() > S(0)).template cast<S>().matrix());
        break;
      case Activation::kSigmoid:
        gz = gz.cwiseProduct(
            (output_cache_.array() * (S(1) - output_cache_.array())).matrix());
        break;
    }
    weight_grad.noalias() += gz * input_cache_.transpose();
    bias_grad.col(0) += gz.rowwise().sum();
    return weight.transpose() * gz;
  }

  void collectParams(const std::string& prefix, std::vector<ParamRefT<S>>& out) {
    out.push_back({prefix + ".weight", &weight, &weight_grad});
    out.push_back({prefix + ".bias", &bias, &bias_grad});
  }

  MatrixX<S> weight, bias, weight_grad, bias_grad;

 private:
  Activation act_ = Activation::kNone;
  MatrixX<S> input_cache_, output_cache_;
};

}  // namespace adafusion
