#pragma once

#include "adafusion/layers.hpp"
#include "adafusion/tensor.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace testsupport {

using adafusion::FeatureBatch;
using adafusion::GridShape;
using adafusion::Matrix;
using adafusion::ParamRef;
using adafusion::Real;
using adafusion::Rng;
using adafusion::Vector;

inline Matrix randomMatrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-scale, scale);
  }
  return m;
}

inline FeatureBatch randomBatch(int channels, GridShape shape, int batch, Rng& rng,
                                double scale = 1.0) {
  return FeatureBatch(randomMatrix(channels, static_cast<Eigen::Index>(shape.count()) * batch,
                                   rng, scale),
                      shape, batch);
}

inline double maxAbsDiff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return 1e30;
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

inline double maxRelDiff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return 1e30;
  double worst = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      const double denom = std::max({std::abs(a(r, c)), std::abs(b(r, c)), 1e-12});
      worst = std::max(worst, std::abs(a(r, c) - b(r, c)) / denom);
    }
  }
  return worst;
}

struct GradCheckReport {
  double worst_rel_error = 0.0;
  std::string worst_param;
  int checked = 0;
};

/// Central finite differences against analytic gradients.
///   loss:     evaluates the loss at the current parameters (forward only)
///   analytic: runs forward+backward, leaving gradients in the ParamRefs
/// Checks up to max_per_tensor deterministically-sampled entries per tensor.
/// An entry counts as an error only when the absolute difference exceeds
/// abs_tol; below that the centered difference is dominated by cancellation
/// noise (eps * |loss| / step) rather than by the gradient itself.
inline GradCheckReport checkGradients(std::vector<ParamRef> params,
                                      const std::function<double()>& loss,
                                      const std::function<void()>& analytic,
                                      double step = 1e-4, int max_per_tensor = 8,
                                      std::uint64_t pick_seed = 0,
                                      double abs_tol = 0.0) {
  analytic();
  std::vector<Matrix> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(*p.grad);

  if (abs_tol <= 0.0) {
    const double scale = std::max(1.0, std::abs(loss()));
    abs_tol = 100.0 * std::numeric_limits<double>::epsilon() * scale / step;
  }

  GradCheckReport report;
  Rng pick(pick_seed);
  for (std::size_t t = 0; t < params.size(); ++t) {
    Matrix& value = *params[t].value;
    const Eigen::Index size = value.size();
    const int checks = static_cast<int>(std::min<Eigen::Index>(size, max_per_tensor));
    for (int k = 0; k < checks; ++k) {
      const Eigen::Index i = checks == size
                                 ? k
                                 : static_cast<Eigen::Index>(pick.below(
                                       static_cast<std::uint64_t>(size)));
      const Real saved = value.data()[i];
      value.data()[i] = saved + step;
      const double up = loss();
      value.data()[i] = saved - step;
      const double down = loss();
      value.data()[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = grads[t].data()[i];
      ++report.checked;
      if (std::abs(fd - an) <= abs_tol) continue;
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
      if (rel > report.worst_rel_error) {
        report.worst_rel_error = rel;
        report.worst_param = params[t].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace testsupport
