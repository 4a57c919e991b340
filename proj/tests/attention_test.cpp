#include "adafusion/attention.hpp"

#include "oracles.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <numeric>

using namespace adafusion;
using testsupport::checkGradients;
using testsupport::maxAbsDiff;
using testsupport::maxRelDiff;
using testsupport::randomBatch;
using testsupport::randomMatrix;

TEST_CASE("softmaxRows: rows sum to one and survive huge logits") {
  Rng rng(1);
  Matrix logits = randomMatrix(6, 9, rng, 3.0);
  logits(2, 4) = 1e4;
  logits(3, 1) = -1e4;
  const Matrix s = softmaxRows(logits);
  CHECK(s.allFinite());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    CHECK(s.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(s.row(r).minCoeff() >= 0.0);
  }
  CHECK(maxRelDiff(s, oracles::naiveSoftmaxRows(logits)) < 1e-12);
}

TEST_CASE("spatial attention: uniform weights under zero keys") {
  Rng rng(2);
  const Matrix q = randomMatrix(3, 5, rng);
  const Matrix v = randomMatrix(3, 5, rng);
  const Matrix k = Matrix::Zero(3, 5);
  const Matrix out = spatialAttention(q, k, v);
  const Vector mean = v.rowwise().mean();
  for (Eigen::Index n = 0; n < out.cols(); ++n) {
    CHECK((out.col(n) - mean).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("spatial attention: singleton position is the identity") {
  Rng rng(3);
  const Matrix q = randomMatrix(4, 1, rng);
  const Matrix k = randomMatrix(4, 1, rng);
  const Matrix v = randomMatrix(4, 1, rng);
  CHECK(maxAbsDiff(spatialAttention(q, k, v), v) < 1e-12);
}

TEST_CASE("spatial attention matches the loop oracle at C2=4, N=6") {
  Rng rng(4);
  const Matrix q = randomMatrix(4, 6, rng);
  const Matrix k = randomMatrix(4, 6, rng);
  const Matrix v = randomMatrix(4, 6, rng);
  CHECK(maxRelDiff(spatialAttention(q, k, v), oracles::naiveSpatialAttention(q, k, v)) < 1e-6);
}

TEST_CASE("spatial attention commutes with position permutations") {
  Rng rng(5);
  const int n = 7;
  const Matrix q = randomMatrix(3, n, rng);
  const Matrix k = randomMatrix(3, n, rng);
  const Matrix v = randomMatrix(3, n, rng);
  const Matrix base = spatialAttention(q, k, v);

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  Matrix qp(3, n), kp(3, n), vp(3, n), base_p(3, n);
  for (int i = 0; i < n; ++i) {
    qp.col(i) = q.col(perm[static_cast<std::size_t>(i)]);
    kp.col(i) = k.col(perm[static_cast<std::size_t>(i)]);
    vp.col(i) = v.col(perm[static_cast<std::size_t>(i)]);
    base_p.col(i) = base.col(perm[static_cast<std::size_t>(i)]);
  }
  CHECK(maxAbsDiff(spatialAttention(qp, kp, vp), base_p) < 1e-9);
}

TEST_CASE("channel attention: zero queries average the channels") {
  Rng rng(6);
  const Matrix q = Matrix::Zero(4, 5);
  const Matrix k = randomMatrix(4, 5, rng);
  const Matrix v = randomMatrix(4, 5, rng);
  const Matrix out = channelAttention(q, k, v);
  const Eigen::RowVectorXd channel_mean = v.colwise().mean();
  for (Eigen::Index c = 0; c < out.rows(); ++c) {
    CHECK((out.row(c) - channel_mean).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("channel attention: single channel is the identity") {
  Rng rng(7);
  const Matrix q = randomMatrix(1, 6, rng);
  const Matrix k = randomMatrix(1, 6, rng);
  const Matrix v = randomMatrix(1, 6, rng);
  CHECK(maxAbsDiff(channelAttention(q, k, v), v) < 1e-12);
}

TEST_CASE("channel attention matches the loop oracle") {
  Rng rng(8);
  const Matrix q = randomMatrix(4, 6, rng);
  const Matrix k = randomMatrix(4, 6, rng);
  const Matrix v = randomMatrix(4, 6, rng);
  CHECK(maxRelDiff(channelAttention(q, k, v), oracles::naiveChannelAttention(q, k, v)) < 1e-6);
}

TEST_CASE("attention rows sum to one inside both attention maps") {
  Rng rng(9);
  const Matrix q = randomMatrix(5, 8, rng, 4.0);
  const Matrix k = randomMatrix(5, 8, rng, 4.0);
  const Matrix spatial = softmaxRows<Real>(k.transpose() * q);
  const Matrix channel = softmaxRows<Real>(q * k.transpose());
  for (Eigen::Index r = 0; r < spatial.rows(); ++r) {
    CHECK(std::abs(spatial.row(r).sum() - 1.0) < 1e-6);
  }
  for (Eigen::Index r = 0; r < channel.rows(); ++r) {
    CHECK(std::abs(channel.row(r).sum() - 1.0) < 1e-6);
  }
}

TEST_CASE("nearest resample: identity at equal size, constants stay constant") {
  Rng rng(10);
  const FeatureBatch x = randomBatch(3, GridShape::plane(4, 6), 2, rng);
  const FeatureBatch same = nearestResample(x, x.shape);
  CHECK(maxAbsDiff(same.data, x.data) == 0.0);

  FeatureBatch constant = FeatureBatch::zeros(2, GridShape::volume(6, 4, 4), 1);
  constant.data.row(0).setConstant(1.25);
  constant.data.row(1).setConstant(-0.5);
  const FeatureBatch down = nearestResample(constant, GridShape::volume(3, 2, 2));
  CHECK(down.data.row(0).minCoeff() == 1.25);
  CHECK(down.data.row(0).maxCoeff() == 1.25);
  CHECK(down.data.row(1).maxCoeff() == -0.5);

  CHECK_THROWS_AS(nearestResample(x, GridShape::plane(8, 6)), ValidationError);
}

TEST_CASE("projections: zero tap yields bias maps, identity convs pass through") {
  Rng rng(11);
  AttentionBlockT<Real> block(3, 4, 2, rng);
  std::vector<ParamRef> params;
  block.collectParams("attn", params);

  SUBCASE("zero parameters, zero input -> zero output") {
    for (auto& p : params) p.value->setZero();
    const FeatureBatch zero = FeatureBatch::zeros(3, GridShape::plane(3, 4), 2);
    const FeatureBatch out = block.forward(zero, GridShape::plane(3, 4), false);
    CHECK(out.data.cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.channels() == 4);
  }

  SUBCASE("kernel-1 conv behaves as a per-position channel mix") {
    ConvT<Real> proj(3, 3, 1, 2, rng);
    const FeatureBatch tap = randomBatch(3, GridShape::plane(3, 4), 1, rng);
    const FeatureBatch got = proj.forward(tap, false);
    const FeatureBatch want = oracles::naiveConv(tap, proj.weight, proj.bias, 1);
    CHECK(maxRelDiff(got.data, want.data) < 1e-12);

    // identity weights reproduce the tap exactly
    proj.weight.setIdentity();
    proj.bias.setZero();
    const FeatureBatch id = proj.forward(tap, false);
    CHECK(maxAbsDiff(id.data, tap.data) < 1e-12);
  }
}

TEST_CASE("attention block downsamples to the requested grid") {
  Rng rng(12);
  AttentionBlockT<Real> block(2, 5, 3, rng);
  const FeatureBatch tap = randomBatch(2, GridShape::volume(4, 4, 2), 2, rng);
  const FeatureBatch out = block.forward(tap, GridShape::volume(2, 2, 1), false);
  CHECK(out.shape == GridShape::volume(2, 2, 1));
  CHECK(out.channels() == 5);
  CHECK(out.batch == 2);
}

TEST_CASE("gradients pass finite differences through both attention paths") {
  Rng rng(13);
  AttentionBlockT<Real> block(3, 2, 2, rng);
  const FeatureBatch tap = randomBatch(3, GridShape::plane(2, 2), 1, rng);  // N = 4
  const GridShape target = GridShape::plane(2, 2);
  const Matrix target_out = randomMatrix(2, 4, rng);

  auto loss = [&]() {
    const FeatureBatch y = block.forward(tap, target, true);
    return 0.5 * (y.data - target_out).squaredNorm();
  };
  std::vector<ParamRef> params;
  block.collectParams("attn", params);
  auto analytic = [&]() {
    for (auto& p : params) p.grad->setZero();
    const FeatureBatch y = block.forward(tap, target, true);
    FeatureBatch g(Matrix(y.data - target_out), y.shape, y.batch);
    block.backward(g);
  };
  const auto report = checkGradients(params, loss, analytic, 1e-4, 10, 90);
  CHECK(report.checked > 0);
  CHECK(report.worst_rel_error < 1e-3);

  // input gradient through the block
  FeatureBatch input = tap;
  auto input_loss = [&]() {
    const FeatureBatch y = block.forward(input, target, true);
    return 0.5 * (y.data - target_out).squaredNorm();
  };
  const FeatureBatch y0 = block.forward(input, target, true);
  FeatureBatch g0(Matrix(y0.data - target_out), y0.shape, y0.batch);
  const FeatureBatch input_grad = block.backward(g0);
  Rng pick(91);
  double worst = 0;
  for (int k = 0; k < 12; ++k) {
    const auto i =
        static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(input.data.size())));
    const Real saved = input.data.data()[i];
    input.data.data()[i] = saved + 1e-5;
    const double up = input_loss();
    input.data.data()[i] = saved - 1e-5;
    const double down = input_loss();
    input.data.data()[i] = saved;
    const double fd = (up - down) / 2e-5;
    const double an = input_grad.data.data()[i];
    worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}));
  }
  CHECK(worst < 1e-4);
}
