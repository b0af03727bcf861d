#include <cmath>

#include <gtest/gtest.h>

#include "streamgate/model.hpp"
#include "test_util.hpp"

using namespace streamgate;

TEST(Predict, ZeroWeightsGiveUniformAndLabelZero) {
  const ModelParams p = ModelParams::identity(3, 4);
  const Prediction out = predict(p, sgtest::random_features(1, 5, 3));
  for (Eigen::Index i = 0; i < 5; ++i) {
    EXPECT_EQ(out.labels[static_cast<std::size_t>(i)], 0);
    for (Eigen::Index k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(out.probs(i, k), 0.25);
  }
}

TEST(Predict, OneDimensionalThreshold) {
  ModelParams p = ModelParams::identity(1, 2);
  p.W << -1.0, 1.0;
  Features x(1, 1);
  x << 10.0;
  const Prediction out = predict(p, x);
  EXPECT_EQ(out.labels[0], 1);
  EXPECT_GT(out.probs(0, 1), 0.99);
}

TEST(Predict, ShiftInvariantInLogits) {
  ModelParams p = sgtest::random_params(3, 4, 5);
  const Features x = sgtest::random_features(4, 7, 4);
  const Prediction a = predict(p, x);
  p.b.array() += 123.0;
  const Prediction b = predict(p, x);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_LT((a.probs - b.probs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Predict, RowsSumToOne) {
  const ModelParams p = sgtest::random_params(5, 6, 4, 8.0);
  const Prediction out = predict(p, sgtest::random_features(6, 50, 6, 5.0));
  for (Eigen::Index i = 0; i < out.probs.rows(); ++i)
    EXPECT_NEAR(out.probs.row(i).sum(), 1.0, 1e-9);
}

TEST(Predict, LowestIndexWinsTies) {
  Eigen::MatrixXd m(1, 3);
  m << 0.2, 0.4, 0.4;
  EXPECT_EQ(argmax_rows(m)[0], 1);
}

TEST(Predict, RejectsNonFiniteAndMismatchedInput) {
  const ModelParams p = ModelParams::identity(2, 2);
  Features x(1, 2);
  x << 1.0, std::nan("");
  EXPECT_THROW(predict(p, x), NumericError);
  EXPECT_THROW(predict(p, Features::Zero(1, 3)), InvalidArgument);
}

TEST(ModelParams, ValidateCatchesBadVariance) {
  ModelParams p = ModelParams::identity(2, 2);
  p.var(0) = 0.0;
  EXPECT_ANY_THROW(p.validate());
}

TEST(ModelParams, FingerprintTracksContent) {
  ModelParams a = sgtest::random_params(1, 3, 2);
  ModelParams b = a;
  EXPECT_EQ(fingerprint(a), fingerprint(b));
  b.beta(1) = std::nextafter(b.beta(1), 1e9);
  EXPECT_NE(fingerprint(a), fingerprint(b));
}

TEST(ErrorCount, CountsMismatches) {
  EXPECT_EQ(count_errors({0, 1, 2, 3}, {0, 1, 1, 0}), 2);
}
