#include "hybridgen/css.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hybridgen {
namespace {

using testing::numeric_gradient;
using testing::relative_error;

// Naive per-position cross-entropy, no max shift.
double oracle(const Eigen::MatrixXd& t, const Eigen::MatrixXd& s, double temperature, bool mean) {
  const Eigen::Index p = t.rows();
  long double total = 0;
  for (Eigen::Index i = 0; i < p; ++i) {
    long double denom = 0;
    for (Eigen::Index j = 0; j < p; ++j) {
      long double dot = 0;
      for (Eigen::Index k = 0; k < t.cols(); ++k) dot += static_cast<long double>(t(i, k)) * s(j, k);
      denom += std::exp(dot / temperature);
    }
    long double pos = 0;
    for (Eigen::Index k = 0; k < t.cols(); ++k) pos += static_cast<long double>(t(i, k)) * s(i, k);
    total += -std::log(std::exp(pos / temperature) / denom);
  }
  return static_cast<double>(mean ? total / p : total);
}

PatchTokenGrid grid(Eigen::MatrixXd tokens, int h, int w) { return {std::move(tokens), h, w}; }

TEST(CssLoss, SingletonGridIsZero) {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd t = testing::random_matrix(rng, 1, 5);
  const Eigen::MatrixXd s = testing::random_matrix(rng, 1, 5);
  EXPECT_EQ(css_loss(t, s), 0.0);
}

TEST(CssLoss, TwoOrthonormalTokens) {
  const Eigen::MatrixXd t = Eigen::MatrixXd::Identity(2, 2);
  const double expected = std::log(1.0 + std::exp(-1.0));
  EXPECT_NEAR(expected, 0.313262, 1e-6);
  EXPECT_NEAR(css_loss(t, t), expected, 1e-12);
  EXPECT_NEAR(oracle(t, t, 1.0, true), expected, 1e-12);
  CssConfig sum;
  sum.reduction = Reduction::sum_positions;
  EXPECT_NEAR(css_loss(t, t, sum), 2 * expected, 1e-12);
}

TEST(CssLoss, EqualSourceTokensGiveLogP) {
  std::mt19937_64 rng(2);
  for (int p : {2, 5, 16}) {
    const Eigen::RowVectorXd token = testing::random_vector(rng, 8).normalized().transpose();
    const Eigen::MatrixXd s = token.replicate(p, 1);
    const Eigen::MatrixXd t = testing::unit_rows(testing::random_matrix(rng, p, 8));
    EXPECT_NEAR(css_loss(t, s), std::log(static_cast<double>(p)), 1e-9);
  }
}

TEST(CssLoss, MatchesOracleOnRandomGrids) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> temp(0.1, 3.0);
  for (int k = 0; k < 200; ++k) {
    const int p = testing::uniform_int(rng, 1, 16);
    const int d = testing::uniform_int(rng, 1, 8);
    const bool normalized = k % 2 == 0;
    Eigen::MatrixXd t = testing::random_matrix(rng, p, d);
    Eigen::MatrixXd s = testing::random_matrix(rng, p, d);
    if (normalized) {
      t = testing::unit_rows(t);
      s = testing::unit_rows(s);
    }
    CssConfig config;
    config.temperature = k % 3 == 0 ? 1.0 : temp(rng);
    config.reduction = k % 5 == 0 ? Reduction::sum_positions : Reduction::mean_positions;
    const double expected = oracle(t, s, config.temperature, config.reduction == Reduction::mean_positions);
    EXPECT_NEAR(css_loss(t, s, config), expected, 1e-6);
    EXPECT_GE(css_loss(t, s, config), 0.0);
    if (normalized && p >= 2) EXPECT_GT(css_loss(t, s, config), 0.0);
  }
}

TEST(CssLoss, StableForLargeLogits) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Identity(3, 3) * 30.0;
  CssConfig sharp;
  sharp.temperature = 0.01;
  const double loss = css_loss(t, t, sharp);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NEAR(loss, 0.0, 1e-12);
}

TEST(CssLoss, JointPermutationEquivariance) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 50; ++k) {
    const int p = testing::uniform_int(rng, 2, 16);
    const Eigen::MatrixXd t = testing::unit_rows(testing::random_matrix(rng, p, 6));
    const Eigen::MatrixXd s = testing::unit_rows(testing::random_matrix(rng, p, 6));
    std::vector<int> perm(static_cast<std::size_t>(p));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd tp(p, 6), sp(p, 6);
    for (int i = 0; i < p; ++i) {
      tp.row(i) = t.row(perm[static_cast<std::size_t>(i)]);
      sp.row(i) = s.row(perm[static_cast<std::size_t>(i)]);
    }
    EXPECT_NEAR(css_loss(tp, sp), css_loss(t, s), 1e-9);
  }
}

TEST(CssLoss, IdenticalGridBound) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 100; ++k) {
    const int p = testing::uniform_int(rng, 2, 16);
    const Eigen::MatrixXd s = testing::unit_rows(testing::random_matrix(rng, p, testing::uniform_int(rng, 2, 8)));
    Eigen::MatrixXd gram = s * s.transpose();
    gram.diagonal().setConstant(-std::numeric_limits<double>::infinity());
    const double max_offdiag = gram.maxCoeff();
    CssConfig sum;
    sum.reduction = Reduction::sum_positions;
    const double bound = std::log(1.0 + (p - 1) * std::exp(max_offdiag - 1.0));
    // Every per-position term obeys the bound, so the sum obeys p times it.
    EXPECT_LE(css_loss(s, s), bound + 1e-12);
    EXPECT_LE(css_loss(s, s, sum), p * bound + 1e-12);
  }
}

TEST(CssLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 50; ++k) {
    const int p = testing::uniform_int(rng, 1, 9);
    const int d = testing::uniform_int(rng, 1, 16);
    const Eigen::MatrixXd t = testing::random_matrix(rng, p, d);
    const Eigen::MatrixXd s = testing::random_matrix(rng, p, d);
    CssConfig config;
    config.reduction = k % 2 ? Reduction::sum_positions : Reduction::mean_positions;
    config.temperature = k % 3 ? 1.0 : 0.5;
    Eigen::MatrixXd gt, gs;
    css_loss(t, s, config, &gt, &gs);
    auto ft = [&](const Eigen::VectorXd& x) {
      return css_loss(Eigen::Map<const Eigen::MatrixXd>(x.data(), p, d), s, config);
    };
    auto fs = [&](const Eigen::VectorXd& x) {
      return css_loss(t, Eigen::Map<const Eigen::MatrixXd>(x.data(), p, d), config);
    };
    const Eigen::VectorXd tv = Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
    const Eigen::VectorXd sv = Eigen::Map<const Eigen::VectorXd>(s.data(), s.size());
    const Eigen::VectorXd gtv = Eigen::Map<const Eigen::VectorXd>(gt.data(), gt.size());
    const Eigen::VectorXd gsv = Eigen::Map<const Eigen::VectorXd>(gs.data(), gs.size());
    EXPECT_LE(relative_error(gtv, numeric_gradient(ft, tv, 1e-5)), 1e-4);
    EXPECT_LE(relative_error(gsv, numeric_gradient(fs, sv, 1e-5)), 1e-4);
  }
}

TEST(CssLoss, ShapeErrors) {
  EXPECT_THROW(css_loss(Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(3, 3)), ShapeError);
  EXPECT_THROW(css_loss(Eigen::MatrixXd::Zero(0, 3), Eigen::MatrixXd::Zero(0, 3)), InvalidInputError);
  CssConfig bad;
  bad.temperature = 0.0;
  EXPECT_THROW(css_loss(Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2), bad), InvalidInputError);
  EXPECT_THROW(css_loss(grid(Eigen::MatrixXd::Identity(4, 4), 2, 2), grid(Eigen::MatrixXd::Identity(4, 4), 1, 4)),
               ShapeError);
}

TEST(CssBatch, MeanOfPairs) {
  std::mt19937_64 rng(7);
  const auto a = grid(testing::unit_rows(testing::random_matrix(rng, 4, 3)), 2, 2);
  const auto b = grid(testing::unit_rows(testing::random_matrix(rng, 4, 3)), 2, 2);
  const auto c = grid(testing::unit_rows(testing::random_matrix(rng, 4, 3)), 2, 2);
  const std::vector<PatchTokenGrid> same_t{a, a, a}, same_s{b, b, b};
  EXPECT_NEAR(css_batch_loss(same_t, same_s), css_loss(a, b), 1e-15);
  const std::vector<PatchTokenGrid> t{a, c}, s{b, a};
  EXPECT_NEAR(css_batch_loss(t, s), 0.5 * (css_loss(a, b) + css_loss(c, a)), 1e-15);
  EXPECT_NEAR(css_batch_loss(t, s), 0.5 * (oracle(a.tokens, b.tokens, 1, true) + oracle(c.tokens, a.tokens, 1, true)),
              1e-6);
  const std::vector<PatchTokenGrid> one{a};
  EXPECT_THROW(css_batch_loss(t, one), InvalidInputError);
  EXPECT_THROW(css_batch_loss({}, {}), InvalidInputError);
}

TEST(CssBatch, GradientsAreScaledPerPair) {
  std::mt19937_64 rng(8);
  const auto a = grid(testing::random_matrix(rng, 4, 3), 2, 2);
  const auto b = grid(testing::random_matrix(rng, 4, 3), 2, 2);
  const auto c = grid(testing::random_matrix(rng, 4, 3), 2, 2);
  const std::vector<PatchTokenGrid> t{a, c}, s{b, a};
  std::vector<Eigen::MatrixXd> grads;
  css_batch_loss(t, s, {}, &grads);
  ASSERT_EQ(grads.size(), 2u);
  Eigen::MatrixXd g0;
  css_loss(a.tokens, b.tokens, CssConfig{}, &g0);
  EXPECT_LT((grads[0] - 0.5 * g0).cwiseAbs().maxCoeff(), 1e-15);
}

}  // namespace
}  // namespace hybridgen
