#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "d2tpt/errors.hpp"
#include "d2tpt/numerics.hpp"
#include "d2tpt/rng.hpp"
#include "oracles.hpp"

namespace d2tpt {
namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

TEST(L2Normalize, ThreeFourFive) {
  Vec out = l2_normalize(vec({3, 4}));
  EXPECT_DOUBLE_EQ(out(0), 0.6);
  EXPECT_DOUBLE_EQ(out(1), 0.8);
}

TEST(L2Normalize, BasisVectorUnchanged) {
  Vec e = Vec::Unit(5, 2);
  EXPECT_EQ(l2_normalize(e), e);
}

TEST(L2Normalize, MatchesLoopNormAndIsIdempotent) {
  Gaussian rng(1);
  for (int t = 0; t < 20; ++t) {
    Vec v = rng.normal(16, 3.0);
    Vec n = l2_normalize(v);
    auto ref = oracle::normalize(oracle::from(v));
    for (Eigen::Index i = 0; i < 16; ++i) EXPECT_NEAR(n(i), static_cast<double>(ref[i]), 1e-12);
    EXPECT_NEAR(static_cast<double>(oracle::norm(oracle::from(n))), 1.0, 1e-9);
    EXPECT_LE((l2_normalize(n) - n).lpNorm<Eigen::Infinity>(), 1e-9);
  }
}

TEST(L2Normalize, RejectsDegenerateAndNonFinite) {
  EXPECT_THROW(l2_normalize(Vec::Zero(4)), DegenerateVector);
  EXPECT_THROW(l2_normalize(Vec::Constant(4, 1e-14)), DegenerateVector);
  Vec bad = Vec::Ones(3);
  bad(1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(l2_normalize(bad), NonFinite);
}

TEST(NormalizeRows, EachRowUnit) {
  Gaussian rng(2);
  Mat m = rng.matrix(7, 5);
  Mat n = normalize_rows(m);
  for (Eigen::Index r = 0; r < 7; ++r) EXPECT_NEAR(n.row(r).norm(), 1.0, 1e-12);
}

TEST(Softmax, UniformLogits) {
  Vec p = softmax(Vec::Zero(4));
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(p(i), 0.25);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  Vec p = softmax(vec({1000, 0}));
  EXPECT_DOUBLE_EQ(p(0), 1.0);
  EXPECT_GE(p(1), 0.0);
  EXPECT_LT(p(1), 1e-300);
}

TEST(Softmax, MatchesExtendedPrecisionNaiveForm) {
  Gaussian rng(3);
  for (int t = 0; t < 50; ++t) {
    Vec z = rng.normal(7, 3.0);
    Vec p = softmax(z);
    auto ref = oracle::softmax(oracle::from(z));
    double sum = 0;
    for (Eigen::Index i = 0; i < 7; ++i) {
      EXPECT_NEAR(p(i), static_cast<double>(ref[i]), 1e-12);
      EXPECT_GT(p(i), 0.0);
      EXPECT_LE(p(i), 1.0);
      sum += p(i);
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Softmax, RejectsNonFinite) {
  EXPECT_THROW(softmax(vec({0, std::numeric_limits<double>::infinity()})), NonFinite);
}

TEST(Entropy, OneHotIsZero) { EXPECT_EQ(entropy(vec({0, 1, 0})), 0.0); }

TEST(Entropy, UniformIsLogC) {
  EXPECT_NEAR(entropy(Vec::Constant(10, 0.1)), 2.302585092994046, 1e-12);
}

TEST(Entropy, HandEvaluatedDistribution) {
  EXPECT_NEAR(entropy(vec({0.5, 0.25, 0.25})), 1.5 * std::log(2.0), 1e-12);
  EXPECT_NEAR(entropy(vec({0.5, 0.25, 0.25})), 1.039721, 1e-6);
}

TEST(Entropy, RejectsNonDistributions) {
  EXPECT_THROW(entropy(vec({0.5, 0.6})), NotADistribution);
  EXPECT_THROW(entropy(vec({1.2, -0.2})), NotADistribution);
}

TEST(Entropy, ShiftInvariantUnderSoftmax) {
  Gaussian rng(4);
  for (int t = 0; t < 20; ++t) {
    Vec z = rng.normal(6, 2.0);
    double shift = 50.0 * rng();
    EXPECT_NEAR(softmax_entropy(z), softmax_entropy((z.array() + shift).matrix()), 1e-9);
    EXPECT_NEAR(softmax_entropy(z), entropy(softmax(z)), 1e-12);
  }
}

TEST(RowEntropies, MatchesPerRow) {
  Gaussian rng(5);
  Mat m = rng.matrix(6, 4);
  Vec h = row_entropies(m);
  for (Eigen::Index r = 0; r < 6; ++r) {
    EXPECT_NEAR(h(r), static_cast<double>(oracle::entropy(oracle::softmax(oracle::from(Vec(m.row(r).transpose()))))), 1e-12);
  }
}

TEST(CosineMatrix, SelfAndOrthogonal) {
  Mat a(2, 3);
  a << 1, 2, 3, 0, 0, 1;
  Mat b(2, 3);
  b << 2, 4, 6, 1, 0, 0;
  Mat c = cosine_matrix(a, b);
  EXPECT_NEAR(c(0, 0), 1.0, 1e-15);
  EXPECT_EQ(c(1, 1), 0.0);
}

TEST(CosineMatrix, MatchesPairLoopAndStaysBounded) {
  Gaussian rng(6);
  for (int t = 0; t < 10; ++t) {
    Mat a = rng.matrix(4, 8);
    Mat b = rng.matrix(3, 8);
    Mat c = cosine_matrix(a, b);
    auto la = oracle::from(a);
    auto lb = oracle::from(b);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 3; ++j) {
        EXPECT_NEAR(c(i, j), static_cast<double>(oracle::cosine(la[i], lb[j])), 1e-9);
        EXPECT_LE(std::fabs(c(i, j)), 1.0 + 1e-9);
      }
    }
  }
}

TEST(CosineMatrix, DimensionMismatch) {
  EXPECT_THROW(cosine_matrix(Mat::Ones(2, 3), Mat::Ones(2, 4)), ShapeMismatch);
}

TEST(Argmax, LowestIndexWinsTies) {
  EXPECT_EQ(argmax(vec({1, 3, 3, 2})), 1u);
}

TEST(VjpSoftmaxEntropy, UniformLogitsGiveZero) {
  Vec g = vjp_softmax_entropy(Vec::Constant(5, 0.7), 1.0);
  EXPECT_LE(g.lpNorm<Eigen::Infinity>(), 1e-15);
}

TEST(VjpSoftmaxEntropy, ZeroUpstreamGivesZero) {
  Gaussian rng(7);
  EXPECT_EQ(vjp_softmax_entropy(rng.normal(5), 0.0), Vec::Zero(5));
}

TEST(VjpSoftmaxEntropy, MatchesExtendedPrecisionDifferences) {
  Gaussian rng(8);
  for (int t = 0; t < 10; ++t) {
    Vec z = rng.normal(5, 2.0);
    double up = 0.5 + rng.uniform_open();
    Vec g = vjp_softmax_entropy(z, up);
    auto fd = oracle::finite_difference(
        [&](const oracle::LVec& x) { return up * oracle::entropy(oracle::softmax(x)); },
        oracle::from(z), 1e-5L);
    EXPECT_LT(oracle::relative_error(oracle::from(g), fd), 1e-6) << "trial " << t;
  }
}

TEST(VjpSoftmax, MatchesExtendedPrecisionDifferences) {
  Gaussian rng(9);
  for (int t = 0; t < 10; ++t) {
    Vec z = rng.normal(6, 2.0);
    Vec u = rng.normal(6);
    Vec g = vjp_softmax(softmax(z), u);
    auto lu = oracle::from(u);
    auto fd = oracle::finite_difference(
        [&](const oracle::LVec& x) { return oracle::dot(lu, oracle::softmax(x)); },
        oracle::from(z), 1e-5L);
    EXPECT_LT(oracle::relative_error(oracle::from(g), fd), 1e-6) << "trial " << t;
  }
}

TEST(VjpL2Normalize, RadialUpstreamVanishes) {
  Vec v = vec({1, -2, 2});
  EXPECT_LE(vjp_l2_normalize(v, 3.5 * v).lpNorm<Eigen::Infinity>(), 1e-15);
}

TEST(VjpL2Normalize, TangentialUpstreamPassesOnUnitVector) {
  Vec v = vec({0, 1, 0});
  Vec u = vec({0.3, 0, -2});
  EXPECT_EQ(vjp_l2_normalize(v, u), u);
}

TEST(VjpL2Normalize, MatchesExtendedPrecisionDifferences) {
  Gaussian rng(10);
  for (int t = 0; t < 10; ++t) {
    Vec v = rng.normal(16);
    Vec u = rng.normal(16);
    Vec g = vjp_l2_normalize(v, u);
    auto lu = oracle::from(u);
    auto fd = oracle::finite_difference(
        [&](const oracle::LVec& x) { return oracle::dot(lu, oracle::normalize(x)); },
        oracle::from(v), 1e-5L);
    EXPECT_LT(oracle::relative_error(oracle::from(g), fd), 1e-6) << "trial " << t;
  }
}

TEST(VjpL2Normalize, RejectsDegenerate) {
  EXPECT_THROW(vjp_l2_normalize(Vec::Zero(3), Vec::Ones(3)), DegenerateVector);
}

}  // namespace
}  // namespace d2tpt
