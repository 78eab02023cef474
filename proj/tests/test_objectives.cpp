#include <cmath>

#include <gtest/gtest.h>

#include "d2tpt/errors.hpp"
#include "d2tpt/knowledge_base.hpp"
#include "d2tpt/objectives.hpp"
#include "d2tpt/rng.hpp"
#include "d2tpt/selection.hpp"
#include "oracles.hpp"

namespace d2tpt {
namespace {

struct Instance {
  ObjectiveContext ctx;
  PromptPair prompts;
  FrozenSelection frozen;
};

Instance random_instance(Gaussian& rng, Eigen::Index classes, Eigen::Index views,
                         Eigen::Index dim, double rho, bool with_retrieval) {
  Instance in;
  in.ctx.views = rng.matrix(views, dim);
  in.ctx.text.protos = rng.matrix(classes, dim);
  in.ctx.text.class_names.resize(static_cast<std::size_t>(classes), "c");
  in.ctx.logit_scale = 10.0;
  in.ctx.retrieval = Vec::Zero(classes);
  if (with_retrieval) {
    for (Eigen::Index c = 0; c < classes; c += 2) in.ctx.retrieval(c) = rng.uniform_open();
  }
  in.prompts = {rng.normal(dim, 0.1), rng.normal(dim, 0.1)};
  in.frozen = freeze_selection(in.ctx, in.prompts, rho);
  return in;
}

oracle::Losses oracle_losses(const Instance& in, const oracle::LVec& pt, const oracle::LVec& pv,
                             double alpha, double beta) {
  return oracle::objective(oracle::from(in.ctx.views), oracle::from(in.ctx.text.protos),
                           oracle::from(in.ctx.retrieval), in.ctx.logit_scale, in.frozen.rows,
                           pt, pv, alpha, beta);
}

// Gradient of the long-double objective by central differences, text then
// image coordinates.
oracle::LVec oracle_gradient(const Instance& in, double alpha, double beta) {
  auto pt = oracle::from(in.prompts.text);
  auto pv = oracle::from(in.prompts.image);
  oracle::LVec both(pt);
  both.insert(both.end(), pv.begin(), pv.end());
  const std::size_t d = pt.size();
  return oracle::finite_difference(
      [&](const oracle::LVec& x) {
        oracle::LVec t(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(d));
        oracle::LVec v(x.begin() + static_cast<std::ptrdiff_t>(d), x.end());
        return oracle_losses(in, t, v, alpha, beta).total;
      },
      both, 1e-6L);
}

oracle::LVec flatten(const GradPair& g) {
  auto out = oracle::from(g.text);
  auto v = oracle::from(g.image);
  out.insert(out.end(), v.begin(), v.end());
  return out;
}

TEST(LossRam, IdenticalRowsGiveTheirEntropy) {
  Vec row(4);
  row << 0.3, -1.0, 2.0, 0.5;
  Mat l = row.transpose().replicate(6, 1);
  EXPECT_NEAR(loss_ram(l, 0.5).value, softmax_entropy(row), 1e-12);
}

TEST(LossRam, TwoDisagreeingOneHotRows) {
  Mat l(2, 3);
  l << 1000, 0, 0, 0, 1000, 0;
  EXPECT_NEAR(loss_ram(l, 1.0).value, std::log(2.0), 1e-12);
}

TEST(LossRam, MatchesSortMaskMeanEntropyOracle) {
  Gaussian rng(1);
  for (int t = 0; t < 50; ++t) {
    Mat l = rng.matrix(8, 4, 2.0);
    RamLoss r = loss_ram(l, 0.5);
    auto rows = oracle::most_confident(oracle::from(l), 4);
    EXPECT_EQ(r.selected, rows);
    EXPECT_NEAR(r.value, static_cast<double>(oracle::loss_ram(oracle::from(l), rows)), 1e-9);
    EXPECT_NEAR(loss_ram_frozen(l, r.selected), r.value, 1e-15);
  }
}

TEST(EnsembleWeights, IdenticalRowsAreUniform) {
  Vec row = Vec::LinSpaced(5, -1, 3);
  EnsembleWeights w = ensemble_weights(row.transpose().replicate(4, 1));
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(w.weights(i), 0.25, 1e-15);
}

TEST(EnsembleWeights, SingletonHasWeightOne) {
  EnsembleWeights w = ensemble_weights(Mat::Ones(1, 3));
  EXPECT_EQ(w.weights.size(), 1);
  EXPECT_DOUBLE_EQ(w.weights(0), 1.0);
  EXPECT_NEAR(w.raw_scores(0), 1.0, 1e-15);
}

TEST(EnsembleWeights, MatchesLoopOracle) {
  Gaussian rng(2);
  for (int t = 0; t < 20; ++t) {
    Mat y = rng.matrix(4, 8);
    EnsembleWeights w = ensemble_weights(y);
    auto want = oracle::ensemble_weights(oracle::from(y));
    double sum = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_NEAR(w.weights(static_cast<Eigen::Index>(i)), static_cast<double>(want[i]), 1e-9);
      EXPECT_GT(w.weights(static_cast<Eigen::Index>(i)), 0.0);
      sum += w.weights(static_cast<Eigen::Index>(i));
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(EnsembleWeights, RejectsDegenerateRow) {
  EXPECT_THROW(ensemble_weights(Mat::Zero(2, 3)), DegenerateVector);
}

TEST(LossEn, UniformWeightsOnIdenticalRows) {
  Vec row(3);
  row << 2.0, -0.5, 0.1;
  Mat l = row.transpose().replicate(4, 1);
  EnsembleWeights w{Vec::Constant(4, 0.25), Vec::Zero(4)};
  EXPECT_NEAR(loss_en(l, w), softmax_entropy(row), 1e-12);
  EXPECT_NEAR(loss_en(l, w), loss_ram_frozen(l, std::vector<std::size_t>{0, 1, 2, 3}), 1e-12);
}

TEST(LossEn, PointMassPicksOneRow) {
  Gaussian rng(3);
  Mat l = rng.matrix(4, 3);
  EnsembleWeights w{Vec::Unit(4, 2), Vec::Zero(4)};
  EXPECT_NEAR(loss_en(l, w), softmax_entropy(l.row(2).transpose()), 1e-12);
}

TEST(LossEn, MatchesRecomputation) {
  Gaussian rng(4);
  for (int t = 0; t < 20; ++t) {
    Mat l = rng.matrix(5, 3, 2.0);
    EnsembleWeights w = ensemble_weights(rng.matrix(5, 6));
    EXPECT_NEAR(loss_en(l, w),
                static_cast<double>(oracle::loss_en(oracle::from(l), oracle::from(w.weights))),
                1e-9);
  }
}

TEST(LossEn, ShapeMismatch) {
  EXPECT_THROW(loss_en(Mat::Ones(3, 2), EnsembleWeights{Vec::Ones(2), Vec::Ones(2)}),
               ShapeMismatch);
}

TEST(LossMd, ZeroPromptsTripleTheZeroShotRow) {
  Gaussian rng(5);
  TextPrototypes text{rng.matrix(4, 6), {"a", "b", "c", "d"}};
  Mat views = rng.matrix(5, 6);
  AdaptedFeatures f = adapt_features(text, views, PromptPair::zeros(6));
  std::vector<std::size_t> rows{0, 2, 3};
  Vec mean = Vec::Zero(6);
  for (auto r : rows) mean += l2_normalize(views.row(static_cast<Eigen::Index>(r)).transpose());
  Vec row = 20.0 * normalize_rows(text.protos) * l2_normalize(mean);
  EXPECT_NEAR(loss_md(f, rows, 20.0), softmax_entropy(3.0 * row), 1e-12);
}

TEST(LossMd, SymmetricTwoClassIsLogTwo) {
  TextPrototypes text{Mat(2, 2), {"a", "b"}};
  text.protos << 1, 0, 0, 1;
  Mat views(1, 2);
  views << 1, 1;
  AdaptedFeatures f = adapt_features(text, views, PromptPair::zeros(2));
  EXPECT_NEAR(loss_md(f, std::vector<std::size_t>{0}, 50.0), std::log(2.0), 1e-12);
}

TEST(LossMd, MatchesBilinearRecomputation) {
  Gaussian rng(6);
  for (int t = 0; t < 20; ++t) {
    TextPrototypes text{rng.matrix(4, 6), {"a", "b", "c", "d"}};
    Mat views = rng.matrix(5, 6);
    PromptPair p{rng.normal(6, 0.3), rng.normal(6, 0.3)};
    AdaptedFeatures f = adapt_features(text, views, p);
    std::vector<std::size_t> rows{1, 4};
    oracle::LMat so, sa;
    for (auto r : rows) {
      so.push_back(oracle::from(Vec(views.row(static_cast<Eigen::Index>(r)).transpose())));
      sa.push_back(oracle::from(Vec(f.image_adapted.row(static_cast<Eigen::Index>(r)).transpose())));
    }
    auto want = oracle::loss_md(so, sa, oracle::from(text.protos), oracle::from(f.text_adapted), 7.0L);
    EXPECT_NEAR(loss_md(f, rows, 7.0), static_cast<double>(want), 1e-9);
  }
}

TEST(TotalLoss, Combinations) {
  EXPECT_EQ(total_loss(0.7, 0.3, 0.2, 0.0, 0.0).total, 0.7);
  EXPECT_NEAR(total_loss(0.5, 0.3, 0.2, 0.1, 0.001).total, 0.5302, 1e-15);
  EXPECT_EQ(total_loss(0, 0, 0, 0.1, 0.001).total, 0.0);
  LossBreakdown b = total_loss(0.5, 0.3, 0.2, 0.1, 0.001);
  EXPECT_EQ(b.total, b.ram + b.alpha * b.en + b.beta * b.md);
  EXPECT_THROW(total_loss(std::nan(""), 0, 0, 0.1, 0.1), NonFinite);
}

TEST(Evaluate, MatchesOracleObjective) {
  Gaussian rng(7);
  for (int t = 0; t < 20; ++t) {
    Instance in = random_instance(rng, 5, 8, 16, 0.5, t % 2 == 1);
    LossBreakdown got = evaluate(in.ctx, in.prompts, in.frozen, 0.1, 0.001);
    auto want = oracle_losses(in, oracle::from(in.prompts.text), oracle::from(in.prompts.image), 0.1, 0.001);
    EXPECT_NEAR(got.ram, static_cast<double>(want.ram), 1e-9);
    EXPECT_NEAR(got.en, static_cast<double>(want.en), 1e-9);
    EXPECT_NEAR(got.md, static_cast<double>(want.md), 1e-9);
    EXPECT_NEAR(got.total, static_cast<double>(want.total), 1e-9);
    const double cap = std::log(5.0) + 1e-12;
    for (double term : {got.ram, got.en, got.md}) {
      EXPECT_GE(term, 0.0);
      EXPECT_LE(term, cap);
    }
  }
}

TEST(GradTotal, MatchesOracleFiniteDifferences) {
  Gaussian rng(8);
  for (int t = 0; t < 20; ++t) {
    Instance in = random_instance(rng, 5, 8, 16, 0.5, t % 2 == 1);
    GradPair g = grad_total(in.ctx, in.prompts, in.frozen, 0.1, 0.001);
    EXPECT_LT(oracle::relative_error(flatten(g), oracle_gradient(in, 0.1, 0.001)), 1e-6)
        << "trial " << t;
  }
}

TEST(GradTotal, LargeTermWeightsStillMatch) {
  Gaussian rng(9);
  for (int t = 0; t < 10; ++t) {
    Instance in = random_instance(rng, 4, 6, 8, 0.5, true);
    GradPair g = grad_total(in.ctx, in.prompts, in.frozen, 2.0, 3.0);
    EXPECT_LT(oracle::relative_error(flatten(g), oracle_gradient(in, 2.0, 3.0)), 1e-6)
        << "trial " << t;
  }
}

TEST(GradTotal, WithoutExtraTermsEqualsRamGradient) {
  Gaussian rng(10);
  Instance in = random_instance(rng, 5, 8, 16, 0.5, false);
  GradPair total = grad_total(in.ctx, in.prompts, in.frozen, 0.0, 0.0);
  GradPair ram = grad_terms(in.ctx, in.prompts, in.frozen, {1.0, 0.0, 0.0});
  EXPECT_EQ(total.text, ram.text);
  EXPECT_EQ(total.image, ram.image);
  EXPECT_LT(oracle::relative_error(flatten(total), oracle_gradient(in, 0.0, 0.0)), 1e-6);
}

TEST(GradTotal, AdditiveAcrossTerms) {
  Gaussian rng(11);
  for (int t = 0; t < 20; ++t) {
    Instance in = random_instance(rng, 5, 8, 16, 0.5, t % 2 == 1);
    GradPair total = grad_total(in.ctx, in.prompts, in.frozen, 0.1, 0.001);
    GradPair ram = grad_terms(in.ctx, in.prompts, in.frozen, {1.0, 0.0, 0.0});
    GradPair en = grad_terms(in.ctx, in.prompts, in.frozen, {0.0, 1.0, 0.0});
    GradPair md = grad_terms(in.ctx, in.prompts, in.frozen, {0.0, 0.0, 1.0});
    Vec text = ram.text + 0.1 * en.text + 0.001 * md.text;
    Vec image = ram.image + 0.1 * en.image + 0.001 * md.image;
    EXPECT_LE((total.text - text).lpNorm<Eigen::Infinity>(), 1e-10);
    EXPECT_LE((total.image - image).lpNorm<Eigen::Infinity>(), 1e-10);
  }
}

TEST(GradTotal, SymmetricStationaryPointIsZero) {
  // Views and prototypes mutually orthonormal: every logit is 0.
  ObjectiveContext ctx;
  Mat basis = Mat::Identity(6, 6);
  ctx.text.protos = basis.topRows(3);
  ctx.text.class_names = {"a", "b", "c"};
  ctx.views = basis.bottomRows(3);
  ctx.retrieval = Vec::Zero(3);
  ctx.logit_scale = 100.0;
  PromptPair p = PromptPair::zeros(6);
  FrozenSelection frozen = freeze_selection(ctx, p, 1.0);
  GradPair g = grad_total(ctx, p, frozen, 0.1, 0.001);
  EXPECT_LE(g.text.lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_LE(g.image.lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(FreezeSelection, MatchesLossRamSelection) {
  Gaussian rng(12);
  Instance in = random_instance(rng, 5, 8, 16, 0.5, true);
  EXPECT_EQ(in.frozen.rows, loss_ram(modulated_logits(in.ctx, in.prompts), 0.5).selected);
}

}  // namespace
}  // namespace d2tpt
