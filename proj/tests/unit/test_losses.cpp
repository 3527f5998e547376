// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <gtest/gtest.h>

#include "shr/losses.hpp"
#include "shr/rng.hpp"

namespace shr {
namespace {

Heatmap grid2(double a, double b, double c, double d) {
  return Heatmap(2, 2, std::vector<double>{a, b, c, d});
}

TEST(Wce, ZeroWeightsGiveZero) {
  const LossValue v = wce_loss(grid2(1, 2, 3, 4), Heatmap(2, 2, 0.0), Heatmap(2, 2, 1.0));
  EXPECT_EQ(v.value, 0.0);
  EXPECT_EQ(v.grad_primary, Heatmap(2, 2, 0.0));
}

TEST(Wce, SingleActiveTermOnUniformLogits) {
  const Heatmap w = grid2(1, 0, 0, 0);
  const LossValue v = wce_loss(Heatmap(2, 2, 0.0), w, w);
  EXPECT_NEAR(v.value, -std::log(0.25), 1e-15);
  EXPECT_NEAR(v.value, 1.38629, 1e-5);
}

TEST(Wce, LinearInWeights) {
  const Heatmap logits = grid2(0.3, -1.2, 2.0, 0.1);
  const Heatmap y = grid2(1, 1, 0, 1);
  const Heatmap w = grid2(1.0, 0.5, 0.25, 0.8);
  const Heatmap half = grid2(0.5, 0.25, 0.125, 0.4);
  EXPECT_NEAR(wce_loss(logits, half, y).value, 0.5 * wce_loss(logits, w, y).value, 1e-15);
}

TEST(Wce, MassTowardKeypointLowersLoss) {
  const Heatmap y = grid2(1, 0, 0, 0);
  double prev = wce_loss(Heatmap(2, 2, 0.0), y, y).value;
  for (double boost : {0.5, 1.0, 2.0, 4.0}) {
    const double cur = wce_loss(grid2(boost, 0, 0, 0), y, y).value;
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(Wce, Errors) {
  EXPECT_THROW(wce_loss(Heatmap(2, 2), Heatmap(2, 3), Heatmap(2, 2)), DomainError);
  EXPECT_THROW(wce_loss(Heatmap(2, 2), Heatmap(2, 2, 1.0), Heatmap(2, 2, 0.5)), DomainError);
  EXPECT_THROW(wce_loss(Heatmap(2, 2), Heatmap(2, 2, 1.5), Heatmap(2, 2, 1.0)), DomainError);
}

TEST(WceScores, MatchesLogitFormOnSoftmax) {
  CounterRng rng(5);
  Heatmap logits(4, 4);
  for (double& v : logits.values()) {
    v = rng.uniform(-2, 2);
  }
  const Heatmap w = hd_heatmap({1, 2}, HDConfig{0.7, 2, DistanceMetric::chessboard}, 4, 4);
  const Heatmap y = multilabel_map({1, 2}, HDConfig{0.7, 2, DistanceMetric::chessboard}, 4, 4);
  Heatmap scores = softmax_heatmap(logits);
  for (double& v : scores.values()) {
    v *= 3.0;  // scale does not matter
  }
  EXPECT_NEAR(wce_loss_scores(scores, w, y).value, wce_loss(logits, w, y).value, 1e-13);
  EXPECT_THROW(wce_loss_scores(Heatmap(4, 4, 0.0), w, y), DomainError);
}

TEST(Mst, WorkedExample) {
  const LossValue v = mst_loss(grid2(0.7, 0.1, 0.1, 0.1), grid2(0.5, 0.3, 0.1, 0.1));
  // mean term (0.04 + 0.04) / 4 plus anchor term 0.2^2
  EXPECT_NEAR(v.value, 0.06, 1e-14);
  ASSERT_TRUE(v.grad_secondary.has_value());
}

TEST(Mst, IdenticalInputsGiveZero) {
  const Heatmap a = grid2(0.2, 0.9, 0.4, 0.4);
  const LossValue v = mst_loss(a, a);
  EXPECT_EQ(v.value, 0.0);
  EXPECT_EQ(v.grad_primary, Heatmap(2, 2, 0.0));
}

TEST(Mst, SwapKeepsMeanTermButMovesAnchor) {
  const Heatmap a = grid2(0.7, 0.1, 0.1, 0.1);
  const Heatmap b = grid2(0.1, 0.1, 0.1, 0.9);
  // mean term identical; anchor (0,0) for a, (1,1) for b
  const double mean_term = (0.36 + 0.64) / 4.0;
  EXPECT_NEAR(mst_loss(a, b).value, mean_term + 0.36, 1e-14);
  EXPECT_NEAR(mst_loss(b, a).value, mean_term + 0.64, 1e-14);
}

TEST(St, Examples) {
  EXPECT_EQ(st_loss(grid2(1, 2, 3, 4), grid2(1, 2, 3, 4)).value, 0.0);
  EXPECT_EQ(st_loss(grid2(1, 2, 3, 4), grid2(1, 2, 3, 4)).grad_primary, Heatmap(2, 2, 0.0));
  EXPECT_NEAR(st_loss(grid2(0, 0, 0, 0), grid2(0.3, 0.4, 0, 0)).value, 0.5, 1e-15);
}

TEST(L2, Examples) {
  EXPECT_EQ(l2_gaussian_loss(grid2(1, 2, 3, 4), grid2(1, 2, 3, 4)).value, 0.0);
  const LossValue v = l2_gaussian_loss(grid2(0.5, 0, 0, 0), Heatmap(2, 2, 0.0));
  EXPECT_DOUBLE_EQ(v.value, 0.0625);
  EXPECT_DOUBLE_EQ(v.grad_primary(0, 0), 2.0 * 0.5 / 4.0);
  EXPECT_THROW(l2_gaussian_loss(Heatmap(2, 2), Heatmap(3, 3)), DomainError);
}

TEST(Losses, PairwiseShapeMismatch) {
  EXPECT_THROW(mst_loss(Heatmap(2, 2), Heatmap(2, 3)), DomainError);
  EXPECT_THROW(st_loss(Heatmap(2, 2), Heatmap(2, 3)), DomainError);
}

TEST(Losses, NonNegativeOnRandomInputs) {
  for (LossId id : {LossId::wce, LossId::mst, LossId::st, LossId::l2}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto in = random_grad_check_inputs(id, 6, seed);
      double v = 0.0;
      switch (id) {
        case LossId::wce: v = wce_loss(in.primary, in.weights, in.labels).value; break;
        case LossId::mst: v = mst_loss(in.primary, in.secondary).value; break;
        case LossId::st: v = st_loss(in.primary, in.secondary).value; break;
        default: v = l2_gaussian_loss(in.primary, in.secondary).value; break;
      }
      EXPECT_GE(v, 0.0);
    }
  }
}

// Examples list rel err < 1e-6 per loss (1e-8 for l2, 1e-5 for the RCC chain).
TEST(GradCheck, PerLossTolerances) {
  const std::pair<LossId, double> cases[] = {{LossId::wce, 1e-6},          {LossId::mst, 1e-6},
                                             {LossId::st, 1e-6},           {LossId::l2, 1e-8},
                                             {LossId::rcc_composite, 1e-5}};
  for (const auto& [id, tol] : cases) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      EXPECT_LT(grad_check(id, random_grad_check_inputs(id, 8, seed), 1e-5), tol) << to_string(id);
    }
  }
}

TEST(GradCheck, HundredSeedsWithinTolerance) {
  for (LossId id : {LossId::wce, LossId::mst, LossId::st, LossId::l2, LossId::rcc_composite}) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      worst = std::max(worst, grad_check(id, random_grad_check_inputs(id, 8, seed), 1e-5));
    }
    EXPECT_LT(worst, 1e-5) << to_string(id);
  }
}

TEST(GradCheck, Errors) {
  const auto in = random_grad_check_inputs(LossId::wce, 4, 0);
  EXPECT_THROW(grad_check("hinge", in, 1e-5), DomainError);
  EXPECT_THROW(grad_check(LossId::wce, in, 1e-2), DomainError);
  EXPECT_THROW(grad_check(LossId::wce, in, 1e-9), DomainError);
  EXPECT_EQ(parse_loss_id("mst"), LossId::mst);
}

TEST(GradCheck, RelativeErrorDenominator) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.1), (1.1 - 1.0) / 1.1);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1e-14, 0.0), 1e-14 / 1e-12);
}

}  // namespace
}  // namespace shr
