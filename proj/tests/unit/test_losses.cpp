#include <gtest/gtest.h>

#include "support.hpp"

using namespace macsim;

namespace {

ExpertStep zero_step(int M, int N, JointAction a) {
  const EdgeSet e = test::real_only(M, N);
  return {apply_mask(LogitMatrix(M, N + 1), e), e, std::move(a)};
}

}  // namespace

TEST(LossSA, SinglePairIsZero) {
  EXPECT_EQ(loss_sa(zero_step(1, 1, {{0, 0}})).value, 0.0);
}

TEST(LossSA, UniformFourPairs) {
  EdgeSet e(1, 4);
  for (int c = 0; c < 4; ++c) e.set(0, c, 1.0);
  const ExpertStep s{apply_mask(LogitMatrix(1, 5), e), e, {{0, 2}}};
  EXPECT_NEAR(loss_sa(s).value, std::log(4.0), 1e-15);
}

TEST(LossML, TwoByTwoZeroLogits) {
  EXPECT_NEAR(loss_ml(zero_step(2, 2, {{0, 0}, {1, 1}})).value, std::log(4.0), 1e-15);
}

TEST(LossML, ForcedChainIsZero) {
  EdgeSet e(2, 2);
  e.set(0, 0, 1.0);
  e.set(1, 1, 1.0);
  Rng rng(1);
  const ExpertStep s{random_logits(e, rng), e, {{0, 0}, {1, 1}}};
  // First step has two pairs, so only a chain of singletons is free of loss.
  EdgeSet f(1, 1);
  f.set(0, 0, 1.0);
  EXPECT_EQ(loss_ml({random_logits(f, rng), f, {{0, 0}}}).value, 0.0);
  EXPECT_GT(loss_ml(s).value, 0.0);
}

TEST(LossML, EqualsNegativeSamplerLogProb) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const EdgeSet e = random_edges(3, 4, rng);
    const LogitMatrix L = random_logits(e, rng);
    const auto a = sample_joint(L, e, rng);
    EXPECT_NEAR(loss_ml({L, e, a.action}).value, -a.log_prob, 1e-12);
  }
}

TEST(LossPL, TwoByTwoZeroLogits) {
  EXPECT_NEAR(loss_pl(zero_step(2, 2, {{0, 0}, {1, 1}})).value, std::log(2.0), 1e-15);
}

TEST(LossPL, OrderSensitive) {
  Rng rng(3);
  int differ = 0;
  for (int i = 0; i < 100; ++i) {
    const EdgeSet e = full_edges(3, 3);
    const LogitMatrix L = random_logits(e, rng);
    JointAction a{{0, 0}, {1, 1}, {2, 2}};
    JointAction r(a.rbegin(), a.rend());
    differ += loss_pl({L, e, a}).value != loss_pl({L, e, r}).value ? 1 : 0;
  }
  EXPECT_GE(differ, 95);
}

TEST(LossCE, ClosedFormTwoByTwo) {
  const EdgeSet e = test::real_only(2, 2);
  const ExpertStep s{apply_mask(test::logits({{1, 0, 0}, {0, 1, 0}}), e), e, {{0, 0}, {1, 1}}};
  EXPECT_NEAR(loss_ce(s).value, 2.0 * std::log1p(std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(loss_ce(s).value, 0.6265, 1e-4);
}

TEST(LossCE, ZeroLogitsWithSkipColumn) {
  const EdgeSet e = full_edges(2, 2);
  const ExpertStep s{LogitMatrix(2, 3), e, {{0, 0}, {1, kSkip}}};
  EXPECT_NEAR(loss_ce(s).value, 2.0 * std::log(3.0), 1e-15);
}

TEST(LossCE, PermutationInvariantExactly) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const EdgeSet e = random_edges(4, 4, rng);
    const LogitMatrix L = random_logits(e, rng);
    JointAction a = sample_joint(L, e, rng).action;
    const LossResult ref = loss_ce({L, e, a});
    std::sort(a.begin(), a.end(), [](auto& x, auto& y) { return x.agent < y.agent; });
    do {
      const LossResult r = loss_ce({L, e, a});
      ASSERT_EQ(r.value, ref.value);
      ASSERT_EQ(r.grad, ref.grad);
    } while (std::next_permutation(a.begin(), a.end(), [](auto& x, auto& y) { return x.agent < y.agent; }));
  }
}

TEST(LossCE, GradientTouchesOnlyAssignedRows) {
  const EdgeSet e = full_edges(3, 2);
  Rng rng(5);
  const ExpertStep s{random_logits(e, rng), e, {{1, 0}}};
  const auto r = loss_ce(s);
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(r.grad(0, c), 0.0);
    EXPECT_EQ(r.grad(2, c), 0.0);
  }
}

TEST(ForcedChoice, CeZeroSaPositive) {
  EdgeSet e(2, 3);
  e.set(0, 1, 1.0);  // agent 0 can only take task 1
  for (int c = 0; c <= 3; ++c) e.set(1, c, 1.0);
  const ExpertStep only0{apply_mask(LogitMatrix(2, 4), e), e, {{0, 1}}};
  EXPECT_EQ(loss_ce(only0).value, 0.0);
  EXPECT_GT(loss_sa(only0).value, 0.0);
}

TEST(Gradients, AllLossesMatchFiniteDifferences) {
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const int M = static_cast<int>(rng.uniform_int(1, 4));
    const int N = static_cast<int>(rng.uniform_int(1, 4));
    const EdgeSet e = random_edges(M, N, rng);
    const ExpertStep s{random_logits(e, rng), e, sample_joint(random_logits(e, rng), e, rng).action};
    for (auto k : {LossKind::sa, LossKind::ml, LossKind::pl, LossKind::ce}) EXPECT_LE(loss_fd_error(k, s), 1e-8);
  }
}

TEST(Gradients, ZeroOnMaskedEntries) {
  Rng rng(7);
  const EdgeSet e = random_edges(3, 3, rng, 0.5);
  const ExpertStep s{random_logits(e, rng), e, sample_joint(random_logits(e, rng), e, rng).action};
  for (auto k : {LossKind::sa, LossKind::ml, LossKind::pl, LossKind::ce}) {
    const auto r = compute_loss(k, s);
    for (int m = 0; m < 3; ++m)
      for (int c = 0; c < 4; ++c)
        if (!e.has(m, c)) {
          EXPECT_EQ(r.grad(m, c), 0.0);
        }
  }
}

TEST(Losses, InfeasibleExpertRejected) {
  const EdgeSet e = test::real_only(2, 2);
  const ExpertStep s{apply_mask(LogitMatrix(2, 3), e), e, {{0, 0}, {1, 0}}};
  EXPECT_THROW(loss_ml(s), InfeasibleActionError);
  EXPECT_THROW(loss_pl(s), InfeasibleActionError);
  const ExpertStep t{apply_mask(LogitMatrix(2, 3), e), e, {{0, kSkip}}};
  EXPECT_THROW(loss_ce(t), InfeasibleActionError);
}

TEST(LossKind, Parse) {
  EXPECT_EQ(parse_loss_kind("ce"), LossKind::ce);
  EXPECT_EQ(to_string(LossKind::pl), "pl");
  EXPECT_THROW(parse_loss_kind("xent"), ConfigError);
}

TEST(Penalty, Schedule) {
  const PenaltySchedule p{0.1, 0.9};
  EXPECT_DOUBLE_EQ(penalty(p, 0), 0.1);
  double prev = penalty(p, 0);
  for (int e = 1; e < 200; ++e) {
    const double cur = penalty(p, e);
    EXPECT_LT(cur, prev);
    EXPECT_GT(cur, 0.0);
    prev = cur;
  }
  EXPECT_EQ(penalized_objective(42.0, 0, 1e6), 42.0);
  EXPECT_DOUBLE_EQ(penalized_objective(42.0, 3, 0.5), 43.5);
  EXPECT_THROW(validate(PenaltySchedule{0.1, 1.0}), ConfigError);
  EXPECT_THROW(validate(PenaltySchedule{-1.0, 0.5}), ConfigError);
}

TEST(Penalty, DefaultReachesOnePercent) {
  const auto p = default_penalty(8.0, 30);
  EXPECT_DOUBLE_EQ(p.lambda0, 0.8);
  EXPECT_NEAR(penalty(p, 29), 0.008, 1e-12);
}
