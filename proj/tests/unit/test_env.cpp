#include <gtest/gtest.h>

#include "support.hpp"

using namespace macsim;

namespace {

State run_random(std::shared_ptr<const ProblemInstance> inst, Rng& rng, std::vector<JointAction>* log = nullptr) {
  State s = reset(std::move(inst));
  while (!s.terminal) {
    const EdgeSet e = feasible_edges(s);
    const auto a = sample_joint(random_logits(e, rng), e, rng).action;
    if (log) log->push_back(a);
    s = step(s, a).state;
  }
  return s;
}

}  // namespace

TEST(Reset, FjspSingleJobSingleMachine) {
  const State s = reset(test::share(test::fjsp(1, {{{{0, 5}}}})));
  EXPECT_EQ(s.t, 0);
  const EdgeSet e = feasible_edges(s);
  EXPECT_TRUE(e.has(0, 0));
  EXPECT_TRUE(e.has(0, e.skip_col()));
  EXPECT_EQ(e.weight[e.index(0, 0)], 5.0);
}

TEST(Reset, HcvrpVehicleAtDepotFull) {
  const State s = reset(test::share(test::hcvrp({0, 0}, {{0.3, 0.4}}, {4}, {25}, {1.0})));
  const auto& d = std::get<HcvrpDynamics>(s.dyn);
  EXPECT_EQ(d.position[0], 0);
  EXPECT_EQ(d.residual[0], 25);
}

TEST(Reset, FfspLaterStagesSeeOnlySkip) {
  const State s = reset(test::share(test::ffsp({{{2, 3}, {4, 5}}, {{1}, {2}}})));
  const EdgeSet e = feasible_edges(s);
  for (int m = 0; m < 2; ++m)
    for (int j = 0; j < 2; ++j) EXPECT_TRUE(e.has(m, j));
  EXPECT_FALSE(e.has_real(2));
}

TEST(Edges, FjspEligibility) {
  const State s = reset(test::share(test::fjsp(3, {{{{0, 4}, {2, 6}}}})));
  const EdgeSet e = feasible_edges(s);
  EXPECT_TRUE(e.has(0, 0));
  EXPECT_FALSE(e.has(1, 0));
  EXPECT_TRUE(e.has(2, 0));
  EXPECT_EQ(e.real_edge_count(), 2u);
}

TEST(Edges, HcvrpCapacityRule) {
  const auto inst = test::share(test::hcvrp({0, 0}, {{0.1, 0.1}, {0.2, 0.2}}, {5, 9}, {14}, {1.0}));
  State s = reset(inst);
  s = step(s, {{0, 0}}).state;  // residual 14 - 5 = 9, customer 1 still fits
  EXPECT_TRUE(feasible_edges(s).has(0, 1));

  const auto inst2 = test::share(test::hcvrp({0, 0}, {{0.1, 0.1}, {0.2, 0.2}, {0.3, 0.3}}, {9, 9, 3}, {14}, {1.0}));
  State s2 = step(reset(inst2), {{0, 0}}).state;  // residual 5 < 9
  EXPECT_FALSE(feasible_edges(s2).has(0, 1));
  EXPECT_TRUE(feasible_edges(s2).has(0, 2));
}

TEST(Edges, FfspStageTwoWaitsForCompletion) {
  const auto inst = test::share(test::ffsp({{{3}}, {{2}}}));
  State s = reset(inst);
  s = step(s, {{0, 0}, {1, kSkip}}).state;
  // The only next event is the stage-1 completion at time 3.
  EXPECT_EQ(s.now, 3);
  const EdgeSet e = feasible_edges(s);
  EXPECT_TRUE(e.has(1, 0));
  s = step(s, {{1, 0}}).state;
  EXPECT_TRUE(s.terminal);
  EXPECT_EQ(objective(solution(s)), 5.0);
}

TEST(Edges, TerminalStateIsContractError) {
  State s = reset(test::share(test::fjsp(1, {{{{0, 2}}}})));
  s = step(s, {{0, 0}}).state;
  ASSERT_TRUE(s.terminal);
  EXPECT_THROW(feasible_edges(s), ContractError);
}

TEST(Step, SerialChain) {
  State s = reset(test::share(test::fjsp(1, {{{{0, 3}}, {{0, 4}}}})));
  s = step(s, {{0, 0}}).state;
  s = step(s, {{0, 0}}).state;
  ASSERT_TRUE(s.terminal);
  const auto sol = solution(s);
  const auto& sched = std::get<FjspSchedule>(sol.content);
  EXPECT_EQ(sched.ops[0][0].end, 3);
  EXPECT_EQ(sched.ops[0][1].end, 7);
  EXPECT_EQ(objective(sol), 7.0);
}

TEST(Step, ParallelJobs) {
  State s = reset(test::share(test::fjsp(2, {{{{0, 5}, {1, 5}}}, {{{0, 5}, {1, 5}}}})));
  s = step(s, {{0, 0}, {1, 1}}).state;
  ASSERT_TRUE(s.terminal);
  EXPECT_EQ(objective(solution(s)), 5.0);
}

TEST(Step, HcvrpRoundTrip) {
  State s = reset(test::share(test::hcvrp({0, 0}, {{0.3, 0.4}}, {3}, {20}, {1.0})));
  s = step(s, {{0, 0}}).state;
  ASSERT_TRUE(s.terminal);
  EXPECT_NEAR(objective(solution(s)), 1.0, 1e-12);
}

TEST(Step, HcvrpEmptyVehicleCostsZero) {
  State s = reset(test::share(test::hcvrp({0, 0}, {{0.3, 0.4}}, {3}, {20, 20}, {1.0, 0.5})));
  s = step(s, {{0, 0}, {1, kSkip}}).state;
  ASSERT_TRUE(s.terminal);
  const auto sol = solution(s);
  EXPECT_NEAR(objective(sol), 1.0, 1e-12);
  EXPECT_NEAR(route_cost(std::get<HcvrpInstance>(*sol.instance), 1, std::get<HcvrpRoutes>(sol.content).routes[1]), 0.0,
              1e-12);
}

TEST(Step, Errors) {
  const auto inst = test::share(test::fjsp(2, {{{{0, 5}}}, {{{1, 5}}}}));
  const State s = reset(inst);
  EXPECT_THROW(step(s, {{0, 1}, {1, kSkip}}), InfeasibleActionError);
  EXPECT_THROW(step(s, {{0, kSkip}, {1, kSkip}}), SkipRuleError);
  EXPECT_THROW(step(s, {{0, 0}}), InfeasibleActionError);  // agent 1 missing
}

TEST(Step, SkipOnlyChangesCounterAndEpoch) {
  const auto inst = test::share(test::fjsp(2, {{{{0, 5}}}, {{{0, 2}, {1, 9}}}}));
  const State s = reset(inst);
  const State a = step(s, {{0, 0}, {1, kSkip}}).state;
  EXPECT_EQ(a.skip_count, 1);
  const auto& d = std::get<FjspDynamics>(a.dyn);
  EXPECT_EQ(d.schedule[1][0].machine, -1);
}

TEST(Step, OrderInvarianceAllProblems) {
  Rng rng(5);
  for (auto k : {ProblemKind::fjsp, ProblemKind::ffsp, ProblemKind::hcvrp})
    for (std::uint64_t i = 0; i < 20; ++i) {
      State s = reset(test::share(generate(test::gen(k, 6, 3, i))));
      while (!s.terminal) {
        const EdgeSet e = feasible_edges(s);
        const auto a = sample_joint(random_logits(e, rng), e, rng).action;
        JointAction rev(a.rbegin(), a.rend());
        const State x = step(s, a).state;
        ASSERT_EQ(x, step(s, rev).state);
        ASSERT_TRUE(order_invariant(s, a, rng));
        s = x;
      }
    }
}

TEST(Validate, RandomRolloutsAreClean) {
  Rng rng(9);
  for (auto k : {ProblemKind::fjsp, ProblemKind::ffsp, ProblemKind::hcvrp})
    for (std::uint64_t i = 0; i < 30; ++i) {
      const auto inst = test::share(generate(test::gen(k, 7, 3, i)));
      std::vector<JointAction> log;
      const State s = run_random(inst, rng, &log);
      const auto sol = solution(s);
      const auto v = validate(*inst, sol);
      EXPECT_TRUE(v.empty()) << (v.empty() ? "" : v.front());
      EXPECT_EQ(replay(inst, log), s);
      if (k == ProblemKind::fjsp) {
        const auto cp = fjsp_critical_path(std::get<FjspInstance>(*inst), std::get<FjspSchedule>(sol.content));
        EXPECT_EQ(static_cast<double>(cp), objective(sol));
      }
    }
}

TEST(Validate, OverlapDetected) {
  const auto x = test::fjsp(1, {{{{0, 4}}}, {{{0, 4}}}});
  Solution sol;
  sol.instance = test::share(x);
  sol.content = FjspSchedule{{{{0, 0, 4}}, {{0, 2, 6}}}};
  const auto v = validate(*sol.instance, sol);
  ASSERT_FALSE(v.empty());
  bool overlap = false;
  for (const auto& s : v) overlap = overlap || s.find("overlap") != std::string::npos;
  EXPECT_TRUE(overlap);
}

TEST(Validate, CapacityDetected) {
  const auto x = test::hcvrp({0, 0}, {{0.1, 0}, {0.2, 0}}, {8, 8}, {10}, {1.0});
  Solution sol;
  sol.instance = test::share(x);
  sol.content = HcvrpRoutes{{{0, 1, 2, 0}}};
  const auto v = validate(*sol.instance, sol);
  ASSERT_FALSE(v.empty());
  bool cap = false;
  for (const auto& s : v) cap = cap || s.find("capacity") != std::string::npos;
  EXPECT_TRUE(cap);
}

TEST(Objective, FfspSerialStages) {
  State s = reset(test::share(test::ffsp({{{2}}, {{5}}})));
  while (!s.terminal) {
    const EdgeSet e = feasible_edges(s);
    JointAction a;
    for (int m : e.active_agents()) a.push_back({m, e.has(m, 0) ? 0 : kSkip});
    s = step(s, a).state;
  }
  EXPECT_EQ(objective(solution(s)), 7.0);
}

TEST(Objective, IncompleteSolutionIsError) {
  const State s = reset(test::share(test::fjsp(1, {{{{0, 3}}}})));
  EXPECT_THROW(objective(solution(s)), ContractError);
}

TEST(Trajectory, RewardIsNegativeObjective) {
  Trajectory t;
  t.objective = 12.5;
  EXPECT_EQ(reward(t), -12.5);
}
