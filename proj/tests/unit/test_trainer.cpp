#include <gtest/gtest.h>

#include <filesystem>

#include "support.hpp"

using namespace macsim;

namespace {

TrainConfig tiny(ProblemKind k = ProblemKind::fjsp) {
  TrainConfig c;
  c.problem = test::gen(k, 3, 2);
  c.problem.num_stages = 2;
  c.model.problem = k;
  c.model.d = 8;
  c.model.heads = 2;
  c.model.layers = 1;
  c.model.ffn_hidden = 16;
  c.model.mix_hidden = 4;
  c.epochs = 3;
  c.instances_per_epoch = 4;
  c.beta = 4;
  c.batch_size = 8;
  c.val_size = 4;
  c.seed = 5;
  return c;
}

Trajectory traj(double obj, int skips) {
  Trajectory t;
  t.objective = obj;
  t.skip_count = skips;
  return t;
}

std::vector<std::shared_ptr<const ProblemInstance>> instances(int n) {
  return make_instances(test::gen(ProblemKind::fjsp, 4, 3), 11, n);
}

}  // namespace

TEST(Schedule, CosineEndpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(1e-3, 1e-5, 0, 30), 1e-3);
  EXPECT_NEAR(cosine_lr(1e-3, 1e-5, 29, 30), 1e-5, 1e-18);
  EXPECT_NEAR(cosine_lr(1.0, 0.0, 1, 3), 0.5, 1e-15);
  EXPECT_DOUBLE_EQ(cosine_lr(0.1, 0.0, 0, 1), 0.1);
}

TEST(Expert, SelectionUsesPenalizedObjective) {
  const std::vector<Trajectory> r{traj(10, 5), traj(11, 0), traj(10, 5)};
  EXPECT_EQ(select_expert(r, 0.0), 0u);
  EXPECT_EQ(select_expert(r, 0.5), 1u);
  EXPECT_EQ(select_expert({traj(10, 2), traj(9, 4)}, 0.5), 0u);  // 10 + 1 vs 9 + 2: tie, fewer skips wins
  EXPECT_EQ(select_expert({traj(10, 4), traj(11, 2)}, 0.5), 1u);
  EXPECT_THROW(select_expert({}, 0.0), ContractError);
}

TEST(Expert, GenerationIsBestOfBetaAndThreadIndependent) {
  PolicyConfig pc;
  pc.d = 8;
  pc.heads = 2;
  const auto p = init_policy(pc, 1);
  const auto inst = instances(6);
  const auto a = generate_experts(p, inst, 8, 0.0, Rng(3), 1, 1);
  const auto b = generate_experts(p, inst, 8, 0.0, Rng(3), 1, 4);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].action, b.records[i].action);
    EXPECT_EQ(a.records[i].features, b.records[i].features);
  }
  std::size_t steps = 0;
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto& e = a.experts[i];
    steps += e.actions.size();
    EXPECT_EQ(replay(inst[i], e.actions).terminal, true);
    for (int k = 0; k < 8; ++k) {
      Rng r = Rng(3).fork(i).fork(static_cast<std::uint64_t>(k));
      EXPECT_LE(e.objective, policy_rollout(p, inst[i], DecodeMode::sample, r).trajectory.objective);
    }
  }
  EXPECT_EQ(steps, a.records.size());
  EXPECT_GE(a.mean_objective, 0.0);
}

TEST(Optimizer, TrainingFitsAFixedDataset) {
  PolicyConfig pc;
  pc.d = 16;
  pc.heads = 2;
  pc.dropout = 0.0;
  auto p = init_policy(pc, 2);
  const auto ds = generate_experts(p, instances(4), 4, 0.0, Rng(4));
  Adam opt(p);
  Rng rng(5);
  const double first = train_epoch(p, opt, ds.records, LossKind::ce, 8, 3e-3, 1.0, rng).mean_loss;
  double last = first;
  for (int e = 0; e < 30; ++e) last = train_epoch(p, opt, ds.records, LossKind::ce, 8, 3e-3, 1.0, rng).mean_loss;
  EXPECT_LT(last, 0.5 * first);
  EXPECT_THROW(train_epoch(p, opt, {}, LossKind::ce, 8, 1e-3, 1.0, rng), ContractError);
}

TEST(Promotion, StrictImprovementOnly) {
  const auto p = init_policy(PolicyConfig{}, 1);
  Incumbent inc;
  EXPECT_TRUE(promote_if_better(inc, p, 10.0, 0));
  EXPECT_FALSE(promote_if_better(inc, p, 10.0, 1));
  EXPECT_FALSE(promote_if_better(inc, p, 11.0, 2));
  EXPECT_TRUE(promote_if_better(inc, p, 9.5, 3));
  EXPECT_EQ(inc.epoch, 3);
  EXPECT_EQ(inc.score, 9.5);
}

TEST(ParallelFor, RethrowsWorkerFailure) {
  EXPECT_THROW(parallel_for(100, 4, [](std::size_t i) {
                 if (i == 37) throw NumericError("boom");
               }),
               NumericError);
  std::vector<int> hit(50, 0);
  parallel_for(50, 3, [&](std::size_t i) { hit[i] = 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
}

TEST(Run, ReportShapeAndPenaltyDecay) {
  const auto rep = run(tiny());
  ASSERT_EQ(rep.rows.size(), 4u);
  EXPECT_FALSE(rep.rows[0].promoted);
  EXPECT_TRUE(rep.rows[1].promoted);
  for (std::size_t i = 1; i < rep.rows.size(); ++i) {
    EXPECT_EQ(rep.rows[i].epoch, static_cast<int>(i));
    EXPECT_LT(rep.rows[i].lambda, rep.rows[i - 1].lambda + 1e-15);
    EXPECT_GE(rep.rows[i].wall_time_s, rep.rows[i - 1].wall_time_s);
  }
  EXPECT_NEAR(penalty(rep.schedule, 2), 0.01 * rep.schedule.lambda0, 1e-12);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < rep.rows.size(); ++i)
    if (rep.rows[i].promoted) best = std::min(best, rep.rows[i].val_objective);
  EXPECT_EQ(rep.incumbent.score, best);
}

TEST(Run, DeterministicAcrossThreadCounts) {
  auto c = tiny(ProblemKind::ffsp);
  const auto a = run(c);
  c.threads = 3;
  const auto b = run(c);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].val_objective, b.rows[i].val_objective);
    EXPECT_EQ(a.rows[i].loss, b.rows[i].loss);
    EXPECT_EQ(a.rows[i].mean_skips, b.rows[i].mean_skips);
  }
}

TEST(Run, PenaltyOffAndOverrides) {
  auto c = tiny(ProblemKind::hcvrp);
  c.epochs = 1;
  c.penalty = false;
  for (const auto& r : run(c).rows) EXPECT_EQ(r.lambda, 0.0);
  c.penalty = true;
  c.lambda0 = 2.0;
  c.gamma = 0.5;
  const auto rep = run(c);
  EXPECT_EQ(rep.rows[0].lambda, 2.0);
  EXPECT_EQ(rep.schedule.gamma, 0.5);
}

TEST(Run, WritesCheckpoints) {
  const auto dir = std::filesystem::temp_directory_path() / "macsim_trainer_ckpt";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  auto c = tiny();
  c.epochs = 1;
  c.checkpoint_dir = dir.string();
  int rows = 0;
  const auto rep = run(c, [&](const EpochRow&) { ++rows; });
  EXPECT_EQ(rows, 2);
  ASSERT_TRUE(std::filesystem::exists(dir / "best.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "epoch_1.ckpt"));
  const auto loaded = load_checkpoint((dir / "best.ckpt").string());
  const auto f = featurize(reset(test::share(generate(c.problem))));
  EXPECT_EQ(forward(loaded, f), forward(rep.incumbent.params, f));
  std::filesystem::remove_all(dir);
}

TEST(Run, InvalidConfigRejected) {
  auto c = tiny();
  c.model.problem = ProblemKind::hcvrp;
  EXPECT_THROW(run(c), ConfigError);
  c = tiny();
  c.gamma = 1.0;
  EXPECT_THROW(validate(c), ConfigError);
  c = tiny();
  c.lr_min = 1.0;
  EXPECT_THROW(validate(c), ConfigError);
}
