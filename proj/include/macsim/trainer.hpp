#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <numeric>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "macsim/env.hpp"
#include "macsim/error.hpp"
#include "macsim/instances.hpp"
#include "macsim/losses.hpp"
#include "macsim/policy.hpp"
#include "macsim/rng.hpp"
#include "macsim/rollout.hpp"
#include "macsim/sampler.hpp"

namespace macsim {

struct TrainConfig {
  GenConfig problem;  // instance distribution; its seed field is ignored
  PolicyConfig model;
  int epochs = 30;
  int instances_per_epoch = 200;
  int beta = 32;
  int batch_size = 64;
  double lr = 1e-3;
  double lr_min = 1e-5;
  double grad_clip = 1.0;
  LossKind loss = LossKind::ce;
  bool penalty = true;             // false: lambda is 0 throughout
  std::optional<double> lambda0;   // default 0.1 x mean edge weight
  std::optional<double> gamma;     // default: lambda reaches 1% of lambda0 at the last epoch
  int val_size = 64;
  DecodeMode gen_decode = DecodeMode::sample;
  DecodeMode val_decode = DecodeMode::greedy;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string checkpoint_dir;  // empty: no checkpoint files
};

inline void validate(const TrainConfig& c) {
  validate(c.problem);
  validate(c.model);
  if (c.model.problem != c.problem.problem) throw ConfigError("model and instance problem kinds differ");
  if (c.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (c.instances_per_epoch < 1) throw ConfigError("instances_per_epoch must be >= 1");
  if (c.beta < 1) throw ConfigError("beta must be >= 1");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(c.lr > 0.0) || !(c.lr_min >= 0.0) || c.lr_min > c.lr) throw ConfigError("need 0 <= lr_min <= lr and lr > 0");
  if (!(c.grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  if (c.val_size < 1) throw ConfigError("val_size must be >= 1");
  if (c.threads < 1) throw ConfigError("threads must be >= 1");
  if (c.lambda0 && !(*c.lambda0 >= 0.0)) throw ConfigError("lambda0 must be >= 0");
  if (c.gamma && !(*c.gamma > 0.0 && *c.gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
}

/// Cosine annealing from lr at epoch 0 to lr_min at the last epoch.
inline double cosine_lr(double lr_max, double lr_min, int epoch, int epochs) {
  if (epochs <= 1) return lr_max;
  const double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

// Runs fn(i) for i in [0, n) on `threads` workers; rethrows the first failure.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Expert generation.

struct ExpertRecord {
  StateFeatures features;
  JointAction action;
  int instance_id = 0;
  int epoch = 0;
};

struct ReplayDataset {
  std::vector<ExpertRecord> records;
  std::vector<Trajectory> experts;  // one per instance, indexed by instance_id
  double mean_skips = 0.0;          // over every sampled rollout
  double mean_objective = 0.0;      // over every sampled rollout
};

/// Index of the best rollout by objective + lambda * skips; ties go to fewer
/// skips, then the earlier index.
inline std::size_t select_expert(const std::vector<Trajectory>& rollouts, double lambda) {
  if (rollouts.empty()) throw ContractError("select_expert needs at least one rollout");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rollouts.size(); ++i) {
    const double a = penalized_objective(rollouts[i].objective, rollouts[i].skip_count, lambda);
    const double b = penalized_objective(rollouts[best].objective, rollouts[best].skip_count, lambda);
    if (a < b || (a == b && rollouts[i].skip_count < rollouts[best].skip_count)) best = i;
  }
  return best;
}

// Re-simulates an expert trajectory and stores one record per step.
inline void append_records(const Trajectory& expert, int instance_id, int epoch, std::vector<ExpertRecord>& out) {
  State s = reset(expert.instance);
  for (const auto& a : expert.actions) {
    out.push_back({featurize(s), a, instance_id, epoch});
    s = step(s, a).state;
  }
}

inline ReplayDataset generate_experts(const PolicyParams& incumbent,
                                      const std::vector<std::shared_ptr<const ProblemInstance>>& instances, int beta,
                                      double lambda, const Rng& rng, int epoch = 0, int threads = 1,
                                      DecodeMode mode = DecodeMode::sample) {
  if (beta < 1) throw ConfigError("beta must be >= 1");
  const std::size_t n = instances.size();
  std::vector<Trajectory> experts(n);
  std::vector<double> skip_sum(n, 0.0), obj_sum(n, 0.0);
  parallel_for(n, threads, [&](std::size_t i) {
    const Rng inst_rng = rng.fork(i);
    std::vector<Trajectory> rollouts;
    rollouts.reserve(static_cast<std::size_t>(beta));
    for (int b = 0; b < beta; ++b) {
      Rng r = inst_rng.fork(static_cast<std::uint64_t>(b));
      try {
        rollouts.push_back(policy_rollout(incumbent, instances[i], mode, r).trajectory);
      } catch (const InfeasibleActionError& e) {
        throw InfeasibleActionError("instance " + std::to_string(i) + ": " + e.what());
      }
      skip_sum[i] += rollouts.back().skip_count;
      obj_sum[i] += rollouts.back().objective;
    }
    experts[i] = rollouts[select_expert(rollouts, lambda)];
  });
  ReplayDataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    append_records(experts[i], static_cast<int>(i), epoch, ds.records);
    ds.mean_skips += skip_sum[i];
    ds.mean_objective += obj_sum[i];
  }
  const double total = static_cast<double>(n) * beta;
  ds.mean_skips /= total;
  ds.mean_objective /= total;
  ds.experts = std::move(experts);
  return ds;
}

// ---------------------------------------------------------------------------
// Optimization.

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long t = 0;
  PolicyParams m, v;

  explicit Adam(const PolicyParams& like) : m(like.zeros_like()), v(like.zeros_like()) {}

  void step(PolicyParams& params, PolicyParams& grads, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    std::vector<Tensor*> P, G, Mm, Vv;
    params.for_each([&](const std::string&, Tensor& x) { P.push_back(&x); });
    grads.for_each([&](const std::string&, Tensor& x) { G.push_back(&x); });
    m.for_each([&](const std::string&, Tensor& x) { Mm.push_back(&x); });
    v.for_each([&](const std::string&, Tensor& x) { Vv.push_back(&x); });
    for (std::size_t k = 0; k < P.size(); ++k)
      for (std::size_t i = 0; i < P[k]->size(); ++i) {
        const double g = G[k]->data[i];
        double& mi = Mm[k]->data[i];
        double& vi = Vv[k]->data[i];
        mi = beta1 * mi + (1.0 - beta1) * g;
        vi = beta2 * vi + (1.0 - beta2) * g * g;
        P[k]->data[i] -= lr * (mi / c1) / (std::sqrt(vi / c2) + eps);
      }
  }
};

inline void add_into(PolicyParams& acc, PolicyParams& g, double w = 1.0) {
  std::vector<Tensor*> G;
  g.for_each([&](const std::string&, Tensor& x) { G.push_back(&x); });
  std::size_t k = 0;
  acc.for_each([&](const std::string&, Tensor& x) {
    for (std::size_t i = 0; i < x.size(); ++i) x.data[i] += w * G[k]->data[i];
    ++k;
  });
}

inline double global_norm(const PolicyParams& p) {
  double s = 0.0;
  p.visit([&](const std::string&, const Tensor& t) {
    for (double x : t.data) s += x * x;
  });
  return std::sqrt(s);
}

struct EpochMetrics {
  double mean_loss = 0.0;
  double grad_norm = 0.0;  // mean pre-clip norm over steps
  int steps = 0;
};

/// One pass over `dataset` in shuffled mini-batches; the batch loss is the
/// mean over its records.
inline EpochMetrics train_epoch(PolicyParams& params, Adam& opt, const std::vector<ExpertRecord>& dataset,
                                LossKind loss, int batch_size, double lr, double grad_clip, Rng& rng) {
  if (dataset.empty()) throw ContractError("train_epoch needs a nonempty dataset");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  EpochMetrics m;
  double loss_sum = 0.0;
  for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(batch_size));
    PolicyParams acc = params.zeros_like();
    const double w = 1.0 / static_cast<double>(e - b);
    for (std::size_t i = b; i < e; ++i) {
      const ExpertRecord& rec = dataset[order[i]];
      Rng drop = rng.split();
      ForwardOptions fo{true, &drop};
      GradResult gr;
      try {
        gr = grad(params, rec.features, [&](const LogitMatrix& L) { return compute_loss(loss, {L, rec.features.edges, rec.action}); }, fo);
      } catch (const NumericError& err) {
        throw NumericError(std::string(err.what()) + " (instance " + std::to_string(rec.instance_id) + ", epoch " +
                           std::to_string(rec.epoch) + ", record " + std::to_string(order[i]) + ")");
      }
      loss_sum += gr.value;
      add_into(acc, gr.grads, w);
    }
    const double norm = global_norm(acc);
    if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm in training step " + std::to_string(m.steps));
    if (norm > grad_clip) {
      PolicyParams zero = acc.zeros_like();
      add_into(zero, acc, grad_clip / norm);
      acc = std::move(zero);
    }
    opt.step(params, acc, lr);
    m.grad_norm += norm;
    ++m.steps;
  }
  m.mean_loss = loss_sum / static_cast<double>(dataset.size());
  m.grad_norm /= m.steps;
  return m;
}

// ---------------------------------------------------------------------------
// Validation and promotion.

struct ValidationResult {
  double mean_objective = 0.0;
  double mean_skips = 0.0;
};

inline ValidationResult evaluate(const PolicyParams& params,
                                 const std::vector<std::shared_ptr<const ProblemInstance>>& instances, DecodeMode mode,
                                 const Rng& rng, int threads = 1) {
  std::vector<double> obj(instances.size()), skips(instances.size());
  parallel_for(instances.size(), threads, [&](std::size_t i) {
    Rng r = rng.fork(i);
    const auto st = policy_rollout(params, instances[i], mode, r);
    obj[i] = st.trajectory.objective;
    skips[i] = st.trajectory.skip_count;
  });
  ValidationResult v;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    v.mean_objective += obj[i];
    v.mean_skips += skips[i];
  }
  v.mean_objective /= static_cast<double>(instances.size());
  v.mean_skips /= static_cast<double>(instances.size());
  return v;
}

struct Incumbent {
  PolicyParams params;
  double score = std::numeric_limits<double>::infinity();
  int epoch = -1;  // -1 until the first promotion
};

/// Promotes the candidate iff no incumbent exists yet or its score is strictly lower.
inline bool promote_if_better(Incumbent& inc, const PolicyParams& candidate, double score, int epoch) {
  if (inc.epoch >= 0 && !(score < inc.score)) return false;
  inc.params = candidate;
  inc.score = score;
  inc.epoch = epoch;
  return true;
}

inline bool validate_and_promote(Incumbent& inc, const PolicyParams& candidate,
                                 const std::vector<std::shared_ptr<const ProblemInstance>>& val_set, int epoch,
                                 int threads = 1) {
  const auto v = evaluate(candidate, val_set, DecodeMode::greedy, Rng(0), threads);
  return promote_if_better(inc, candidate, v.mean_objective, epoch);
}

// ---------------------------------------------------------------------------
// Full loop.

struct EpochRow {
  int epoch = 0;
  double val_objective = 0.0;
  double mean_skips = 0.0;
  double val_skips = 0.0;
  double lambda = 0.0;
  double loss = 0.0;
  bool promoted = false;
  double wall_time_s = 0.0;
};

inline constexpr const char* kTrainCsvHeader = "epoch,val_objective,mean_skips,val_skips,lambda,loss,promoted,wall_time_s";

inline void write_csv_row(std::ostream& out, const EpochRow& r) {
  out << r.epoch << ',' << r.val_objective << ',' << r.mean_skips << ',' << r.val_skips << ',' << r.lambda << ','
      << r.loss << ',' << (r.promoted ? 1 : 0) << ',' << r.wall_time_s << '\n';
}

struct TrainReport {
  std::vector<EpochRow> rows;
  Incumbent incumbent;
  PenaltySchedule schedule;
};

// Mean real-edge weight over the reset states of `instances`.
inline double mean_edge_weight(const std::vector<std::shared_ptr<const ProblemInstance>>& instances) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& inst : instances) {
    const EdgeSet e = feasible_edges(reset(inst));
    for (int m = 0; m < e.num_agents; ++m)
      for (int c = 0; c < e.num_tasks; ++c)
        if (e.has(m, c)) {
          sum += e.weight[e.index(m, c)];
          ++n;
        }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

inline std::vector<std::shared_ptr<const ProblemInstance>> make_instances(const GenConfig& g, std::uint64_t base,
                                                                          int count) {
  std::vector<std::shared_ptr<const ProblemInstance>> out;
  for (int i = 0; i < count; ++i)
    out.push_back(std::make_shared<const ProblemInstance>(generate(g, base, static_cast<std::uint64_t>(i))));
  return out;
}

using RowCallback = std::function<void(const EpochRow&)>;

/// Alternates expert generation with the incumbent, imitation on a working
/// copy, and greedy validation with strict-improvement promotion.
inline TrainReport run(const TrainConfig& cfg, const RowCallback& on_row = {}) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  const Rng root(cfg.seed);
  const auto val_set = make_instances(cfg.problem, root.fork(1).seed(), cfg.val_size);

  TrainReport rep;
  if (cfg.penalty) {
    rep.schedule = default_penalty(mean_edge_weight(val_set), cfg.epochs);
    if (cfg.lambda0) rep.schedule.lambda0 = *cfg.lambda0;
    if (cfg.gamma) rep.schedule.gamma = *cfg.gamma;
  } else {
    rep.schedule = {0.0, cfg.gamma.value_or(0.5)};
  }

  PolicyParams working = init_policy(cfg.model, root.fork(2).seed());
  rep.incumbent.params = working;
  Adam opt(working);
  Rng train_rng = root.fork(3);

  const auto emit = [&](const EpochRow& r) {
    rep.rows.push_back(r);
    if (on_row) on_row(r);
  };

  {
    const auto v = evaluate(working, val_set, cfg.val_decode, root.fork(4), cfg.threads);
    const auto s = evaluate(working, val_set, cfg.gen_decode, root.fork(5), cfg.threads);
    emit({0, v.mean_objective, s.mean_skips, v.mean_skips, penalty(rep.schedule, 0), 0.0, false, elapsed()});
  }

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lambda = penalty(rep.schedule, epoch - 1);
    const auto instances =
        make_instances(cfg.problem, root.fork(100 + static_cast<std::uint64_t>(epoch)).seed(), cfg.instances_per_epoch);
    const ReplayDataset ds = generate_experts(rep.incumbent.params, instances, cfg.beta, lambda,
                                              root.fork(10'000 + static_cast<std::uint64_t>(epoch)), epoch,
                                              cfg.threads, cfg.gen_decode);
    const double lr = cosine_lr(cfg.lr, cfg.lr_min, epoch - 1, cfg.epochs);
    const EpochMetrics em = train_epoch(working, opt, ds.records, cfg.loss, cfg.batch_size, lr, cfg.grad_clip, train_rng);
    const auto v = evaluate(working, val_set, cfg.val_decode, root.fork(4), cfg.threads);
    const bool promoted = promote_if_better(rep.incumbent, working, v.mean_objective, epoch);
    if (promoted && !cfg.checkpoint_dir.empty()) {
      save_checkpoint(cfg.checkpoint_dir + "/epoch_" + std::to_string(epoch) + ".ckpt", working);
      save_checkpoint(cfg.checkpoint_dir + "/best.ckpt", working);
    }
    emit({epoch, v.mean_objective, ds.mean_skips, v.mean_skips, lambda, em.mean_loss, promoted, elapsed()});
  }
  if (!cfg.checkpoint_dir.empty()) save_checkpoint(cfg.checkpoint_dir + "/best.ckpt", rep.incumbent.params);
  return rep;
}

}  // namespace macsim
