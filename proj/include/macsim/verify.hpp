#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "macsim/baselines.hpp"
#include "macsim/env.hpp"
#include "macsim/instances.hpp"
#include "macsim/losses.hpp"
#include "macsim/oracle.hpp"
#include "macsim/policy.hpp"
#include "macsim/rng.hpp"
#include "macsim/sampler.hpp"

namespace macsim {

// ---------------------------------------------------------------------------
// Random test cases shared by the verification suites and the test binaries.

/// Edge set with random real entries (density `p_real`). Every agent is
/// active with a feasible skip entry, and at least one real edge exists.
inline EdgeSet random_edges(int agents, int tasks, Rng& rng, double p_real = 0.7) {
  EdgeSet e(agents, tasks);
  bool any_real = false;
  for (int m = 0; m < agents; ++m) {
    for (int c = 0; c < tasks; ++c)
      if (rng.unit() < p_real) {
        e.set(m, c, rng.uniform_real(1.0, 10.0));
        any_real = true;
      }
    e.set(m, e.skip_col());
  }
  if (!any_real && tasks > 0) {
    const int m = static_cast<int>(rng.uniform_int(0, agents - 1));
    const int c = static_cast<int>(rng.uniform_int(0, tasks - 1));
    e.set(m, c, rng.uniform_real(1.0, 10.0));
  }
  return e;
}

inline EdgeSet full_edges(int agents, int tasks) {
  EdgeSet e(agents, tasks);
  for (int m = 0; m < agents; ++m)
    for (int c = 0; c <= tasks; ++c) e.set(m, c, c < tasks ? 1.0 : 0.0);
  return e;
}

/// Entries U(lo, hi), masked outside `edges`.
inline LogitMatrix random_logits(const EdgeSet& edges, Rng& rng, double lo = -3.0, double hi = 3.0) {
  LogitMatrix L(edges.num_agents, edges.cols());
  for (double& v : L.data) v = rng.uniform_real(lo, hi);
  return apply_mask(std::move(L), edges);
}

/// True when `a` lists every active agent once, uses feasible entries only
/// and never repeats a real task.
inline bool is_conflict_free(const EdgeSet& edges, const JointAction& a) {
  std::vector<int> seen_agent(static_cast<std::size_t>(edges.num_agents), 0);
  std::vector<int> seen_task(static_cast<std::size_t>(edges.num_tasks), 0);
  for (const auto& p : a) {
    if (p.agent < 0 || p.agent >= edges.num_agents) return false;
    if (seen_agent[static_cast<std::size_t>(p.agent)]++) return false;
    const int col = edges.column(p.task);
    if (col < 0 || col > edges.num_tasks || !edges.has(p.agent, col)) return false;
    if (!p.is_skip() && seen_task[static_cast<std::size_t>(p.task)]++) return false;
  }
  for (int m = 0; m < edges.num_agents; ++m)
    if (edges.is_active(m) && !seen_agent[static_cast<std::size_t>(m)]) return false;
  return true;
}

/// Norm-wise relative difference ||a - b|| / max(||a||, ||b||). Falls back
/// to the absolute difference when both norms are below 1e-6, where the
/// ratio only measures rounding noise.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double den = std::sqrt(std::max(na, nb));
  return den < 1e-6 ? std::sqrt(d) : std::sqrt(d) / den;
}

/// Analytic vs central-difference gradient of one loss on one step, over the
/// unmasked entries. Uses the fourth-order five-point stencil.
inline double loss_fd_error(LossKind kind, const ExpertStep& step, double h = 1e-3) {
  const LossResult r = compute_loss(kind, step);
  std::vector<double> analytic, numeric;
  ExpertStep probe = step;
  const auto at = [&](int m, int c, double dx) {
    probe.logits(m, c) = step.logits(m, c) + dx;
    const double v = compute_loss(kind, probe).value;
    probe.logits(m, c) = step.logits(m, c);
    return v;
  };
  for (int m = 0; m < step.logits.rows; ++m)
    for (int c = 0; c < step.logits.cols; ++c) {
      if (is_masked(step.logits(m, c))) continue;
      analytic.push_back(r.grad(m, c));
      numeric.push_back((8.0 * (at(m, c, h) - at(m, c, -h)) - (at(m, c, 2 * h) - at(m, c, -2 * h))) / (12.0 * h));
    }
  return relative_error(analytic, numeric);
}

/// Analytic vs central-difference policy gradient on `count` randomly chosen
/// scalar parameters, loss = CE against `action`.
inline double policy_fd_error(PolicyParams params, const StateFeatures& f, const JointAction& action, int count,
                              Rng& rng, double h = 1e-4) {
  const auto loss_at = [&](const LogitMatrix& L) { return loss_ce({L, f.edges, action}); };
  const GradResult g = grad(params, f, loss_at);

  std::vector<std::pair<Tensor*, const Tensor*>> slots;
  {
    std::vector<Tensor*> ps;
    params.for_each([&](const std::string&, Tensor& t) { ps.push_back(&t); });
    std::vector<const Tensor*> gs;
    g.grads.visit([&](const std::string&, const Tensor& t) { gs.push_back(&t); });
    for (std::size_t i = 0; i < ps.size(); ++i) slots.emplace_back(ps[i], gs[i]);
  }
  std::size_t total = 0;
  for (const auto& s : slots) total += s.first->size();

  std::vector<double> analytic, numeric;
  for (int k = 0; k < count; ++k) {
    std::size_t flat = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(total) - 1));
    std::size_t t = 0;
    while (flat >= slots[t].first->size()) flat -= slots[t++].first->size();
    double& w = slots[t].first->data[flat];
    const double w0 = w;
    w = w0 + h;
    const double up = loss_at(forward(params, f)).value;
    w = w0 - h;
    const double down = loss_at(forward(params, f)).value;
    w = w0;
    analytic.push_back(slots[t].second->data[flat]);
    numeric.push_back((up - down) / (2.0 * h));
  }
  return relative_error(analytic, numeric);
}

/// Steps `s` with `a` and with a shuffled copy of `a`; true when the
/// successor states are identical.
inline bool order_invariant(const State& s, const JointAction& a, Rng& rng) {
  JointAction b = a;
  std::shuffle(b.begin(), b.end(), rng);
  return step(s, a).state == step(s, b).state;
}

// ---------------------------------------------------------------------------
// Verification suites.

using SamplerFn = std::function<SampledAction(const LogitMatrix&, const EdgeSet&, Rng&)>;

struct VerifyOptions {
  std::uint64_t seed = 7;
  int cases = 200;
  SamplerFn sampler = [](const LogitMatrix& L, const EdgeSet& e, Rng& r) { return sample_joint(L, e, r); };
};

struct SuiteResult {
  std::string name;
  int passed = 0;
  int failed = 0;
  std::vector<std::string> failures;  // first few only

  explicit SuiteResult(std::string n = {}) : name(std::move(n)) {}

  void check(bool ok, const std::string& what) {
    if (ok) {
      ++passed;
      return;
    }
    ++failed;
    if (failures.size() < 10) failures.push_back(what);
  }
  bool ok() const { return failed == 0; }
};

namespace detail {

// Sampler that masks the chosen row but never the chosen column.
inline SampledAction sample_without_column_mask(const LogitMatrix& L, const EdgeSet& edges, Rng& rng) {
  SampledAction out;
  std::vector<bool> done(static_cast<std::size_t>(edges.num_agents), false);
  for (std::size_t k = 0; k < count_active(edges); ++k) {
    std::vector<Candidate> cands;
    for (int m = 0; m < edges.num_agents; ++m)
      if (!done[static_cast<std::size_t>(m)])
        for (int c = 0; c < edges.cols(); ++c)
          if (edges.has(m, c) && !is_masked(L(m, c))) cands.push_back({m, c});
    const double log_z = log_normalizer(L, cands);
    const auto& pick = cands[draw(L, cands, log_z, rng)];
    record(out, edges, pick, L(pick.agent, pick.col) - log_z);
    done[static_cast<std::size_t>(pick.agent)] = true;
  }
  return out;
}

inline std::string shape(int m, int n) { return std::to_string(m) + "x" + std::to_string(n); }

}  // namespace detail

/// Fault-injection hook: a sampler that forgets column masking.
inline SamplerFn corrupted_sampler() { return detail::sample_without_column_mask; }

/// Enumerated sequence probabilities sum to one, agree with the independent
/// scorer, and the sampler only emits enumerated, conflict-free sequences.
inline SuiteResult verify_prop1(const VerifyOptions& opt = {}) {
  SuiteResult r{"prop1"};
  Rng rng = Rng(opt.seed).fork(1);
  const std::pair<int, int> shapes[] = {{2, 2}, {2, 3}, {3, 3}, {3, 4}};
  for (int i = 0; i < opt.cases; ++i) {
    const auto [M, N] = shapes[static_cast<std::size_t>(i) % 4];
    const EdgeSet e = random_edges(M, N, rng);
    const LogitMatrix L = random_logits(e, rng);
    const auto seqs = enumerate_sequences(L, e);
    double sum = 0.0, scorer_gap = 0.0;
    for (const auto& s : seqs) {
      sum += s.prob;
      scorer_gap = std::max(scorer_gap, std::abs(std::exp(sequence_log_prob(L, e, s.sequence)) - s.prob));
    }
    r.check(std::abs(sum - 1.0) <= 1e-9, "case " + std::to_string(i) + " (" + detail::shape(M, N) +
                                             "): probabilities sum to " + std::to_string(sum));
    r.check(scorer_gap <= 1e-12, "case " + std::to_string(i) + ": scorer disagrees with enumeration");
    for (int d = 0; d < 20; ++d) {
      const SampledAction a = opt.sampler(L, e, rng);
      const bool ok = is_conflict_free(e, a.action) && std::isfinite(sequence_log_prob(L, e, a.action));
      r.check(ok, "case " + std::to_string(i) + ": sampler emitted an impossible sequence");
      if (!ok) break;
    }
  }
  return r;
}

/// CE upper-bounds the ideal loss with the gap inside the stated bound;
/// point-mass priors reproduce the PL loss.
inline SuiteResult verify_thm_e1(const VerifyOptions& opt = {}) {
  SuiteResult r{"thm-e1"};
  Rng rng = Rng(opt.seed).fork(2);
  {
    EdgeSet e(2, 2);
    for (int m = 0; m < 2; ++m)
      for (int c = 0; c < 2; ++c) e.set(m, c, 1.0);
    const LogitMatrix L = apply_mask(LogitMatrix(2, 3), e);
    const JointAction a{{0, 0}, {1, 1}};
    const double l2 = std::log(2.0);
    r.check(std::abs(ideal_loss(L, e, a) - l2) <= 1e-12, "2x2 zero logits: ideal loss is not log 2");
    r.check(std::abs(loss_ce({L, e, a}).value - 2.0 * l2) <= 1e-12, "2x2 zero logits: CE is not 2 log 2");
    r.check(std::abs(ce_gap_bound(L, e, a) - 2.0 * l2) <= 1e-12, "2x2 zero logits: bound is not 2 log 2");
  }
  for (int i = 0; i < opt.cases; ++i) {
    const int M = static_cast<int>(rng.uniform_int(1, 4));
    const EdgeSet e = random_edges(M, M, rng);
    const LogitMatrix L = random_logits(e, rng);
    const JointAction a = sample_joint(random_logits(e, rng), e, rng).action;
    const double ce = loss_ce({L, e, a}).value;
    const double ideal = ideal_loss(L, e, a);
    const double bound = ce_gap_bound(L, e, a);
    const std::string tag = "case " + std::to_string(i) + " (M=" + std::to_string(M) + ")";
    r.check(ce >= ideal - 1e-9, tag + ": CE below ideal loss");
    r.check(ce - ideal <= bound + 1e-9, tag + ": gap exceeds bound");
    std::vector<int> order;
    for (const auto& p : a) order.push_back(p.agent);
    const double pl = loss_pl({L, e, a}).value;
    r.check(std::abs(ideal_loss(L, e, a, PermutationPrior::at(order)) - pl) <= 1e-12,
            tag + ": point-mass prior differs from PL");
  }
  return r;
}

/// Loss gradients against central differences, and one policy end-to-end check.
inline SuiteResult verify_grads(const VerifyOptions& opt = {}) {
  SuiteResult r{"grads"};
  Rng rng = Rng(opt.seed).fork(3);
  const LossKind kinds[] = {LossKind::sa, LossKind::ml, LossKind::pl, LossKind::ce};
  const int steps = std::max(1, opt.cases / 4);
  for (int i = 0; i < steps; ++i) {
    const int M = static_cast<int>(rng.uniform_int(1, 4));
    const int N = static_cast<int>(rng.uniform_int(1, 4));
    const EdgeSet e = random_edges(M, N, rng);
    const ExpertStep s{random_logits(e, rng), e, sample_joint(random_logits(e, rng), e, rng).action};
    for (LossKind k : kinds) {
      const double err = loss_fd_error(k, s);
      r.check(err <= 1e-8, "step " + std::to_string(i) + " loss " + std::string(to_string(k)) +
                               ": relative error " + std::to_string(err));
    }
  }
  GenConfig g;
  g.problem = ProblemKind::fjsp;
  g.num_jobs = 4;
  g.num_machines = 3;
  g.seed = opt.seed;
  const State st = reset(generate(g));
  PolicyConfig pc;
  pc.problem = ProblemKind::fjsp;
  pc.d = 16;
  const PolicyParams params = init_policy(pc, opt.seed);
  const StateFeatures f = featurize(st);
  const JointAction a = sample_joint(forward(params, f), f.edges, rng).action;
  const double err = policy_fd_error(params, f, a, 20, rng);
  r.check(err <= 1e-4, "policy gradient: relative error " + std::to_string(err));
  return r;
}

/// Random rollouts validate and transitions ignore intra-action order.
inline SuiteResult verify_env(const VerifyOptions& opt = {}) {
  SuiteResult r{"env"};
  Rng rng = Rng(opt.seed).fork(4);
  const int per_problem = std::max(1, opt.cases / 4);
  for (ProblemKind kind : {ProblemKind::fjsp, ProblemKind::ffsp, ProblemKind::hcvrp}) {
    GenConfig g;
    g.problem = kind;
    g.num_jobs = kind == ProblemKind::hcvrp ? 8 : 5;
    g.num_machines = kind == ProblemKind::ffsp ? 2 : 3;
    g.num_stages = 2;
    for (int i = 0; i < per_problem; ++i) {
      const auto inst = std::make_shared<const ProblemInstance>(generate(g, opt.seed, static_cast<std::uint64_t>(i)));
      const std::string tag = std::string(to_string(kind)) + " instance " + std::to_string(i);
      State s = reset(inst);
      std::vector<JointAction> actions;
      bool inv = true;
      while (!s.terminal) {
        const EdgeSet e = feasible_edges(s);
        const JointAction a = sample_joint(LogitMatrix(e.num_agents, e.cols()), e, rng).action;
        inv = inv && order_invariant(s, a, rng);
        actions.push_back(a);
        s = step(s, a).state;
      }
      const Solution sol = solution(s);
      const auto violations = validate(*inst, sol);
      r.check(violations.empty(), tag + ": " + (violations.empty() ? "" : violations.front()));
      r.check(inv, tag + ": transition depends on intra-action order");
      r.check(replay(inst, actions) == s, tag + ": replay diverges");
    }
  }
  return r;
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"prop1", "thm-e1", "grads", "env"};
  return names;
}

/// Runs one named suite, or every suite for "all".
inline std::vector<SuiteResult> run_suites(const std::string& name, const VerifyOptions& opt = {}) {
  std::vector<SuiteResult> out;
  const bool all = name == "all";
  if (!all && std::find(suite_names().begin(), suite_names().end(), name) == suite_names().end())
    throw ConfigError("unknown suite '" + name + "' (expected prop1, thm-e1, grads, env or all)");
  if (all || name == "prop1") out.push_back(verify_prop1(opt));
  if (all || name == "thm-e1") out.push_back(verify_thm_e1(opt));
  if (all || name == "grads") out.push_back(verify_grads(opt));
  if (all || name == "env") out.push_back(verify_env(opt));
  return out;
}

}  // namespace macsim
