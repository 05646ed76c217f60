#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "macsim/env.hpp"
#include "macsim/error.hpp"
#include "macsim/sampler.hpp"

namespace macsim {

inline constexpr std::size_t kEnumerationBudget = 1'000'000;

struct SequenceProb {
  JointAction sequence;
  double prob = 0.0;
};

namespace detail {

struct EnumCtx {
  const LogitMatrix& L;
  const EdgeSet& E;
  std::size_t budget;
  std::vector<bool> agent_done;
  std::vector<bool> task_done;
  std::vector<bool> active;
  bool real_seen = false;
  JointAction prefix;
  std::vector<SequenceProb> out;

  bool usable(int m, int c) const {
    if (!E.has(m, c) || is_masked(L(m, c))) return false;
    return c == E.num_tasks || !task_done[static_cast<std::size_t>(c)];
  }

  bool real_elsewhere(int m) const {
    for (int o = 0; o < E.num_agents; ++o) {
      if (o == m || agent_done[static_cast<std::size_t>(o)] || !active[static_cast<std::size_t>(o)]) continue;
      for (int c = 0; c < E.num_tasks; ++c)
        if (usable(o, c)) return true;
    }
    return false;
  }

  void expand(double prob, std::size_t remaining) {
    if (remaining == 0) {
      if (out.size() >= budget) throw BudgetError("sequence enumeration exceeded " + std::to_string(budget) + " leaves");
      out.push_back({prefix, prob});
      return;
    }
    std::vector<std::pair<int, int>> pairs;
    std::vector<double> vals;
    for (int m = 0; m < E.num_agents; ++m) {
      if (agent_done[static_cast<std::size_t>(m)] || !active[static_cast<std::size_t>(m)]) continue;
      const bool skip_ok = real_seen || real_elsewhere(m);
      for (int c = 0; c <= E.num_tasks; ++c) {
        if (!usable(m, c) || (c == E.num_tasks && !skip_ok)) continue;
        pairs.emplace_back(m, c);
        vals.push_back(L(m, c));
      }
    }
    if (pairs.empty()) throw InfeasibleActionError("dead end during sequence enumeration");
    const double mx = *std::max_element(vals.begin(), vals.end());
    double z = 0.0;
    for (double v : vals) z += std::exp(v - mx);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto [m, c] = pairs[i];
      const double p = std::exp(vals[i] - mx) / z;
      const bool was_real = real_seen;
      agent_done[static_cast<std::size_t>(m)] = true;
      if (c < E.num_tasks) {
        task_done[static_cast<std::size_t>(c)] = true;
        real_seen = true;
      }
      prefix.push_back({m, c == E.num_tasks ? kSkip : c});
      expand(prob * p, remaining - 1);
      prefix.pop_back();
      agent_done[static_cast<std::size_t>(m)] = false;
      if (c < E.num_tasks) task_done[static_cast<std::size_t>(c)] = false;
      real_seen = was_real;
    }
  }
};

}  // namespace detail

/// Every ordered sequence the joint sampler can emit, with its probability.
inline std::vector<SequenceProb> enumerate_sequences(const LogitMatrix& L, const EdgeSet& edges,
                                                     std::size_t budget = kEnumerationBudget) {
  if (L.rows != edges.num_agents || L.cols != edges.cols()) throw ContractError("logit / edge shape mismatch");
  detail::EnumCtx ctx{L, edges, budget, {}, {}, {}, false, {}, {}};
  ctx.agent_done.assign(static_cast<std::size_t>(edges.num_agents), false);
  ctx.task_done.assign(static_cast<std::size_t>(edges.num_tasks), false);
  std::size_t n = 0;
  for (int m = 0; m < edges.num_agents; ++m) {
    ctx.active.push_back(edges.is_active(m));
    n += ctx.active.back() ? 1 : 0;
  }
  ctx.expand(1.0, n);
  return std::move(ctx.out);
}

// ---------------------------------------------------------------------------
// Permutation-marginalized matching probability.

/// Weight over agent orders: uniform, or all mass on one order.
struct PermutationPrior {
  std::optional<std::vector<int>> point_mass;
  static PermutationPrior uniform() { return {}; }
  static PermutationPrior at(std::vector<int> order) { return {std::move(order)}; }
};

namespace detail {

// Product of row-restricted probabilities of `matching` when agents decide
// in `order`. Zero when the order cannot produce the matching.
inline double ordered_matching_prob(const LogitMatrix& L, const EdgeSet& E, const std::vector<int>& order,
                                    const std::vector<int>& target_col) {
  std::vector<bool> task_done(static_cast<std::size_t>(E.num_tasks), false);
  bool real_seen = false;
  double p = 1.0;
  const auto usable = [&](int m, int c) {
    return E.has(m, c) && !is_masked(L(m, c)) && (c == E.num_tasks || !task_done[static_cast<std::size_t>(c)]);
  };
  for (std::size_t k = 0; k < order.size(); ++k) {
    const int m = order[k];
    bool later_real = false;
    for (std::size_t i = k + 1; i < order.size() && !later_real; ++i)
      for (int c = 0; c < E.num_tasks && !later_real; ++c) later_real = usable(order[i], c);
    const bool skip_ok = real_seen || later_real;
    const int want = target_col[static_cast<std::size_t>(m)];
    if (!usable(m, want) || (want == E.num_tasks && !skip_ok)) return 0.0;
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c <= E.num_tasks; ++c)
      if (usable(m, c) && (c < E.num_tasks || skip_ok)) mx = std::max(mx, L(m, c));
    double s = 0.0;
    for (int c = 0; c <= E.num_tasks; ++c)
      if (usable(m, c) && (c < E.num_tasks || skip_ok)) s += std::exp(L(m, c) - mx);
    p *= std::exp(L(m, want) - mx) / s;
    if (want < E.num_tasks) {
      task_done[static_cast<std::size_t>(want)] = true;
      real_seen = true;
    }
  }
  return p;
}

inline std::vector<int> target_columns(const EdgeSet& E, const JointAction& matching, std::vector<int>& agents) {
  std::vector<int> target(static_cast<std::size_t>(E.num_agents), -1);
  agents.clear();
  for (const auto& a : matching) {
    if (a.agent < 0 || a.agent >= E.num_agents || target[static_cast<std::size_t>(a.agent)] != -1)
      throw ContractError("matching lists an agent twice or out of range");
    target[static_cast<std::size_t>(a.agent)] = E.column(a.task);
    agents.push_back(a.agent);
  }
  std::sort(agents.begin(), agents.end());
  return target;
}

}  // namespace detail

inline double permutation_marginal_prob(const LogitMatrix& L, const EdgeSet& edges, const JointAction& matching,
                                        const PermutationPrior& prior = PermutationPrior::uniform()) {
  std::vector<int> agents;
  const auto target = detail::target_columns(edges, matching, agents);
  if (prior.point_mass) return detail::ordered_matching_prob(L, edges, *prior.point_mass, target);
  if (agents.size() > 7) throw BudgetError("uniform permutation prior limited to 7 agents");
  double total = 0.0;
  std::size_t count = 0;
  do {
    total += detail::ordered_matching_prob(L, edges, agents, target);
    ++count;
  } while (std::next_permutation(agents.begin(), agents.end()));
  return total / static_cast<double>(count);
}

inline double ideal_loss(const LogitMatrix& L, const EdgeSet& edges, const JointAction& matching,
                         const PermutationPrior& prior = PermutationPrior::uniform()) {
  return -std::log(permutation_marginal_prob(L, edges, matching, prior));
}

/// Sum over matched agents of log(1 + r_m), r_m = (1 - p_m) / p_m, where p_m
/// is the full-row softmax probability of the agent's target.
inline double ce_gap_bound(const LogitMatrix& L, const EdgeSet& edges, const JointAction& matching) {
  double bound = 0.0;
  for (const auto& a : matching) {
    const int col = edges.column(a.task);
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < edges.cols(); ++c)
      if (edges.has(a.agent, c) && !is_masked(L(a.agent, c))) mx = std::max(mx, L(a.agent, c));
    double s = 0.0;
    for (int c = 0; c < edges.cols(); ++c)
      if (edges.has(a.agent, c) && !is_masked(L(a.agent, c))) s += std::exp(L(a.agent, c) - mx);
    const double p = std::exp(L(a.agent, col) - mx) / s;
    bound += std::log1p((1.0 - p) / p);
  }
  return bound;
}

// ---------------------------------------------------------------------------
// Exact optima for tiny instances.

struct ExactResult {
  double objective = 0.0;
  Solution solution;
  std::uint64_t nodes = 0;
};

inline constexpr std::uint64_t kSearchNodeBudget = 50'000'000;

namespace detail {

// Depth-first search over semi-active schedules. Operations are appended in
// non-decreasing (start, job) order, which visits each semi-active schedule
// exactly once.
class FjspSearch {
 public:
  FjspSearch(const FjspInstance& x, std::uint64_t budget) : x_(x), budget_(budget) {
    mf_.assign(static_cast<std::size_t>(x.num_machines), 0);
    jr_.assign(static_cast<std::size_t>(x.num_jobs), 0);
    next_.assign(static_cast<std::size_t>(x.num_jobs), 0);
    for (const auto& job : x.jobs) cur_.emplace_back(job.size());
    tail_.resize(static_cast<std::size_t>(x.num_jobs));
    for (int j = 0; j < x.num_jobs; ++j) {
      auto& t = tail_[static_cast<std::size_t>(j)];
      t.assign(static_cast<std::size_t>(x.num_ops(j)) + 1, 0);
      for (int i = x.num_ops(j) - 1; i >= 0; --i)
        t[static_cast<std::size_t>(i)] = t[static_cast<std::size_t>(i) + 1] + x.op(j, i).min_time();
    }
  }

  void run() { dfs(-1, -1, 0, static_cast<std::size_t>(x_.total_ops())); }

  std::int64_t best() const { return best_; }
  const std::vector<std::vector<OpRecord>>& best_schedule() const { return best_sched_; }
  std::uint64_t nodes() const { return nodes_; }

 private:
  void dfs(std::int64_t last_start, int last_job, std::int64_t cmax, std::size_t remaining) {
    if (++nodes_ > budget_) throw BudgetError("exact search exceeded " + std::to_string(budget_) + " nodes");
    if (remaining == 0) {
      if (cmax < best_) {
        best_ = cmax;
        best_sched_ = cur_;
      }
      return;
    }
    std::int64_t lb = cmax;
    for (int j = 0; j < x_.num_jobs; ++j)
      lb = std::max(lb, jr_[static_cast<std::size_t>(j)] + tail_[static_cast<std::size_t>(j)][static_cast<std::size_t>(next_[static_cast<std::size_t>(j)])]);
    if (lb >= best_) return;

    for (int j = 0; j < x_.num_jobs; ++j) {
      const int i = next_[static_cast<std::size_t>(j)];
      if (i >= x_.num_ops(j)) continue;
      for (const auto& o : x_.op(j, i).options) {
        const auto m = static_cast<std::size_t>(o.machine);
        const std::int64_t start = std::max(mf_[m], jr_[static_cast<std::size_t>(j)]);
        if (start < last_start || (start == last_start && j <= last_job)) continue;
        const std::int64_t end = start + o.time;
        const auto saved_mf = mf_[m];
        const auto saved_jr = jr_[static_cast<std::size_t>(j)];
        mf_[m] = end;
        jr_[static_cast<std::size_t>(j)] = end;
        ++next_[static_cast<std::size_t>(j)];
        cur_[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = {o.machine, start, end};
        dfs(start, j, std::max(cmax, end), remaining - 1);
        --next_[static_cast<std::size_t>(j)];
        mf_[m] = saved_mf;
        jr_[static_cast<std::size_t>(j)] = saved_jr;
      }
    }
  }

  const FjspInstance& x_;
  std::uint64_t budget_;
  std::uint64_t nodes_ = 0;
  std::vector<std::int64_t> mf_, jr_;
  std::vector<int> next_;
  std::vector<std::vector<std::int64_t>> tail_;
  std::vector<std::vector<OpRecord>> cur_, best_sched_;
  std::int64_t best_ = std::numeric_limits<std::int64_t>::max();
};

inline FjspInstance ffsp_as_fjsp(const FfspInstance& x) {
  FjspInstance f;
  f.num_jobs = x.num_jobs;
  f.num_machines = x.num_machines();
  f.jobs.resize(static_cast<std::size_t>(x.num_jobs));
  for (int j = 0; j < x.num_jobs; ++j)
    for (int s = 0; s < x.num_stages; ++s) {
      FjspOperation op;
      for (int k = 0; k < x.machines_per_stage[static_cast<std::size_t>(s)]; ++k)
        op.options.push_back({x.stage_offset(s) + k, x.time(s, j, k)});
      f.jobs[static_cast<std::size_t>(j)].push_back(std::move(op));
    }
  return f;
}

struct RoutePlan {
  double distance = std::numeric_limits<double>::infinity();
  std::vector<int> route;  // node ids, depot = 0
};

// Cheapest closed route (with refill returns) serving `subset` for one vehicle.
inline RoutePlan best_route(const HcvrpInstance& x, int vehicle, std::vector<int> subset) {
  RoutePlan plan;
  if (subset.empty()) {
    plan.distance = 0.0;
    plan.route = {0};
    return plan;
  }
  const int cap = x.capacity[static_cast<std::size_t>(vehicle)];
  for (int c : subset)
    if (x.demand[static_cast<std::size_t>(c)] > cap) return plan;
  std::sort(subset.begin(), subset.end());
  const std::size_t n = subset.size();
  do {
    // Optimal split of this visiting order into capacity-feasible trips.
    std::vector<double> f(n + 1, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> from(n + 1, 0);
    f[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      int load = 0;
      double d = 0.0;
      for (std::size_t k = i; k < n; ++k) {
        load += x.demand[static_cast<std::size_t>(subset[k])];
        if (load > cap) break;
        d += k == i ? distance(x.depot, x.customers[static_cast<std::size_t>(subset[k])])
                    : distance(x.customers[static_cast<std::size_t>(subset[k - 1])],
                               x.customers[static_cast<std::size_t>(subset[k])]);
        const double total = f[i] + d + distance(x.customers[static_cast<std::size_t>(subset[k])], x.depot);
        if (total < f[k + 1]) {
          f[k + 1] = total;
          from[k + 1] = i;
        }
      }
    }
    if (f[n] < plan.distance) {
      plan.distance = f[n];
      std::vector<std::pair<std::size_t, std::size_t>> trips;
      for (std::size_t e = n; e > 0; e = from[e]) trips.emplace_back(from[e], e);
      std::reverse(trips.begin(), trips.end());
      plan.route = {0};
      for (const auto& [b, e] : trips) {
        for (std::size_t k = b; k < e; ++k) plan.route.push_back(subset[k] + 1);
        plan.route.push_back(0);
      }
    }
  } while (std::next_permutation(subset.begin(), subset.end()));
  return plan;
}

}  // namespace detail

inline ExactResult exact_optimum(const FjspInstance& x, std::uint64_t budget = kSearchNodeBudget) {
  require_valid(ProblemInstance{x});
  detail::FjspSearch search(x, budget);
  search.run();
  ExactResult r;
  r.objective = static_cast<double>(search.best());
  r.solution.instance = std::make_shared<const ProblemInstance>(x);
  r.solution.content = FjspSchedule{search.best_schedule()};
  r.nodes = search.nodes();
  return r;
}

inline ExactResult exact_optimum(const FfspInstance& x, std::uint64_t budget = kSearchNodeBudget) {
  require_valid(ProblemInstance{x});
  const FjspInstance f = detail::ffsp_as_fjsp(x);
  detail::FjspSearch search(f, budget);
  search.run();
  FfspSchedule sched;
  sched.stages.assign(static_cast<std::size_t>(x.num_stages), std::vector<OpRecord>(static_cast<std::size_t>(x.num_jobs)));
  for (int j = 0; j < x.num_jobs; ++j)
    for (int s = 0; s < x.num_stages; ++s) {
      auto r = search.best_schedule()[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)];
      r.machine -= x.stage_offset(s);
      sched.stages[static_cast<std::size_t>(s)][static_cast<std::size_t>(j)] = r;
    }
  ExactResult out;
  out.objective = static_cast<double>(search.best());
  out.solution.instance = std::make_shared<const ProblemInstance>(x);
  out.solution.content = std::move(sched);
  out.nodes = search.nodes();
  return out;
}

inline ExactResult exact_optimum(const HcvrpInstance& x, std::uint64_t budget = kSearchNodeBudget) {
  require_valid(ProblemInstance{x});
  const int n = x.num_customers();
  const int K = x.num_vehicles();
  double combos = std::pow(static_cast<double>(K), n);
  if (n > 10 || combos > static_cast<double>(budget)) throw BudgetError("HCVRP instance too large for exact search");

  // Best plan per (vehicle, customer subset).
  const std::size_t subsets = std::size_t{1} << n;
  std::vector<std::vector<detail::RoutePlan>> plan(static_cast<std::size_t>(K), std::vector<detail::RoutePlan>(subsets));
  for (int k = 0; k < K; ++k)
    for (std::size_t mask = 0; mask < subsets; ++mask) {
      std::vector<int> members;
      for (int c = 0; c < n; ++c)
        if (mask >> c & 1U) members.push_back(c);
      plan[static_cast<std::size_t>(k)][mask] = detail::best_route(x, k, members);
    }

  ExactResult r;
  r.objective = std::numeric_limits<double>::infinity();
  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  std::vector<std::size_t> best_masks;
  for (;;) {
    ++r.nodes;
    std::vector<std::size_t> masks(static_cast<std::size_t>(K), 0);
    for (int c = 0; c < n; ++c) masks[static_cast<std::size_t>(assign[static_cast<std::size_t>(c)])] |= std::size_t{1} << c;
    double worst = 0.0;
    for (int k = 0; k < K; ++k)
      worst = std::max(worst, plan[static_cast<std::size_t>(k)][masks[static_cast<std::size_t>(k)]].distance /
                                  x.speed[static_cast<std::size_t>(k)]);
    if (worst < r.objective) {
      r.objective = worst;
      best_masks = masks;
    }
    int pos = 0;
    while (pos < n && ++assign[static_cast<std::size_t>(pos)] == K) assign[static_cast<std::size_t>(pos++)] = 0;
    if (pos == n) break;
  }
  if (!std::isfinite(r.objective)) throw ContractError("HCVRP instance has no capacity-feasible assignment");
  HcvrpRoutes routes;
  for (int k = 0; k < K; ++k) routes.routes.push_back(plan[static_cast<std::size_t>(k)][best_masks[static_cast<std::size_t>(k)]].route);
  r.solution.instance = std::make_shared<const ProblemInstance>(x);
  r.solution.content = std::move(routes);
  return r;
}

inline ExactResult exact_optimum(const ProblemInstance& inst, std::uint64_t budget = kSearchNodeBudget) {
  return std::visit([&](const auto& x) { return exact_optimum(x, budget); }, inst);
}

}  // namespace macsim
