#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "macsim/error.hpp"
#include "macsim/instances.hpp"

namespace macsim {

// Task value of a skip assignment. In logit / edge matrices the skip token
// occupies column `num_tasks`.
inline constexpr int kSkip = -1;

struct Assignment {
  int agent = 0;
  int task = kSkip;
  bool is_skip() const noexcept { return task == kSkip; }
  bool operator==(const Assignment&) const = default;
};

// Ordered agent-task pairs; the unordered projection is the matching.
using JointAction = std::vector<Assignment>;

/// Feasible agent-task pairs of one decision epoch.
///
/// Rows are agents, columns are tasks plus a trailing skip column. An agent
/// is active iff its row has at least one feasible entry; active agents
/// always carry a feasible skip entry.
struct EdgeSet {
  int num_agents = 0;
  int num_tasks = 0;
  std::vector<std::uint8_t> feasible;  // num_agents x (num_tasks + 1)
  std::vector<double> weight;          // same shape; 0 for skip and infeasible entries

  EdgeSet() = default;
  EdgeSet(int agents, int tasks)
      : num_agents(agents),
        num_tasks(tasks),
        feasible(static_cast<std::size_t>(agents) * static_cast<std::size_t>(tasks + 1), 0),
        weight(feasible.size(), 0.0) {}

  int cols() const noexcept { return num_tasks + 1; }
  int skip_col() const noexcept { return num_tasks; }
  int column(int task) const noexcept { return task == kSkip ? num_tasks : task; }
  std::size_t index(int agent, int col) const noexcept {
    return static_cast<std::size_t>(agent) * static_cast<std::size_t>(cols()) + static_cast<std::size_t>(col);
  }
  bool has(int agent, int col) const noexcept { return feasible[index(agent, col)] != 0; }
  void set(int agent, int col, double w = 0.0) {
    feasible[index(agent, col)] = 1;
    weight[index(agent, col)] = w;
  }
  bool is_active(int agent) const noexcept {
    for (int c = 0; c < cols(); ++c)
      if (has(agent, c)) return true;
    return false;
  }
  bool has_real(int agent) const noexcept {
    for (int c = 0; c < num_tasks; ++c)
      if (has(agent, c)) return true;
    return false;
  }
  std::vector<int> active_agents() const {
    std::vector<int> out;
    for (int m = 0; m < num_agents; ++m)
      if (is_active(m)) out.push_back(m);
    return out;
  }
  std::size_t real_edge_count() const {
    std::size_t n = 0;
    for (int m = 0; m < num_agents; ++m)
      for (int c = 0; c < num_tasks; ++c) n += has(m, c) ? 1 : 0;
    return n;
  }
  bool operator==(const EdgeSet&) const = default;
};

// ---------------------------------------------------------------------------
// Per-problem dynamic state.

struct OpRecord {
  int machine = -1;  // -1 while unscheduled
  std::int64_t start = 0;
  std::int64_t end = 0;
  bool operator==(const OpRecord&) const = default;
};

struct FjspDynamics {
  std::vector<std::int64_t> machine_free;
  std::vector<std::int64_t> job_ready;
  std::vector<int> next_op;
  std::vector<std::vector<OpRecord>> schedule;  // [job][op]
  bool operator==(const FjspDynamics&) const = default;
};

struct FfspDynamics {
  std::vector<std::int64_t> machine_free;  // global machine ids
  std::vector<std::int64_t> job_ready;
  std::vector<int> next_stage;
  std::vector<std::vector<OpRecord>> schedule;  // [stage][job]; machine is the index within the stage
  bool operator==(const FfspDynamics&) const = default;
};

struct HcvrpDynamics {
  std::vector<int> position;  // node id, 0 = depot
  std::vector<int> residual;
  std::vector<double> route_cost;
  std::vector<std::vector<int>> routes;  // node sequences starting at the depot
  std::vector<std::uint8_t> served;
  bool operator==(const HcvrpDynamics&) const = default;
};

/// Snapshot of the multi-agent construction process. Value type.
struct State {
  std::shared_ptr<const ProblemInstance> instance;
  int t = 0;                // construction step index
  std::int64_t now = 0;     // decision epoch (scheduling problems)
  int skip_count = 0;       // skips taken while a real task was available
  bool terminal = false;
  std::variant<FjspDynamics, FfspDynamics, HcvrpDynamics> dyn;

  bool operator==(const State&) const = default;
};

// ---------------------------------------------------------------------------
// Solutions.

struct FjspSchedule {
  std::vector<std::vector<OpRecord>> ops;  // [job][op]
  bool operator==(const FjspSchedule&) const = default;
};

struct FfspSchedule {
  std::vector<std::vector<OpRecord>> stages;  // [stage][job]
  bool operator==(const FfspSchedule&) const = default;
};

struct HcvrpRoutes {
  std::vector<std::vector<int>> routes;  // per vehicle, node ids, depot = 0
  bool operator==(const HcvrpRoutes&) const = default;
};

struct Solution {
  std::shared_ptr<const ProblemInstance> instance;
  std::variant<FjspSchedule, FfspSchedule, HcvrpRoutes> content;
  int skip_count = 0;
};

// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::int64_t kNoEvent = std::numeric_limits<std::int64_t>::max();

inline const FjspInstance& fjsp(const State& s) { return std::get<FjspInstance>(*s.instance); }
inline const FfspInstance& ffsp(const State& s) { return std::get<FfspInstance>(*s.instance); }
inline const HcvrpInstance& hcvrp(const State& s) { return std::get<HcvrpInstance>(*s.instance); }

// Machines that still have an unscheduled operation they are eligible for.
inline std::vector<std::uint8_t> fjsp_has_work(const FjspInstance& x, const FjspDynamics& d) {
  std::vector<std::uint8_t> work(static_cast<std::size_t>(x.num_machines), 0);
  for (int j = 0; j < x.num_jobs; ++j)
    for (int i = d.next_op[static_cast<std::size_t>(j)]; i < x.num_ops(j); ++i)
      for (const auto& o : x.op(j, i).options) work[static_cast<std::size_t>(o.machine)] = 1;
  return work;
}

inline std::vector<std::uint8_t> ffsp_has_work(const FfspInstance& x, const FfspDynamics& d) {
  std::vector<std::uint8_t> work(static_cast<std::size_t>(x.num_machines()), 0);
  int earliest = x.num_stages;
  for (int s : d.next_stage) earliest = std::min(earliest, s);
  for (int m = 0; m < x.num_machines(); ++m) work[static_cast<std::size_t>(m)] = x.stage_of(m) >= earliest ? 1 : 0;
  return work;
}

inline EdgeSet fjsp_edges(const State& s) {
  const auto& x = fjsp(s);
  const auto& d = std::get<FjspDynamics>(s.dyn);
  EdgeSet e(x.num_machines, x.num_jobs);
  const auto work = fjsp_has_work(x, d);
  for (int m = 0; m < x.num_machines; ++m) {
    if (d.machine_free[static_cast<std::size_t>(m)] > s.now || !work[static_cast<std::size_t>(m)]) continue;
    e.set(m, e.skip_col());
    for (int j = 0; j < x.num_jobs; ++j) {
      const int i = d.next_op[static_cast<std::size_t>(j)];
      if (i >= x.num_ops(j) || d.job_ready[static_cast<std::size_t>(j)] > s.now) continue;
      if (const auto p = x.op(j, i).time_on(m)) e.set(m, j, *p);
    }
  }
  return e;
}

inline EdgeSet ffsp_edges(const State& s) {
  const auto& x = ffsp(s);
  const auto& d = std::get<FfspDynamics>(s.dyn);
  EdgeSet e(x.num_machines(), x.num_jobs);
  const auto work = ffsp_has_work(x, d);
  for (int m = 0; m < x.num_machines(); ++m) {
    if (d.machine_free[static_cast<std::size_t>(m)] > s.now || !work[static_cast<std::size_t>(m)]) continue;
    e.set(m, e.skip_col());
    const int stage = x.stage_of(m);
    const int k = m - x.stage_offset(stage);
    for (int j = 0; j < x.num_jobs; ++j) {
      if (d.next_stage[static_cast<std::size_t>(j)] != stage || d.job_ready[static_cast<std::size_t>(j)] > s.now)
        continue;
      e.set(m, j, x.time(stage, j, k));
    }
  }
  return e;
}

inline EdgeSet hcvrp_edges(const State& s) {
  const auto& x = hcvrp(s);
  const auto& d = std::get<HcvrpDynamics>(s.dyn);
  EdgeSet e(x.num_vehicles(), x.num_customers());
  for (int k = 0; k < x.num_vehicles(); ++k) {
    bool any = false;
    for (int c = 0; c < x.num_customers(); ++c) {
      if (d.served[static_cast<std::size_t>(c)] || x.demand[static_cast<std::size_t>(c)] > d.residual[static_cast<std::size_t>(k)])
        continue;
      const double cost =
          distance(x.node(d.position[static_cast<std::size_t>(k)]), x.customers[static_cast<std::size_t>(c)]) /
          x.speed[static_cast<std::size_t>(k)];
      e.set(k, c, cost);
      any = true;
    }
    // A vehicle resting at the depot with nothing it can ever carry is done.
    if (any || d.position[static_cast<std::size_t>(k)] != 0) e.set(k, e.skip_col());
  }
  return e;
}

inline EdgeSet compute_edges(const State& s) {
  switch (kind_of(*s.instance)) {
    case ProblemKind::fjsp: return fjsp_edges(s);
    case ProblemKind::ffsp: return ffsp_edges(s);
    case ProblemKind::hcvrp: return hcvrp_edges(s);
  }
  return {};
}

// Earliest event time strictly after `now` among machine releases and job readiness.
inline std::int64_t next_event(std::int64_t now, const std::vector<std::int64_t>& machine_free,
                               const std::vector<std::int64_t>& job_ready, const std::vector<std::uint8_t>& job_open) {
  std::int64_t best = kNoEvent;
  for (auto v : machine_free)
    if (v > now) best = std::min(best, v);
  for (std::size_t j = 0; j < job_ready.size(); ++j)
    if (job_open[j] && job_ready[j] > now) best = std::min(best, job_ready[j]);
  return best;
}

// Moves the decision epoch forward: at least one event after a step, then
// until some agent has a real task again.
inline void advance_epoch(State& s) {
  const auto open_jobs = [&]() {
    std::vector<std::uint8_t> open;
    if (const auto* d = std::get_if<FjspDynamics>(&s.dyn)) {
      const auto& x = fjsp(s);
      for (int j = 0; j < x.num_jobs; ++j) open.push_back(d->next_op[static_cast<std::size_t>(j)] < x.num_ops(j));
    } else {
      const auto& d2 = std::get<FfspDynamics>(s.dyn);
      const auto& x = ffsp(s);
      for (int st : d2.next_stage) open.push_back(st < x.num_stages);
    }
    return open;
  };
  const auto& machine_free = std::holds_alternative<FjspDynamics>(s.dyn) ? std::get<FjspDynamics>(s.dyn).machine_free
                                                                         : std::get<FfspDynamics>(s.dyn).machine_free;
  const auto& job_ready = std::holds_alternative<FjspDynamics>(s.dyn) ? std::get<FjspDynamics>(s.dyn).job_ready
                                                                      : std::get<FfspDynamics>(s.dyn).job_ready;
  const auto open = open_jobs();
  bool any_open = false;
  for (auto o : open) any_open = any_open || o;
  if (!any_open) {
    s.terminal = true;
    return;
  }
  if (const auto ev = next_event(s.now, machine_free, job_ready, open); ev != kNoEvent) s.now = ev;
  while (compute_edges(s).real_edge_count() == 0) {
    const auto ev = next_event(s.now, machine_free, job_ready, open);
    if (ev == kNoEvent) throw std::logic_error("scheduling state has open jobs but no future event");
    s.now = ev;
  }
}

// Vehicles that cannot serve any remaining customer head back to refill;
// once every customer is served all vehicles close their routes.
inline void hcvrp_settle(State& s) {
  const auto& x = hcvrp(s);
  auto& d = std::get<HcvrpDynamics>(s.dyn);
  int min_demand = std::numeric_limits<int>::max();
  for (int c = 0; c < x.num_customers(); ++c)
    if (!d.served[static_cast<std::size_t>(c)]) min_demand = std::min(min_demand, x.demand[static_cast<std::size_t>(c)]);
  const bool done = min_demand == std::numeric_limits<int>::max();
  for (int k = 0; k < x.num_vehicles(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    if (d.position[ks] == 0) continue;
    if (done || d.residual[ks] < min_demand) {
      d.route_cost[ks] += distance(x.node(d.position[ks]), x.depot) / x.speed[ks];
      d.position[ks] = 0;
      d.residual[ks] = x.capacity[ks];
      d.routes[ks].push_back(0);
    }
  }
  s.terminal = done;
}

}  // namespace detail

inline State reset(std::shared_ptr<const ProblemInstance> instance) {
  require_valid(*instance);
  State s;
  s.instance = std::move(instance);
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, FjspInstance>) {
          FjspDynamics d;
          d.machine_free.assign(static_cast<std::size_t>(x.num_machines), 0);
          d.job_ready.assign(static_cast<std::size_t>(x.num_jobs), 0);
          d.next_op.assign(static_cast<std::size_t>(x.num_jobs), 0);
          for (const auto& job : x.jobs) d.schedule.emplace_back(job.size());
          s.dyn = std::move(d);
        } else if constexpr (std::is_same_v<T, FfspInstance>) {
          FfspDynamics d;
          d.machine_free.assign(static_cast<std::size_t>(x.num_machines()), 0);
          d.job_ready.assign(static_cast<std::size_t>(x.num_jobs), 0);
          d.next_stage.assign(static_cast<std::size_t>(x.num_jobs), 0);
          d.schedule.assign(static_cast<std::size_t>(x.num_stages),
                            std::vector<OpRecord>(static_cast<std::size_t>(x.num_jobs)));
          s.dyn = std::move(d);
        } else {
          HcvrpDynamics d;
          d.position.assign(static_cast<std::size_t>(x.num_vehicles()), 0);
          d.residual = x.capacity;
          d.route_cost.assign(static_cast<std::size_t>(x.num_vehicles()), 0.0);
          d.routes.assign(static_cast<std::size_t>(x.num_vehicles()), std::vector<int>{0});
          d.served.assign(static_cast<std::size_t>(x.num_customers()), 0);
          s.dyn = std::move(d);
        }
      },
      *s.instance);
  return s;
}

inline State reset(const ProblemInstance& instance) {
  return reset(std::make_shared<const ProblemInstance>(instance));
}

inline EdgeSet feasible_edges(const State& state) {
  if (state.terminal) throw ContractError("feasible_edges called on a terminal state");
  return detail::compute_edges(state);
}

struct StepResult {
  State state;
  bool terminal = false;
};

// Checks `action` against `edges` and throws the matching error.
inline void check_action(const EdgeSet& edges, const JointAction& action) {
  std::vector<std::uint8_t> agent_seen(static_cast<std::size_t>(edges.num_agents), 0);
  std::vector<std::uint8_t> task_seen(static_cast<std::size_t>(edges.num_tasks), 0);
  bool any_real = false;
  for (const auto& a : action) {
    if (a.agent < 0 || a.agent >= edges.num_agents)
      throw InfeasibleActionError("agent " + std::to_string(a.agent) + " out of range");
    if (a.task != kSkip && (a.task < 0 || a.task >= edges.num_tasks))
      throw InfeasibleActionError("task " + std::to_string(a.task) + " out of range");
    if (agent_seen[static_cast<std::size_t>(a.agent)])
      throw InfeasibleActionError("agent " + std::to_string(a.agent) + " assigned twice");
    agent_seen[static_cast<std::size_t>(a.agent)] = 1;
    if (!edges.has(a.agent, edges.column(a.task)))
      throw InfeasibleActionError("pair (" + std::to_string(a.agent) + ", " +
                                  (a.is_skip() ? std::string("skip") : std::to_string(a.task)) + ") is not feasible");
    if (!a.is_skip()) {
      if (task_seen[static_cast<std::size_t>(a.task)])
        throw InfeasibleActionError("task " + std::to_string(a.task) + " assigned twice");
      task_seen[static_cast<std::size_t>(a.task)] = 1;
      any_real = true;
    }
  }
  for (int m = 0; m < edges.num_agents; ++m)
    if (edges.is_active(m) && !agent_seen[static_cast<std::size_t>(m)])
      throw InfeasibleActionError("active agent " + std::to_string(m) + " missing from the joint action");
  if (!any_real) throw SkipRuleError("joint action must assign at least one real task");
}

/// Applies a joint action. Pure: the input state is not modified, and the
/// result does not depend on the order of pairs inside `action`.
inline StepResult step(const State& state, const JointAction& action) {
  if (state.terminal) throw ContractError("step called on a terminal state");
  const EdgeSet edges = detail::compute_edges(state);
  check_action(edges, action);

  State s = state;
  for (const auto& a : action)
    if (a.is_skip() && edges.has_real(a.agent)) ++s.skip_count;

  switch (kind_of(*s.instance)) {
    case ProblemKind::fjsp: {
      const auto& x = detail::fjsp(s);
      auto& d = std::get<FjspDynamics>(s.dyn);
      for (const auto& a : action) {
        if (a.is_skip()) continue;
        const auto m = static_cast<std::size_t>(a.agent);
        const auto j = static_cast<std::size_t>(a.task);
        const int i = d.next_op[j];
        const int p = *x.op(a.task, i).time_on(a.agent);
        const std::int64_t start = std::max(d.machine_free[m], d.job_ready[j]);
        d.schedule[j][static_cast<std::size_t>(i)] = {a.agent, start, start + p};
        d.machine_free[m] = start + p;
        d.job_ready[j] = start + p;
        ++d.next_op[j];
      }
      detail::advance_epoch(s);
      break;
    }
    case ProblemKind::ffsp: {
      const auto& x = detail::ffsp(s);
      auto& d = std::get<FfspDynamics>(s.dyn);
      for (const auto& a : action) {
        if (a.is_skip()) continue;
        const auto m = static_cast<std::size_t>(a.agent);
        const auto j = static_cast<std::size_t>(a.task);
        const int stage = x.stage_of(a.agent);
        const int k = a.agent - x.stage_offset(stage);
        const int p = x.time(stage, a.task, k);
        const std::int64_t start = std::max(d.machine_free[m], d.job_ready[j]);
        d.schedule[static_cast<std::size_t>(stage)][j] = {k, start, start + p};
        d.machine_free[m] = start + p;
        d.job_ready[j] = start + p;
        ++d.next_stage[j];
      }
      detail::advance_epoch(s);
      break;
    }
    case ProblemKind::hcvrp: {
      const auto& x = detail::hcvrp(s);
      auto& d = std::get<HcvrpDynamics>(s.dyn);
      for (const auto& a : action) {
        const auto k = static_cast<std::size_t>(a.agent);
        if (a.is_skip()) {
          // Skip: return to the depot to refill, or stay when already there.
          if (d.position[k] == 0) continue;
          d.route_cost[k] += distance(x.node(d.position[k]), x.depot) / x.speed[k];
          d.position[k] = 0;
          d.residual[k] = x.capacity[k];
          d.routes[k].push_back(0);
          continue;
        }
        const auto c = static_cast<std::size_t>(a.task);
        d.route_cost[k] += distance(x.node(d.position[k]), x.customers[c]) / x.speed[k];
        d.position[k] = a.task + 1;
        d.residual[k] -= x.demand[c];
        d.served[c] = 1;
        d.routes[k].push_back(a.task + 1);
      }
      detail::hcvrp_settle(s);
      break;
    }
  }
  ++s.t;
  return {s, s.terminal};
}

inline Solution solution(const State& state) {
  if (!state.terminal) throw ContractError("solution requested from a non-terminal state");
  Solution sol;
  sol.instance = state.instance;
  sol.skip_count = state.skip_count;
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, FjspDynamics>) sol.content = FjspSchedule{d.schedule};
        else if constexpr (std::is_same_v<T, FfspDynamics>) sol.content = FfspSchedule{d.schedule};
        else sol.content = HcvrpRoutes{d.routes};
      },
      state.dyn);
  return sol;
}

inline double route_cost(const HcvrpInstance& x, int vehicle, const std::vector<int>& route) {
  double cost = 0.0;
  for (std::size_t i = 1; i < route.size(); ++i) cost += distance(x.node(route[i - 1]), x.node(route[i]));
  return cost / x.speed[static_cast<std::size_t>(vehicle)];
}

/// C_max for scheduling problems, maximum route cost for HCVRP.
inline double objective(const Solution& sol) {
  return std::visit(
      [&](const auto& c) -> double {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, HcvrpRoutes>) {
          const auto& x = std::get<HcvrpInstance>(*sol.instance);
          double worst = 0.0;
          for (std::size_t k = 0; k < c.routes.size(); ++k) {
            const auto& r = c.routes[k];
            if (r.empty() || r.front() != 0 || r.back() != 0)
              throw ContractError("incomplete solution: route " + std::to_string(k) + " is not closed at the depot");
            worst = std::max(worst, route_cost(x, static_cast<int>(k), r));
          }
          return worst;
        } else {
          const auto& rows = [&]() -> const std::vector<std::vector<OpRecord>>& {
            if constexpr (std::is_same_v<T, FjspSchedule>) return c.ops;
            else return c.stages;
          }();
          std::int64_t cmax = 0;
          for (const auto& row : rows)
            for (const auto& r : row) {
              if (r.machine < 0) throw ContractError("incomplete solution: unscheduled operation");
              cmax = std::max(cmax, r.end);
            }
          return static_cast<double>(cmax);
        }
      },
      sol.content);
}

/// A complete construction: the actions taken from reset, plus its outcome.
struct Trajectory {
  std::shared_ptr<const ProblemInstance> instance;
  std::vector<JointAction> actions;
  double objective = 0.0;
  int skip_count = 0;
};

// Shared terminal reward; intermediate rewards are zero.
inline double reward(const Trajectory& tr) { return -tr.objective; }

// Re-simulates `actions` from reset.
inline State replay(std::shared_ptr<const ProblemInstance> instance, const std::vector<JointAction>& actions) {
  State s = reset(std::move(instance));
  for (const auto& a : actions) s = step(s, a).state;
  return s;
}

// ---------------------------------------------------------------------------
// Validation against the constraint families of the MILP models.

namespace detail {

struct Interval {
  std::int64_t start;
  std::int64_t end;
  std::string label;
};

inline void check_overlaps(std::vector<Interval> jobs_on_machine, const std::string& machine,
                           std::vector<std::string>& out) {
  std::sort(jobs_on_machine.begin(), jobs_on_machine.end(),
            [](const Interval& a, const Interval& b) { return a.start < b.start; });
  for (std::size_t i = 1; i < jobs_on_machine.size(); ++i)
    if (jobs_on_machine[i].start < jobs_on_machine[i - 1].end)
      out.push_back("machine " + machine + ": " + jobs_on_machine[i - 1].label + " overlaps " +
                    jobs_on_machine[i].label);
}

}  // namespace detail

inline std::vector<std::string> validate(const FjspInstance& x, const FjspSchedule& sched) {
  std::vector<std::string> out;
  if (static_cast<int>(sched.ops.size()) != x.num_jobs) {
    out.push_back("schedule covers " + std::to_string(sched.ops.size()) + " jobs, instance has " +
                  std::to_string(x.num_jobs));
    return out;
  }
  std::vector<std::vector<detail::Interval>> per_machine(static_cast<std::size_t>(x.num_machines));
  for (int j = 0; j < x.num_jobs; ++j) {
    const auto& row = sched.ops[static_cast<std::size_t>(j)];
    if (static_cast<int>(row.size()) != x.num_ops(j)) {
      out.push_back("job " + std::to_string(j) + ": operation count mismatch");
      continue;
    }
    for (int i = 0; i < x.num_ops(j); ++i) {
      const auto& r = row[static_cast<std::size_t>(i)];
      const std::string label = "op(" + std::to_string(j) + "," + std::to_string(i) + ")";
      if (r.machine < 0 || r.machine >= x.num_machines) {
        out.push_back(label + " is not assigned to exactly one machine");
        continue;
      }
      const auto p = x.op(j, i).time_on(r.machine);
      if (!p) {
        out.push_back(label + " assigned to ineligible machine " + std::to_string(r.machine));
        continue;
      }
      if (r.end - r.start != *p) out.push_back(label + " duration differs from its processing time");
      if (r.start < 0) out.push_back(label + " starts before time 0");
      if (i > 0 && r.start < row[static_cast<std::size_t>(i - 1)].end)
        out.push_back(label + " starts before its job predecessor completes");
      per_machine[static_cast<std::size_t>(r.machine)].push_back({r.start, r.end, label});
    }
  }
  for (int m = 0; m < x.num_machines; ++m)
    detail::check_overlaps(per_machine[static_cast<std::size_t>(m)], std::to_string(m), out);
  return out;
}

inline std::vector<std::string> validate(const FfspInstance& x, const FfspSchedule& sched) {
  std::vector<std::string> out;
  if (static_cast<int>(sched.stages.size()) != x.num_stages) {
    out.push_back("schedule stage count mismatch");
    return out;
  }
  std::vector<std::vector<detail::Interval>> per_machine(static_cast<std::size_t>(x.num_machines()));
  for (int s = 0; s < x.num_stages; ++s) {
    const auto& row = sched.stages[static_cast<std::size_t>(s)];
    if (static_cast<int>(row.size()) != x.num_jobs) {
      out.push_back("stage " + std::to_string(s) + ": job count mismatch");
      continue;
    }
    for (int j = 0; j < x.num_jobs; ++j) {
      const auto& r = row[static_cast<std::size_t>(j)];
      const std::string label = "job " + std::to_string(j) + " stage " + std::to_string(s);
      if (r.machine < 0 || r.machine >= x.machines_per_stage[static_cast<std::size_t>(s)]) {
        out.push_back(label + " is not assigned to exactly one machine of its stage");
        continue;
      }
      if (r.end - r.start != x.time(s, j, r.machine)) out.push_back(label + " duration differs from its processing time");
      if (r.start < 0) out.push_back(label + " starts before time 0");
      if (s > 0 && r.start < sched.stages[static_cast<std::size_t>(s - 1)][static_cast<std::size_t>(j)].end)
        out.push_back(label + " starts before the previous stage completes");
      per_machine[static_cast<std::size_t>(x.stage_offset(s) + r.machine)].push_back({r.start, r.end, label});
    }
  }
  for (int m = 0; m < x.num_machines(); ++m)
    detail::check_overlaps(per_machine[static_cast<std::size_t>(m)], std::to_string(m), out);
  return out;
}

inline std::vector<std::string> validate(const HcvrpInstance& x, const HcvrpRoutes& sol) {
  std::vector<std::string> out;
  if (static_cast<int>(sol.routes.size()) != x.num_vehicles()) {
    out.push_back("route count differs from vehicle count");
    return out;
  }
  std::vector<int> visits(static_cast<std::size_t>(x.num_customers()), 0);
  for (int k = 0; k < x.num_vehicles(); ++k) {
    const auto& r = sol.routes[static_cast<std::size_t>(k)];
    const std::string label = "vehicle " + std::to_string(k);
    if (r.empty() || r.front() != 0 || r.back() != 0) out.push_back(label + " route does not start and end at the depot");
    int load = 0;
    for (int node : r) {
      if (node < 0 || node > x.num_customers()) {
        out.push_back(label + " visits unknown node " + std::to_string(node));
        continue;
      }
      if (node == 0) {
        load = 0;
        continue;
      }
      ++visits[static_cast<std::size_t>(node - 1)];
      load += x.demand[static_cast<std::size_t>(node - 1)];
      if (load > x.capacity[static_cast<std::size_t>(k)])
        out.push_back(label + " exceeds capacity " + std::to_string(x.capacity[static_cast<std::size_t>(k)]) +
                      " (load " + std::to_string(load) + ")");
    }
  }
  for (int c = 0; c < x.num_customers(); ++c) {
    const int v = visits[static_cast<std::size_t>(c)];
    if (v != 1) out.push_back("customer " + std::to_string(c) + " served " + std::to_string(v) + " times");
  }
  return out;
}

inline std::vector<std::string> validate(const ProblemInstance& inst, const Solution& sol) {
  if (inst.index() != sol.content.index()) return {"solution type does not match the problem"};
  switch (kind_of(inst)) {
    case ProblemKind::fjsp: return validate(std::get<FjspInstance>(inst), std::get<FjspSchedule>(sol.content));
    case ProblemKind::ffsp: return validate(std::get<FfspInstance>(inst), std::get<FfspSchedule>(sol.content));
    case ProblemKind::hcvrp: return validate(std::get<HcvrpInstance>(inst), std::get<HcvrpRoutes>(sol.content));
  }
  return {};
}

// Makespan recomputed from machine assignment and per-machine order alone:
// each operation starts at the later of its machine predecessor's and job
// predecessor's completion.
inline std::int64_t fjsp_critical_path(const FjspInstance& x, const FjspSchedule& sched) {
  struct Item {
    std::int64_t start;
    int job;
    int op;
  };
  std::vector<std::vector<Item>> seq(static_cast<std::size_t>(x.num_machines));
  for (int j = 0; j < x.num_jobs; ++j)
    for (int i = 0; i < x.num_ops(j); ++i) {
      const auto& r = sched.ops[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
      seq[static_cast<std::size_t>(r.machine)].push_back({r.start, j, i});
    }
  for (auto& s : seq) std::sort(s.begin(), s.end(), [](const Item& a, const Item& b) { return a.start < b.start; });

  std::vector<std::vector<std::int64_t>> end(static_cast<std::size_t>(x.num_jobs));
  for (int j = 0; j < x.num_jobs; ++j) end[static_cast<std::size_t>(j)].assign(static_cast<std::size_t>(x.num_ops(j)), -1);
  std::vector<std::size_t> pos(seq.size(), 0);
  std::vector<std::int64_t> mach_end(seq.size(), 0);
  std::size_t remaining = static_cast<std::size_t>(x.total_ops());
  std::int64_t cmax = 0;
  while (remaining > 0) {
    bool progressed = false;
    for (std::size_t m = 0; m < seq.size(); ++m) {
      while (pos[m] < seq[m].size()) {
        const auto& it = seq[m][pos[m]];
        const std::int64_t job_end =
            it.op == 0 ? 0 : end[static_cast<std::size_t>(it.job)][static_cast<std::size_t>(it.op - 1)];
        if (job_end < 0) break;
        const std::int64_t start = std::max(job_end, mach_end[m]);
        const std::int64_t e = start + *x.op(it.job, it.op).time_on(static_cast<int>(m));
        end[static_cast<std::size_t>(it.job)][static_cast<std::size_t>(it.op)] = e;
        mach_end[m] = e;
        cmax = std::max(cmax, e);
        ++pos[m];
        --remaining;
        progressed = true;
      }
    }
    if (!progressed) throw ContractError("machine sequences contain a precedence cycle");
  }
  return cmax;
}

inline Json solution_to_json(const Solution& sol) {
  Json j;
  j["problem"] = std::string(to_string(kind_of(*sol.instance)));
  j["objective"] = objective(sol);
  j["skip_count"] = sol.skip_count;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        Json rows = Json::array();
        if constexpr (std::is_same_v<T, FjspSchedule>) {
          for (std::size_t jb = 0; jb < c.ops.size(); ++jb)
            for (std::size_t i = 0; i < c.ops[jb].size(); ++i) {
              const auto& r = c.ops[jb][i];
              rows.push_back({{"job", jb}, {"op", i}, {"machine", r.machine}, {"start", r.start}, {"end", r.end}});
            }
          j["gantt"] = rows;
        } else if constexpr (std::is_same_v<T, FfspSchedule>) {
          for (std::size_t s = 0; s < c.stages.size(); ++s)
            for (std::size_t jb = 0; jb < c.stages[s].size(); ++jb) {
              const auto& r = c.stages[s][jb];
              rows.push_back({{"stage", s}, {"job", jb}, {"machine", r.machine}, {"start", r.start}, {"end", r.end}});
            }
          j["gantt"] = rows;
        } else {
          for (std::size_t k = 0; k < c.routes.size(); ++k) rows.push_back({{"vehicle", k}, {"route", c.routes[k]}});
          j["routes"] = rows;
        }
      },
      sol.content);
  return j;
}

}  // namespace macsim
