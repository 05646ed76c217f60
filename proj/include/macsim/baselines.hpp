#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "macsim/env.hpp"
#include "macsim/error.hpp"
#include "macsim/rng.hpp"
#include "macsim/rollout.hpp"
#include "macsim/sampler.hpp"

namespace macsim {

enum class DispatchRule { fifo, mor, mwkr };

inline DispatchRule parse_dispatch_rule(std::string_view s) {
  if (s == "fifo") return DispatchRule::fifo;
  if (s == "mor") return DispatchRule::mor;
  if (s == "mwkr") return DispatchRule::mwkr;
  throw ConfigError("unknown dispatching rule '" + std::string(s) + "'");
}

namespace detail {

// Agents in id order each take their highest-priority untaken real task;
// `better(state, agent, a, b)` is true when task a beats task b.
template <class Better>
JointAction greedy_by_agent(const State& s, const EdgeSet& e, Better&& better) {
  JointAction act;
  std::vector<std::uint8_t> taken(static_cast<std::size_t>(e.num_tasks), 0);
  for (int m : e.active_agents()) {
    int pick = kSkip;
    for (int c = 0; c < e.num_tasks; ++c) {
      if (!e.has(m, c) || taken[static_cast<std::size_t>(c)]) continue;
      if (pick == kSkip || better(s, m, c, pick)) pick = c;
    }
    if (pick != kSkip) taken[static_cast<std::size_t>(pick)] = 1;
    act.push_back({m, pick});
  }
  return act;
}

inline double remaining_work(const FjspInstance& x, const FjspDynamics& d, int j) {
  double w = 0.0;
  for (int i = d.next_op[static_cast<std::size_t>(j)]; i < x.num_ops(j); ++i) w += x.op(j, i).mean_time();
  return w;
}

}  // namespace detail

/// Dispatching rules on FJSP. Ties go to the lower job id.
inline RolloutStats dispatch_fjsp(const FjspInstance& instance, DispatchRule rule) {
  const auto inst = std::make_shared<const ProblemInstance>(instance);
  return run_episode(inst, [rule](const State& s, const EdgeSet& e) {
    const auto& x = std::get<FjspInstance>(*s.instance);
    const auto& d = std::get<FjspDynamics>(s.dyn);
    return detail::greedy_by_agent(s, e, [&](const State&, int, int a, int b) {
      switch (rule) {
        case DispatchRule::fifo: return d.job_ready[static_cast<std::size_t>(a)] < d.job_ready[static_cast<std::size_t>(b)];
        case DispatchRule::mor:
          return x.num_ops(a) - d.next_op[static_cast<std::size_t>(a)] > x.num_ops(b) - d.next_op[static_cast<std::size_t>(b)];
        case DispatchRule::mwkr: return detail::remaining_work(x, d, a) > detail::remaining_work(x, d, b);
      }
      return false;
    });
  });
}

/// Each free machine takes the ready job with the shortest processing time on it.
inline RolloutStats sjf_ffsp(const FfspInstance& instance) {
  const auto inst = std::make_shared<const ProblemInstance>(instance);
  return run_episode(inst, [](const State& s, const EdgeSet& e) {
    return detail::greedy_by_agent(s, e, [&](const State&, int m, int a, int b) { return e.weight[e.index(m, a)] < e.weight[e.index(m, b)]; });
  });
}

/// Each vehicle serves its nearest feasible customer, returning to the depot when none fits.
inline RolloutStats nearest_hcvrp(const HcvrpInstance& instance) {
  const auto inst = std::make_shared<const ProblemInstance>(instance);
  return run_episode(inst, [](const State& s, const EdgeSet& e) {
    const auto& x = std::get<HcvrpInstance>(*s.instance);
    const auto& d = std::get<HcvrpDynamics>(s.dyn);
    return detail::greedy_by_agent(s, e, [&](const State&, int k, int a, int b) {
      const Point& p = x.node(d.position[static_cast<std::size_t>(k)]);
      return distance(p, x.customers[static_cast<std::size_t>(a)]) < distance(p, x.customers[static_cast<std::size_t>(b)]);
    });
  });
}

/// Joint sampling from all-zero logits at every step.
inline RolloutStats random_policy(const ProblemInstance& instance, Rng& rng) {
  const auto inst = std::make_shared<const ProblemInstance>(instance);
  return run_episode(inst, [&rng](const State&, const EdgeSet& e) {
    return sample_joint(LogitMatrix(e.num_agents, e.cols()), e, rng).action;
  });
}

}  // namespace macsim
