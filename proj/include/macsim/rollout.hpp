#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "macsim/env.hpp"
#include "macsim/policy.hpp"
#include "macsim/rng.hpp"
#include "macsim/sampler.hpp"

namespace macsim {

enum class DecodeMode { greedy, sample, fixed_order, random_order };

inline std::string_view to_string(DecodeMode m) {
  switch (m) {
    case DecodeMode::greedy: return "greedy";
    case DecodeMode::sample: return "sample";
    case DecodeMode::fixed_order: return "fixed-order";
    case DecodeMode::random_order: return "random-order";
  }
  return "?";
}

inline DecodeMode parse_decode_mode(std::string_view s) {
  if (s == "greedy") return DecodeMode::greedy;
  if (s == "sample") return DecodeMode::sample;
  if (s == "fixed-order") return DecodeMode::fixed_order;
  if (s == "random-order") return DecodeMode::random_order;
  throw ConfigError("unknown decode mode '" + std::string(s) + "'");
}

struct RolloutStats {
  Trajectory trajectory;
  Solution solution;
  std::size_t forward_passes = 0;        // joint construction steps
  std::size_t single_action_passes = 0;  // pairs emitted, one per pass when decoding pair by pair
  std::size_t decision_pairs = 0;        // pairs where the agent had a real alternative
};

using ActionChooser = std::function<JointAction(const State&, const EdgeSet&)>;

/// Runs `choose` from reset to termination.
inline RolloutStats run_episode(std::shared_ptr<const ProblemInstance> instance, const ActionChooser& choose) {
  RolloutStats st;
  st.trajectory.instance = instance;
  State s = reset(std::move(instance));
  while (!s.terminal) {
    const EdgeSet e = feasible_edges(s);
    JointAction a = choose(s, e);
    ++st.forward_passes;
    st.single_action_passes += a.size();
    for (const auto& p : a) st.decision_pairs += e.has_real(p.agent) ? 1 : 0;
    s = step(s, a).state;
    st.trajectory.actions.push_back(std::move(a));
  }
  st.solution = solution(s);
  st.trajectory.objective = objective(st.solution);
  st.trajectory.skip_count = s.skip_count;
  return st;
}

inline SampledAction decode(const LogitMatrix& L, const EdgeSet& e, DecodeMode mode, Rng& rng) {
  switch (mode) {
    case DecodeMode::greedy: return greedy_joint(L, e);
    case DecodeMode::sample: return sample_joint(L, e, rng);
    case DecodeMode::fixed_order: return sample_fixed_order(L, e, rng);
    case DecodeMode::random_order: return sample_random_order(L, e, rng);
  }
  return {};
}

inline RolloutStats policy_rollout(const PolicyParams& params, std::shared_ptr<const ProblemInstance> instance,
                                   DecodeMode mode, Rng& rng) {
  return run_episode(std::move(instance), [&](const State& s, const EdgeSet& e) {
    const LogitMatrix L = forward(params, featurize(s));
    return decode(L, e, mode, rng).action;
  });
}

inline RolloutStats policy_rollout(const PolicyParams& params, const ProblemInstance& instance, DecodeMode mode,
                                   Rng& rng) {
  return policy_rollout(params, std::make_shared<const ProblemInstance>(instance), mode, rng);
}

/// Best of `k` sampled rollouts; rollout i draws from `rng.fork(i)`, so the
/// first k samples are shared across different k.
inline RolloutStats best_of_k(const PolicyParams& params, std::shared_ptr<const ProblemInstance> instance, int k,
                              const Rng& rng) {
  RolloutStats best;
  for (int i = 0; i < k; ++i) {
    Rng r = rng.fork(static_cast<std::uint64_t>(i));
    RolloutStats cur = policy_rollout(params, instance, DecodeMode::sample, r);
    if (i == 0 || cur.trajectory.objective < best.trajectory.objective) best = std::move(cur);
  }
  return best;
}

}  // namespace macsim
