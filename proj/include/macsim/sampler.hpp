#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "macsim/env.hpp"
#include "macsim/error.hpp"
#include "macsim/rng.hpp"

namespace macsim {

inline constexpr double kMaskedLogit = -1e9;

inline bool is_masked(double logit) noexcept { return logit <= kMaskedLogit / 2; }

/// Agent x (task + skip) compatibility scores. Column `num_tasks` is skip.
struct LogitMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  LogitMatrix() = default;
  LogitMatrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }
  bool operator==(const LogitMatrix&) const = default;
};

// Writes the sentinel into every entry outside `edges`.
inline LogitMatrix apply_mask(LogitMatrix L, const EdgeSet& edges) {
  for (int m = 0; m < L.rows; ++m)
    for (int c = 0; c < L.cols; ++c)
      if (!edges.has(m, c)) L(m, c) = kMaskedLogit;
  return L;
}

struct SampledAction {
  JointAction action;
  double log_prob = 0.0;
  std::vector<double> step_log_probs;
};

namespace detail {

inline void check_shapes(const LogitMatrix& L, const EdgeSet& edges) {
  if (L.rows != edges.num_agents || L.cols != edges.cols())
    throw ContractError("logit matrix shape " + std::to_string(L.rows) + "x" + std::to_string(L.cols) +
                        " does not match edge set " + std::to_string(edges.num_agents) + "x" +
                        std::to_string(edges.cols()));
}

// Sampler bookkeeping: which rows and real columns are still open.
//
// Skip rule: an agent may skip only if a real task has already been chosen,
// or if another undecided agent (for ordered decoding: a later one) still has
// an open real task. This keeps every partial sequence completable.
class PickState {
 public:
  PickState(const LogitMatrix& L, const EdgeSet& edges) : L_(L), edges_(edges) {
    check_shapes(L, edges);
    pending_.assign(static_cast<std::size_t>(edges.num_agents), 0);
    taken_.assign(static_cast<std::size_t>(edges.num_tasks), 0);
    for (int m = 0; m < edges.num_agents; ++m) pending_[static_cast<std::size_t>(m)] = edges.is_active(m) ? 1 : 0;
  }

  bool open(int m, int c) const {
    if (!edges_.has(m, c) || is_masked(L_(m, c))) return false;
    if (c < edges_.num_tasks) return !taken_[static_cast<std::size_t>(c)];
    return true;
  }

  bool has_open_real(int m) const {
    for (int c = 0; c < edges_.num_tasks; ++c)
      if (open(m, c)) return true;
    return false;
  }

  // Joint variant: any other pending agent.
  bool skip_allowed(int m) const {
    if (any_real_) return true;
    for (int o = 0; o < edges_.num_agents; ++o)
      if (o != m && pending_[static_cast<std::size_t>(o)] && has_open_real(o)) return true;
    return false;
  }

  // Ordered variant: only agents after position k of `order`.
  bool skip_allowed_ordered(const std::vector<int>& order, std::size_t k) const {
    if (any_real_) return true;
    for (std::size_t i = k + 1; i < order.size(); ++i)
      if (has_open_real(order[i])) return true;
    return false;
  }

  bool pending(int m) const { return pending_[static_cast<std::size_t>(m)] != 0; }

  void take(int m, int c) {
    pending_[static_cast<std::size_t>(m)] = 0;
    if (c < edges_.num_tasks) {
      taken_[static_cast<std::size_t>(c)] = 1;
      any_real_ = true;
    }
  }

 private:
  const LogitMatrix& L_;
  const EdgeSet& edges_;
  std::vector<std::uint8_t> pending_;
  std::vector<std::uint8_t> taken_;
  bool any_real_ = false;
};

struct Candidate {
  int agent;
  int col;
};

inline std::vector<Candidate> joint_candidates(const PickState& ps, const EdgeSet& edges) {
  std::vector<Candidate> out;
  for (int m = 0; m < edges.num_agents; ++m) {
    if (!ps.pending(m)) continue;
    for (int c = 0; c < edges.num_tasks; ++c)
      if (ps.open(m, c)) out.push_back({m, c});
    if (ps.open(m, edges.skip_col()) && ps.skip_allowed(m)) out.push_back({m, edges.skip_col()});
  }
  return out;
}

inline std::vector<Candidate> row_candidates(const PickState& ps, const EdgeSet& edges, const std::vector<int>& order,
                                             std::size_t k) {
  std::vector<Candidate> out;
  const int m = order[k];
  for (int c = 0; c < edges.num_tasks; ++c)
    if (ps.open(m, c)) out.push_back({m, c});
  if (ps.open(m, edges.skip_col()) && ps.skip_allowed_ordered(order, k)) out.push_back({m, edges.skip_col()});
  return out;
}

// Log-sum-exp over the candidate logits (shifted for stability).
inline double log_normalizer(const LogitMatrix& L, const std::vector<Candidate>& cands) {
  double mx = -std::numeric_limits<double>::infinity();
  for (const auto& c : cands) mx = std::max(mx, L(c.agent, c.col));
  double s = 0.0;
  for (const auto& c : cands) s += std::exp(L(c.agent, c.col) - mx);
  return mx + std::log(s);
}

inline std::size_t draw(const LogitMatrix& L, const std::vector<Candidate>& cands, double log_z, Rng& rng) {
  const double u = rng.unit();
  double acc = 0.0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    acc += std::exp(L(cands[i].agent, cands[i].col) - log_z);
    if (u < acc) return i;
  }
  return cands.size() - 1;
}

inline void record(SampledAction& out, const EdgeSet& edges, const Candidate& c, double lp) {
  out.action.push_back({c.agent, c.col == edges.skip_col() ? kSkip : c.col});
  out.step_log_probs.push_back(lp);
  out.log_prob += lp;
}

inline std::size_t count_active(const EdgeSet& edges) {
  std::size_t n = 0;
  for (int m = 0; m < edges.num_agents; ++m) n += edges.is_active(m) ? 1 : 0;
  return n;
}

[[noreturn]] inline void no_candidate(std::size_t step) {
  throw InfeasibleActionError("no feasible pair left at sampling step " + std::to_string(step));
}

}  // namespace detail

/// Sequential draws from the joint softmax over the remaining
/// feasible pairs, masking the chosen row and (real) column after each draw.
inline SampledAction sample_joint(const LogitMatrix& L, const EdgeSet& edges, Rng& rng) {
  detail::PickState ps(L, edges);
  SampledAction out;
  const std::size_t n = detail::count_active(edges);
  for (std::size_t k = 0; k < n; ++k) {
    const auto cands = detail::joint_candidates(ps, edges);
    if (cands.empty()) detail::no_candidate(k);
    const double log_z = detail::log_normalizer(L, cands);
    const auto& pick = cands[detail::draw(L, cands, log_z, rng)];
    detail::record(out, edges, pick, L(pick.agent, pick.col) - log_z);
    ps.take(pick.agent, pick.col);
  }
  return out;
}

// Argmax at every step; the first maximal (agent, column) pair wins.
inline SampledAction greedy_joint(const LogitMatrix& L, const EdgeSet& edges) {
  detail::PickState ps(L, edges);
  SampledAction out;
  const std::size_t n = detail::count_active(edges);
  for (std::size_t k = 0; k < n; ++k) {
    const auto cands = detail::joint_candidates(ps, edges);
    if (cands.empty()) detail::no_candidate(k);
    std::size_t best = 0;
    for (std::size_t i = 1; i < cands.size(); ++i)
      if (L(cands[i].agent, cands[i].col) > L(cands[best].agent, cands[best].col)) best = i;
    const double log_z = detail::log_normalizer(L, cands);
    detail::record(out, edges, cands[best], L(cands[best].agent, cands[best].col) - log_z);
    ps.take(cands[best].agent, cands[best].col);
  }
  return out;
}

/// Agents decide in `order`, each from a softmax over its own open entries.
inline SampledAction sample_ordered(const LogitMatrix& L, const EdgeSet& edges, const std::vector<int>& order,
                                    Rng& rng) {
  detail::PickState ps(L, edges);
  std::vector<int> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != edges.active_agents()) throw ContractError("order is not a permutation of the active agents");
  SampledAction out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto cands = detail::row_candidates(ps, edges, order, k);
    if (cands.empty()) detail::no_candidate(k);
    const double log_z = detail::log_normalizer(L, cands);
    const auto& pick = cands[detail::draw(L, cands, log_z, rng)];
    detail::record(out, edges, pick, L(pick.agent, pick.col) - log_z);
    ps.take(pick.agent, pick.col);
  }
  return out;
}

inline SampledAction sample_fixed_order(const LogitMatrix& L, const EdgeSet& edges, Rng& rng) {
  return sample_ordered(L, edges, edges.active_agents(), rng);
}

inline SampledAction sample_random_order(const LogitMatrix& L, const EdgeSet& edges, Rng& rng) {
  auto order = edges.active_agents();
  std::shuffle(order.begin(), order.end(), rng);
  return sample_ordered(L, edges, order, rng);
}

/// Log-probability of an ordered joint action under the joint sampler,
/// recomputed from scratch. Returns -inf when the sequence cannot be produced.
inline double sequence_log_prob(const LogitMatrix& L, const EdgeSet& edges, const JointAction& action) {
  detail::check_shapes(L, edges);
  const int M = edges.num_agents;
  const int N = edges.num_tasks;
  std::vector<bool> agent_used(static_cast<std::size_t>(M), false);
  std::vector<bool> task_used(static_cast<std::size_t>(N), false);
  bool real_seen = false;
  double total = 0.0;
  const auto usable = [&](int m, int c) {
    return edges.has(m, c) && !is_masked(L(m, c)) && (c == N || !task_used[static_cast<std::size_t>(c)]);
  };
  std::size_t active = 0;
  for (int m = 0; m < M; ++m) active += edges.is_active(m) ? 1 : 0;
  if (action.size() != active) return -std::numeric_limits<double>::infinity();

  for (const auto& a : action) {
    const int col = a.task == kSkip ? N : a.task;
    if (a.agent < 0 || a.agent >= M || col < 0 || col > N || agent_used[static_cast<std::size_t>(a.agent)])
      return -std::numeric_limits<double>::infinity();
    std::vector<double> pool;
    double chosen = 0.0;
    bool chosen_ok = false;
    for (int m = 0; m < M; ++m) {
      if (agent_used[static_cast<std::size_t>(m)] || !edges.is_active(m)) continue;
      bool other_real = false;
      if (!real_seen)
        for (int o = 0; o < M && !other_real; ++o) {
          if (o == m || agent_used[static_cast<std::size_t>(o)] || !edges.is_active(o)) continue;
          for (int c = 0; c < N && !other_real; ++c) other_real = usable(o, c);
        }
      for (int c = 0; c <= N; ++c) {
        if (!usable(m, c)) continue;
        if (c == N && !real_seen && !other_real) continue;
        pool.push_back(L(m, c));
        if (m == a.agent && c == col) {
          chosen = L(m, c);
          chosen_ok = true;
        }
      }
    }
    if (!chosen_ok) return -std::numeric_limits<double>::infinity();
    const double mx = *std::max_element(pool.begin(), pool.end());
    double s = 0.0;
    for (double v : pool) s += std::exp(v - mx);
    total += chosen - (mx + std::log(s));
    agent_used[static_cast<std::size_t>(a.agent)] = true;
    if (col < N) {
      task_used[static_cast<std::size_t>(col)] = true;
      real_seen = true;
    }
  }
  return total;
}

}  // namespace macsim
