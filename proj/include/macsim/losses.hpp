#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "macsim/env.hpp"
#include "macsim/error.hpp"
#include "macsim/sampler.hpp"

namespace macsim {

/// One imitation target: the masked logits of a state and the expert's
/// joint action in the order it was generated.
struct ExpertStep {
  LogitMatrix logits;
  EdgeSet edges;
  JointAction action;
};

struct LossResult {
  double value = 0.0;
  LogitMatrix grad;  // dLoss/dLogits, zero on masked entries
};

enum class LossKind { sa, ml, pl, ce };

inline std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::sa: return "sa";
    case LossKind::ml: return "ml";
    case LossKind::pl: return "pl";
    case LossKind::ce: return "ce";
  }
  return "?";
}

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "sa") return LossKind::sa;
  if (s == "ml") return LossKind::ml;
  if (s == "pl") return LossKind::pl;
  if (s == "ce") return LossKind::ce;
  throw ConfigError("unknown loss '" + std::string(s) + "' (expected sa, ml, pl or ce)");
}

namespace detail {

// Adds softmax(cands) to grad and returns the log normalizer.
inline double add_softmax(const LogitMatrix& L, const std::vector<Candidate>& cands, LogitMatrix& grad) {
  const double log_z = log_normalizer(L, cands);
  for (const auto& c : cands) grad(c.agent, c.col) += std::exp(L(c.agent, c.col) - log_z);
  return log_z;
}

inline bool contains(const std::vector<Candidate>& cands, int agent, int col) {
  for (const auto& c : cands)
    if (c.agent == agent && c.col == col) return true;
  return false;
}

[[noreturn]] inline void expert_not_feasible(const Assignment& a, std::size_t k) {
  throw InfeasibleActionError("expert pair (" + std::to_string(a.agent) + ", " +
                              (a.is_skip() ? std::string("skip") : std::to_string(a.task)) +
                              ") is not available at step " + std::to_string(k));
}

inline std::vector<Candidate> all_pairs(const LogitMatrix& L, const EdgeSet& edges) {
  std::vector<Candidate> out;
  for (int m = 0; m < edges.num_agents; ++m)
    for (int c = 0; c < edges.cols(); ++c)
      if (edges.has(m, c) && !is_masked(L(m, c))) out.push_back({m, c});
  return out;
}

inline std::vector<Candidate> row_pairs(const LogitMatrix& L, const EdgeSet& edges, int m) {
  std::vector<Candidate> out;
  for (int c = 0; c < edges.cols(); ++c)
    if (edges.has(m, c) && !is_masked(L(m, c))) out.push_back({m, c});
  return out;
}

}  // namespace detail

/// Every expert pair scored against the softmax over the whole pair pool.
inline LossResult loss_sa(const ExpertStep& s) {
  detail::check_shapes(s.logits, s.edges);
  LossResult r{0.0, LogitMatrix(s.logits.rows, s.logits.cols)};
  const auto pool = detail::all_pairs(s.logits, s.edges);
  const double log_z = detail::log_normalizer(s.logits, pool);
  for (std::size_t k = 0; k < s.action.size(); ++k) {
    const auto& a = s.action[k];
    const int col = s.edges.column(a.task);
    if (!detail::contains(pool, a.agent, col)) detail::expert_not_feasible(a, k);
    r.value -= s.logits(a.agent, col) - log_z;
    r.grad(a.agent, col) -= 1.0;
  }
  const double K = static_cast<double>(s.action.size());
  for (const auto& c : pool) r.grad(c.agent, c.col) += K * std::exp(s.logits(c.agent, c.col) - log_z);
  return r;
}

/// Negative log-likelihood of the ordered expert sequence under the joint sampler.
inline LossResult loss_ml(const ExpertStep& s) {
  detail::PickState ps(s.logits, s.edges);
  LossResult r{0.0, LogitMatrix(s.logits.rows, s.logits.cols)};
  for (std::size_t k = 0; k < s.action.size(); ++k) {
    const auto& a = s.action[k];
    const int col = s.edges.column(a.task);
    const auto cands = detail::joint_candidates(ps, s.edges);
    if (!detail::contains(cands, a.agent, col)) detail::expert_not_feasible(a, k);
    const double log_z = detail::add_softmax(s.logits, cands, r.grad);
    r.value -= s.logits(a.agent, col) - log_z;
    r.grad(a.agent, col) -= 1.0;
    ps.take(a.agent, col);
  }
  return r;
}

/// Plackett-Luce: agents in expert order, each over its own remaining tasks.
inline LossResult loss_pl(const ExpertStep& s) {
  detail::PickState ps(s.logits, s.edges);
  LossResult r{0.0, LogitMatrix(s.logits.rows, s.logits.cols)};
  std::vector<int> order;
  for (const auto& a : s.action) order.push_back(a.agent);
  for (std::size_t k = 0; k < s.action.size(); ++k) {
    const auto& a = s.action[k];
    const int col = s.edges.column(a.task);
    const auto cands = detail::row_candidates(ps, s.edges, order, k);
    if (!detail::contains(cands, a.agent, col)) detail::expert_not_feasible(a, k);
    const double log_z = detail::add_softmax(s.logits, cands, r.grad);
    r.value -= s.logits(a.agent, col) - log_z;
    r.grad(a.agent, col) -= 1.0;
    ps.take(a.agent, col);
  }
  return r;
}

/// Independent per-agent row cross-entropy over the row's feasible entries.
/// Contributions are accumulated by agent id, so the value does not depend
/// on the order of the expert list.
inline LossResult loss_ce(const ExpertStep& s) {
  detail::check_shapes(s.logits, s.edges);
  LossResult r{0.0, LogitMatrix(s.logits.rows, s.logits.cols)};
  std::vector<int> target(static_cast<std::size_t>(s.edges.num_agents), -2);
  for (std::size_t k = 0; k < s.action.size(); ++k) {
    const auto& a = s.action[k];
    if (a.agent < 0 || a.agent >= s.edges.num_agents) detail::expert_not_feasible(a, k);
    const int col = s.edges.column(a.task);
    if (col < 0 || col >= s.edges.cols() || !s.edges.has(a.agent, col) || is_masked(s.logits(a.agent, col)))
      detail::expert_not_feasible(a, k);
    target[static_cast<std::size_t>(a.agent)] = col;
  }
  for (int m = 0; m < s.edges.num_agents; ++m) {
    const int col = target[static_cast<std::size_t>(m)];
    if (col == -2) continue;
    const auto row = detail::row_pairs(s.logits, s.edges, m);
    const double log_z = detail::add_softmax(s.logits, row, r.grad);
    r.value -= s.logits(m, col) - log_z;
    r.grad(m, col) -= 1.0;
  }
  return r;
}

inline LossResult compute_loss(LossKind kind, const ExpertStep& s) {
  switch (kind) {
    case LossKind::sa: return loss_sa(s);
    case LossKind::ml: return loss_ml(s);
    case LossKind::pl: return loss_pl(s);
    case LossKind::ce: return loss_ce(s);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Skip penalty.

/// lambda(e) = lambda0 * gamma^e.
struct PenaltySchedule {
  double lambda0 = 0.0;
  double gamma = 0.9;
};

inline void validate(const PenaltySchedule& p) {
  if (!(p.lambda0 >= 0.0) || !std::isfinite(p.lambda0)) throw ConfigError("penalty lambda0 must be finite and >= 0");
  if (!(p.gamma > 0.0 && p.gamma < 1.0)) throw ConfigError("penalty gamma must lie in (0, 1)");
}

inline double penalty(const PenaltySchedule& p, int epoch) { return p.lambda0 * std::pow(p.gamma, epoch); }

inline double penalized_objective(double objective, int skips, double lambda) {
  return skips == 0 ? objective : objective + lambda * static_cast<double>(skips);
}

// lambda0 = 0.1 * mean edge weight; gamma such that the last epoch sees 1% of lambda0.
inline PenaltySchedule default_penalty(double mean_edge_weight, int epochs) {
  PenaltySchedule p;
  p.lambda0 = 0.1 * mean_edge_weight;
  p.gamma = epochs >= 2 ? std::pow(0.01, 1.0 / static_cast<double>(epochs - 1)) : 0.01;
  return p;
}

}  // namespace macsim
