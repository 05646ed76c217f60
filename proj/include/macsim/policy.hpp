#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "macsim/autodiff.hpp"
#include "macsim/env.hpp"
#include "macsim/error.hpp"
#include "macsim/losses.hpp"
#include "macsim/rng.hpp"
#include "macsim/sampler.hpp"

namespace macsim {

// ---------------------------------------------------------------------------
// Features.

/// Network input for one state.
///
/// Scheduling agents (machines): ready-time delta, busy flag, queue length.
/// Scheduling tasks (jobs): remaining-ops fraction, remaining-work fraction,
/// ready-time delta. HCVRP agents: x, y, residual-capacity fraction,
/// route-cost fraction. HCVRP tasks: x, y, demand over largest capacity.
/// `edge` holds the agent-task weight min-max normalized over the instance.
struct StateFeatures {
  Tensor agent;
  Tensor task;
  Tensor edge;                          // agents x tasks
  std::vector<std::uint8_t> task_open;  // 1 while the task is unfinished
  EdgeSet edges;
  bool operator==(const StateFeatures&) const = default;
};

inline int agent_feature_dim(ProblemKind k) { return k == ProblemKind::hcvrp ? 4 : 3; }
inline int task_feature_dim(ProblemKind) { return 3; }

namespace detail {

inline double minmax(double w, double lo, double hi) {
  if (hi <= lo) return hi > 0.0 ? w / hi : 0.0;
  return (w - lo) / (hi - lo);
}

inline StateFeatures featurize_fjsp(const State& s) {
  const auto& x = std::get<FjspInstance>(*s.instance);
  const auto& d = std::get<FjspDynamics>(s.dyn);
  const int M = x.num_machines;
  const int N = x.num_jobs;
  double total_work = 0.0;
  int lo = std::numeric_limits<int>::max();
  int hi = 0;
  for (const auto& job : x.jobs)
    for (const auto& op : job) {
      total_work += op.mean_time();
      for (const auto& o : op.options) {
        lo = std::min(lo, o.time);
        hi = std::max(hi, o.time);
      }
    }
  const double T = std::max(1.0, total_work / M);

  StateFeatures f;
  f.agent = Tensor(M, 3);
  f.task = Tensor(N, 3);
  f.edge = Tensor(M, N);
  f.task_open.assign(static_cast<std::size_t>(N), 0);
  std::vector<int> queue(static_cast<std::size_t>(M), 0);
  for (int j = 0; j < N; ++j) {
    const int i = d.next_op[static_cast<std::size_t>(j)];
    const int n_ops = x.num_ops(j);
    if (i >= n_ops) continue;
    f.task_open[static_cast<std::size_t>(j)] = 1;
    double job_work = 0.0;
    double rem_work = 0.0;
    for (int k = 0; k < n_ops; ++k) {
      job_work += x.op(j, k).mean_time();
      if (k >= i) rem_work += x.op(j, k).mean_time();
    }
    f.task(j, 0) = static_cast<double>(n_ops - i) / n_ops;
    f.task(j, 1) = rem_work / job_work;
    f.task(j, 2) = static_cast<double>(std::max<std::int64_t>(0, d.job_ready[static_cast<std::size_t>(j)] - s.now)) / T;
    for (const auto& o : x.op(j, i).options) {
      ++queue[static_cast<std::size_t>(o.machine)];
      f.edge(o.machine, j) = minmax(o.time, lo, hi);
    }
  }
  for (int m = 0; m < M; ++m) {
    const std::int64_t delta = d.machine_free[static_cast<std::size_t>(m)] - s.now;
    f.agent(m, 0) = static_cast<double>(std::max<std::int64_t>(0, delta)) / T;
    f.agent(m, 1) = delta > 0 ? 1.0 : 0.0;
    f.agent(m, 2) = static_cast<double>(queue[static_cast<std::size_t>(m)]) / N;
  }
  return f;
}

inline StateFeatures featurize_ffsp(const State& s) {
  const auto& x = std::get<FfspInstance>(*s.instance);
  const auto& d = std::get<FfspDynamics>(s.dyn);
  const int M = x.num_machines();
  const int N = x.num_jobs;
  int lo = std::numeric_limits<int>::max();
  int hi = 0;
  double total_work = 0.0;
  std::vector<std::vector<double>> mean(static_cast<std::size_t>(x.num_stages));
  for (int st = 0; st < x.num_stages; ++st)
    for (int j = 0; j < N; ++j) {
      double sum = 0.0;
      for (int k = 0; k < x.machines_per_stage[static_cast<std::size_t>(st)]; ++k) {
        const int p = x.time(st, j, k);
        lo = std::min(lo, p);
        hi = std::max(hi, p);
        sum += p;
      }
      mean[static_cast<std::size_t>(st)].push_back(sum / x.machines_per_stage[static_cast<std::size_t>(st)]);
      total_work += mean[static_cast<std::size_t>(st)].back() / x.machines_per_stage[static_cast<std::size_t>(st)];
    }
  const double T = std::max(1.0, total_work);

  StateFeatures f;
  f.agent = Tensor(M, 3);
  f.task = Tensor(N, 3);
  f.edge = Tensor(M, N);
  f.task_open.assign(static_cast<std::size_t>(N), 0);
  std::vector<int> stage_queue(static_cast<std::size_t>(x.num_stages), 0);
  for (int j = 0; j < N; ++j) {
    const int st = d.next_stage[static_cast<std::size_t>(j)];
    if (st >= x.num_stages) continue;
    f.task_open[static_cast<std::size_t>(j)] = 1;
    ++stage_queue[static_cast<std::size_t>(st)];
    double job_work = 0.0;
    double rem_work = 0.0;
    for (int k = 0; k < x.num_stages; ++k) {
      job_work += mean[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
      if (k >= st) rem_work += mean[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
    }
    f.task(j, 0) = static_cast<double>(x.num_stages - st) / x.num_stages;
    f.task(j, 1) = rem_work / job_work;
    f.task(j, 2) = static_cast<double>(std::max<std::int64_t>(0, d.job_ready[static_cast<std::size_t>(j)] - s.now)) / T;
    for (int k = 0; k < x.machines_per_stage[static_cast<std::size_t>(st)]; ++k)
      f.edge(x.stage_offset(st) + k, j) = minmax(x.time(st, j, k), lo, hi);
  }
  for (int m = 0; m < M; ++m) {
    const std::int64_t delta = d.machine_free[static_cast<std::size_t>(m)] - s.now;
    f.agent(m, 0) = static_cast<double>(std::max<std::int64_t>(0, delta)) / T;
    f.agent(m, 1) = delta > 0 ? 1.0 : 0.0;
    f.agent(m, 2) = static_cast<double>(stage_queue[static_cast<std::size_t>(x.stage_of(m))]) / N;
  }
  return f;
}

inline StateFeatures featurize_hcvrp(const State& s) {
  const auto& x = std::get<HcvrpInstance>(*s.instance);
  const auto& d = std::get<HcvrpDynamics>(s.dyn);
  const int K = x.num_vehicles();
  const int N = x.num_customers();
  const int max_cap = *std::max_element(x.capacity.begin(), x.capacity.end());
  const double min_speed = *std::min_element(x.speed.begin(), x.speed.end());
  const double max_cost = std::numbers::sqrt2 / min_speed;
  double worst = 0.0;
  for (double c : d.route_cost) worst = std::max(worst, c);

  StateFeatures f;
  f.agent = Tensor(K, 4);
  f.task = Tensor(N, 3);
  f.edge = Tensor(K, N);
  f.task_open.assign(static_cast<std::size_t>(N), 0);
  for (int k = 0; k < K; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const Point& p = x.node(d.position[ks]);
    f.agent(k, 0) = p.x;
    f.agent(k, 1) = p.y;
    f.agent(k, 2) = static_cast<double>(d.residual[ks]) / x.capacity[ks];
    f.agent(k, 3) = worst > 0.0 ? d.route_cost[ks] / worst : 0.0;
  }
  for (int c = 0; c < N; ++c) {
    const auto cs = static_cast<std::size_t>(c);
    f.task(c, 0) = x.customers[cs].x;
    f.task(c, 1) = x.customers[cs].y;
    f.task(c, 2) = static_cast<double>(x.demand[cs]) / max_cap;
    if (d.served[cs]) continue;
    f.task_open[cs] = 1;
    for (int k = 0; k < K; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      f.edge(k, c) = minmax(distance(x.node(d.position[ks]), x.customers[cs]) / x.speed[ks], 0.0, max_cost);
    }
  }
  return f;
}

}  // namespace detail

inline StateFeatures featurize(const State& s) {
  if (s.terminal) throw ContractError("featurize called on a terminal state");
  StateFeatures f;
  switch (kind_of(*s.instance)) {
    case ProblemKind::fjsp: f = detail::featurize_fjsp(s); break;
    case ProblemKind::ffsp: f = detail::featurize_ffsp(s); break;
    case ProblemKind::hcvrp: f = detail::featurize_hcvrp(s); break;
  }
  f.edges = feasible_edges(s);
  return f;
}

// ---------------------------------------------------------------------------
// Parameters.

struct PolicyConfig {
  ProblemKind problem = ProblemKind::fjsp;
  int d = 32;
  int heads = 4;
  int layers = 2;
  int ffn_hidden = 64;
  int mix_hidden = 16;
  double clip = 10.0;
  double dropout = 0.1;
  bool operator==(const PolicyConfig&) const = default;
};

inline void validate(const PolicyConfig& c) {
  if (c.d < 1 || c.heads < 1 || c.d % c.heads != 0) throw ConfigError("model width must be a positive multiple of heads");
  if (c.layers < 0 || c.ffn_hidden < 1 || c.mix_hidden < 1) throw ConfigError("invalid model layer sizes");
  if (!(c.clip > 0.0)) throw ConfigError("pointer scale must be positive");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

using TensorVisitor = std::function<void(const std::string&, Tensor&)>;

struct Linear {
  Tensor W;
  Tensor b;
  void init(int in, int out, Rng& rng) {
    const double a = 1.0 / std::sqrt(static_cast<double>(in));
    W = Tensor(in, out);
    b = Tensor(1, out);
    for (double& v : W.data) v = rng.uniform_real(-a, a);
    for (double& v : b.data) v = rng.uniform_real(-a, a);
  }
  void for_each(const std::string& p, const TensorVisitor& f) {
    f(p + ".W", W);
    f(p + ".b", b);
  }
};

struct Norm {
  Tensor gamma;
  Tensor beta;
  void init(int d) {
    gamma = Tensor(1, d, 1.0);
    beta = Tensor(1, d, 0.0);
  }
  void for_each(const std::string& p, const TensorVisitor& f) {
    f(p + ".gamma", gamma);
    f(p + ".beta", beta);
  }
};

// Per-head score fusion MLP: (attention score, edge weight) -> score.
struct Mixer {
  Tensor W1, b1, W2, b2;
  void init(int hidden, Rng& rng) {
    const double a1 = 1.0 / std::sqrt(2.0);
    const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    W1 = Tensor(2, hidden);
    b1 = Tensor(1, hidden);
    W2 = Tensor(hidden, 1);
    b2 = Tensor(1, 1);
    for (double& v : W1.data) v = rng.uniform_real(-a1, a1);
    for (double& v : b1.data) v = rng.uniform_real(-a1, a1);
    for (double& v : W2.data) v = rng.uniform_real(-a2, a2);
    for (double& v : b2.data) v = rng.uniform_real(-a2, a2);
  }
  void for_each(const std::string& p, const TensorVisitor& f) {
    f(p + ".W1", W1);
    f(p + ".b1", b1);
    f(p + ".W2", W2);
    f(p + ".b2", b2);
  }
};

// Queries from one node type, keys/values from the other, scores fused with edge weights.
struct CrossBlock {
  Linear q, k, v, o;
  std::vector<Mixer> mix;
  Norm norm;
  void init(const PolicyConfig& c, Rng& rng) {
    q.init(c.d, c.d, rng);
    k.init(c.d, c.d, rng);
    v.init(c.d, c.d, rng);
    o.init(c.d, c.d, rng);
    mix.resize(static_cast<std::size_t>(c.heads));
    for (auto& m : mix) m.init(c.mix_hidden, rng);
    norm.init(c.d);
  }
  void for_each(const std::string& p, const TensorVisitor& f) {
    q.for_each(p + ".q", f);
    k.for_each(p + ".k", f);
    v.for_each(p + ".v", f);
    o.for_each(p + ".o", f);
    for (std::size_t h = 0; h < mix.size(); ++h) mix[h].for_each(p + ".mix" + std::to_string(h), f);
    norm.for_each(p + ".norm", f);
  }
};

struct SelfBlock {
  Linear q, k, v, o, ff1, ff2;
  Norm norm1, norm2;
  void init(const PolicyConfig& c, Rng& rng) {
    q.init(c.d, c.d, rng);
    k.init(c.d, c.d, rng);
    v.init(c.d, c.d, rng);
    o.init(c.d, c.d, rng);
    ff1.init(c.d, c.ffn_hidden, rng);
    ff2.init(c.ffn_hidden, c.d, rng);
    norm1.init(c.d);
    norm2.init(c.d);
  }
  void for_each(const std::string& p, const TensorVisitor& f) {
    q.for_each(p + ".q", f);
    k.for_each(p + ".k", f);
    v.for_each(p + ".v", f);
    o.for_each(p + ".o", f);
    ff1.for_each(p + ".ff1", f);
    ff2.for_each(p + ".ff2", f);
    norm1.for_each(p + ".norm1", f);
    norm2.for_each(p + ".norm2", f);
  }
};

struct EncoderLayer {
  CrossBlock cross_agent, cross_task;
  SelfBlock self_agent, self_task;
  void init(const PolicyConfig& c, Rng& rng) {
    cross_agent.init(c, rng);
    cross_task.init(c, rng);
    self_agent.init(c, rng);
    self_task.init(c, rng);
  }
  void for_each(const std::string& p, const TensorVisitor& f) {
    cross_agent.for_each(p + ".cross_agent", f);
    cross_task.for_each(p + ".cross_task", f);
    self_agent.for_each(p + ".self_agent", f);
    self_task.for_each(p + ".self_task", f);
  }
};

struct PolicyParams {
  PolicyConfig config;
  Linear agent_in, task_in;
  std::vector<EncoderLayer> layers;
  Tensor dec_q, dec_k, skip;

  void for_each(const TensorVisitor& f) {
    agent_in.for_each("agent_in", f);
    task_in.for_each("task_in", f);
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l].for_each("layer" + std::to_string(l), f);
    f("dec_q", dec_q);
    f("dec_k", dec_k);
    f("skip", skip);
  }
  void visit(const std::function<void(const std::string&, const Tensor&)>& f) const {
    const_cast<PolicyParams*>(this)->for_each(TensorVisitor([&](const std::string& n, Tensor& t) { f(n, t); }));
  }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
  }

  // Same shapes, all zeros.
  PolicyParams zeros_like() const {
    PolicyParams z = *this;
    z.for_each(TensorVisitor([](const std::string&, Tensor& t) { std::fill(t.data.begin(), t.data.end(), 0.0); }));
    return z;
  }
};

inline PolicyParams init_policy(const PolicyConfig& c, std::uint64_t seed) {
  validate(c);
  Rng rng(seed);
  PolicyParams p;
  p.config = c;
  p.agent_in.init(agent_feature_dim(c.problem), c.d, rng);
  p.task_in.init(task_feature_dim(c.problem), c.d, rng);
  p.layers.resize(static_cast<std::size_t>(c.layers));
  for (auto& l : p.layers) l.init(c, rng);
  const double a = 1.0 / std::sqrt(static_cast<double>(c.d));
  p.dec_q = Tensor(c.d, c.d);
  p.dec_k = Tensor(c.d, c.d);
  p.skip = Tensor(1, c.d);
  for (double& v : p.dec_q.data) v = rng.uniform_real(-a, a);
  for (double& v : p.dec_k.data) v = rng.uniform_real(-a, a);
  for (double& v : p.skip.data) v = rng.uniform_real(-1.0, 1.0);
  return p;
}

// ---------------------------------------------------------------------------
// Forward pass.

struct ForwardOptions {
  bool train = false;  // enables dropout
  Rng* rng = nullptr;  // required when train is set and dropout > 0
};

namespace detail {

class Net {
 public:
  Net(const PolicyParams& p, PolicyParams* grads, Graph& g, const ForwardOptions& opt)
      : p_(p), grads_(grads), g_(g), opt_(opt) {}

  Graph::Var logits(const StateFeatures& f) {
    const auto& c = p_.config;
    const int M = f.agent.rows;
    const int N = f.task.rows;
    if (f.agent.cols != agent_feature_dim(c.problem) || f.task.cols != task_feature_dim(c.problem) ||
        f.edge.rows != M || f.edge.cols != N)
      throw ContractError("feature shapes do not match the policy configuration");
    const Tensor edge_t = transpose(f.edge);
    const std::vector<std::uint8_t> all_agents(static_cast<std::size_t>(M), 1);

    auto hm = linear(g_.constant(f.agent), p_.agent_in, grad_ptr(&PolicyParams::agent_in));
    auto hv = linear(g_.constant(f.task), p_.task_in, grad_ptr(&PolicyParams::task_in));
    for (std::size_t l = 0; l < p_.layers.size(); ++l) {
      const auto& L = p_.layers[l];
      EncoderLayer* G = grads_ ? &grads_->layers[l] : nullptr;
      const auto hm_cross = cross(hm, hv, f.edge, f.task_open, L.cross_agent, G ? &G->cross_agent : nullptr);
      const auto hv_cross = cross(hv, hm, edge_t, all_agents, L.cross_task, G ? &G->cross_task : nullptr);
      hm = self(hm_cross, all_agents, L.self_agent, G ? &G->self_agent : nullptr);
      hv = self(hv_cross, f.task_open, L.self_task, G ? &G->self_task : nullptr);
      if (!g_.value(hm).all_finite() || !g_.value(hv).all_finite())
        throw NumericError("non-finite activation in encoder layer " + std::to_string(l));
    }
    const auto skip = param(p_.skip, grads_ ? &grads_->skip : nullptr);
    const auto keys = g_.matmul(g_.concat_rows(hv, skip), param(p_.dec_k, grads_ ? &grads_->dec_k : nullptr));
    const auto queries = g_.matmul(hm, param(p_.dec_q, grads_ ? &grads_->dec_q : nullptr));
    const auto scores = g_.scale(g_.matmul_nt(queries, keys), 1.0 / std::sqrt(static_cast<double>(c.d)));
    const auto out = g_.scale(g_.tanh(scores), c.clip);
    if (!g_.value(out).all_finite()) throw NumericError("non-finite activation in decoder");
    return out;
  }

 private:
  static Tensor transpose(const Tensor& t) {
    Tensor r(t.cols, t.rows);
    for (int i = 0; i < t.rows; ++i)
      for (int j = 0; j < t.cols; ++j) r(j, i) = t(i, j);
    return r;
  }

  Linear* grad_ptr(Linear PolicyParams::*member) { return grads_ ? &(grads_->*member) : nullptr; }

  Graph::Var param(const Tensor& t, Tensor* sink) { return g_.param(t, sink); }

  Graph::Var linear(Graph::Var x, const Linear& l, Linear* gl) {
    const auto W = param(l.W, gl ? &gl->W : nullptr);
    const auto b = param(l.b, gl ? &gl->b : nullptr);
    return g_.add_row(g_.matmul(x, W), b);
  }

  Graph::Var norm(Graph::Var x, const Norm& n, Norm* gn) {
    return g_.layer_norm(x, param(n.gamma, gn ? &gn->gamma : nullptr), param(n.beta, gn ? &gn->beta : nullptr));
  }

  Graph::Var attention_out(const std::vector<Graph::Var>& heads, const Linear& o, Linear* go) {
    auto cat = g_.concat_cols(heads);
    if (opt_.train && p_.config.dropout > 0.0) {
      if (!opt_.rng) throw ContractError("training forward pass requires an rng for dropout");
      cat = g_.dropout(cat, p_.config.dropout, *opt_.rng);
    }
    return linear(cat, o, go);
  }

  Graph::Var cross(Graph::Var x, Graph::Var other, const Tensor& edge, const std::vector<std::uint8_t>& key_mask,
                   const CrossBlock& b, CrossBlock* gb) {
    const auto& c = p_.config;
    const int dk = c.d / c.heads;
    const auto Q = linear(x, b.q, gb ? &gb->q : nullptr);
    const auto K = linear(other, b.k, gb ? &gb->k : nullptr);
    const auto V = linear(other, b.v, gb ? &gb->v : nullptr);
    std::vector<Graph::Var> heads;
    for (int h = 0; h < c.heads; ++h) {
      const auto qh = g_.slice_cols(Q, h * dk, dk);
      const auto kh = g_.slice_cols(K, h * dk, dk);
      const auto vh = g_.slice_cols(V, h * dk, dk);
      const auto A = g_.scale(g_.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dk)));
      const Mixer& mx = b.mix[static_cast<std::size_t>(h)];
      Mixer* gm = gb ? &gb->mix[static_cast<std::size_t>(h)] : nullptr;
      const auto S = g_.mixed_score(A, edge, param(mx.W1, gm ? &gm->W1 : nullptr), param(mx.b1, gm ? &gm->b1 : nullptr),
                                    param(mx.W2, gm ? &gm->W2 : nullptr), param(mx.b2, gm ? &gm->b2 : nullptr));
      heads.push_back(g_.matmul(g_.softmax_rows(S, key_mask), vh));
    }
    const auto att = attention_out(heads, b.o, gb ? &gb->o : nullptr);
    return norm(g_.add(x, att), b.norm, gb ? &gb->norm : nullptr);
  }

  Graph::Var self(Graph::Var x, const std::vector<std::uint8_t>& key_mask, const SelfBlock& b, SelfBlock* gb) {
    const auto& c = p_.config;
    const int dk = c.d / c.heads;
    const auto Q = linear(x, b.q, gb ? &gb->q : nullptr);
    const auto K = linear(x, b.k, gb ? &gb->k : nullptr);
    const auto V = linear(x, b.v, gb ? &gb->v : nullptr);
    std::vector<Graph::Var> heads;
    for (int h = 0; h < c.heads; ++h) {
      const auto A = g_.scale(g_.matmul_nt(g_.slice_cols(Q, h * dk, dk), g_.slice_cols(K, h * dk, dk)),
                              1.0 / std::sqrt(static_cast<double>(dk)));
      heads.push_back(g_.matmul(g_.softmax_rows(A, key_mask), g_.slice_cols(V, h * dk, dk)));
    }
    const auto att = attention_out(heads, b.o, gb ? &gb->o : nullptr);
    const auto h1 = norm(g_.add(x, att), b.norm1, gb ? &gb->norm1 : nullptr);
    const auto ff = linear(g_.gelu(linear(h1, b.ff1, gb ? &gb->ff1 : nullptr)), b.ff2, gb ? &gb->ff2 : nullptr);
    return norm(g_.add(h1, ff), b.norm2, gb ? &gb->norm2 : nullptr);
  }

  const PolicyParams& p_;
  PolicyParams* grads_;
  Graph& g_;
  const ForwardOptions& opt_;
};

inline LogitMatrix to_logits(const Tensor& t, const EdgeSet& edges) {
  LogitMatrix L(t.rows, t.cols);
  L.data = t.data;
  return apply_mask(std::move(L), edges);
}

}  // namespace detail

/// Masked logit matrix (agents x tasks+skip); every unmasked entry lies in [-clip, clip].
inline LogitMatrix forward(const PolicyParams& params, const StateFeatures& features, const ForwardOptions& opt = {}) {
  Graph g(false);
  detail::Net net(params, nullptr, g, opt);
  return detail::to_logits(g.value(net.logits(features)), features.edges);
}

struct GradResult {
  double value = 0.0;
  PolicyParams grads;
  LogitMatrix logits;
};

/// Reverse-mode gradient of `loss(logits)` with respect to every parameter.
/// `loss` returns the value and dLoss/dLogits for the masked logit matrix.
template <class LossFn>
GradResult grad(const PolicyParams& params, const StateFeatures& features, LossFn&& loss,
                const ForwardOptions& opt = {}) {
  GradResult r;
  r.grads = params.zeros_like();
  Graph g(true);
  detail::Net net(params, &r.grads, g, opt);
  const auto out = net.logits(features);
  r.logits = detail::to_logits(g.value(out), features.edges);
  LossResult lr = loss(r.logits);
  if (!std::isfinite(lr.value)) throw NumericError("non-finite loss value");
  Tensor seed(r.logits.rows, r.logits.cols);
  for (int m = 0; m < seed.rows; ++m)
    for (int c = 0; c < seed.cols; ++c)
      if (features.edges.has(m, c)) seed(m, c) = lr.grad(m, c);
  g.backward(out, seed);
  r.value = lr.value;
  bool finite = true;
  r.grads.visit([&](const std::string&, const Tensor& t) { finite = finite && t.all_finite(); });
  if (!finite) throw NumericError("non-finite parameter gradient");
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoints: "MACSIMCK", u32 version, config header, then named tensors.
// All integers and doubles little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw SchemaError("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

inline void put_str(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_str(std::istream& in) {
  const auto n = get_le<std::uint32_t>(in);
  if (n > (1U << 20)) throw SchemaError("checkpoint string too long");
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw SchemaError("checkpoint truncated");
  return s;
}

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const PolicyParams& p) {
  out.write("MACSIMCK", 8);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  const auto& c = p.config;
  detail::put_str(out, std::string(to_string(c.problem)));
  for (int v : {c.d, c.heads, c.layers, c.ffn_hidden, c.mix_hidden}) detail::put_le<std::int32_t>(out, v);
  detail::put_le<double>(out, c.clip);
  detail::put_le<double>(out, c.dropout);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(
                                         [&] {
                                           std::size_t n = 0;
                                           p.visit([&](const std::string&, const Tensor&) { ++n; });
                                           return n;
                                         }()));
  p.visit([&](const std::string& name, const Tensor& t) {
    detail::put_str(out, name);
    detail::put_le<std::int32_t>(out, t.rows);
    detail::put_le<std::int32_t>(out, t.cols);
    for (double v : t.data) detail::put_le<double>(out, v);
  });
}

inline void save_checkpoint(const std::string& path, const PolicyParams& p) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint for writing: " + path);
  save_checkpoint(out, p);
  if (!out) throw Error("failed writing checkpoint: " + path);
}

inline PolicyParams load_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::string(magic, 8) != "MACSIMCK") throw SchemaError("not a checkpoint file");
  const auto version = detail::get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw SchemaError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  PolicyConfig c;
  c.problem = parse_problem_kind(detail::get_str(in));
  c.d = detail::get_le<std::int32_t>(in);
  c.heads = detail::get_le<std::int32_t>(in);
  c.layers = detail::get_le<std::int32_t>(in);
  c.ffn_hidden = detail::get_le<std::int32_t>(in);
  c.mix_hidden = detail::get_le<std::int32_t>(in);
  c.clip = detail::get_le<double>(in);
  c.dropout = detail::get_le<double>(in);
  validate(c);
  PolicyParams p = init_policy(c, 0);
  const auto count = detail::get_le<std::uint32_t>(in);
  std::size_t expected = 0;
  p.visit([&](const std::string&, const Tensor&) { ++expected; });
  if (count != expected) throw SchemaError("checkpoint tensor count does not match its configuration");
  p.for_each(TensorVisitor([&](const std::string& name, Tensor& t) {
    const auto got = detail::get_str(in);
    if (got != name) throw SchemaError("checkpoint tensor '" + got + "' found where '" + name + "' expected");
    const auto r = detail::get_le<std::int32_t>(in);
    const auto cc = detail::get_le<std::int32_t>(in);
    if (r != t.rows || cc != t.cols) throw SchemaError("checkpoint tensor '" + name + "' has the wrong shape");
    for (double& v : t.data) v = detail::get_le<double>(in);
  }));
  return p;
}

inline PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  return load_checkpoint(in);
}

}  // namespace macsim
