// Acceptance checks. `acceptance --criterion k` runs one; no arguments runs all.
// Each prints a single PASS/FAIL line and the exit status is nonzero on any failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "macsim/macsim.hpp"

using namespace macsim;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string key(const JointAction& a) {
  std::string s;
  for (const auto& p : a) s += std::to_string(p.agent) + ":" + std::to_string(p.task) + " ";
  return s;
}

int threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// 1. Enumerated sequence probabilities sum to one.
Outcome normalization() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::pair<int, int> shapes[] = {{2, 2}, {2, 3}, {3, 3}, {3, 4}};
  Rng rng(1001);
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const auto [M, N] = shapes[i % 4];
    const EdgeSet e = random_edges(M, N, rng);
    const LogitMatrix L = random_logits(e, rng, -3.0, 3.0);
    double sum = 0.0;
    for (const auto& s : enumerate_sequences(L, e)) sum += s.prob;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 10.0,
          "500 matrices, max |sum - 1| = " + fmt("%.3g", worst) + " (tol 1e-9), " + fmt("%.2f", secs) + " s (limit 10 s)"};
}

// 2. Set cross-entropy bounds the permutation-marginalized loss.
Outcome ce_bounds() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1002);
  int bad = 0;
  double min_slack_lower = 1e300, min_slack_upper = 1e300;
  for (int i = 0; i < 1000; ++i) {
    const int M = static_cast<int>(rng.uniform_int(1, 4));
    const EdgeSet e = random_edges(M, M, rng);
    const LogitMatrix L = random_logits(e, rng, -3.0, 3.0);
    const JointAction expert = sample_joint(random_logits(e, rng, -3.0, 3.0), e, rng).action;
    const double ce = loss_ce({L, e, expert}).value;
    const double ideal = ideal_loss(L, e, expert);
    const double bound = ce_gap_bound(L, e, expert);
    min_slack_lower = std::min(min_slack_lower, ce - ideal);
    min_slack_upper = std::min(min_slack_upper, bound - (ce - ideal));
    if (ce < ideal - 1e-9 || ce - ideal > bound + 1e-9) ++bad;
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 30.0, "1000 cases, violations " + std::to_string(bad) + ", min(CE - ideal) = " +
                                        fmt("%.3g", min_slack_lower) + ", min(bound - gap) = " +
                                        fmt("%.3g", min_slack_upper) + ", " + fmt("%.2f", secs) + " s (limit 30 s)"};
}

// 3. Analytic gradients against finite differences.
Outcome gradients() {
  Rng rng(1003);
  double worst_loss = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int M = static_cast<int>(rng.uniform_int(1, 4));
    const int N = static_cast<int>(rng.uniform_int(1, 4));
    const EdgeSet e = random_edges(M, N, rng);
    const ExpertStep s{random_logits(e, rng), e, sample_joint(random_logits(e, rng), e, rng).action};
    for (auto k : {LossKind::sa, LossKind::ml, LossKind::pl, LossKind::ce})
      worst_loss = std::max(worst_loss, loss_fd_error(k, s));
  }
  PolicyConfig pc;
  pc.problem = ProblemKind::fjsp;
  pc.dropout = 0.0;
  const auto params = init_policy(pc, 1003);
  GenConfig g;
  g.problem = ProblemKind::fjsp;
  g.num_jobs = 6;
  g.num_machines = 3;
  g.seed = 1003;
  const auto f = featurize(reset(std::make_shared<const ProblemInstance>(generate(g))));
  const JointAction a = sample_joint(forward(params, f), f.edges, rng).action;
  const double policy_err = policy_fd_error(params, f, a, 20, rng);
  return {worst_loss <= 1e-8 && policy_err <= 1e-4,
          "losses max rel err " + fmt("%.3g", worst_loss) + " (tol 1e-8) on 100 steps; policy rel err " +
              fmt("%.3g", policy_err) + " (tol 1e-4) on 20 parameters"};
}

// 4. Empirical sampler frequencies against enumeration.
Outcome sampler_distribution() {
  Rng rng(1004);
  const EdgeSet e = full_edges(2, 2);
  const LogitMatrix L = random_logits(e, rng, -3.0, 3.0);
  std::map<std::string, double> expect;
  for (const auto& s : enumerate_sequences(L, e)) expect[key(s.sequence)] = s.prob;
  std::map<std::string, long> seen;
  const long n = 1'000'000;
  long conflicts = 0, unknown = 0;
  for (long i = 0; i < n; ++i) {
    const auto a = sample_joint(L, e, rng).action;
    if (!is_conflict_free(e, a)) ++conflicts;
    const std::string k = key(a);
    if (!expect.count(k)) ++unknown;
    ++seen[k];
  }
  double worst_z = 0.0;
  for (const auto& [seq, p] : expect) {
    const double sd = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    const double freq = static_cast<double>(seen[seq]) / static_cast<double>(n);
    worst_z = std::max(worst_z, sd > 0 ? std::abs(freq - p) / sd : (freq == p ? 0.0 : 1e9));
  }
  return {worst_z <= 4.0 && conflicts == 0 && unknown == 0,
          std::to_string(expect.size()) + " outcomes, 1e6 draws, max |z| = " + fmt("%.2f", worst_z) +
              " (limit 4), conflicts " + std::to_string(conflicts) + ", unenumerated " + std::to_string(unknown)};
}

// 5. Rollouts validate; transitions ignore intra-action order.
Outcome env_soundness() {
  Rng rng(1005);
  long invalid = 0, order_fail = 0, perms = 0;
  for (ProblemKind kind : {ProblemKind::fjsp, ProblemKind::ffsp, ProblemKind::hcvrp}) {
    GenConfig g;
    g.problem = kind;
    g.num_jobs = kind == ProblemKind::hcvrp ? 20 : 10;
    g.num_machines = kind == ProblemKind::fjsp ? 5 : 3;
    g.num_stages = 3;
    g.seed = 1005;
    int kind_perms = 0;
    for (std::uint64_t i = 0; i < 1000; ++i) {
      const auto inst = std::make_shared<const ProblemInstance>(generate(g, 1005, i));
      State s = reset(inst);
      while (!s.terminal) {
        const EdgeSet e = feasible_edges(s);
        const JointAction a = sample_joint(random_logits(e, rng), e, rng).action;
        const State next = step(s, a).state;
        if (kind_perms < 100 && a.size() > 1) {
          JointAction p = a;
          std::shuffle(p.begin(), p.end(), rng);
          if (!(step(s, p).state == next)) ++order_fail;
          ++kind_perms;
        }
        s = next;
      }
      if (!validate(*inst, solution(s)).empty()) ++invalid;
    }
    perms += kind_perms;
  }
  return {invalid == 0 && order_fail == 0 && perms == 300,
          "3000 rollouts, invalid " + std::to_string(invalid) + "; " + std::to_string(perms) +
              " permuted actions, state mismatches " + std::to_string(order_fail)};
}

// 6. Set CE is order-free; PL is not.
Outcome ce_permutation() {
  Rng rng(1006);
  int cases = 0, ce_fail = 0, pl_differs = 0;
  for (int M = 2; M <= 5; ++M)
    for (int i = 0; i < 50; ++i) {
      const EdgeSet e = full_edges(M, M);
      const LogitMatrix L = random_logits(e, rng, -3.0, 3.0);
      JointAction a = sample_joint(random_logits(e, rng), e, rng).action;
      const auto by_agent = [](const Assignment& x, const Assignment& y) { return x.agent < y.agent; };
      std::sort(a.begin(), a.end(), by_agent);
      const LossResult ref = loss_ce({L, e, a});
      const double pl_ref = loss_pl({L, e, a}).value;
      bool ce_ok = true, differs = false;
      do {
        const LossResult r = loss_ce({L, e, a});
        ce_ok = ce_ok && r.value == ref.value && r.grad == ref.grad;
        differs = differs || loss_pl({L, e, a}).value != pl_ref;
      } while (std::next_permutation(a.begin(), a.end(), by_agent));
      ++cases;
      ce_fail += ce_ok ? 0 : 1;
      pl_differs += differs ? 1 : 0;
    }
  const double frac = static_cast<double>(pl_differs) / cases;
  return {ce_fail == 0 && frac >= 0.95, std::to_string(cases) + " steps (M = 2..5, all M! orders): CE mismatches " +
                                            std::to_string(ce_fail) + ", PL order-dependent in " +
                                            fmt("%.1f", 100 * frac) + "% (need >= 95%)"};
}

// 7. Training improves the policy; best-of-32 is near optimal on small instances.
Outcome self_improvement() {
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig cfg;
  cfg.problem.problem = ProblemKind::fjsp;
  cfg.problem.num_jobs = 6;
  cfg.problem.num_machines = 3;
  cfg.model.problem = ProblemKind::fjsp;
  cfg.epochs = 30;
  cfg.beta = 32;
  cfg.loss = LossKind::ce;
  cfg.seed = 1007;
  cfg.threads = threads();
  const TrainReport rep = run(cfg, [](const EpochRow& r) {
    std::cerr << "  epoch " << r.epoch << " val " << r.val_objective << " skips " << r.mean_skips << " loss " << r.loss
              << (r.promoted ? " *" : "") << '\n';
  });
  const double untrained = rep.rows.front().val_objective;
  const double trained = rep.incumbent.score;

  GenConfig small;
  small.problem = ProblemKind::fjsp;
  small.num_jobs = 3;
  small.num_machines = 2;
  const int count = 100;
  double gap_sum = 0.0;
  for (int i = 0; i < count; ++i) {
    const auto inst = std::make_shared<const ProblemInstance>(generate(small, 2007, static_cast<std::uint64_t>(i)));
    const double opt = exact_optimum(*inst).objective;
    const double best = best_of_k(rep.incumbent.params, inst, 32, Rng(3007).fork(static_cast<std::uint64_t>(i)))
                            .trajectory.objective;
    gap_sum += (best - opt) / opt;
  }
  const double gap = gap_sum / count;
  const double secs = seconds_since(t0);
  return {trained <= 0.9 * untrained && gap <= 0.05,
          "FJSP 6x3 greedy val " + fmt("%.2f", trained) + " vs untrained " + fmt("%.2f", untrained) + " (ratio " +
              fmt("%.3f", trained / untrained) + ", need <= 0.9); best-of-32 mean gap to optimum on 3x2 " +
              fmt("%.2f", 100 * gap) + "% over " + std::to_string(count) + " instances (need <= 5%), " +
              fmt("%.0f", secs) + " s"};
}

// 8. Dispatching-rule ordering.
Outcome dispatch_ordering() {
  GenConfig g;
  g.problem = ProblemKind::fjsp;
  g.num_jobs = 10;
  g.num_machines = 5;
  double fifo = 0.0, mor = 0.0, mwkr = 0.0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const auto x = std::get<FjspInstance>(generate(g, 7, static_cast<std::uint64_t>(i)));
    fifo += dispatch_fjsp(x, DispatchRule::fifo).trajectory.objective / n;
    mor += dispatch_fjsp(x, DispatchRule::mor).trajectory.objective / n;
    mwkr += dispatch_fjsp(x, DispatchRule::mwkr).trajectory.objective / n;
  }
  return {mwkr <= mor && mor <= fifo, "1000 FJSP 10x5: MWKR " + fmt("%.2f", mwkr) + " <= MOR " + fmt("%.2f", mor) +
                                          " <= FIFO " + fmt("%.2f", fifo)};
}

// 9. Joint decoding needs far fewer forward passes than pair-by-pair decoding.
Outcome construction_steps() {
  GenConfig g;
  g.problem = ProblemKind::ffsp;
  g.num_jobs = 20;
  g.num_stages = 3;
  g.num_machines = 4;
  PolicyConfig pc;
  pc.problem = ProblemKind::ffsp;
  const auto params = init_policy(pc, 1009);
  const int n = 50;
  double joint = 0.0, single = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto inst = std::make_shared<const ProblemInstance>(generate(g, 1009, static_cast<std::uint64_t>(i)));
    Rng rng = Rng(1009).fork(static_cast<std::uint64_t>(i));
    const auto st = policy_rollout(params, inst, DecodeMode::sample, rng);
    joint += static_cast<double>(st.forward_passes) / n;
    single += static_cast<double>(st.single_action_passes) / n;
  }
  const double ratio = joint / single;
  return {ratio <= 0.25, "FFSP 20 jobs x 12 machines, " + std::to_string(n) + " instances: joint passes " +
                             fmt("%.1f", joint) + ", single-action passes " + fmt("%.1f", single) + ", ratio " +
                             fmt("%.3f", ratio) + " (need <= 0.25)"};
}

// 10. Skip usage under a decaying penalty versus none.
Outcome skip_dynamics() {
  TrainConfig cfg;
  cfg.problem.problem = ProblemKind::ffsp;
  cfg.problem.num_jobs = 8;
  cfg.problem.num_stages = 2;
  cfg.problem.num_machines = 3;
  cfg.model.problem = ProblemKind::ffsp;
  cfg.epochs = 15;
  cfg.instances_per_epoch = 64;
  cfg.beta = 16;
  cfg.val_size = 32;
  cfg.seed = 1010;
  cfg.threads = threads();
  const auto skips = [](const TrainReport& r) {
    std::vector<double> s;
    for (const auto& row : r.rows) s.push_back(row.mean_skips);
    return s;
  };
  const auto decayed = skips(run(cfg));
  cfg.penalty = false;
  const auto flat = skips(run(cfg));
  const double peak = *std::max_element(decayed.begin(), decayed.end());
  const bool pass = decayed.back() <= peak && flat.back() > decayed.back();
  std::string trace;
  for (std::size_t i = 0; i < decayed.size(); ++i)
    trace += (i ? " " : "") + fmt("%.2f", decayed[i]);
  return {pass, "decayed final " + fmt("%.3f", decayed.back()) + " <= peak " + fmt("%.3f", peak) + "; penalty-off final " +
                    fmt("%.3f", flat.back()) + " > decayed final; decayed trace [" + trace + "]"};
}

// 11. Brandimarte benchmark files parse and round-trip.
Outcome brandimarte() {
  const char* env = std::getenv("MACSIM_BRANDIMARTE_DIR");
  const fs::path dir = env ? fs::path(env) : fs::path(MACSIM_SOURCE_DIR) / "data" / "brandimarte";
  int ok = 0;
  std::string problems;
  for (int k = 1; k <= 10; ++k) {
    char name[16];
    std::snprintf(name, sizeof name, "Mk%02d.fjs", k);
    const fs::path p = dir / name;
    std::ifstream in(p, std::ios::binary);
    if (!in) {
      problems += std::string(problems.empty() ? "" : ", ") + name + " missing";
      continue;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      const FjspInstance x = parse_fjs(ss.str());
      const bool valid = check(ProblemInstance(x)).empty();
      const bool lossless = write_fjs(x) == ss.str();
      if (valid && lossless) ++ok;
      else problems += std::string(problems.empty() ? "" : ", ") + name + (valid ? " not byte-identical" : " invalid");
    } catch (const Error& e) {
      problems += std::string(problems.empty() ? "" : ", ") + name + ": " + e.what();
    }
  }
  return {ok == 10, std::to_string(ok) + "/10 files pass in " + dir.string() + (problems.empty() ? "" : " (" + problems + ")")};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> fn;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {"sequence probabilities normalize", normalization},
      {"CE bounds the ideal loss", ce_bounds},
      {"gradient fidelity", gradients},
      {"sampler distribution", sampler_distribution},
      {"environment soundness", env_soundness},
      {"CE permutation invariance", ce_permutation},
      {"self-improvement efficacy", self_improvement},
      {"dispatching-rule ordering", dispatch_ordering},
      {"construction-step reduction", construction_steps},
      {"skip-token dynamics", skip_dynamics},
      {"Brandimarte parser", brandimarte},
  };
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) {
      which.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--criterion K]...\n";
      return 2;
    }
  }
  if (which.empty()) {
    which.resize(all.size());
    std::iota(which.begin(), which.end(), 1);
  }
  int failed = 0;
  for (int k : which) {
    if (k < 1 || k > static_cast<int>(all.size())) {
      std::cerr << "no criterion " << k << '\n';
      return 2;
    }
    const auto& c = all[static_cast<std::size_t>(k - 1)];
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << k << " (" << c.name << "): " << o.detail << std::endl;
    failed += o.pass ? 0 : 1;
  }
  return failed ? 1 : 0;
}
