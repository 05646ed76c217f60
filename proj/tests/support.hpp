#pragma once

#include <memory>
#include <vector>

#include "macsim/macsim.hpp"

namespace test {

using namespace macsim;

// jobs[j][i] = {(machine, time), ...}
inline FjspInstance fjsp(int machines, const std::vector<std::vector<std::vector<std::pair<int, int>>>>& jobs) {
  FjspInstance x;
  x.num_jobs = static_cast<int>(jobs.size());
  x.num_machines = machines;
  for (const auto& job : jobs) {
    std::vector<FjspOperation> ops;
    for (const auto& op : job) {
      FjspOperation o;
      for (auto [m, t] : op) o.options.push_back({m, t});
      ops.push_back(o);
    }
    x.jobs.push_back(ops);
  }
  return x;
}

// proc[s][j][k]
inline FfspInstance ffsp(const std::vector<std::vector<std::vector<int>>>& proc) {
  FfspInstance x;
  x.num_stages = static_cast<int>(proc.size());
  x.num_jobs = static_cast<int>(proc.front().size());
  for (const auto& s : proc) x.machines_per_stage.push_back(static_cast<int>(s.front().size()));
  x.proc_time = proc;
  return x;
}

inline HcvrpInstance hcvrp(Point depot, std::vector<Point> customers, std::vector<int> demand, std::vector<int> capacity,
                           std::vector<double> speed) {
  return {depot, std::move(customers), std::move(demand), std::move(capacity), std::move(speed)};
}

inline std::shared_ptr<const ProblemInstance> share(ProblemInstance x) {
  return std::make_shared<const ProblemInstance>(std::move(x));
}

inline GenConfig gen(ProblemKind k, int jobs, int machines, std::uint64_t seed = 1) {
  GenConfig g;
  g.problem = k;
  g.num_jobs = jobs;
  g.num_machines = machines;
  g.seed = seed;
  return g;
}

// Edge set with the given real entries and no skip column entries.
inline EdgeSet real_only(int agents, int tasks) {
  EdgeSet e(agents, tasks);
  for (int m = 0; m < agents; ++m)
    for (int c = 0; c < tasks; ++c) e.set(m, c, 1.0);
  return e;
}

inline LogitMatrix logits(const std::vector<std::vector<double>>& rows) {
  LogitMatrix L(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (int m = 0; m < L.rows; ++m)
    for (int c = 0; c < L.cols; ++c) L(m, c) = rows[static_cast<std::size_t>(m)][static_cast<std::size_t>(c)];
  return L;
}

}  // namespace test
