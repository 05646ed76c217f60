#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "macsim/error.hpp"
#include "macsim/rng.hpp"

namespace macsim {

enum class ProblemKind { fjsp, ffsp, hcvrp };

inline std::string_view to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::fjsp: return "fjsp";
    case ProblemKind::ffsp: return "ffsp";
    case ProblemKind::hcvrp: return "hcvrp";
  }
  return "?";
}

inline ProblemKind parse_problem_kind(std::string_view name) {
  if (name == "fjsp") return ProblemKind::fjsp;
  if (name == "ffsp") return ProblemKind::ffsp;
  if (name == "hcvrp") return ProblemKind::hcvrp;
  throw ConfigError("unknown problem '" + std::string(name) + "' (expected fjsp, ffsp or hcvrp)");
}

// One (machine, processing time) option of an FJSP operation.
struct MachineOption {
  int machine = 0;
  int time = 0;
  bool operator==(const MachineOption&) const = default;
};

// Eligible machines of one operation, in file / generation order.
struct FjspOperation {
  std::vector<MachineOption> options;

  std::optional<int> time_on(int machine) const {
    for (const auto& o : options)
      if (o.machine == machine) return o.time;
    return std::nullopt;
  }
  double mean_time() const {
    double s = 0.0;
    for (const auto& o : options) s += o.time;
    return options.empty() ? 0.0 : s / static_cast<double>(options.size());
  }
  int min_time() const {
    int best = options.empty() ? 0 : options.front().time;
    for (const auto& o : options) best = std::min(best, o.time);
    return best;
  }
  bool operator==(const FjspOperation&) const = default;
};

struct FjspInstance {
  int num_jobs = 0;
  int num_machines = 0;
  std::vector<std::vector<FjspOperation>> jobs;  // jobs[j][i]
  // Third header token of a .fjs file, kept verbatim so the canonical
  // serializer reproduces the header.
  std::optional<std::string> flexibility_token;

  int num_ops(int job) const { return static_cast<int>(jobs[static_cast<std::size_t>(job)].size()); }
  int total_ops() const {
    int n = 0;
    for (const auto& j : jobs) n += static_cast<int>(j.size());
    return n;
  }
  const FjspOperation& op(int job, int index) const {
    return jobs[static_cast<std::size_t>(job)][static_cast<std::size_t>(index)];
  }
  bool operator==(const FjspInstance&) const = default;
};

struct FfspInstance {
  int num_jobs = 0;
  int num_stages = 0;
  std::vector<int> machines_per_stage;
  std::vector<std::vector<std::vector<int>>> proc_time;  // [stage][job][machine in stage]

  int num_machines() const {
    return std::accumulate(machines_per_stage.begin(), machines_per_stage.end(), 0);
  }
  int stage_offset(int stage) const {
    int off = 0;
    for (int s = 0; s < stage; ++s) off += machines_per_stage[static_cast<std::size_t>(s)];
    return off;
  }
  int stage_of(int machine) const {
    int off = 0;
    for (int s = 0; s < num_stages; ++s) {
      off += machines_per_stage[static_cast<std::size_t>(s)];
      if (machine < off) return s;
    }
    return num_stages;
  }
  int time(int stage, int job, int machine_in_stage) const {
    return proc_time[static_cast<std::size_t>(stage)][static_cast<std::size_t>(job)]
                    [static_cast<std::size_t>(machine_in_stage)];
  }
  bool operator==(const FfspInstance&) const = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

inline double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct HcvrpInstance {
  Point depot;
  std::vector<Point> customers;
  std::vector<int> demand;
  std::vector<int> capacity;
  std::vector<double> speed;

  int num_customers() const { return static_cast<int>(customers.size()); }
  int num_vehicles() const { return static_cast<int>(capacity.size()); }
  // Node 0 is the depot, node i + 1 is customer i.
  const Point& node(int id) const {
    return id == 0 ? depot : customers[static_cast<std::size_t>(id - 1)];
  }
  bool operator==(const HcvrpInstance&) const = default;
};

using ProblemInstance = std::variant<FjspInstance, FfspInstance, HcvrpInstance>;

inline ProblemKind kind_of(const ProblemInstance& inst) {
  return static_cast<ProblemKind>(inst.index());
}

// Number of agents (machines / vehicles) and tasks (jobs / customers).
inline int num_agents(const ProblemInstance& inst) {
  return std::visit(
      [](const auto& x) -> int {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, FjspInstance>) return x.num_machines;
        else if constexpr (std::is_same_v<T, FfspInstance>) return x.num_machines();
        else return x.num_vehicles();
      },
      inst);
}

inline int num_tasks(const ProblemInstance& inst) {
  return std::visit(
      [](const auto& x) -> int {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, HcvrpInstance>) return x.num_customers();
        else return x.num_jobs;
      },
      inst);
}

// ---------------------------------------------------------------------------
// Invariant checks. Return human-readable problems; empty means valid.

inline std::vector<std::string> check(const FjspInstance& x) {
  std::vector<std::string> out;
  if (x.num_jobs < 1) out.push_back("num_jobs must be >= 1");
  if (x.num_machines < 1) out.push_back("num_machines must be >= 1");
  if (static_cast<int>(x.jobs.size()) != x.num_jobs) out.push_back("jobs list length differs from num_jobs");
  for (std::size_t j = 0; j < x.jobs.size(); ++j) {
    if (x.jobs[j].empty()) out.push_back("job " + std::to_string(j) + " has no operations");
    for (std::size_t i = 0; i < x.jobs[j].size(); ++i) {
      const auto& op = x.jobs[j][i];
      const std::string where = "job " + std::to_string(j) + " op " + std::to_string(i);
      if (op.options.empty()) out.push_back(where + " has no eligible machine");
      std::vector<int> seen;
      for (const auto& o : op.options) {
        if (o.machine < 0 || o.machine >= x.num_machines)
          out.push_back(where + " machine id " + std::to_string(o.machine) + " out of range");
        if (o.time <= 0) out.push_back(where + " non-positive processing time");
        if (std::find(seen.begin(), seen.end(), o.machine) != seen.end())
          out.push_back(where + " lists machine " + std::to_string(o.machine) + " twice");
        seen.push_back(o.machine);
      }
    }
  }
  return out;
}

inline std::vector<std::string> check(const FfspInstance& x) {
  std::vector<std::string> out;
  if (x.num_jobs < 1) out.push_back("num_jobs must be >= 1");
  if (x.num_stages < 1) out.push_back("num_stages must be >= 1");
  if (static_cast<int>(x.machines_per_stage.size()) != x.num_stages)
    out.push_back("machines_per_stage length differs from num_stages");
  if (static_cast<int>(x.proc_time.size()) != x.num_stages) {
    out.push_back("proc_time must have one block per stage");
    return out;
  }
  for (int s = 0; s < x.num_stages && s < static_cast<int>(x.machines_per_stage.size()); ++s) {
    const int ms = x.machines_per_stage[static_cast<std::size_t>(s)];
    if (ms < 1) out.push_back("stage " + std::to_string(s) + " has no machines");
    const auto& block = x.proc_time[static_cast<std::size_t>(s)];
    if (static_cast<int>(block.size()) != x.num_jobs) {
      out.push_back("proc_time stage " + std::to_string(s) + " is not dense over jobs");
      continue;
    }
    for (const auto& row : block) {
      if (static_cast<int>(row.size()) != ms)
        out.push_back("proc_time stage " + std::to_string(s) + " is not dense over machines");
      for (int t : row)
        if (t < 1) out.push_back("proc_time stage " + std::to_string(s) + " has a time < 1");
    }
  }
  return out;
}

inline std::vector<std::string> check(const HcvrpInstance& x) {
  std::vector<std::string> out;
  const auto in_unit = [](const Point& p) { return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0; };
  if (x.capacity.empty()) out.push_back("at least one vehicle required");
  if (x.customers.empty()) out.push_back("at least one customer required");
  if (x.speed.size() != x.capacity.size()) out.push_back("speed and capacity lengths differ");
  if (x.demand.size() != x.customers.size()) out.push_back("demand and customers lengths differ");
  if (!in_unit(x.depot)) out.push_back("depot outside the unit square");
  for (const auto& c : x.customers)
    if (!in_unit(c)) out.push_back("customer outside the unit square");
  for (double s : x.speed)
    if (!(s > 0.0)) out.push_back("vehicle speed must be > 0");
  const int max_cap = x.capacity.empty() ? 0 : *std::max_element(x.capacity.begin(), x.capacity.end());
  for (int d : x.demand) {
    if (d <= 0) out.push_back("customer demand must be > 0");
    if (d > max_cap) out.push_back("customer demand exceeds every vehicle capacity");
  }
  return out;
}

inline std::vector<std::string> check(const ProblemInstance& inst) {
  return std::visit([](const auto& x) { return check(x); }, inst);
}

inline void require_valid(const ProblemInstance& inst) {
  const auto problems = check(inst);
  if (!problems.empty()) throw SchemaError("invalid instance: " + problems.front());
}

// ---------------------------------------------------------------------------
// Random generation.

struct IntBounds {
  std::int64_t low = 0;
  std::int64_t high = 0;
};

struct RealBounds {
  double low = 0.0;
  double high = 0.0;
};

struct GenConfig {
  ProblemKind problem = ProblemKind::fjsp;
  int num_jobs = 10;      // jobs (fjsp, ffsp) or customers (hcvrp)
  int num_machines = 5;   // machines (fjsp), machines per stage (ffsp), vehicles (hcvrp)
  int num_stages = 3;     // ffsp only
  std::vector<int> machines_per_stage;  // ffsp; overrides num_machines when non-empty
  std::uint64_t seed = 0;

  // FJSP. Operations per job default to [ceil(0.8 M), ceil(1.2 M)], i.e. [4, 6] for M = 5.
  std::optional<IntBounds> fjsp_ops_per_job;
  std::optional<IntBounds> fjsp_eligible;  // default [1, M]
  IntBounds fjsp_proc_time{1, 20};

  IntBounds ffsp_proc_time{2, 10};

  IntBounds hcvrp_demand{1, 10};
  IntBounds hcvrp_capacity{20, 41};
  RealBounds hcvrp_speed{0.5, 1.0};

  IntBounds ops_per_job() const {
    if (fjsp_ops_per_job) return *fjsp_ops_per_job;
    return {static_cast<std::int64_t>(std::ceil(0.8 * num_machines - 1e-9)),
            static_cast<std::int64_t>(std::ceil(1.2 * num_machines - 1e-9))};
  }
  IntBounds eligible() const { return fjsp_eligible ? *fjsp_eligible : IntBounds{1, num_machines}; }
  std::vector<int> stages() const {
    if (!machines_per_stage.empty()) return machines_per_stage;
    return std::vector<int>(static_cast<std::size_t>(std::max(num_stages, 0)), num_machines);
  }
};

inline void validate(const GenConfig& c) {
  const auto bounds = [](const char* name, auto b) {
    if (b.low > b.high) throw ConfigError(std::string(name) + ": low > high");
  };
  if (c.num_jobs < 1) throw ConfigError("number of jobs / customers must be >= 1");
  switch (c.problem) {
    case ProblemKind::fjsp: {
      if (c.num_machines < 1) throw ConfigError("number of machines must be >= 1");
      bounds("ops per job", c.ops_per_job());
      bounds("eligible machines", c.eligible());
      bounds("processing time", c.fjsp_proc_time);
      if (c.ops_per_job().low < 1) throw ConfigError("ops per job must be >= 1");
      if (c.eligible().low < 1 || c.eligible().high > c.num_machines)
        throw ConfigError("eligible machine count must lie in [1, machines]");
      if (c.fjsp_proc_time.low < 1) throw ConfigError("processing times must be >= 1");
      break;
    }
    case ProblemKind::ffsp: {
      const auto st = c.stages();
      if (st.empty()) throw ConfigError("number of stages must be >= 1");
      for (int m : st)
        if (m < 1) throw ConfigError("machines per stage must be >= 1");
      bounds("processing time", c.ffsp_proc_time);
      if (c.ffsp_proc_time.low < 1) throw ConfigError("processing times must be >= 1");
      break;
    }
    case ProblemKind::hcvrp: {
      if (c.num_machines < 1) throw ConfigError("number of vehicles must be >= 1");
      bounds("demand", c.hcvrp_demand);
      bounds("capacity", c.hcvrp_capacity);
      bounds("speed", c.hcvrp_speed);
      if (c.hcvrp_demand.low < 1) throw ConfigError("demand must be >= 1");
      if (c.hcvrp_demand.high > c.hcvrp_capacity.low)
        throw ConfigError("maximum demand must not exceed minimum capacity");
      if (!(c.hcvrp_speed.low > 0.0)) throw ConfigError("speed must be > 0");
      break;
    }
  }
}

inline FjspInstance generate_fjsp(const GenConfig& c, Rng& rng) {
  FjspInstance x;
  x.num_jobs = c.num_jobs;
  x.num_machines = c.num_machines;
  const auto ops = c.ops_per_job();
  const auto elig = c.eligible();
  std::vector<int> machines(static_cast<std::size_t>(c.num_machines));
  for (int j = 0; j < c.num_jobs; ++j) {
    const auto n_ops = rng.uniform_int(ops.low, ops.high);
    std::vector<FjspOperation> job;
    for (std::int64_t i = 0; i < n_ops; ++i) {
      std::iota(machines.begin(), machines.end(), 0);
      std::shuffle(machines.begin(), machines.end(), rng);
      const auto k = rng.uniform_int(elig.low, elig.high);
      std::vector<int> chosen(machines.begin(), machines.begin() + k);
      std::sort(chosen.begin(), chosen.end());
      FjspOperation op;
      for (int m : chosen)
        op.options.push_back({m, static_cast<int>(rng.uniform_int(c.fjsp_proc_time.low, c.fjsp_proc_time.high))});
      job.push_back(std::move(op));
    }
    x.jobs.push_back(std::move(job));
  }
  return x;
}

inline FfspInstance generate_ffsp(const GenConfig& c, Rng& rng) {
  FfspInstance x;
  x.num_jobs = c.num_jobs;
  x.machines_per_stage = c.stages();
  x.num_stages = static_cast<int>(x.machines_per_stage.size());
  for (int s = 0; s < x.num_stages; ++s) {
    std::vector<std::vector<int>> block;
    for (int j = 0; j < x.num_jobs; ++j) {
      std::vector<int> row;
      for (int k = 0; k < x.machines_per_stage[static_cast<std::size_t>(s)]; ++k)
        row.push_back(static_cast<int>(rng.uniform_int(c.ffsp_proc_time.low, c.ffsp_proc_time.high)));
      block.push_back(std::move(row));
    }
    x.proc_time.push_back(std::move(block));
  }
  return x;
}

inline HcvrpInstance generate_hcvrp(const GenConfig& c, Rng& rng) {
  HcvrpInstance x;
  x.depot = {rng.unit(), rng.unit()};
  for (int i = 0; i < c.num_jobs; ++i) x.customers.push_back({rng.unit(), rng.unit()});
  for (int i = 0; i < c.num_jobs; ++i)
    x.demand.push_back(static_cast<int>(rng.uniform_int(c.hcvrp_demand.low, c.hcvrp_demand.high)));
  for (int k = 0; k < c.num_machines; ++k)
    x.capacity.push_back(static_cast<int>(rng.uniform_int(c.hcvrp_capacity.low, c.hcvrp_capacity.high)));
  for (int k = 0; k < c.num_machines; ++k)
    x.speed.push_back(rng.uniform_real(c.hcvrp_speed.low, c.hcvrp_speed.high));
  return x;
}

/// Pure function of (config, config.seed).
inline ProblemInstance generate(const GenConfig& config) {
  validate(config);
  Rng rng(config.seed);
  switch (config.problem) {
    case ProblemKind::fjsp: return generate_fjsp(config, rng);
    case ProblemKind::ffsp: return generate_ffsp(config, rng);
    case ProblemKind::hcvrp: return generate_hcvrp(config, rng);
  }
  throw ConfigError("unknown problem kind");
}

// Convenience: the index-th instance of a seeded stream.
inline ProblemInstance generate(GenConfig config, std::uint64_t base_seed, std::uint64_t index) {
  config.seed = Rng(base_seed).fork(index).seed();
  return generate(config);
}

// ---------------------------------------------------------------------------
// .fjs text format.

namespace detail {

inline bool parse_int_token(const std::string& tok, long long& out) {
  if (tok.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stoll(tok, &pos);
  } catch (...) {
    return false;
  }
  return pos == tok.size();
}

inline std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> toks;
  std::string t;
  while (ss >> t) toks.push_back(t);
  return toks;
}

}  // namespace detail

inline FjspInstance parse_fjs(std::istream& in) {
  FjspInstance x;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto toks = detail::tokenize(line);
    if (toks.empty()) continue;

    if (!have_header) {
      if (toks.size() < 2 || toks.size() > 3)
        throw ParseError(line_no, "header must be 'num_jobs num_machines [avg_flexibility]'");
      long long nj = 0, nm = 0;
      if (!detail::parse_int_token(toks[0], nj) || !detail::parse_int_token(toks[1], nm))
        throw ParseError(line_no, "header counts must be integers");
      if (nj < 1 || nm < 1) throw ParseError(line_no, "header counts must be >= 1");
      x.num_jobs = static_cast<int>(nj);
      x.num_machines = static_cast<int>(nm);
      if (toks.size() == 3) {
        std::size_t pos = 0;
        try {
          (void)std::stod(toks[2], &pos);
        } catch (...) {
          pos = 0;
        }
        if (pos != toks[2].size()) throw ParseError(line_no, "average flexibility must be numeric");
        x.flexibility_token = toks[2];
      }
      have_header = true;
      continue;
    }

    if (static_cast<int>(x.jobs.size()) == x.num_jobs)
      throw ParseError(line_no, "unexpected content after the last job line");

    std::size_t p = 0;
    const auto next = [&](const char* what) -> long long {
      if (p >= toks.size()) throw ParseError(line_no, std::string("truncated line: missing ") + what);
      long long v = 0;
      if (!detail::parse_int_token(toks[p], v))
        throw ParseError(line_no, std::string("expected integer ") + what + ", got '" + toks[p] + "'");
      ++p;
      return v;
    };

    const long long n_ops = next("operation count");
    if (n_ops < 1) throw ParseError(line_no, "job must have at least one operation");
    std::vector<FjspOperation> job;
    for (long long i = 0; i < n_ops; ++i) {
      const long long k = next("eligible machine count");
      if (k < 1) throw ParseError(line_no, "operation must have at least one eligible machine");
      FjspOperation op;
      for (long long e = 0; e < k; ++e) {
        const long long m = next("machine id");
        const long long t = next("processing time");
        if (m < 1 || m > x.num_machines)
          throw ParseError(line_no, "machine id " + std::to_string(m) + " out of range");
        if (t <= 0) throw ParseError(line_no, "non-positive processing time");
        if (op.time_on(static_cast<int>(m - 1)))
          throw ParseError(line_no, "machine " + std::to_string(m) + " listed twice for one operation");
        op.options.push_back({static_cast<int>(m - 1), static_cast<int>(t)});
      }
      job.push_back(std::move(op));
    }
    if (p != toks.size()) throw ParseError(line_no, "trailing tokens after the declared operations");
    x.jobs.push_back(std::move(job));
  }
  if (!have_header) throw ParseError(line_no, "missing header line");
  if (static_cast<int>(x.jobs.size()) != x.num_jobs)
    throw ParseError(line_no, "expected " + std::to_string(x.num_jobs) + " job lines, found " +
                                  std::to_string(x.jobs.size()));
  return x;
}

inline FjspInstance parse_fjs(const std::string& text) {
  std::istringstream in(text);
  return parse_fjs(in);
}

// Canonical .fjs text: single spaces, one job per line, trailing newline.
inline std::string write_fjs(const FjspInstance& x) {
  std::ostringstream out;
  out << x.num_jobs << ' ' << x.num_machines;
  if (x.flexibility_token) out << ' ' << *x.flexibility_token;
  out << '\n';
  for (const auto& job : x.jobs) {
    out << job.size();
    for (const auto& op : job) {
      out << ' ' << op.options.size();
      for (const auto& o : op.options) out << ' ' << (o.machine + 1) << ' ' << o.time;
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// JSON serialization.

inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::ordered_json;

inline Json to_json_value(const ProblemInstance& inst) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["problem"] = std::string(to_string(kind_of(inst)));
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, FjspInstance>) {
          j["num_jobs"] = x.num_jobs;
          j["num_machines"] = x.num_machines;
          if (x.flexibility_token) j["flexibility_token"] = *x.flexibility_token;
          Json jobs = Json::array();
          for (const auto& job : x.jobs) {
            Json ops = Json::array();
            for (const auto& op : job) {
              Json eligible = Json::array(), times = Json::array();
              for (const auto& o : op.options) {
                eligible.push_back(o.machine);
                times.push_back(o.time);
              }
              Json jo;
              jo["eligible"] = eligible;
              jo["proc_time"] = times;
              ops.push_back(jo);
            }
            jobs.push_back(ops);
          }
          j["jobs"] = jobs;
        } else if constexpr (std::is_same_v<T, FfspInstance>) {
          j["num_jobs"] = x.num_jobs;
          j["num_stages"] = x.num_stages;
          j["machines_per_stage"] = x.machines_per_stage;
          j["proc_time"] = x.proc_time;
        } else {
          j["depot"] = {x.depot.x, x.depot.y};
          Json cs = Json::array();
          for (const auto& c : x.customers) cs.push_back({c.x, c.y});
          j["customers"] = cs;
          j["demand"] = x.demand;
          j["capacity"] = x.capacity;
          j["speed"] = x.speed;
        }
      },
      inst);
  return j;
}

inline std::string to_json(const ProblemInstance& inst) { return to_json_value(inst).dump(1); }

namespace detail {

inline const Json& field(const Json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw SchemaError(std::string("missing field '") + name + "'");
  return j.at(name);
}

template <class T>
T get_field(const Json& j, const char* name) {
  const Json& f = field(j, name);
  try {
    return f.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("field '") + name + "' has the wrong type: " + e.what());
  }
}

inline Point get_point(const Json& j, const char* name) {
  const auto v = get_field<std::vector<double>>(j, name);
  if (v.size() != 2) throw SchemaError(std::string("field '") + name + "' must be a 2-element coordinate");
  return {v[0], v[1]};
}

}  // namespace detail

inline ProblemInstance from_json_value(const Json& j) {
  const int version = detail::get_field<int>(j, "schema_version");
  if (version != kSchemaVersion)
    throw SchemaError("unsupported schema_version " + std::to_string(version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  ProblemKind kind;
  try {
    kind = parse_problem_kind(detail::get_field<std::string>(j, "problem"));
  } catch (const ConfigError& e) {
    throw SchemaError(e.what());
  }
  ProblemInstance inst;
  switch (kind) {
    case ProblemKind::fjsp: {
      FjspInstance x;
      x.num_jobs = detail::get_field<int>(j, "num_jobs");
      x.num_machines = detail::get_field<int>(j, "num_machines");
      if (j.contains("flexibility_token")) x.flexibility_token = detail::get_field<std::string>(j, "flexibility_token");
      const Json& jobs = detail::field(j, "jobs");
      if (!jobs.is_array()) throw SchemaError("field 'jobs' must be an array");
      for (const auto& job : jobs) {
        std::vector<FjspOperation> ops;
        for (const auto& jo : job) {
          const auto eligible = detail::get_field<std::vector<int>>(jo, "eligible");
          const auto times = detail::get_field<std::vector<int>>(jo, "proc_time");
          if (eligible.size() != times.size())
            throw SchemaError("field 'proc_time' must match 'eligible' in length");
          FjspOperation op;
          for (std::size_t e = 0; e < eligible.size(); ++e) op.options.push_back({eligible[e], times[e]});
          ops.push_back(std::move(op));
        }
        x.jobs.push_back(std::move(ops));
      }
      inst = std::move(x);
      break;
    }
    case ProblemKind::ffsp: {
      FfspInstance x;
      x.num_jobs = detail::get_field<int>(j, "num_jobs");
      x.num_stages = detail::get_field<int>(j, "num_stages");
      x.machines_per_stage = detail::get_field<std::vector<int>>(j, "machines_per_stage");
      x.proc_time = detail::get_field<std::vector<std::vector<std::vector<int>>>>(j, "proc_time");
      inst = std::move(x);
      break;
    }
    case ProblemKind::hcvrp: {
      HcvrpInstance x;
      x.depot = detail::get_point(j, "depot");
      for (const auto& c : detail::get_field<std::vector<std::vector<double>>>(j, "customers")) {
        if (c.size() != 2) throw SchemaError("field 'customers' entries must be 2-element coordinates");
        x.customers.push_back({c[0], c[1]});
      }
      x.demand = detail::get_field<std::vector<int>>(j, "demand");
      x.capacity = detail::get_field<std::vector<int>>(j, "capacity");
      x.speed = detail::get_field<std::vector<double>>(j, "speed");
      inst = std::move(x);
      break;
    }
  }
  require_valid(inst);
  return inst;
}

inline ProblemInstance from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("malformed JSON: ") + e.what());
  }
  return from_json_value(j);
}

}  // namespace macsim
