// macsim: instance generation, solving, training, verification and benchmarks.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "macsim/macsim.hpp"

namespace fs = std::filesystem;

namespace {

struct NamedInstance {
  std::string id;
  std::shared_ptr<const macsim::ProblemInstance> instance;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("MACSIM_SEED")) {
    long long v = 0;
    if (!macsim::detail::parse_int_token(env, v) || v < 0)
      throw macsim::ConfigError(std::string("MACSIM_SEED is not a non-negative integer: ") + env);
    return static_cast<std::uint64_t>(v);
  }
  return 0;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw macsim::Error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw macsim::Error("cannot write " + p.string());
  out << std::setprecision(10);
  return out;
}

// Every *.json (except manifest.json) and *.fjs file in `dir`, by file name.
std::vector<NamedInstance> load_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw macsim::ConfigError("input directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto& p = entry.path();
    if (!entry.is_regular_file()) continue;
    if ((p.extension() == ".json" && p.filename() != "manifest.json") || p.extension() == ".fjs") files.push_back(p);
  }
  std::sort(files.begin(), files.end());
  std::vector<NamedInstance> out;
  for (const auto& p : files) {
    try {
      macsim::ProblemInstance inst = p.extension() == ".fjs" ? macsim::ProblemInstance(macsim::parse_fjs(read_file(p)))
                                                              : macsim::from_json(read_file(p));
      macsim::require_valid(inst);
      out.push_back({p.stem().string(), std::make_shared<const macsim::ProblemInstance>(std::move(inst))});
    } catch (const macsim::Error& e) {
      throw macsim::Error(p.filename().string() + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string problem = "fjsp";
  int jobs = 10;
  int machines = 5;
  int stages = 3;
  int count = 1;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  macsim::GenConfig g;
  g.problem = macsim::parse_problem_kind(a.problem);
  g.num_jobs = a.jobs;
  g.num_machines = a.machines;
  g.num_stages = a.stages;
  g.seed = resolve_seed(a.seed);
  macsim::validate(g);
  if (a.count < 0) throw macsim::ConfigError("--count must be >= 0");

  const fs::path dir(a.out);
  fs::create_directories(dir);
  macsim::Json manifest;
  manifest["schema_version"] = macsim::kSchemaVersion;
  manifest["config"] = {{"problem", a.problem}, {"jobs", a.jobs}, {"machines", a.machines}, {"stages", a.stages}};
  manifest["seed"] = g.seed;
  manifest["count"] = a.count;
  manifest["files"] = macsim::Json::array();
  for (int i = 0; i < a.count; ++i) {
    std::ostringstream name;
    name << "instance_" << std::setw(5) << std::setfill('0') << i << ".json";
    auto out = open_out(dir / name.str());
    out << macsim::to_json(macsim::generate(g, g.seed, static_cast<std::uint64_t>(i))) << '\n';
    manifest["files"].push_back(name.str());
  }
  open_out(dir / "manifest.json") << manifest.dump(1) << '\n';
  std::cout << "wrote " << a.count << " instances to " << dir.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct SolveArgs {
  std::string method;
  std::string checkpoint;
  std::string decode = "greedy";
  int samples = 1;
  std::string in;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

macsim::RolloutStats solve_one(const SolveArgs& a, const macsim::PolicyParams* params, const NamedInstance& x,
                               const macsim::Rng& rng) {
  const auto& inst = *x.instance;
  const auto kind = macsim::kind_of(inst);
  const auto need = [&](macsim::ProblemKind k) {
    if (kind != k)
      throw macsim::ConfigError("method " + a.method + " does not apply to " + std::string(macsim::to_string(kind)) +
                                " instance " + x.id);
  };
  if (a.method == "fifo" || a.method == "mor" || a.method == "mwkr") {
    need(macsim::ProblemKind::fjsp);
    return macsim::dispatch_fjsp(std::get<macsim::FjspInstance>(inst), macsim::parse_dispatch_rule(a.method));
  }
  if (a.method == "sjf") {
    need(macsim::ProblemKind::ffsp);
    return macsim::sjf_ffsp(std::get<macsim::FfspInstance>(inst));
  }
  if (a.method == "nearest") {
    need(macsim::ProblemKind::hcvrp);
    return macsim::nearest_hcvrp(std::get<macsim::HcvrpInstance>(inst));
  }
  if (a.method == "random") {
    macsim::Rng r = rng;
    return macsim::random_policy(inst, r);
  }
  if (params->config.problem != kind)
    throw macsim::ConfigError("checkpoint was trained on " + std::string(macsim::to_string(params->config.problem)) +
                              ", instance " + x.id + " is " + std::string(macsim::to_string(kind)));
  const auto mode = macsim::parse_decode_mode(a.decode);
  if (a.samples > 1) return macsim::best_of_k(*params, x.instance, a.samples, rng);
  macsim::Rng r = rng.fork(0);
  return macsim::policy_rollout(*params, x.instance, mode, r);
}

int cmd_solve(const SolveArgs& a) {
  static const std::vector<std::string> methods{"fifo", "mor", "mwkr", "sjf", "nearest", "random", "policy"};
  if (std::find(methods.begin(), methods.end(), a.method) == methods.end())
    throw macsim::ConfigError("unknown method '" + a.method + "'");
  if (a.samples < 1) throw macsim::ConfigError("--samples must be >= 1");
  if (a.threads < 1) throw macsim::ConfigError("--threads must be >= 1");
  if (a.samples > 1 && a.decode != "sample") throw macsim::ConfigError("--samples K > 1 requires --decode sample");
  if (a.decode != "greedy" && a.decode != "sample") throw macsim::ConfigError("--decode must be greedy or sample");

  std::optional<macsim::PolicyParams> params;
  if (a.method == "policy") {
    if (a.checkpoint.empty()) throw macsim::ConfigError("method policy requires --checkpoint");
    if (!fs::exists(a.checkpoint)) throw macsim::ConfigError("checkpoint not found: " + a.checkpoint);
    params = macsim::load_checkpoint(a.checkpoint);
  }
  const auto instances = load_dir(a.in);
  const macsim::Rng root(resolve_seed(a.seed));

  std::vector<macsim::RolloutStats> results(instances.size());
  std::vector<double> wall_ms(instances.size());
  macsim::parallel_for(instances.size(), a.threads, [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    results[i] = solve_one(a, params ? &*params : nullptr, instances[i], root.fork(i));
    wall_ms[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const auto v = macsim::validate(*instances[i].instance, results[i].solution);
    if (!v.empty()) throw macsim::Error("instance " + instances[i].id + ": invalid solution: " + v.front());
  });

  auto out = open_out(a.out);
  out << "id,objective,skips,wall_ms\n";
  double so = 0, ss = 0, sw = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& t = results[i].trajectory;
    out << instances[i].id << ',' << t.objective << ',' << t.skip_count << ',' << wall_ms[i] << '\n';
    so += t.objective;
    ss += t.skip_count;
    sw += wall_ms[i];
  }
  const double n = std::max<double>(1.0, static_cast<double>(instances.size()));
  out << "mean," << so / n << ',' << ss / n << ',' << sw / n << '\n';
  std::cout << instances.size() << " instances, mean objective " << so / n << ", mean wall_ms " << sw / n << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out = "train_out";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

int cmd_train(const TrainArgs& a) {
  macsim::ConfigMap settings = a.config.empty() ? macsim::ConfigMap{} : macsim::load_config_file(a.config);
  if (!settings.count("seed")) settings["seed"] = std::to_string(resolve_seed(a.seed));
  if (a.seed) settings["seed"] = std::to_string(*a.seed);
  if (a.threads) settings["threads"] = std::to_string(*a.threads);
  macsim::TrainConfig cfg = macsim::make_train_config(settings, a.overrides);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  cfg.checkpoint_dir = dir.string();
  open_out(dir / "config.json") << macsim::config_to_json(cfg).dump(1) << '\n';
  auto csv = open_out(dir / "report.csv");
  csv << macsim::kTrainCsvHeader << '\n';
  const auto rep = macsim::run(cfg, [&](const macsim::EpochRow& r) {
    macsim::write_csv_row(csv, r);
    csv.flush();
    std::cout << "epoch " << r.epoch << "  val " << r.val_objective << "  skips " << r.mean_skips << "  loss "
              << r.loss << (r.promoted ? "  promoted" : "") << '\n';
  });
  std::cout << "best validation objective " << rep.incumbent.score << " (epoch " << rep.incumbent.epoch << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::string suite = "all";
  std::optional<std::uint64_t> seed;
  int cases = 200;
  bool inject_fault = false;
};

int cmd_verify(const VerifyArgs& a) {
  macsim::VerifyOptions opt;
  opt.seed = a.seed ? *a.seed : 7;
  opt.cases = a.cases;
  if (a.inject_fault) opt.sampler = macsim::corrupted_sampler();
  int failed = 0;
  for (const auto& r : macsim::run_suites(a.suite, opt)) {
    std::cout << r.name << ": " << r.passed << " passed, " << r.failed << " failed\n";
    for (const auto& f : r.failures) std::cout << "  " << f << '\n';
    failed += r.failed;
  }
  return failed ? 1 : 0;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  bool construction_steps = false;
  std::string in;
  std::string checkpoint;
  std::string baseline = "single-action";
  std::string out;
};

int cmd_bench(const BenchArgs& a) {
  if (!a.construction_steps) throw macsim::ConfigError("choose a benchmark (--construction-steps)");
  if (a.baseline != "single-action") throw macsim::ConfigError("unknown baseline '" + a.baseline + "'");
  if (a.checkpoint.empty()) throw macsim::ConfigError("bench requires --checkpoint");
  const auto params = macsim::load_checkpoint(a.checkpoint);
  const auto instances = load_dir(a.in);
  std::optional<std::ofstream> out;
  if (!a.out.empty()) {
    out = open_out(a.out);
    *out << "id,joint_passes,single_action_passes,decision_pairs,skips\n";
  }
  double sj = 0, sa = 0, sd = 0, ss = 0;
  for (const auto& x : instances) {
    macsim::Rng r(0);
    const auto st = macsim::policy_rollout(params, x.instance, macsim::DecodeMode::greedy, r);
    if (out)
      *out << x.id << ',' << st.forward_passes << ',' << st.single_action_passes << ',' << st.decision_pairs << ','
           << st.trajectory.skip_count << '\n';
    sj += static_cast<double>(st.forward_passes);
    sa += static_cast<double>(st.single_action_passes);
    sd += static_cast<double>(st.decision_pairs);
    ss += st.trajectory.skip_count;
  }
  const double n = std::max<double>(1.0, static_cast<double>(instances.size()));
  if (out) *out << "mean," << sj / n << ',' << sa / n << ',' << sd / n << ',' << ss / n << '\n';
  std::cout << std::setprecision(6) << "instances " << instances.size() << "\njoint_passes " << sj / n
            << "\nsingle_action_passes " << sa / n << "\ndecision_pairs " << sd / n << "\nmean_skips " << ss / n
            << "\nratio_joint_over_single " << (sa > 0 ? sj / sa : 0.0) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent constructive scheduling and routing toolkit"};
  app.require_subcommand(1);

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Write random instances as JSON plus a manifest");
  gen->add_option("--problem", ga.problem, "fjsp, ffsp or hcvrp")->capture_default_str();
  gen->add_option("--jobs", ga.jobs, "Jobs, or customers for hcvrp")->capture_default_str();
  gen->add_option("--machines", ga.machines, "Machines (fjsp), machines per stage (ffsp) or vehicles (hcvrp)")
      ->capture_default_str();
  gen->add_option("--stages", ga.stages, "Stages (ffsp)")->capture_default_str();
  gen->add_option("--count", ga.count, "Number of instances")->capture_default_str();
  gen->add_option("--seed", ga.seed, "Seed (default: $MACSIM_SEED, else 0)");
  gen->add_option("--out", ga.out, "Output directory")->required();

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve", "Solve every instance in a directory; CSV columns id,objective,skips,wall_ms "
                                            "followed by a 'mean' footer row");
  solve->add_option("--method", sa.method, "fifo|mor|mwkr|sjf|nearest|random|policy")->required();
  solve->add_option("--checkpoint", sa.checkpoint, "Policy checkpoint (method policy)");
  solve->add_option("--decode", sa.decode, "greedy or sample")->capture_default_str();
  solve->add_option("--samples", sa.samples, "Best of K sampled rollouts")->capture_default_str();
  solve->add_option("--in", sa.in, "Instance directory (*.json, *.fjs)")->required();
  solve->add_option("--out", sa.out, "Report CSV")->required();
  solve->add_option("--seed", sa.seed, "Seed (default: $MACSIM_SEED, else 0)");
  solve->add_option("--threads", sa.threads, "Worker threads")->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Self-improvement training; writes report.csv, config.json and checkpoints");
  train->add_option("--config", ta.config, "TOML or JSON config file");
  train->add_option("--override", ta.overrides, "key=value, repeatable");
  train->add_option("--out", ta.out, "Output directory")->capture_default_str();
  train->add_option("--seed", ta.seed, "Seed (default: config, then $MACSIM_SEED, else 0)");
  train->add_option("--threads", ta.threads, "Worker threads");

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Run oracle-backed verification suites");
  verify->add_option("--suite", va.suite, "prop1|thm-e1|grads|env|all")->capture_default_str();
  verify->add_option("--seed", va.seed, "Seed (default 7)");
  verify->add_option("--cases", va.cases, "Random cases per suite")->capture_default_str();
  verify->add_flag("--inject-fault", va.inject_fault)->group("");

  BenchArgs ba;
  auto* bench = app.add_subcommand(
      "bench",
      "Construction-step benchmark. Greedy joint decoding per instance; CSV columns: id, joint_passes (joint decoding "
      "steps), single_action_passes (pairs emitted, one forward pass each under single-action decoding), "
      "decision_pairs (pairs whose agent had a real task available), skips; 'mean' footer row");
  bench->add_flag("--construction-steps", ba.construction_steps, "Count forward passes");
  bench->add_option("--in", ba.in, "Instance directory")->required();
  bench->add_option("--checkpoint", ba.checkpoint, "Policy checkpoint")->required();
  bench->add_option("--baseline", ba.baseline, "single-action")->capture_default_str();
  bench->add_option("--out", ba.out, "Optional per-instance CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (gen->parsed()) return cmd_generate(ga);
    if (solve->parsed()) return cmd_solve(sa);
    if (train->parsed()) return cmd_train(ta);
    if (verify->parsed()) return cmd_verify(va);
    if (bench->parsed()) return cmd_bench(ba);
  } catch (const macsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
