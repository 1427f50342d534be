// Command-line front end: benchmark runs, single episodes, trace inspection
// and the HTTP session server.

#include <CLI11.hpp>
#include <strokepomdp/harness.hpp>
#include <strokepomdp/http_api.hpp>

#include <cstdio>
#include <iostream>

namespace sp = strokepomdp;

namespace {

sp::ModelParams load_config(const std::string& path) {
  return path.empty() ? sp::ModelParams::defaults() : sp::load_params(path);
}

std::vector<sp::PolicyKind> parse_policies(const std::vector<std::string>& names) {
  std::vector<sp::PolicyKind> out;
  for (const auto& n : names) {
    if (n == "all") {
      for (auto name : sp::kPolicyNames) out.push_back(*sp::parse_policy(name));
      continue;
    }
    auto k = sp::parse_policy(n);
    if (!k) throw CLI::ValidationError("--policy", "unknown policy '" + n + "'");
    out.push_back(*k);
  }
  return out;
}

int run_bench(const std::vector<std::string>& policies, int episodes, bool full,
              std::uint64_t seed, const std::string& config, const std::string& out_dir,
              int workers, bool quiet) {
  const sp::StrokeModel model(load_config(config));
  sp::BenchmarkOptions opt;
  opt.policies = parse_policies(policies);
  opt.episodes = full ? 10000 : episodes;
  opt.master_seed = seed;
  opt.workers = workers;
  if (!quiet)
    opt.progress = [](int done, int total) {
      if (done % 200 == 0 || done == total) std::fprintf(stderr, "\r%d/%d episodes", done, total);
      if (done == total) std::fputc('\n', stderr);
    };
  const auto res = sp::run_benchmark(model, opt);
  sp::write_benchmark(out_dir, res, opt, model.horizon());

  std::printf("%-12s %10s %10s %9s %9s %8s\n", "policy", "reward", "sd", "recovery", "ttt", "failed");
  for (const auto& p : res.report.policies)
    std::printf("%-12s %10.2f %10.2f %9.3f %9.3f %8d\n", p.policy.c_str(), p.disc_reward_mean,
                p.disc_reward_std, p.recovery_rate, p.time_to_treatment_mean, p.failed);
  if (res.failed_episodes > 0) {
    std::fprintf(stderr, "%d episode(s) failed\n", res.failed_episodes);
    return 1;
  }
  return 0;
}

int run_one(const std::string& policy, std::uint64_t seed, const std::string& config,
            const std::string& trace_path, const std::string& initial) {
  const sp::StrokeModel model(load_config(config));
  auto kind = sp::parse_policy(policy);
  if (!kind) throw CLI::ValidationError("--policy", "unknown policy '" + policy + "'");
  std::optional<sp::PatientState> init;
  if (initial == "mild") init = sp::kMildCase;
  else if (initial == "severe") init = sp::kSevereCase;
  const auto trace = sp::run_episode(model, *kind, seed, init);
  const auto j = sp::to_json(trace, model.horizon());
  if (trace_path.empty() || trace_path == "-") {
    std::cout << j.dump(2) << '\n';
  } else {
    std::ofstream f(trace_path);
    f << j.dump(2) << '\n';
    std::cout << sp::action_timeline(trace) << '\n';
  }
  if (trace.failed) {
    std::fprintf(stderr, "episode failed: %s\n", trace.error.c_str());
    return 1;
  }
  return 0;
}

int run_inspect(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  const auto trace = sp::trace_from_json(sp::json::parse(f));
  std::printf("policy %s  seed %llu  start %s\n", trace.policy.c_str(),
              static_cast<unsigned long long>(trace.seed), sp::to_string(trace.initial_state).c_str());
  std::printf("%3s  %-5s %-22s %8s %8s %8s %8s %10s\n", "t", "act", "observation", "p_ane", "p_avm",
              "p_occ", "p_free", "reward");
  for (const auto& s : trace.steps)
    std::printf("%3d  %-5s %-22s %8.4f %8.4f %8.4f %8.4f %10.1f\n", s.t,
                std::string(sp::to_string(s.action)).c_str(), sp::to_string(s.observation).c_str(),
                s.belief.p_ane, s.belief.p_avm, s.belief.p_occ, s.belief.p_stroke_free, s.reward);
  std::printf("timeline  %s\n", sp::action_timeline(trace).c_str());
  std::printf("end %s (%s)  discounted return %.2f\n", sp::to_string(trace.final_state).c_str(),
              std::string(sp::to_string(trace.reason)).c_str(), trace.discounted_return);
  return 0;
}

int run_serve(const std::string& host, int port, const std::string& config, const std::string& db,
              double ttl, std::uint64_t id_seed) {
  sp::ServiceConfig cfg;
  cfg.base = load_config(config);
  cfg.db_path = db;
  cfg.ttl_seconds = ttl;
  cfg.id_seed = id_seed;
  sp::SessionService svc(std::move(cfg));
  svc.purge_expired();
  httplib::Server server;
  sp::mount_v1(server, svc);
  std::fprintf(stderr, "listening on %s:%d\n", host.c_str(), port);
  return server.listen(host, port) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stroke diagnosis and treatment POMDP engine"};
  app.require_subcommand(1);

  std::string config;

  auto* bench = app.add_subcommand("bench", "Monte Carlo comparison of policies");
  std::vector<std::string> policies{"all"};
  int episodes = 1000;
  bool full = false;
  std::uint64_t seed = 1;
  std::string out_dir = "bench_out";
  int workers = 1;
  bool quiet = false;
  bench->add_option("--policy", policies, "random, expert-hosp, expert-dsa, despot or all")
      ->delimiter(',');
  bench->add_option("--episodes,-k", episodes, "paired episodes per policy")->check(CLI::PositiveNumber);
  bench->add_flag("--full", full, "10000 episodes");
  bench->add_option("--seed", seed, "master seed");
  bench->add_option("--config", config, "parameter file (JSON)")->check(CLI::ExistingFile);
  bench->add_option("--out", out_dir, "output directory");
  bench->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  bench->add_flag("--quiet,-q", quiet);

  auto* episode = app.add_subcommand("episode", "Simulate one episode");
  std::string policy = "despot";
  std::string trace_path;
  std::string initial;
  episode->add_option("--policy", policy)->required();
  episode->add_option("--seed", seed, "episode seed");
  episode->add_option("--config", config)->check(CLI::ExistingFile);
  episode->add_option("--trace", trace_path, "write the trace here ('-' for stdout)");
  episode->add_option("--initial", initial, "force the starting case")
      ->check(CLI::IsMember({"mild", "severe"}));

  auto* inspect = app.add_subcommand("inspect", "Pretty-print a trace file");
  std::string inspect_path;
  inspect->add_option("--trace", inspect_path)->required()->check(CLI::ExistingFile);

  auto* serve = app.add_subcommand("serve", "Run the /v1 session API");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string db = "sessions.sqlite";
  double ttl = 24 * 3600;
  std::uint64_t id_seed = 0;
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--config", config)->check(CLI::ExistingFile);
  serve->add_option("--db", db, "session store path (':memory:' for none)");
  serve->add_option("--ttl", ttl, "idle session lifetime in seconds")->check(CLI::PositiveNumber);
  serve->add_option("--id-seed", id_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*bench) return run_bench(policies, episodes, full, seed, config, out_dir, workers, quiet);
    if (*episode) return run_one(policy, seed, config, trace_path, initial);
    if (*inspect) return run_inspect(inspect_path);
    if (*serve) return run_serve(host, port, config, db, ttl, id_seed);
  } catch (const sp::ConfigError& e) {
    std::fprintf(stderr, "config error at %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
