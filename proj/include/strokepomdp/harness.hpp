#pragma once

#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>
#include <vector>

#include "agents.hpp"

namespace strokepomdp {

inline constexpr int kSchemaVersion = 1;

enum class TerminalReason : std::uint8_t { Discharge, Horizon };

inline std::string_view to_string(TerminalReason r) {
  return r == TerminalReason::Discharge ? "DISC" : "horizon";
}

struct StepRecord {
  int t = 0;
  Action action = Action::WAIT;
  Observation observation;
  double reward = 0;
  PatientState state;  // true state when the action was taken
  Marginals belief;    // agent's belief when it chose the action
  json diagnostics;
};

struct EpisodeTrace {
  std::string policy;
  std::uint64_t seed = 0;
  int replication = 0;
  PatientState initial_state;
  PatientState final_state;
  std::vector<StepRecord> steps;
  TerminalReason reason = TerminalReason::Horizon;
  double discounted_return = 0;
  bool failed = false;
  std::string error;
};

/// Σ γ^t r_t, accumulated front to back.
inline double discounted_return(const std::vector<StepRecord>& steps, double gamma) {
  double total = 0;
  double discount = 1;
  for (const auto& s : steps) {
    total += discount * s.reward;
    discount *= gamma;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Seeding. Replication k of a benchmark uses episode_seed(master, k) for every
// policy; the initial state and the world noise come from policy-independent
// child streams, which pairs the comparison.

inline std::uint64_t episode_seed(std::uint64_t master, std::uint64_t k) {
  return mix_seed(master, k, 0xE915u);
}

enum StreamTag : std::uint64_t { kInitStream = 1, kWorldStream = 2, kAgentStream = 3 };

inline PatientState episode_initial_state(const StrokeModel& model, std::uint64_t seed) {
  RandomStream init = RandomStream(seed).derive(kInitStream);
  return sample_initial_state(model.params().init_mixture, init);
}

/// Simulates one episode until DISC or the horizon. Exceptions thrown by the
/// agent mark the trace as failed instead of propagating.
inline EpisodeTrace run_episode(const StrokeModel& model, Agent& agent, std::uint64_t seed,
                                std::optional<PatientState> initial = std::nullopt) {
  EpisodeTrace trace;
  trace.policy = agent.name();
  trace.seed = seed;
  RandomStream world = RandomStream(seed).derive(kWorldStream);
  PatientState s = initial ? *initial : episode_initial_state(model, seed);
  s.t = 0;
  trace.initial_state = s;
  try {
    while (true) {
      StepRecord rec;
      rec.t = s.t;
      rec.state = s;
      rec.belief = agent.belief_marginals();
      rec.action = agent.act(s.t);
      rec.diagnostics = agent.last_diagnostics();
      const PatientState next = model.transition(s, rec.action, world);
      rec.observation = model.sample_observation(next, rec.action, world);
      rec.reward = model.step_reward(s, rec.action, next);
      trace.steps.push_back(rec);
      s = next;
      if (model.is_terminal(next, rec.action)) {
        trace.reason =
            rec.action == Action::DISC ? TerminalReason::Discharge : TerminalReason::Horizon;
        break;
      }
      agent.observe(rec.action, rec.observation);
    }
  } catch (const std::exception& e) {
    trace.failed = true;
    trace.error = e.what();
  }
  trace.final_state = s;
  trace.discounted_return = discounted_return(trace.steps, model.gamma());
  return trace;
}

inline EpisodeTrace run_episode(const StrokeModel& model, PolicyKind policy, std::uint64_t seed,
                                std::optional<PatientState> initial = std::nullopt) {
  auto agent = make_agent(policy, model, RandomStream(seed).derive(kAgentStream));
  return run_episode(model, *agent, seed, initial);
}

// ---------------------------------------------------------------------------
// Per-episode outcome and metrics.

struct EpisodeSummary {
  std::string policy;
  int replication = 0;
  std::uint64_t seed = 0;
  PatientState initial_state;
  PatientState final_state;
  int steps = 0;
  TerminalReason reason = TerminalReason::Horizon;
  double discounted_return = 0;
  std::optional<int> time_to_treatment;  // set iff the patient started with a condition
  int wrong_treatments = 0;
  bool recovered = false;
  bool failed = false;
};

/// Epoch by which every initially present condition had been treated;
/// `horizon` when one never was. Empty for initially stroke-free patients.
inline std::optional<int> time_to_treatment(const EpisodeTrace& trace, int horizon) {
  if (trace.initial_state.stroke_free()) return std::nullopt;
  int worst = 0;
  for (int c = 0; c < kNumConditions; ++c) {
    if (!trace.initial_state.flag(c)) continue;
    int cleared = horizon;
    for (const auto& st : trace.steps) {
      if (st.state.flag(c) && treated_condition(st.action) == c) {
        cleared = st.t;
        break;
      }
    }
    worst = std::max(worst, cleared);
  }
  return worst;
}

inline EpisodeSummary summarize(const EpisodeTrace& trace, int horizon) {
  EpisodeSummary s;
  s.policy = trace.policy;
  s.replication = trace.replication;
  s.seed = trace.seed;
  s.initial_state = trace.initial_state;
  s.final_state = trace.final_state;
  s.steps = static_cast<int>(trace.steps.size());
  s.reason = trace.reason;
  s.discounted_return = trace.discounted_return;
  s.time_to_treatment = time_to_treatment(trace, horizon);
  for (const auto& st : trace.steps)
    if (is_treatment(st.action) && !st.state.flag(treated_condition(st.action))) ++s.wrong_treatments;
  // Recovered: leaves stroke-free without an unnecessary treatment.
  s.recovered = trace.final_state.stroke_free() && s.wrong_treatments == 0;
  s.failed = trace.failed;
  return s;
}

struct Histogram {
  double lo = 0;
  double width = 1;
  std::vector<double> mass;  // normalized; all zero when count == 0
  int count = 0;
};

inline Histogram make_histogram(const std::vector<double>& values, double lo, double width,
                                int bins) {
  Histogram h{lo, width, std::vector<double>(bins, 0.0), static_cast<int>(values.size())};
  if (values.empty()) return h;
  std::vector<int> counts(bins, 0);
  for (double v : values) {
    int b = static_cast<int>(std::floor((v - lo) / width));
    counts[std::clamp(b, 0, bins - 1)]++;
  }
  for (int b = 0; b < bins; ++b) h.mass[b] = static_cast<double>(counts[b]) / values.size();
  return h;
}

// Reward histogram covers [-160000, 20000) in 2500-wide bins, clamped at the ends.
inline constexpr double kRewardHistLo = -160000;
inline constexpr double kRewardHistWidth = 2500;
inline constexpr int kRewardHistBins = 72;

struct PolicyReport {
  std::string policy;
  int episodes = 0;
  int failed = 0;
  double recovery_rate = 0;
  double final_stroke_free_rate = 0;
  double disc_reward_mean = 0;
  double disc_reward_std = 0;
  double time_to_treatment_mean = 0;
  double time_to_treatment_std = 0;
  int time_to_treatment_count = 0;
  Histogram reward_hist;
  Histogram reward_hist_stroke;
  Histogram reward_hist_stroke_free;
  Histogram ttt_hist;
};

struct BenchmarkReport {
  std::vector<PolicyReport> policies;
  const PolicyReport* find(std::string_view name) const {
    for (const auto& p : policies)
      if (p.policy == name) return &p;
    return nullptr;
  }
};

struct SampleStats {
  double mean = 0;
  double std = 0;
  std::size_t n = 0;
  double standard_error() const { return n > 0 ? std / std::sqrt(static_cast<double>(n)) : 0; }
};

inline SampleStats sample_stats(const std::vector<double>& v) {
  SampleStats s;
  s.n = v.size();
  if (v.empty()) return s;
  double sum = 0;
  for (double x : v) sum += x;
  s.mean = sum / v.size();
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / (v.size() - 1));
  }
  return s;
}

/// Metrics for one policy. Failed episodes are counted and excluded.
inline PolicyReport compute_metrics(const std::vector<EpisodeSummary>& episodes, int horizon) {
  if (episodes.empty()) throw std::invalid_argument("compute_metrics needs at least one episode");
  PolicyReport r;
  r.policy = episodes.front().policy;
  std::vector<double> rewards, rewards_stroke, rewards_free, ttt;
  int recovered = 0, stroke_free = 0;
  for (const auto& e : episodes) {
    if (e.failed) {
      ++r.failed;
      continue;
    }
    ++r.episodes;
    rewards.push_back(e.discounted_return);
    (e.initial_state.stroke_free() ? rewards_free : rewards_stroke).push_back(e.discounted_return);
    if (e.time_to_treatment) ttt.push_back(*e.time_to_treatment);
    recovered += e.recovered ? 1 : 0;
    stroke_free += e.final_state.stroke_free() ? 1 : 0;
  }
  if (r.episodes > 0) {
    r.recovery_rate = static_cast<double>(recovered) / r.episodes;
    r.final_stroke_free_rate = static_cast<double>(stroke_free) / r.episodes;
  }
  const auto rs = sample_stats(rewards);
  r.disc_reward_mean = rs.mean;
  r.disc_reward_std = rs.std;
  const auto ts = sample_stats(ttt);
  r.time_to_treatment_mean = ts.mean;
  r.time_to_treatment_std = ts.std;
  r.time_to_treatment_count = static_cast<int>(ttt.size());
  r.reward_hist = make_histogram(rewards, kRewardHistLo, kRewardHistWidth, kRewardHistBins);
  r.reward_hist_stroke = make_histogram(rewards_stroke, kRewardHistLo, kRewardHistWidth, kRewardHistBins);
  r.reward_hist_stroke_free = make_histogram(rewards_free, kRewardHistLo, kRewardHistWidth, kRewardHistBins);
  r.ttt_hist = make_histogram(ttt, 0, 1, horizon + 1);
  return r;
}

inline PolicyReport compute_metrics(const std::vector<EpisodeTrace>& traces, int horizon) {
  std::vector<EpisodeSummary> s;
  s.reserve(traces.size());
  for (const auto& t : traces) s.push_back(summarize(t, horizon));
  return compute_metrics(s, horizon);
}

// ---------------------------------------------------------------------------
// Benchmark.

struct BenchmarkOptions {
  std::vector<PolicyKind> policies;
  int episodes = 1000;
  std::uint64_t master_seed = 0;
  int workers = 1;
  bool sample_traces = true;
  std::function<void(int done, int total)> progress;
};

struct BenchmarkResult {
  BenchmarkReport report;
  std::vector<std::vector<EpisodeSummary>> episodes;  // [policy][replication]
  // Forced-initial-state traces: mild (aneurysm only) and severe (AVM + occlusion).
  std::vector<EpisodeTrace> mild_traces;
  std::vector<EpisodeTrace> severe_traces;
  int failed_episodes = 0;
};

inline constexpr PatientState kMildCase{true, false, false, 0};
inline constexpr PatientState kSevereCase{false, true, true, 0};

inline std::uint64_t sample_trace_seed(std::uint64_t master, bool severe) {
  return mix_seed(master, severe ? 0x5E7E2Eu : 0x3117Du, 0x7ACEu);
}

/// Runs every policy on the same K replications. Results are stored by
/// (policy, replication) so the output does not depend on `workers`.
inline BenchmarkResult run_benchmark(const StrokeModel& model, const BenchmarkOptions& opt) {
  if (opt.episodes < 1) throw std::invalid_argument("benchmark needs K >= 1");
  const int np = static_cast<int>(opt.policies.size());
  const int k = opt.episodes;
  BenchmarkResult out;
  out.episodes.assign(np, std::vector<EpisodeSummary>(k));

  const int total = np * k;
  std::atomic<int> next{0};
  std::atomic<int> done{0};
  auto work = [&] {
    while (true) {
      const int job = next.fetch_add(1);
      if (job >= total) break;
      const int p = job / k;
      const int rep = job % k;
      EpisodeTrace tr = run_episode(model, opt.policies[p], episode_seed(opt.master_seed, rep));
      tr.replication = rep;
      out.episodes[p][rep] = summarize(tr, model.horizon());
      const int d = done.fetch_add(1) + 1;
      if (opt.progress) opt.progress(d, total);
    }
  };
  const int workers = std::max(1, opt.workers);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  for (int p = 0; p < np; ++p) {
    out.report.policies.push_back(compute_metrics(out.episodes[p], model.horizon()));
    out.failed_episodes += out.report.policies.back().failed;
  }
  if (opt.sample_traces) {
    for (PolicyKind pk : opt.policies) {
      out.mild_traces.push_back(
          run_episode(model, pk, sample_trace_seed(opt.master_seed, false), kMildCase));
      out.severe_traces.push_back(
          run_episode(model, pk, sample_trace_seed(opt.master_seed, true), kSevereCase));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization.

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline json to_json(const StepRecord& s) {
  json j{{"t", s.t},
         {"action", to_string(s.action)},
         {"observation", to_json(s.observation)},
         {"reward", s.reward},
         {"state", to_json(s.state)},
         {"belief", to_json(s.belief)}};
  if (!s.diagnostics.is_null()) j["diagnostics"] = s.diagnostics;
  return j;
}

inline json to_json(const EpisodeTrace& t, int horizon) {
  json steps = json::array();
  for (const auto& s : t.steps) steps.push_back(to_json(s));
  const auto summary = summarize(t, horizon);
  json j{{"schema_version", kSchemaVersion},
         {"policy", t.policy},
         {"seed", t.seed},
         {"replication", t.replication},
         {"initial_state", to_json(t.initial_state)},
         {"final_state", to_json(t.final_state)},
         {"terminal_reason", to_string(t.reason)},
         {"discounted_return", t.discounted_return},
         {"recovered", summary.recovered},
         {"time_to_treatment", summary.time_to_treatment ? json(*summary.time_to_treatment) : json()},
         {"failed", t.failed},
         {"steps", steps}};
  if (t.failed) j["error"] = t.error;
  return j;
}

inline EpisodeTrace trace_from_json(const json& j) {
  EpisodeTrace t;
  t.policy = j.at("policy").get<std::string>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.replication = j.at("replication").get<int>();
  t.initial_state = state_from_json(j.at("initial_state"));
  t.final_state = state_from_json(j.at("final_state"));
  t.reason = j.at("terminal_reason") == "DISC" ? TerminalReason::Discharge : TerminalReason::Horizon;
  t.discounted_return = j.at("discounted_return").get<double>();
  t.failed = j.at("failed").get<bool>();
  if (j.contains("error")) t.error = j["error"].get<std::string>();
  for (const auto& s : j.at("steps")) {
    StepRecord r;
    r.t = s.at("t").get<int>();
    r.action = action_from_json(s.at("action"));
    r.observation = observation_from_json(s.at("observation"));
    r.reward = s.at("reward").get<double>();
    r.state = state_from_json(s.at("state"));
    const auto& b = s.at("belief");
    r.belief = Marginals{b.at("p_ane").get<double>(), b.at("p_avm").get<double>(),
                         b.at("p_occ").get<double>(), b.at("p_stroke_free").get<double>()};
    if (s.contains("diagnostics")) r.diagnostics = s["diagnostics"];
    t.steps.push_back(std::move(r));
  }
  return t;
}

inline json to_json(const Histogram& h) {
  return json{{"lo", h.lo}, {"width", h.width}, {"count", h.count}, {"mass", h.mass}};
}

inline json report_to_json(const BenchmarkReport& r, int episodes, std::uint64_t master_seed) {
  json pols = json::array();
  for (const auto& p : r.policies)
    pols.push_back(json{{"policy", p.policy},
                        {"episodes", p.episodes},
                        {"failed", p.failed},
                        {"recovery_rate", p.recovery_rate},
                        {"final_stroke_free_rate", p.final_stroke_free_rate},
                        {"disc_reward_mean", p.disc_reward_mean},
                        {"disc_reward_std", p.disc_reward_std},
                        {"time_to_treatment_mean", p.time_to_treatment_mean},
                        {"time_to_treatment_std", p.time_to_treatment_std},
                        {"time_to_treatment_count", p.time_to_treatment_count}});
  return json{{"schema_version", kSchemaVersion}, {"episodes", episodes},
              {"master_seed", master_seed}, {"policies", pols}};
}

inline json histograms_to_json(const BenchmarkReport& r) {
  json out{{"schema_version", kSchemaVersion}, {"policies", json::object()}};
  for (const auto& p : r.policies)
    out["policies"][p.policy] = json{{"discounted_reward", to_json(p.reward_hist)},
                                     {"discounted_reward_stroke", to_json(p.reward_hist_stroke)},
                                     {"discounted_reward_stroke_free", to_json(p.reward_hist_stroke_free)},
                                     {"time_to_treatment", to_json(p.ttt_hist)}};
  return out;
}

inline constexpr std::string_view kEpisodeCsvHeader =
    "policy,replication,seed,init_ane,init_avm,init_occ,final_ane,final_avm,final_occ,steps,"
    "terminal_reason,discounted_return,time_to_treatment,recovered,wrong_treatments,failed";

inline void write_episode_csv(std::ostream& os, const std::vector<std::vector<EpisodeSummary>>& eps) {
  os << kEpisodeCsvHeader << '\n';
  for (const auto& pol : eps)
    for (const auto& e : pol) {
      os << e.policy << ',' << e.replication << ',' << e.seed << ',' << e.initial_state.is_ane << ','
         << e.initial_state.is_avm << ',' << e.initial_state.is_occ << ',' << e.final_state.is_ane
         << ',' << e.final_state.is_avm << ',' << e.final_state.is_occ << ',' << e.steps << ','
         << to_string(e.reason) << ',' << format_double(e.discounted_return) << ',';
      if (e.time_to_treatment) os << *e.time_to_treatment;
      os << ',' << e.recovered << ',' << e.wrong_treatments << ',' << e.failed << '\n';
    }
}

/// Inverse of write_episode_csv; summaries come back grouped by policy in file order.
inline std::vector<std::vector<EpisodeSummary>> read_episode_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kEpisodeCsvHeader)
    throw std::runtime_error("episode CSV: unexpected header");
  std::vector<std::vector<EpisodeSummary>> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 16) throw std::runtime_error("episode CSV: expected 16 fields");
    EpisodeSummary e;
    e.policy = f[0];
    e.replication = std::stoi(f[1]);
    e.seed = std::stoull(f[2]);
    e.initial_state = PatientState{f[3] == "1", f[4] == "1", f[5] == "1", 0};
    e.final_state = PatientState{f[6] == "1", f[7] == "1", f[8] == "1", 0};
    e.steps = std::stoi(f[9]);
    e.final_state.t = e.steps;
    e.reason = f[10] == "DISC" ? TerminalReason::Discharge : TerminalReason::Horizon;
    std::from_chars(f[11].data(), f[11].data() + f[11].size(), e.discounted_return);
    if (!f[12].empty()) e.time_to_treatment = std::stoi(f[12]);
    e.recovered = f[13] == "1";
    e.wrong_treatments = std::stoi(f[14]);
    e.failed = f[15] == "1";
    if (out.empty() || out.back().front().policy != e.policy) out.emplace_back();
    out.back().push_back(std::move(e));
  }
  return out;
}

/// Writes report.json, episodes.csv, histograms.json and traces/ under `dir`.
inline void write_benchmark(const std::filesystem::path& dir, const BenchmarkResult& res,
                            const BenchmarkOptions& opt, int horizon) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "traces");
  {
    std::ofstream f(dir / "report.json");
    f << report_to_json(res.report, opt.episodes, opt.master_seed).dump(2) << '\n';
  }
  {
    std::ofstream f(dir / "histograms.json");
    f << histograms_to_json(res.report).dump(2) << '\n';
  }
  {
    std::ofstream f(dir / "episodes.csv");
    write_episode_csv(f, res.episodes);
  }
  for (std::size_t i = 0; i < res.mild_traces.size(); ++i) {
    const auto& mild = res.mild_traces[i];
    std::ofstream fm(dir / "traces" / (mild.policy + "_mild.json"));
    fm << to_json(mild, horizon).dump(2) << '\n';
    const auto& severe = res.severe_traces[i];
    std::ofstream fs_(dir / "traces" / (severe.policy + "_severe.json"));
    fs_ << to_json(severe, horizon).dump(2) << '\n';
  }
}

/// Action names joined by ' > '.
inline std::string action_timeline(const EpisodeTrace& t) {
  std::string s;
  for (const auto& st : t.steps) {
    if (!s.empty()) s += " > ";
    s += to_string(st.action);
  }
  return s;
}

}  // namespace strokepomdp
