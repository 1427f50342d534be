#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "belief.hpp"
#include "policies.hpp"

namespace strokepomdp {

/// A sampled start state plus a pre-committed noise stream. The stream is
/// indexed by absolute tree depth, so the same action sequence always replays
/// the same trajectory.
struct Scenario {
  PatientState start_state;
  std::uint64_t seed = 0;
  std::uint32_t index = 0;

  ScenarioCursor at(int depth) const {
    return ScenarioCursor(seed, index, static_cast<std::uint32_t>(depth));
  }
  // Separate stream for stochastic rollout policies, so policy draws never
  // shift the model's draws.
  ScenarioCursor policy_at(int depth) const {
    return ScenarioCursor(seed, index | 0x80000000u, static_cast<std::uint32_t>(depth));
  }
};

/// Default policy used for rollouts and as the planner's fallback.
class RolloutPolicy {
 public:
  RolloutPolicy(const ModelParams& params, const std::string& name) {
    auto kind = parse_policy(name);
    if (!kind || *kind == PolicyKind::Despot)
      throw ConfigError("/solver/rollout_policy", "unknown rollout policy '" + name + "'");
    kind_ = *kind;
    if (kind_ == PolicyKind::ExpertDsa) cfg_ = expert_config(params, Action::DSA);
    else cfg_ = expert_config(params, Action::HOSP);
  }

  PolicyKind kind() const { return kind_; }

  template <UniformSource Rng>
  Action act(const ExactBelief& b, Rng& policy_rng) const {
    if (kind_ == PolicyKind::Random) return random_policy(policy_rng);
    return expert_policy(cfg_, marginals(b));
  }

 private:
  PolicyKind kind_ = PolicyKind::ExpertHosp;
  ExpertConfig cfg_;
};

/// Discounted return of `policy` from `s` along the scenario's stream, starting
/// at tree depth `depth` for at most `steps` steps or until terminal. The
/// policy tracks its own exact belief, starting from `belief`.
inline double rollout_value(const StrokeModel& model, PatientState s, const Scenario& scenario,
                            const RolloutPolicy& policy, ExactBelief belief, int depth, int steps) {
  double value = 0;
  double discount = 1;
  for (int k = 0; k < steps; ++k) {
    if (s.t >= model.horizon()) break;
    auto prng = scenario.policy_at(depth + k);
    const Action a = policy.act(belief, prng);
    auto cursor = scenario.at(depth + k);
    const PatientState next = model.transition(s, a, cursor);
    const Observation o = model.sample_observation(next, a, cursor);
    value += discount * model.step_reward(s, a, next);
    if (model.is_terminal(next, a)) break;
    discount *= model.gamma();
    belief = exact_update_or_predict(model, belief, a, o);
    s = next;
  }
  return value;
}

struct Bounds {
  double lower = 0;
  double upper = 0;
};

/// Node bounds before expansion: lower is the mean rollout value of the node's
/// particles, upper is the best mean immediate reward plus γ·R_max/(1−γ).
/// `states[i]` is the current state of `scenarios[i]`.
inline Bounds initial_bounds(const StrokeModel& model, std::span<const Scenario> scenarios,
                             std::span<const PatientState> states, const ExactBelief& belief,
                             const RolloutPolicy& policy, int depth, int max_depth) {
  if (scenarios.empty() || states.size() != scenarios.size())
    throw std::invalid_argument("initial_bounds needs one state per scenario");
  if (depth >= max_depth || states.front().t >= model.horizon()) return {0, 0};
  const double n = static_cast<double>(scenarios.size());
  double lower = 0;
  for (std::size_t i = 0; i < scenarios.size(); ++i)
    lower += rollout_value(model, states[i], scenarios[i], policy, belief, depth, max_depth - depth);
  lower /= n;

  double best_immediate = -std::numeric_limits<double>::infinity();
  for (Action a : kAllActions) {
    double r = 0;
    for (const auto& s : states) r += model.reward(s, a);
    best_immediate = std::max(best_immediate, r / n);
  }
  const double g = model.gamma();
  const double upper = best_immediate + g * model.max_step_reward() / (1.0 - g);
  return {lower, upper};
}

struct PlanDiagnostics {
  int nodes_expanded = 0;
  int trials = 0;
  int depth_reached = 0;
  double root_lower = 0;
  double root_upper = 0;
  double elapsed_ms = 0;
  bool fallback = false;
  // Nodes found with lower > upper + 1e-9 when the search finished.
  int bound_violations = 0;
};

struct PlanResult {
  Action action = Action::WAIT;
  // Root Q-bounds per action; empty on fallback.
  std::array<std::optional<Bounds>, kNumActions> action_bounds{};
  PlanDiagnostics diagnostics;
};

/// Anytime DESPOT-style search over a determinized sparse tree.
class DespotPlanner {
 public:
  DespotPlanner(const StrokeModel& model, SolverConfig cfg)
      : model_(model), cfg_(std::move(cfg)), rollout_(model.params(), cfg_.rollout_policy) {
    if (cfg_.n_scenarios < 1) throw ConfigError("/solver/n_scenarios", "must be >= 1");
    if (cfg_.max_depth < 1) throw ConfigError("/solver/max_depth", "must be >= 1");
    if (!(cfg_.time_budget_ms > 0)) throw ConfigError("/solver/time_budget_ms", "must be > 0");
  }

  const SolverConfig& config() const { return cfg_; }
  const RolloutPolicy& rollout_policy() const { return rollout_; }

  PlanResult plan(const ParticleBelief& belief, RandomStream& rng) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    if (belief.size() == 0) throw PlanningError("cannot plan from an empty belief");
    double total_w = 0;
    for (double w : belief.weights) total_w += w;
    if (!(total_w > 0)) throw PlanningError("belief has no positive weight");

    reset();
    // Scenarios: start states drawn by weight, one shared stream seed.
    const std::uint64_t seed = rng.next_u64();
    scenarios_.reserve(cfg_.n_scenarios);
    for (int i = 0; i < cfg_.n_scenarios; ++i) {
      double u = rng.uniform() * total_w;
      std::size_t j = 0;
      while (j + 1 < belief.size() && u >= belief.weights[j]) u -= belief.weights[j++];
      scenarios_.push_back(Scenario{belief.particles[j], seed, static_cast<std::uint32_t>(i)});
    }
    const ExactBelief root_belief = to_exact(belief);

    VNode root;
    root.depth = 0;
    root.belief = root_belief;
    for (int i = 0; i < cfg_.n_scenarios; ++i) {
      root.scenario_ids.push_back(i);
      root.states.push_back(scenarios_[i].start_state);
    }
    init_node(root);
    vnodes_.push_back(std::move(root));

    auto elapsed_ms = [&] {
      return std::chrono::duration<double, std::milli>(clock::now() - start).count();
    };
    auto out_of_time = [&] { return elapsed_ms() >= cfg_.time_budget_ms; };

    PlanResult result;
    auto& diag = result.diagnostics;
    bool stop = false;
    while (!stop) {
      if (cfg_.max_trials > 0 && diag.trials >= cfg_.max_trials) break;
      if (vnodes_[0].closed || vnodes_[0].upper - vnodes_[0].lower <= kGapTolerance) break;
      // One trial: descend along the most promising path, expanding leaves.
      const int expanded_before = diag.nodes_expanded;
      int v = 0;
      std::vector<int> path{0};
      while (true) {
        VNode& node = vnodes_[v];
        if (node.closed) break;
        if (!node.expanded) {
          if (out_of_time()) {
            stop = true;
            break;
          }
          expand(v);
          ++diag.nodes_expanded;
        }
        const int next = select_child(v);
        if (next < 0) break;
        v = next;
        path.push_back(v);
        diag.depth_reached = std::max(diag.depth_reached, vnodes_[v].depth);
      }
      for (auto it = path.rbegin(); it != path.rend(); ++it) backup(*it);
      if (diag.nodes_expanded == expanded_before) break;  // nothing left worth exploring
      ++diag.trials;
      if (out_of_time()) stop = true;
    }

    const VNode& r = vnodes_[0];
    diag.root_lower = r.lower;
    diag.root_upper = r.upper;
    if (!r.expanded) {
      diag.fallback = true;
      auto prng = scenarios_.front().policy_at(0);
      result.action = rollout_.act(root_belief, prng);
    } else {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < kNumActions; ++a) {
        const QNode& q = qnodes_[r.qnodes[a]];
        result.action_bounds[a] = Bounds{q.lower, q.upper};
        if (q.lower > best) {
          best = q.lower;
          result.action = static_cast<Action>(a);
        }
      }
    }
    diag.bound_violations = count_violations();
    diag.elapsed_ms = elapsed_ms();
    return result;
  }

 private:
  static constexpr double kGapTolerance = 1e-6;

  struct VNode {
    int depth = 0;
    std::vector<int> scenario_ids;
    std::vector<PatientState> states;
    ExactBelief belief;
    double default_lower = 0;
    double default_upper = 0;
    double lower = 0;
    double upper = 0;
    bool expanded = false;
    bool closed = false;  // terminal or at max depth
    int parent_q = -1;
    std::array<int, kNumActions> qnodes{};
  };

  struct QNode {
    Action action = Action::WAIT;
    int parent = -1;
    double step_value = 0;  // mean reward minus regularization
    std::vector<int> children;
    double lower = 0;
    double upper = 0;
  };

  void reset() {
    vnodes_.clear();
    qnodes_.clear();
    scenarios_.clear();
  }

  double weight(const VNode& v) const {
    return static_cast<double>(v.scenario_ids.size()) / static_cast<double>(scenarios_.size());
  }

  void init_node(VNode& v) {
    std::vector<Scenario> scen;
    scen.reserve(v.scenario_ids.size());
    for (int id : v.scenario_ids) scen.push_back(scenarios_[id]);
    v.closed = v.depth >= cfg_.max_depth || v.states.front().t >= model_.horizon();
    const Bounds b = initial_bounds(model_, scen, v.states, v.belief, rollout_, v.depth, cfg_.max_depth);
    v.default_lower = v.lower = b.lower;
    v.default_upper = v.upper = b.upper;
  }

  void expand(int vi) {
    const double g = model_.gamma();
    for (int a = 0; a < kNumActions; ++a) {
      const Action act = static_cast<Action>(a);
      const VNode& v = vnodes_[vi];
      const double n = static_cast<double>(v.scenario_ids.size());
      std::array<std::vector<int>, kNumObservationCodes> group_ids;
      std::array<std::vector<PatientState>, kNumObservationCodes> group_states;
      double reward_sum = 0;
      for (std::size_t i = 0; i < v.scenario_ids.size(); ++i) {
        const int id = v.scenario_ids[i];
        auto cursor = scenarios_[id].at(v.depth);
        const PatientState next = model_.transition(v.states[i], act, cursor);
        const Observation o = model_.sample_observation(next, act, cursor);
        reward_sum += model_.step_reward(v.states[i], act, next);
        if (model_.is_terminal(next, act)) continue;
        const int code = observation_code(o);
        group_ids[code].push_back(id);
        group_states[code].push_back(next);
      }
      QNode q;
      q.action = act;
      q.parent = vi;
      q.step_value = reward_sum / n;
      if (cfg_.regularization_lambda > 0)
        q.step_value -= cfg_.regularization_lambda / (weight(v) * std::pow(g, v.depth));
      const int qi = static_cast<int>(qnodes_.size());
      const ExactBelief parent_belief = v.belief;
      const int child_depth = v.depth + 1;
      for (int code = 0; code < kNumObservationCodes; ++code) {
        if (group_ids[code].empty()) continue;
        VNode child;
        child.depth = child_depth;
        child.parent_q = qi;
        child.scenario_ids = std::move(group_ids[code]);
        child.states = std::move(group_states[code]);
        child.belief =
            exact_update_or_predict(model_, parent_belief, act, observation_from_code(code));
        init_node(child);
        q.children.push_back(static_cast<int>(vnodes_.size()));
        vnodes_.push_back(std::move(child));
      }
      qnodes_.push_back(std::move(q));
      vnodes_[vi].qnodes[a] = qi;
      update_q(qi);
    }
    vnodes_[vi].expanded = true;
    update_v(vi);
  }

  void update_q(int qi) {
    QNode& q = qnodes_[qi];
    const VNode& parent = vnodes_[q.parent];
    const double n = static_cast<double>(parent.scenario_ids.size());
    double lo = 0, hi = 0;
    for (int c : q.children) {
      const VNode& child = vnodes_[c];
      const double frac = static_cast<double>(child.scenario_ids.size()) / n;
      lo += frac * child.lower;
      hi += frac * child.upper;
    }
    q.lower = q.step_value + model_.gamma() * lo;
    q.upper = q.step_value + model_.gamma() * hi;
  }

  void update_v(int vi) {
    VNode& v = vnodes_[vi];
    if (!v.expanded) return;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int qi : v.qnodes) {
      lo = std::max(lo, qnodes_[qi].lower);
      hi = std::max(hi, qnodes_[qi].upper);
    }
    // Bounds only tighten: the lower bound never drops below the rollout value.
    v.lower = std::max(v.default_lower, lo);
    v.upper = std::min(v.default_upper, hi);
  }

  void backup(int vi) {
    update_v(vi);
    const int qi = vnodes_[vi].parent_q;
    if (qi >= 0) update_q(qi);
  }

  /// Child of the upper-bound-greedy action with the largest excess
  /// uncertainty, or -1 when nothing along that action is worth exploring.
  int select_child(int vi) const {
    const VNode& v = vnodes_[vi];
    int best_a = 0;
    for (int a = 1; a < kNumActions; ++a)
      if (qnodes_[v.qnodes[a]].upper > qnodes_[v.qnodes[best_a]].upper) best_a = a;
    const QNode& q = qnodes_[v.qnodes[best_a]];
    const VNode& root = vnodes_[0];
    const double root_gap = root.upper - root.lower;
    int best = -1;
    double best_eu = 0;
    for (int c : q.children) {
      const VNode& child = vnodes_[c];
      if (child.closed && child.upper - child.lower <= kGapTolerance) continue;
      const double w = weight(child);
      const double eu = w * std::pow(model_.gamma(), child.depth) * (child.upper - child.lower) -
                        w * cfg_.xi * root_gap;
      if (eu > best_eu) {
        best_eu = eu;
        best = c;
      }
    }
    return best;
  }

  int count_violations() const {
    int bad = 0;
    for (const auto& v : vnodes_)
      if (v.lower > v.upper + 1e-9 * std::max(1.0, std::abs(v.upper))) ++bad;
    for (const auto& q : qnodes_)
      if (q.lower > q.upper + 1e-9 * std::max(1.0, std::abs(q.upper))) ++bad;
    return bad;
  }

  const StrokeModel& model_;
  SolverConfig cfg_;
  RolloutPolicy rollout_;
  std::vector<Scenario> scenarios_;
  std::vector<VNode> vnodes_;
  std::vector<QNode> qnodes_;
};

inline PlanResult plan(const ParticleBelief& belief, const SolverConfig& cfg,
                       const StrokeModel& model, RandomStream& rng) {
  DespotPlanner planner(model, cfg);
  return planner.plan(belief, rng);
}

}  // namespace strokepomdp
