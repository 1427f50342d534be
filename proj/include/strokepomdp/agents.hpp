#pragma once

#include <memory>
#include <optional>

#include "despot.hpp"
#include "json_io.hpp"

namespace strokepomdp {

/// A policy plus whatever belief it maintains across one episode.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string name() const = 0;
  /// Chooses the action for epoch `t`.
  virtual Action act(int t) = 0;
  virtual void observe(Action a, const Observation& o) = 0;
  virtual Marginals belief_marginals() const = 0;
  /// Per-decision diagnostics for the trace (null when the agent has none).
  virtual json last_diagnostics() const { return nullptr; }
};

/// Agents whose decisions only need the exact 8-state filter.
class ExactFilterAgent : public Agent {
 public:
  explicit ExactFilterAgent(const StrokeModel& model)
      : model_(model), belief_(initial_belief(model.params().init_mixture)) {}

  void observe(Action a, const Observation& o) override {
    belief_ = exact_update_or_predict(model_, belief_, a, o);
  }
  Marginals belief_marginals() const override { return marginals(belief_); }
  const ExactBelief& belief() const { return belief_; }

 protected:
  const StrokeModel& model_;
  ExactBelief belief_;
};

class RandomAgent : public ExactFilterAgent {
 public:
  RandomAgent(const StrokeModel& model, RandomStream rng)
      : ExactFilterAgent(model), rng_(std::move(rng)) {}
  std::string name() const override { return "random"; }
  Action act(int) override { return random_policy(rng_); }

 private:
  RandomStream rng_;
};

class ExpertAgent : public ExactFilterAgent {
 public:
  ExpertAgent(const StrokeModel& model, Action diagnostic)
      : ExactFilterAgent(model), cfg_(expert_config(model.params(), diagnostic)) {}
  std::string name() const override {
    return cfg_.default_diagnostic == Action::DSA ? "expert-dsa" : "expert-hosp";
  }
  Action act(int) override {
    last_ = expert_decide(cfg_, marginals(belief_));
    return last_->action;
  }
  json last_diagnostics() const override {
    if (!last_) return nullptr;
    return json{{"branch", to_string(last_->branch)}};
  }

 private:
  ExpertConfig cfg_;
  std::optional<ExpertDecision> last_;
};

/// Plans with DESPOT from a particle-filter belief.
class DespotAgent : public Agent {
 public:
  DespotAgent(const StrokeModel& model, const SolverConfig& cfg, RandomStream rng)
      : model_(model), planner_(model, cfg), rng_(std::move(rng)) {
    belief_ = sample_particles(initial_belief(model.params().init_mixture),
                               model.params().n_particles, rng_);
  }
  std::string name() const override { return "despot"; }
  Action act(int) override {
    last_ = planner_.plan(belief_, rng_);
    return last_->action;
  }
  void observe(Action a, const Observation& o) override {
    belief_ = particle_update(model_, belief_, a, o, rng_);
  }
  Marginals belief_marginals() const override { return marginals(belief_); }
  json last_diagnostics() const override {
    if (!last_) return nullptr;
    return deterministic_diagnostics(last_->diagnostics);
  }
  const ParticleBelief& belief() const { return belief_; }

 private:
  const StrokeModel& model_;
  DespotPlanner planner_;
  RandomStream rng_;
  ParticleBelief belief_;
  std::optional<PlanResult> last_;
};

inline std::unique_ptr<Agent> make_agent(PolicyKind kind, const StrokeModel& model,
                                         RandomStream rng) {
  switch (kind) {
    case PolicyKind::Random: return std::make_unique<RandomAgent>(model, std::move(rng));
    case PolicyKind::ExpertHosp: return std::make_unique<ExpertAgent>(model, Action::HOSP);
    case PolicyKind::ExpertDsa: return std::make_unique<ExpertAgent>(model, Action::DSA);
    case PolicyKind::Despot:
      return std::make_unique<DespotAgent>(model, model.params().solver, std::move(rng));
  }
  throw std::invalid_argument("unknown policy kind");
}

}  // namespace strokepomdp
