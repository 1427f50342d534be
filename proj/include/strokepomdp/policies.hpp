#pragma once

#include <array>
#include <optional>
#include <string_view>

#include "belief.hpp"

namespace strokepomdp {

enum class PolicyKind : std::uint8_t { Random, ExpertHosp, ExpertDsa, Despot };

inline constexpr std::array<std::string_view, 4> kPolicyNames = {"random", "expert-hosp",
                                                                 "expert-dsa", "despot"};

inline std::string_view to_string(PolicyKind k) { return kPolicyNames[static_cast<int>(k)]; }

inline std::optional<PolicyKind> parse_policy(std::string_view name) {
  for (int i = 0; i < static_cast<int>(kPolicyNames.size()); ++i)
    if (kPolicyNames[i] == name) return static_cast<PolicyKind>(i);
  return std::nullopt;
}

/// Uniform over all seven actions; one draw per call.
template <UniformSource Rng>
Action random_policy(Rng& rng) {
  const int k = static_cast<int>(rng.uniform() * kNumActions);
  return kAllActions[k < kNumActions ? k : kNumActions - 1];
}

struct ExpertConfig {
  Action default_diagnostic = Action::HOSP;
  double pdom_thres = 0.6;
  double pdisc_min = 0.9;
  // Condition indices in tie-break priority order.
  std::array<int, 3> tie_break_order = {0, 1, 2};
};

inline ExpertConfig expert_config(const ModelParams& p, Action diagnostic) {
  if (diagnostic != Action::HOSP && diagnostic != Action::DSA)
    throw ConfigError("/default_diagnostic", "expert default must be HOSP or DSA");
  return ExpertConfig{diagnostic, p.pdom_thres, p.pdisc_min, {0, 1, 2}};
}

enum class ExpertBranch : std::uint8_t { Discharge, DominantCondition, DefaultDiagnostic };

inline std::string_view to_string(ExpertBranch b) {
  switch (b) {
    case ExpertBranch::Discharge: return "discharge";
    case ExpertBranch::DominantCondition: return "dominant-condition";
    case ExpertBranch::DefaultDiagnostic: return "default-diagnostic";
  }
  return "";
}

struct ExpertDecision {
  Action action;
  ExpertBranch branch;
};

/// Discharge check first, then the dominant condition, then the default test.
inline ExpertDecision expert_decide(const ExpertConfig& cfg, const Marginals& m) {
  if (m.p_stroke_free > cfg.pdisc_min) return {Action::DISC, ExpertBranch::Discharge};
  int best = -1;
  double best_p = -1;
  for (int c : cfg.tie_break_order) {
    if (m.condition(c) > best_p) {
      best = c;
      best_p = m.condition(c);
    }
  }
  if (best_p > cfg.pdom_thres) return {treatment_for(best), ExpertBranch::DominantCondition};
  return {cfg.default_diagnostic, ExpertBranch::DefaultDiagnostic};
}

inline Action expert_policy(const ExpertConfig& cfg, const Marginals& m) {
  return expert_decide(cfg, m).action;
}

}  // namespace strokepomdp
