#include <gtest/gtest.h>

#include "oracles.hpp"

namespace sp = strokepomdp;
using sp::Action;

namespace {

sp::ExpertConfig cfg(Action diag = Action::HOSP) {
  return sp::expert_config(sp::ModelParams::defaults(), diag);
}

sp::Marginals m(double ane, double avm, double occ, double sf) { return {ane, avm, occ, sf}; }

}  // namespace

TEST(RandomPolicy, UniformFrequencies) {
  sp::RandomStream rng(123);
  constexpr int kN = 700000;
  std::array<int, 7> counts{};
  for (int i = 0; i < kN; ++i) counts[static_cast<int>(sp::random_policy(rng))]++;
  for (int c : counts) EXPECT_NEAR(c / double(kN), 1.0 / 7, 0.005);
}

TEST(RandomPolicy, ReplaysUnderSeed) {
  sp::RandomStream a(5), b(5);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sp::random_policy(a), sp::random_policy(b));
}

TEST(ExpertPolicy, Examples) {
  EXPECT_EQ(sp::expert_policy(cfg(), m(0.01, 0.02, 0.02, 0.95)), Action::DISC);
  EXPECT_EQ(sp::expert_policy(cfg(), m(0.7, 0.1, 0.1, 0.2)), Action::COIL);
  EXPECT_EQ(sp::expert_policy(cfg(Action::DSA), m(0.3, 0.3, 0.3, 0.3)), Action::DSA);
  EXPECT_EQ(sp::expert_policy(cfg(Action::HOSP), m(0.3, 0.3, 0.3, 0.3)), Action::HOSP);
  EXPECT_EQ(sp::expert_policy(cfg(), m(0.1, 0.65, 0.2, 0.1)), Action::EMBO);
  EXPECT_EQ(sp::expert_policy(cfg(), m(0.1, 0.2, 0.9, 0.05)), Action::REVC);
}

TEST(ExpertPolicy, StrictThresholds) {
  EXPECT_EQ(sp::expert_policy(cfg(), m(0.0, 0.0, 0.0, 0.9)), Action::HOSP);
  EXPECT_EQ(sp::expert_policy(cfg(), m(0.6, 0.0, 0.0, 0.4)), Action::HOSP);
  EXPECT_EQ(sp::expert_policy(cfg(), m(0.6000001, 0.0, 0.0, 0.3)), Action::COIL);
}

TEST(ExpertPolicy, DischargeCheckComesFirst) {
  // Inconsistent marginals, but the rule order must still pick DISC.
  EXPECT_EQ(sp::expert_policy(cfg(), m(0.95, 0.0, 0.0, 0.95)), Action::DISC);
}

TEST(ExpertPolicy, TiesFollowPriorityOrder) {
  EXPECT_EQ(sp::expert_policy(cfg(), m(0.7, 0.7, 0.7, 0.0)), Action::COIL);
  EXPECT_EQ(sp::expert_policy(cfg(), m(0.1, 0.7, 0.7, 0.0)), Action::EMBO);
}

TEST(ExpertPolicy, BranchNames) {
  EXPECT_EQ(sp::expert_decide(cfg(), m(0.7, 0.1, 0.1, 0.2)).branch, sp::ExpertBranch::DominantCondition);
  EXPECT_EQ(sp::to_string(sp::ExpertBranch::DominantCondition), "dominant-condition");
  EXPECT_EQ(sp::expert_decide(cfg(), m(0, 0, 0, 1)).branch, sp::ExpertBranch::Discharge);
  EXPECT_EQ(sp::expert_decide(cfg(), m(0.2, 0, 0, 0.5)).branch, sp::ExpertBranch::DefaultDiagnostic);
}

TEST(ExpertPolicy, NeverWaitsAndIsPure) {
  sp::RandomStream rng(8);
  for (auto diag : {Action::HOSP, Action::DSA}) {
    const auto c = cfg(diag);
    for (int i = 0; i < 100000; ++i) {
      const auto mm = m(rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform());
      const Action a = sp::expert_policy(c, mm);
      ASSERT_NE(a, Action::WAIT);
      ASSERT_EQ(a, sp::expert_policy(c, mm));
    }
  }
}

TEST(ExpertPolicy, ArgmaxInvariantUnderCommonScaling) {
  sp::RandomStream rng(10);
  const auto c = cfg();
  for (int i = 0; i < 10000; ++i) {
    auto mm = m(0.6 + 0.4 * rng.uniform(), 0.6 + 0.4 * rng.uniform(), 0.6 + 0.4 * rng.uniform(), 0.05);
    const Action before = sp::expert_policy(c, mm);
    const double lo = 0.6 / std::min({mm.p_ane, mm.p_avm, mm.p_occ});
    const double k = lo + (1.0 - lo) * rng.uniform();  // keeps every marginal above the threshold
    if (std::min({mm.p_ane, mm.p_avm, mm.p_occ}) * k <= 0.6) continue;
    mm.p_ane *= k;
    mm.p_avm *= k;
    mm.p_occ *= k;
    EXPECT_EQ(sp::expert_policy(c, mm), before);
  }
}

TEST(ExpertPolicy, ConfigRejectsOtherDefaults) {
  EXPECT_THROW(sp::expert_config(sp::ModelParams::defaults(), Action::WAIT), sp::ConfigError);
}

TEST(PolicyNames, RoundTrip) {
  for (auto n : sp::kPolicyNames) EXPECT_EQ(sp::to_string(*sp::parse_policy(n)), n);
  EXPECT_FALSE(sp::parse_policy("greedy"));
}
