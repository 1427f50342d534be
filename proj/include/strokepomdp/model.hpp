#pragma once

#include <array>
#include <cmath>

#include "params.hpp"
#include "random.hpp"
#include "types.hpp"

namespace strokepomdp {

/// Eight-way categorical draw from the initial mixture; t = 0.
template <UniformSource Rng>
PatientState sample_initial_state(const InitialMixture& mixture, Rng& rng) {
  if (std::abs(mixture.total() - 1.0) > 1e-9)
    throw ConfigError("/init_mixture", "mixture does not sum to 1");
  const double u = rng.uniform();
  double cum = 0;
  int last_positive = 0;
  for (int idx = 0; idx < kNumConditionCombos; ++idx) {
    const double m = mixture.mass(idx);
    if (m <= 0) continue;
    last_positive = idx;
    cum += m;
    if (u < cum) return PatientState::from_index(idx, 0);
  }
  return PatientState::from_index(last_positive, 0);
}

/// The stroke POMDP: transitions, observations, rewards and termination.
///
/// Each sampler draws a fixed number of uniforms per call (three for a
/// transition, three for an observation) so determinized scenarios stay
/// aligned regardless of which branch a draw takes.
class StrokeModel {
 public:
  explicit StrokeModel(ModelParams params) : p_(std::move(params)) {
    validate(p_);
    precompute();
  }

  const ModelParams& params() const { return p_; }
  double gamma() const { return p_.gamma; }
  int horizon() const { return p_.horizon; }

  // -- transitions ----------------------------------------------------------

  template <UniformSource Rng>
  PatientState transition(const PatientState& s, Action a, Rng& rng) const {
    PatientState next = s;
    const int treated = treated_condition(a);
    if (treated >= 0) next.set_flag(treated, false);
    // One draw per condition either way, so the stream stays aligned.
    for (int c = 0; c < kNumConditions; ++c) {
      const double u = rng.uniform();
      if (c != treated && !next.flag(c) && u < p_.onset(c)) next.set_flag(c, true);
    }
    next.t = s.t + 1;
    return next;
  }

  double transition_probability(const PatientState& s, Action a, const PatientState& next) const {
    if (next.t != s.t + 1) return 0.0;
    return trans_[static_cast<int>(a)][s.condition_index()][next.condition_index()];
  }

  /// P(next flags | flags, a) by condition index.
  double transition_probability(int from, Action a, int to) const {
    return trans_[static_cast<int>(a)][from][to];
  }

  // -- observations ---------------------------------------------------------

  SirirajClass siriraj_class(const PatientState& s) const {
    const bool hem = s.is_ane || s.is_avm;
    if (hem && s.is_occ) return p_.mixed_siriraj_class;
    if (hem) return SirirajClass::hemorrhagic;
    if (s.is_occ) return SirirajClass::ischemic;
    return SirirajClass::none;
  }

  /// Noisy-OR over present conditions; 1 - specificity when stroke-free.
  double ct_positive_probability(const PatientState& s, Action a) const {
    return ct_pos_[static_cast<int>(noise_profile(a))][s.condition_index()];
  }

  template <UniformSource Rng>
  Observation sample_observation(const PatientState& next, Action a, Rng& rng) const {
    const double u0 = rng.uniform();
    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    if (a == Action::DSA) {
      const double acc = p_.dsa_accuracy;
      return DsaReport{u0 < acc ? next.is_ane : !next.is_ane, u1 < acc ? next.is_avm : !next.is_avm,
                       u2 < acc ? next.is_occ : !next.is_occ};
    }
    const int prof = static_cast<int>(noise_profile(a));
    ClinicalObs obs;
    obs.ct = u0 < ct_pos_[prof][next.condition_index()] ? CtReading::CT_POSITIVE
                                                        : CtReading::CT_NEGATIVE;
    const auto& table = p_.siriraj_tables[static_cast<int>(siriraj_class(next))][prof];
    double cum = 0;
    obs.siriraj = kSirirajMax;
    for (int i = 0; i < kSirirajBins; ++i) {
      cum += table[i];
      if (u1 < cum && table[i] > 0) {
        obs.siriraj = kSirirajMin + i;
        break;
      }
    }
    // Float round-off can leave u1 above the final cumulative sum; fall back to
    // the last bin with positive mass so the draw stays in the support.
    if (u1 >= cum) {
      for (int i = kSirirajBins - 1; i >= 0; --i)
        if (table[i] > 0) {
          obs.siriraj = kSirirajMin + i;
          break;
        }
    }
    return obs;
  }

  double observation_likelihood(const Observation& o, const PatientState& next, Action a) const {
    if (is_dsa(o) != (a == Action::DSA))
      throw LikelihoodDomainError(std::string("observation variant does not match action ") +
                                  std::string(to_string(a)));
    if (const auto* c = std::get_if<ClinicalObs>(&o)) {
      if (c->siriraj < kSirirajMin || c->siriraj > kSirirajMax)
        throw LikelihoodDomainError("siriraj score outside [-5, 5]");
    }
    return lik_[static_cast<int>(a)][next.condition_index()][observation_code(o)];
  }

  /// Likelihood by (action, condition index, observation code); 0 on variant mismatch.
  double likelihood(Action a, int idx, int code) const {
    return lik_[static_cast<int>(a)][idx][code];
  }

  // -- rewards and termination ---------------------------------------------

  double reward(const PatientState& s, Action a) const {
    const auto& r = p_.reward_table;
    const bool sick = s.any_condition();
    switch (a) {
      case Action::COIL:
      case Action::EMBO:
      case Action::REVC:
        return r.treatment_cost +
               (s.flag(treated_condition(a)) ? r.correct_treatment : r.wrong_treatment);
      case Action::DSA: return r.dsa_cost + (sick ? r.needed_dsa : r.unnecessary_dsa);
      case Action::HOSP: return r.hosp_cost + (sick ? r.correct_hosp : r.unnecessary_hosp);
      case Action::WAIT: return sick ? r.not_hospitalizing_penalty : 0.0;
      case Action::DISC: return sick ? r.wrong_discharge : r.correct_discharge;
    }
    return 0.0;
  }

  bool is_terminal(const PatientState& s, Action last_action) const {
    return last_action == Action::DISC || s.t >= p_.horizon;
  }

  /// One-off penalty charged when an episode ends with a condition still present.
  double terminal_penalty(const PatientState& final_state) const {
    return final_state.any_condition() ? p_.reward_table.untreated_terminal_penalty : 0.0;
  }

  /// Reward actually collected for taking `a` in `s` and landing in `next`.
  double step_reward(const PatientState& s, Action a, const PatientState& next) const {
    double r = reward(s, a);
    if (is_terminal(next, a)) r += terminal_penalty(next);
    return r;
  }

  /// Upper bound on any single step's reward.
  double max_step_reward() const { return p_.reward_table.max_positive(); }

 private:
  void precompute() {
    for (int a = 0; a < kNumActions; ++a) {
      const int treated = treated_condition(static_cast<Action>(a));
      for (int from = 0; from < kNumConditionCombos; ++from) {
        for (int to = 0; to < kNumConditionCombos; ++to) {
          double prob = 1.0;
          for (int c = 0; c < kNumConditions; ++c) {
            const bool was = ((from >> c) & 1) != 0;
            const bool now = ((to >> c) & 1) != 0;
            if (c == treated) prob *= now ? 0.0 : 1.0;
            else if (was) prob *= now ? 1.0 : 0.0;
            else prob *= now ? p_.onset(c) : 1.0 - p_.onset(c);
          }
          trans_[a][from][to] = prob;
        }
      }
    }
    for (int prof = 0; prof < 2; ++prof) {
      for (int idx = 0; idx < kNumConditionCombos; ++idx) {
        if (idx == 0) {
          ct_pos_[prof][idx] = 1.0 - p_.ct_specificity[prof];
          continue;
        }
        double miss = 1.0;
        for (int c = 0; c < kNumConditions; ++c)
          if ((idx >> c) & 1) miss *= 1.0 - p_.ct_sensitivity[prof][c];
        ct_pos_[prof][idx] = 1.0 - miss;
      }
    }
    for (int a = 0; a < kNumActions; ++a) {
      const Action act = static_cast<Action>(a);
      const int prof = static_cast<int>(noise_profile(act));
      for (int idx = 0; idx < kNumConditionCombos; ++idx) {
        const PatientState s = PatientState::from_index(idx);
        auto& row = lik_[a][idx];
        row.fill(0.0);
        if (act == Action::DSA) {
          for (int b = 0; b < 8; ++b) {
            double l = 1.0;
            for (int c = 0; c < kNumConditions; ++c) {
              const bool pred = ((b >> c) & 1) != 0;
              l *= pred == s.flag(c) ? p_.dsa_accuracy : 1.0 - p_.dsa_accuracy;
            }
            row[kNumClinicalCodes + b] = l;
          }
        } else {
          const double pos = ct_pos_[prof][idx];
          const auto& table = p_.siriraj_tables[static_cast<int>(siriraj_class(s))][prof];
          for (int i = 0; i < kSirirajBins; ++i) {
            row[i] = (1.0 - pos) * table[i];
            row[kSirirajBins + i] = pos * table[i];
          }
        }
      }
    }
  }

  ModelParams p_;
  std::array<std::array<std::array<double, 8>, 8>, kNumActions> trans_{};
  std::array<std::array<double, 8>, 2> ct_pos_{};
  std::array<std::array<std::array<double, kNumObservationCodes>, 8>, kNumActions> lik_{};
};

}  // namespace strokepomdp
