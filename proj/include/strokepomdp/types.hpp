#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

namespace strokepomdp {

/// Hidden condition flags plus the visible epoch counter.
struct PatientState {
  bool is_ane = false;
  bool is_avm = false;
  bool is_occ = false;
  int t = 0;

  bool any_condition() const { return is_ane || is_avm || is_occ; }
  bool stroke_free() const { return !any_condition(); }

  bool flag(int i) const {
    switch (i) {
      case 0: return is_ane;
      case 1: return is_avm;
      default: return is_occ;
    }
  }
  void set_flag(int i, bool v) {
    switch (i) {
      case 0: is_ane = v; break;
      case 1: is_avm = v; break;
      default: is_occ = v; break;
    }
  }

  /// Index of the flag combination in [0, 8): bit0 = ane, bit1 = avm, bit2 = occ.
  int condition_index() const {
    return (is_ane ? 1 : 0) | (is_avm ? 2 : 0) | (is_occ ? 4 : 0);
  }

  static PatientState from_index(int idx, int t = 0) {
    return PatientState{(idx & 1) != 0, (idx & 2) != 0, (idx & 4) != 0, t};
  }

  friend bool operator==(const PatientState&, const PatientState&) = default;
};

inline constexpr int kNumConditionCombos = 8;
inline constexpr int kNumConditions = 3;

enum class Action : std::uint8_t { WAIT = 0, HOSP, DSA, COIL, EMBO, REVC, DISC };

inline constexpr int kNumActions = 7;
inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::WAIT, Action::HOSP, Action::DSA, Action::COIL,
    Action::EMBO, Action::REVC, Action::DISC};

inline constexpr std::array<std::string_view, kNumActions> kActionNames = {
    "WAIT", "HOSP", "DSA", "COIL", "EMBO", "REVC", "DISC"};

inline std::string_view to_string(Action a) {
  return kActionNames[static_cast<int>(a)];
}

inline std::optional<Action> parse_action(std::string_view s) {
  for (int i = 0; i < kNumActions; ++i)
    if (kActionNames[i] == s) return static_cast<Action>(i);
  return std::nullopt;
}

inline std::ostream& operator<<(std::ostream& os, Action a) {
  return os << to_string(a);
}

inline bool is_treatment(Action a) {
  return a == Action::COIL || a == Action::EMBO || a == Action::REVC;
}

/// Condition index (0 = ane, 1 = avm, 2 = occ) cleared by a treatment, -1 otherwise.
inline int treated_condition(Action a) {
  switch (a) {
    case Action::COIL: return 0;
    case Action::EMBO: return 1;
    case Action::REVC: return 2;
    default: return -1;
  }
}

inline Action treatment_for(int condition) {
  static constexpr std::array<Action, 3> kTreat = {Action::COIL, Action::EMBO, Action::REVC};
  return kTreat.at(static_cast<std::size_t>(condition));
}

enum class CtReading : std::uint8_t { CT_NEGATIVE = 0, CT_POSITIVE = 1 };

inline constexpr int kSirirajMin = -5;
inline constexpr int kSirirajMax = 5;
inline constexpr int kSirirajBins = kSirirajMax - kSirirajMin + 1;

struct ClinicalObs {
  CtReading ct = CtReading::CT_NEGATIVE;
  int siriraj = 0;
  friend bool operator==(const ClinicalObs&, const ClinicalObs&) = default;
};

struct DsaReport {
  bool pred_ane = false;
  bool pred_avm = false;
  bool pred_occ = false;
  bool pred(int i) const { return i == 0 ? pred_ane : (i == 1 ? pred_avm : pred_occ); }
  friend bool operator==(const DsaReport&, const DsaReport&) = default;
};

using Observation = std::variant<ClinicalObs, DsaReport>;

inline bool is_dsa(const Observation& o) { return std::holds_alternative<DsaReport>(o); }

// Observation alphabet: 22 clinical codes then 8 DSA codes.
inline constexpr int kNumClinicalCodes = 2 * kSirirajBins;
inline constexpr int kNumObservationCodes = kNumClinicalCodes + 8;

inline int observation_code(const Observation& o) {
  if (const auto* c = std::get_if<ClinicalObs>(&o))
    return static_cast<int>(c->ct) * kSirirajBins + (c->siriraj - kSirirajMin);
  const auto& d = std::get<DsaReport>(o);
  return kNumClinicalCodes + ((d.pred_ane ? 1 : 0) | (d.pred_avm ? 2 : 0) | (d.pred_occ ? 4 : 0));
}

inline Observation observation_from_code(int code) {
  if (code < kNumClinicalCodes)
    return ClinicalObs{static_cast<CtReading>(code / kSirirajBins),
                       code % kSirirajBins + kSirirajMin};
  const int b = code - kNumClinicalCodes;
  return DsaReport{(b & 1) != 0, (b & 2) != 0, (b & 4) != 0};
}

inline std::string to_string(const Observation& o) {
  if (const auto* c = std::get_if<ClinicalObs>(&o))
    return std::string(c->ct == CtReading::CT_POSITIVE ? "CT+" : "CT-") + "/S" +
           std::to_string(c->siriraj);
  const auto& d = std::get<DsaReport>(o);
  return std::string("DSA[") + (d.pred_ane ? "A" : "-") + (d.pred_avm ? "V" : "-") +
         (d.pred_occ ? "O" : "-") + "]";
}

inline std::string to_string(const PatientState& s) {
  return std::string("(") + (s.is_ane ? "ane" : "-") + "," + (s.is_avm ? "avm" : "-") + "," +
         (s.is_occ ? "occ" : "-") + ",t=" + std::to_string(s.t) + ")";
}

struct ConfigError : std::runtime_error {
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Observation variant does not match the action that produced it.
struct LikelihoodDomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct PlanningError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace strokepomdp
