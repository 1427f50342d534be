#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "types.hpp"

namespace strokepomdp {

using json = nlohmann::json;

/// WAIT-like (at home) vs HOSP-like (in hospital) measurement noise.
enum class NoiseProfile : std::uint8_t { WAIT = 0, HOSP = 1 };

/// Treatments happen in hospital; DISC is scored like an at-home reading.
inline NoiseProfile noise_profile(Action a) {
  switch (a) {
    case Action::WAIT:
    case Action::DISC: return NoiseProfile::WAIT;
    default: return NoiseProfile::HOSP;
  }
}

enum class SirirajClass : std::uint8_t { none = 0, hemorrhagic = 1, ischemic = 2 };

inline constexpr std::array<std::string_view, 3> kSirirajClassNames = {"none", "hemorrhagic",
                                                                        "ischemic"};
inline constexpr std::array<std::string_view, 2> kProfileNames = {"WAIT", "HOSP"};
inline constexpr std::array<std::string_view, 3> kConditionNames = {"ane", "avm", "occ"};

using SirirajTable = std::array<double, kSirirajBins>;

struct RewardTable {
  double untreated_terminal_penalty = -100000;
  double treatment_cost = -200;
  double dsa_cost = -150;
  double hosp_cost = -100;
  double correct_treatment = 5000;
  double wrong_treatment = -5000;
  double needed_dsa = 250;
  double unnecessary_dsa = -750;
  double correct_hosp = 150;
  double unnecessary_hosp = -400;
  double not_hospitalizing_penalty = -1000;
  double correct_discharge = 5000;
  double wrong_discharge = -50000;

  /// Largest single entry that can be earned in one step.
  double max_positive() const {
    double m = 0;
    for (double v : {correct_treatment, needed_dsa, correct_hosp, correct_discharge})
      m = std::max(m, v);
    return m;
  }
};

struct InitialMixture {
  double p_stroke_free = 0.785;
  double p_single = 0.05;
  double p_double = 0.02;
  double p_triple = 0.005;

  double total() const { return p_stroke_free + 3 * p_single + 3 * p_double + p_triple; }

  /// Prior mass of a flag combination (index as in PatientState::condition_index).
  double mass(int idx) const {
    switch (std::popcount(static_cast<unsigned>(idx))) {
      case 0: return p_stroke_free;
      case 1: return p_single;
      case 2: return p_double;
      default: return p_triple;
    }
  }
};

struct SolverConfig {
  int n_scenarios = 100;
  int max_depth = 10;
  double time_budget_ms = 1000;
  double regularization_lambda = 0;
  std::string rollout_policy = "expert-hosp";
  // Deterministic work cap; 0 means only the time budget applies.
  int max_trials = 150;
  double xi = 0.95;
};

struct ModelParams {
  double p_ane = 0.0005;
  double p_avm = 0.0002;
  double p_occ = 0.0002;
  double pdom_thres = 0.6;
  double pdisc_min = 0.9;
  double gamma = 0.95;
  int n_particles = 100;
  int horizon = 24;

  // [profile][condition]
  std::array<std::array<double, 3>, 2> ct_sensitivity = {{{0.75, 0.60, 0.70}, {0.95, 0.80, 0.90}}};
  std::array<double, 2> ct_specificity = {0.85, 0.95};

  // [class][profile]
  std::array<std::array<SirirajTable, 2>, 3> siriraj_tables = {{
      {{{0.01, 0.02, 0.04, 0.08, 0.17, 0.36, 0.17, 0.08, 0.04, 0.02, 0.01},
        {0.005, 0.01, 0.02, 0.05, 0.15, 0.53, 0.15, 0.05, 0.02, 0.01, 0.005}}},
      {{{0.01, 0.01, 0.02, 0.03, 0.05, 0.08, 0.12, 0.18, 0.20, 0.17, 0.13},
        {0.005, 0.005, 0.005, 0.01, 0.015, 0.03, 0.05, 0.15, 0.25, 0.28, 0.20}}},
      {{{0.13, 0.17, 0.20, 0.18, 0.12, 0.08, 0.05, 0.03, 0.02, 0.01, 0.01},
        {0.20, 0.28, 0.25, 0.15, 0.05, 0.03, 0.015, 0.01, 0.005, 0.005, 0.005}}},
  }};
  SirirajClass mixed_siriraj_class = SirirajClass::hemorrhagic;

  double dsa_accuracy = 0.98;
  RewardTable reward_table;
  InitialMixture init_mixture;
  SolverConfig solver;

  double onset(int condition) const {
    return condition == 0 ? p_ane : (condition == 1 ? p_avm : p_occ);
  }

  static ModelParams defaults() { return ModelParams{}; }
};

namespace detail {

inline void check_probability(double p, const std::string& path) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(path, "probability outside [0,1]");
}

inline void check_distribution(const SirirajTable& t, const std::string& path) {
  double sum = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    check_probability(t[i], path + "/" + std::to_string(i));
    sum += t[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError(path, "distribution does not sum to 1");
}

}  // namespace detail

/// Throws ConfigError naming the offending field.
inline void validate(const ModelParams& p) {
  using detail::check_probability;
  check_probability(p.p_ane, "/p_ane");
  check_probability(p.p_avm, "/p_avm");
  check_probability(p.p_occ, "/p_occ");
  if (!(p.pdom_thres > 0 && p.pdom_thres < 1)) throw ConfigError("/pdom_thres", "must be in (0,1)");
  if (!(p.pdisc_min > 0 && p.pdisc_min < 1)) throw ConfigError("/pdisc_min", "must be in (0,1)");
  if (!(p.gamma > 0 && p.gamma < 1)) throw ConfigError("/gamma", "must be in (0,1)");
  if (p.n_particles < 1) throw ConfigError("/n_particles", "must be >= 1");
  if (p.horizon < 1) throw ConfigError("/horizon", "must be >= 1");
  for (int prof = 0; prof < 2; ++prof) {
    const std::string base = std::string(kProfileNames[prof]);
    check_probability(p.ct_specificity[prof], "/ct_specificity/" + base);
    for (int c = 0; c < 3; ++c)
      check_probability(p.ct_sensitivity[prof][c],
                        "/ct_sensitivity/" + base + "/" + std::string(kConditionNames[c]));
    for (int k = 0; k < 3; ++k)
      detail::check_distribution(p.siriraj_tables[k][prof], "/siriraj_tables/" +
                                                                std::string(kSirirajClassNames[k]) +
                                                                "/" + base);
  }
  for (int c = 0; c < 3; ++c) {
    if (!(p.ct_sensitivity[1][c] > p.ct_sensitivity[0][c]))
      throw ConfigError("/ct_sensitivity/HOSP/" + std::string(kConditionNames[c]),
                        "HOSP sensitivity must exceed WAIT sensitivity");
  }
  if (!(p.ct_specificity[1] > p.ct_specificity[0]))
    throw ConfigError("/ct_specificity/HOSP", "HOSP specificity must exceed WAIT specificity");
  check_probability(p.dsa_accuracy, "/dsa_accuracy");

  const auto& m = p.init_mixture;
  check_probability(m.p_stroke_free, "/init_mixture/p_stroke_free");
  check_probability(m.p_single, "/init_mixture/p_single");
  check_probability(m.p_double, "/init_mixture/p_double");
  check_probability(m.p_triple, "/init_mixture/p_triple");
  if (std::abs(m.total() - 1.0) > 1e-9) throw ConfigError("/init_mixture", "mixture does not sum to 1");

  const auto& s = p.solver;
  if (s.n_scenarios < 1) throw ConfigError("/solver/n_scenarios", "must be >= 1");
  if (s.max_depth < 1) throw ConfigError("/solver/max_depth", "must be >= 1");
  if (!(s.time_budget_ms > 0)) throw ConfigError("/solver/time_budget_ms", "must be > 0");
  if (!(s.regularization_lambda >= 0))
    throw ConfigError("/solver/regularization_lambda", "must be >= 0");
  if (s.max_trials < 0) throw ConfigError("/solver/max_trials", "must be >= 0");
  if (!(s.xi >= 0 && s.xi <= 1)) throw ConfigError("/solver/xi", "must be in [0,1]");
  if (s.rollout_policy != "expert-hosp" && s.rollout_policy != "expert-dsa" &&
      s.rollout_policy != "random")
    throw ConfigError("/solver/rollout_policy", "unknown rollout policy '" + s.rollout_policy + "'");
}

// ---------------------------------------------------------------------------
// JSON (de)serialization. Key names follow the struct members.

inline json to_json(const RewardTable& r) {
  return json{{"untreated_terminal_penalty", r.untreated_terminal_penalty},
              {"treatment_cost", r.treatment_cost},
              {"dsa_cost", r.dsa_cost},
              {"hosp_cost", r.hosp_cost},
              {"correct_treatment", r.correct_treatment},
              {"wrong_treatment", r.wrong_treatment},
              {"needed_dsa", r.needed_dsa},
              {"unnecessary_dsa", r.unnecessary_dsa},
              {"correct_hosp", r.correct_hosp},
              {"unnecessary_hosp", r.unnecessary_hosp},
              {"not_hospitalizing_penalty", r.not_hospitalizing_penalty},
              {"correct_discharge", r.correct_discharge},
              {"wrong_discharge", r.wrong_discharge}};
}

inline json to_json(const SolverConfig& s) {
  return json{{"n_scenarios", s.n_scenarios},
              {"max_depth", s.max_depth},
              {"time_budget_ms", s.time_budget_ms},
              {"regularization_lambda", s.regularization_lambda},
              {"rollout_policy", s.rollout_policy},
              {"max_trials", s.max_trials},
              {"xi", s.xi}};
}

inline json to_json(const ModelParams& p) {
  json j;
  j["p_ane"] = p.p_ane;
  j["p_avm"] = p.p_avm;
  j["p_occ"] = p.p_occ;
  j["pdom_thres"] = p.pdom_thres;
  j["pdisc_min"] = p.pdisc_min;
  j["gamma"] = p.gamma;
  j["n_particles"] = p.n_particles;
  j["horizon"] = p.horizon;
  for (int prof = 0; prof < 2; ++prof) {
    const std::string pn(kProfileNames[prof]);
    for (int c = 0; c < 3; ++c)
      j["ct_sensitivity"][pn][std::string(kConditionNames[c])] = p.ct_sensitivity[prof][c];
    j["ct_specificity"][pn] = p.ct_specificity[prof];
    for (int k = 0; k < 3; ++k)
      j["siriraj_tables"][std::string(kSirirajClassNames[k])][pn] = p.siriraj_tables[k][prof];
  }
  j["mixed_siriraj_class"] = kSirirajClassNames[static_cast<int>(p.mixed_siriraj_class)];
  j["dsa_accuracy"] = p.dsa_accuracy;
  j["reward_table"] = to_json(p.reward_table);
  j["init_mixture"] = json{{"p_stroke_free", p.init_mixture.p_stroke_free},
                           {"p_single", p.init_mixture.p_single},
                           {"p_double", p.init_mixture.p_double},
                           {"p_triple", p.init_mixture.p_triple}};
  j["solver"] = to_json(p.solver);
  return j;
}

namespace detail {

inline const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(path + "/" + key, "missing required key");
  return *it;
}

template <typename T>
T read(const json& j, const std::string& key, const std::string& path) {
  const json& v = require(j, key, path);
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError(path + "/" + key, "expected a number");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path + "/" + key, "expected an integer");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path + "/" + key, "expected a string");
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + "/" + key, e.what());
  }
}

inline void reject_unknown(const json& j, std::initializer_list<std::string_view> known,
                           const std::string& path) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (auto k : known) ok = ok || k == it.key();
    if (!ok) throw ConfigError(path + "/" + it.key(), "unknown key");
  }
}

}  // namespace detail

inline SolverConfig solver_config_from_json(const json& j, const std::string& path = "/solver") {
  using detail::read;
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  detail::reject_unknown(j, {"n_scenarios", "max_depth", "time_budget_ms", "regularization_lambda",
                             "rollout_policy", "max_trials", "xi"},
                         path);
  SolverConfig s;
  s.n_scenarios = read<int>(j, "n_scenarios", path);
  s.max_depth = read<int>(j, "max_depth", path);
  s.time_budget_ms = read<double>(j, "time_budget_ms", path);
  s.regularization_lambda = read<double>(j, "regularization_lambda", path);
  s.rollout_policy = read<std::string>(j, "rollout_policy", path);
  s.max_trials = read<int>(j, "max_trials", path);
  s.xi = read<double>(j, "xi", path);
  return s;
}

/// Parses and validates a full parameter document.
inline ModelParams params_from_json(const json& j) {
  using detail::read;
  using detail::require;
  if (!j.is_object()) throw ConfigError("", "expected an object");
  detail::reject_unknown(
      j,
      {"p_ane", "p_avm", "p_occ", "pdom_thres", "pdisc_min", "gamma", "n_particles", "horizon",
       "ct_sensitivity", "ct_specificity", "siriraj_tables", "mixed_siriraj_class", "dsa_accuracy",
       "reward_table", "init_mixture", "solver"},
      "");
  ModelParams p;
  p.p_ane = read<double>(j, "p_ane", "");
  p.p_avm = read<double>(j, "p_avm", "");
  p.p_occ = read<double>(j, "p_occ", "");
  p.pdom_thres = read<double>(j, "pdom_thres", "");
  p.pdisc_min = read<double>(j, "pdisc_min", "");
  p.gamma = read<double>(j, "gamma", "");
  p.n_particles = read<int>(j, "n_particles", "");
  p.horizon = read<int>(j, "horizon", "");

  const json& sens = require(j, "ct_sensitivity", "");
  const json& spec = require(j, "ct_specificity", "");
  const json& tables = require(j, "siriraj_tables", "");
  for (int prof = 0; prof < 2; ++prof) {
    const std::string pn(kProfileNames[prof]);
    const json& sp = require(sens, pn, "/ct_sensitivity");
    for (int c = 0; c < 3; ++c)
      p.ct_sensitivity[prof][c] =
          read<double>(sp, std::string(kConditionNames[c]), "/ct_sensitivity/" + pn);
    p.ct_specificity[prof] = read<double>(spec, pn, "/ct_specificity");
    for (int k = 0; k < 3; ++k) {
      const std::string kn(kSirirajClassNames[k]);
      const json& t = require(require(tables, kn, "/siriraj_tables"), pn, "/siriraj_tables/" + kn);
      const std::string path = "/siriraj_tables/" + kn + "/" + pn;
      if (!t.is_array() || t.size() != kSirirajBins)
        throw ConfigError(path, "expected an array of 11 probabilities");
      for (int i = 0; i < kSirirajBins; ++i) {
        if (!t[i].is_number()) throw ConfigError(path + "/" + std::to_string(i), "expected a number");
        p.siriraj_tables[k][prof][i] = t[i].get<double>();
      }
    }
  }
  const auto mixed = read<std::string>(j, "mixed_siriraj_class", "");
  if (mixed == "hemorrhagic") p.mixed_siriraj_class = SirirajClass::hemorrhagic;
  else if (mixed == "ischemic") p.mixed_siriraj_class = SirirajClass::ischemic;
  else throw ConfigError("/mixed_siriraj_class", "must be 'hemorrhagic' or 'ischemic'");
  p.dsa_accuracy = read<double>(j, "dsa_accuracy", "");

  const json& r = require(j, "reward_table", "");
  const std::string rp = "/reward_table";
  detail::reject_unknown(r, {"untreated_terminal_penalty", "treatment_cost", "dsa_cost", "hosp_cost",
                             "correct_treatment", "wrong_treatment", "needed_dsa", "unnecessary_dsa",
                             "correct_hosp", "unnecessary_hosp", "not_hospitalizing_penalty",
                             "correct_discharge", "wrong_discharge"},
                         rp);
  auto& rt = p.reward_table;
  rt.untreated_terminal_penalty = read<double>(r, "untreated_terminal_penalty", rp);
  rt.treatment_cost = read<double>(r, "treatment_cost", rp);
  rt.dsa_cost = read<double>(r, "dsa_cost", rp);
  rt.hosp_cost = read<double>(r, "hosp_cost", rp);
  rt.correct_treatment = read<double>(r, "correct_treatment", rp);
  rt.wrong_treatment = read<double>(r, "wrong_treatment", rp);
  rt.needed_dsa = read<double>(r, "needed_dsa", rp);
  rt.unnecessary_dsa = read<double>(r, "unnecessary_dsa", rp);
  rt.correct_hosp = read<double>(r, "correct_hosp", rp);
  rt.unnecessary_hosp = read<double>(r, "unnecessary_hosp", rp);
  rt.not_hospitalizing_penalty = read<double>(r, "not_hospitalizing_penalty", rp);
  rt.correct_discharge = read<double>(r, "correct_discharge", rp);
  rt.wrong_discharge = read<double>(r, "wrong_discharge", rp);

  const json& m = require(j, "init_mixture", "");
  detail::reject_unknown(m, {"p_stroke_free", "p_single", "p_double", "p_triple"}, "/init_mixture");
  p.init_mixture.p_stroke_free = read<double>(m, "p_stroke_free", "/init_mixture");
  p.init_mixture.p_single = read<double>(m, "p_single", "/init_mixture");
  p.init_mixture.p_double = read<double>(m, "p_double", "/init_mixture");
  p.init_mixture.p_triple = read<double>(m, "p_triple", "/init_mixture");

  if (j.contains("solver")) p.solver = solver_config_from_json(j["solver"]);
  validate(p);
  return p;
}

/// Applies an RFC 7386 merge patch to `base` and validates the result.
inline ModelParams apply_overrides(const ModelParams& base, const json& overrides) {
  if (overrides.is_null()) return base;
  if (!overrides.is_object()) throw ConfigError("", "overrides must be an object");
  json doc = to_json(base);
  doc.merge_patch(overrides);
  return params_from_json(doc);
}

inline ModelParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path, e.what());
  }
  return params_from_json(j);
}

}  // namespace strokepomdp
