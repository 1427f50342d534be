#pragma once

#include <string>

#include "despot.hpp"

namespace strokepomdp {

inline json to_json(const Observation& o) {
  if (const auto* c = std::get_if<ClinicalObs>(&o))
    return json{{"type", "clinical"},
                {"ct", c->ct == CtReading::CT_POSITIVE ? "CT_POSITIVE" : "CT_NEGATIVE"},
                {"siriraj", c->siriraj}};
  const auto& d = std::get<DsaReport>(o);
  return json{{"type", "dsa"}, {"pred_ane", d.pred_ane}, {"pred_avm", d.pred_avm},
              {"pred_occ", d.pred_occ}};
}

/// Input validation failure with a JSON-pointer-style location.
struct ValidationError : std::invalid_argument {
  ValidationError(std::string path, const std::string& what)
      : std::invalid_argument(path + ": " + what), path(std::move(path)) {}
  std::string path;
};

inline Observation observation_from_json(const json& j, const std::string& path = "/observation") {
  if (!j.is_object()) throw ValidationError(path, "expected an object");
  auto type = j.find("type");
  if (type == j.end() || !type->is_string())
    throw ValidationError(path + "/type", "expected \"clinical\" or \"dsa\"");
  if (*type == "clinical") {
    auto ct = j.find("ct");
    if (ct == j.end() || !ct->is_string() || (*ct != "CT_POSITIVE" && *ct != "CT_NEGATIVE"))
      throw ValidationError(path + "/ct", "expected \"CT_POSITIVE\" or \"CT_NEGATIVE\"");
    auto sr = j.find("siriraj");
    if (sr == j.end() || !sr->is_number_integer())
      throw ValidationError(path + "/siriraj", "expected an integer");
    const int score = sr->get<int>();
    if (score < kSirirajMin || score > kSirirajMax)
      throw ValidationError(path + "/siriraj", "must be in [-5, 5]");
    return ClinicalObs{*ct == "CT_POSITIVE" ? CtReading::CT_POSITIVE : CtReading::CT_NEGATIVE,
                       score};
  }
  if (*type == "dsa") {
    DsaReport d;
    for (int c = 0; c < 3; ++c) {
      const std::string key = "pred_" + std::string(kConditionNames[c]);
      auto it = j.find(key);
      if (it == j.end() || !it->is_boolean())
        throw ValidationError(path + "/" + key, "expected a boolean");
      (c == 0 ? d.pred_ane : c == 1 ? d.pred_avm : d.pred_occ) = it->get<bool>();
    }
    return d;
  }
  throw ValidationError(path + "/type", "expected \"clinical\" or \"dsa\"");
}

inline Action action_from_json(const json& j, const std::string& path = "/action") {
  if (!j.is_string()) throw ValidationError(path, "expected an action name");
  auto a = parse_action(j.get<std::string>());
  if (!a) throw ValidationError(path, "unknown action '" + j.get<std::string>() + "'");
  return *a;
}

inline json to_json(const Bounds& b) { return json{{"lower", b.lower}, {"upper", b.upper}}; }

/// Diagnostics that are a pure function of (belief, config, seed) when the
/// trial cap binds; wall-clock time is left out so trace files stay stable.
inline json deterministic_diagnostics(const PlanDiagnostics& d) {
  return json{{"nodes_expanded", d.nodes_expanded}, {"trials", d.trials},
              {"depth_reached", d.depth_reached}, {"root_lower", d.root_lower},
              {"root_upper", d.root_upper},       {"fallback", d.fallback}};
}

inline json to_json(const PlanResult& r) {
  json bounds = json::object();
  for (int a = 0; a < kNumActions; ++a)
    if (r.action_bounds[a]) bounds[std::string(kActionNames[a])] = to_json(*r.action_bounds[a]);
  json diag = deterministic_diagnostics(r.diagnostics);
  diag["elapsed_ms"] = r.diagnostics.elapsed_ms;
  return json{{"action", to_string(r.action)}, {"bounds", bounds}, {"diagnostics", diag}};
}

}  // namespace strokepomdp
