#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "model.hpp"

namespace strokepomdp {

/// Belief as 8 weights over the flag combinations.
struct ExactBelief {
  std::array<double, kNumConditionCombos> weights{};
  int t = 0;

  double sum() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }
  friend bool operator==(const ExactBelief&, const ExactBelief&) = default;
};

/// Weighted set of state hypotheses that all share the same epoch.
struct ParticleBelief {
  std::vector<PatientState> particles;
  std::vector<double> weights;

  std::size_t size() const { return particles.size(); }
  int t() const { return particles.empty() ? 0 : particles.front().t; }
};

struct Marginals {
  double p_ane = 0;
  double p_avm = 0;
  double p_occ = 0;
  double p_stroke_free = 0;

  double condition(int c) const { return c == 0 ? p_ane : (c == 1 ? p_avm : p_occ); }
  friend bool operator==(const Marginals&, const Marginals&) = default;
};

/// No hypothesis explains the observation. Carries the one-step prediction
/// the caller is expected to fall back to.
struct DegenerateUpdateError : std::runtime_error {
  explicit DegenerateUpdateError(ExactBelief predicted)
      : std::runtime_error("observation has zero likelihood under every hypothesis"),
        predicted(predicted) {}
  ExactBelief predicted;
};

inline ExactBelief initial_belief(const InitialMixture& mixture) {
  ExactBelief b;
  for (int i = 0; i < kNumConditionCombos; ++i) b.weights[i] = mixture.mass(i);
  return b;
}

inline ExactBelief point_mass(const PatientState& s) {
  ExactBelief b;
  b.weights[s.condition_index()] = 1.0;
  b.t = s.t;
  return b;
}

inline ExactBelief uniform_belief(int t = 0) {
  ExactBelief b;
  b.weights.fill(1.0 / kNumConditionCombos);
  b.t = t;
  return b;
}

/// Prior pushed through the transition model.
inline ExactBelief predict(const StrokeModel& model, const ExactBelief& b, Action a) {
  ExactBelief out;
  out.t = b.t + 1;
  for (int to = 0; to < kNumConditionCombos; ++to) {
    double acc = 0;
    for (int from = 0; from < kNumConditionCombos; ++from)
      acc += model.transition_probability(from, a, to) * b.weights[from];
    out.weights[to] = acc;
  }
  return out;
}

/// Bayes filter step: posterior(s') ∝ Z(o | s', a) · Σ_s T(s' | s, a) b(s).
inline ExactBelief exact_update(const StrokeModel& model, const ExactBelief& b, Action a,
                                const Observation& o) {
  if (is_dsa(o) != (a == Action::DSA))
    throw LikelihoodDomainError(std::string("observation variant does not match action ") +
                                std::string(to_string(a)));
  ExactBelief pred = predict(model, b, a);
  ExactBelief post = pred;
  const int code = observation_code(o);
  double eta = 0;
  for (int s = 0; s < kNumConditionCombos; ++s) {
    post.weights[s] *= model.likelihood(a, s, code);
    eta += post.weights[s];
  }
  if (!(eta > 0)) throw DegenerateUpdateError(pred);
  for (double& w : post.weights) w /= eta;
  return post;
}

/// exact_update that falls back to the predicted prior on a degenerate update.
inline ExactBelief exact_update_or_predict(const StrokeModel& model, const ExactBelief& b, Action a,
                                           const Observation& o, bool* degenerate = nullptr) {
  try {
    auto out = exact_update(model, b, a, o);
    if (degenerate) *degenerate = false;
    return out;
  } catch (const DegenerateUpdateError& e) {
    if (degenerate) *degenerate = true;
    return e.predicted;
  }
}

namespace detail {

// Per-combination weight totals. Each bucket is summed in sorted order so the
// result does not depend on particle order.
inline std::array<double, kNumConditionCombos> bucket_weights(const ParticleBelief& b) {
  std::array<std::vector<double>, kNumConditionCombos> buckets;
  for (std::size_t i = 0; i < b.size(); ++i)
    buckets[b.particles[i].condition_index()].push_back(b.weights[i]);
  std::array<double, kNumConditionCombos> out{};
  for (int s = 0; s < kNumConditionCombos; ++s) {
    std::sort(buckets[s].begin(), buckets[s].end());
    out[s] = std::accumulate(buckets[s].begin(), buckets[s].end(), 0.0);
  }
  return out;
}

/// Systematic resampling: n indices from normalized `weights` using one uniform.
template <UniformSource Rng>
std::vector<int> systematic_resample(std::span<const double> weights, int n, Rng& rng) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<int> out;
  out.reserve(n);
  const double step = total / n;
  double pos = rng.uniform() * step;
  double cum = weights.empty() ? 0 : weights[0];
  std::size_t j = 0;
  for (int i = 0; i < n; ++i) {
    while (pos >= cum && j + 1 < weights.size()) cum += weights[++j];
    out.push_back(static_cast<int>(j));
    pos += step;
  }
  return out;
}

}  // namespace detail

inline ExactBelief to_exact(const ParticleBelief& b) {
  ExactBelief out;
  out.t = b.t();
  out.weights = detail::bucket_weights(b);
  const double total = std::accumulate(out.weights.begin(), out.weights.end(), 0.0);
  if (total > 0)
    for (double& w : out.weights) w /= total;
  return out;
}

/// n equally weighted particles drawn from an exact belief (systematic draw).
template <UniformSource Rng>
ParticleBelief sample_particles(const ExactBelief& b, int n, Rng& rng) {
  ParticleBelief out;
  out.particles.reserve(n);
  for (int idx : detail::systematic_resample(std::span<const double>(b.weights), n, rng))
    out.particles.push_back(PatientState::from_index(idx, b.t));
  out.weights.assign(n, 1.0 / n);
  return out;
}

/// Propagate, reweight by Z(o | s', a), then resample back to the same count.
/// When every weight vanishes the set is rebuilt from the one-step predicted
/// prior of the current particles and `*recovered` is set.
template <UniformSource Rng>
ParticleBelief particle_update(const StrokeModel& model, const ParticleBelief& b, Action a,
                               const Observation& o, Rng& rng, bool* recovered = nullptr) {
  if (is_dsa(o) != (a == Action::DSA))
    throw LikelihoodDomainError(std::string("observation variant does not match action ") +
                                std::string(to_string(a)));
  const int n = static_cast<int>(b.size());
  if (n == 0) throw std::invalid_argument("particle_update on an empty particle set");
  const int code = observation_code(o);

  std::vector<PatientState> moved;
  moved.reserve(n);
  std::vector<double> w(n);
  double total = 0;
  for (int i = 0; i < n; ++i) {
    moved.push_back(model.transition(b.particles[i], a, rng));
    w[i] = b.weights[i] * model.likelihood(a, moved.back().condition_index(), code);
    total += w[i];
  }
  if (recovered) *recovered = false;
  if (!(total > 0)) {
    if (recovered) *recovered = true;
    return sample_particles(predict(model, to_exact(b), a), n, rng);
  }

  ParticleBelief out;
  out.particles.reserve(n);
  for (int idx : detail::systematic_resample(std::span<const double>(w), n, rng))
    out.particles.push_back(moved[idx]);
  out.weights.assign(n, 1.0 / n);
  return out;
}

inline Marginals marginals(const std::array<double, kNumConditionCombos>& w) {
  Marginals m;
  for (int s = 0; s < kNumConditionCombos; ++s) {
    if (s & 1) m.p_ane += w[s];
    if (s & 2) m.p_avm += w[s];
    if (s & 4) m.p_occ += w[s];
  }
  m.p_stroke_free = w[0];
  return m;
}

inline Marginals marginals(const ExactBelief& b) { return marginals(b.weights); }
inline Marginals marginals(const ParticleBelief& b) { return marginals(to_exact(b).weights); }

inline double total_variation(const ExactBelief& a, const ExactBelief& b) {
  double d = 0;
  for (int s = 0; s < kNumConditionCombos; ++s) d += std::abs(a.weights[s] - b.weights[s]);
  return 0.5 * d;
}

// ---------------------------------------------------------------------------

inline json to_json(const PatientState& s) {
  return json{{"is_ane", s.is_ane}, {"is_avm", s.is_avm}, {"is_occ", s.is_occ}, {"t", s.t}};
}

inline PatientState state_from_json(const json& j) {
  return PatientState{j.at("is_ane").get<bool>(), j.at("is_avm").get<bool>(),
                      j.at("is_occ").get<bool>(), j.at("t").get<int>()};
}

inline json to_json(const Marginals& m) {
  return json{{"p_ane", m.p_ane}, {"p_avm", m.p_avm}, {"p_occ", m.p_occ},
              {"p_stroke_free", m.p_stroke_free}};
}

inline json to_json(const ExactBelief& b) { return json{{"t", b.t}, {"weights", b.weights}}; }

inline ExactBelief exact_belief_from_json(const json& j) {
  ExactBelief b;
  b.t = j.at("t").get<int>();
  const auto& w = j.at("weights");
  if (!w.is_array() || w.size() != kNumConditionCombos)
    throw std::invalid_argument("belief weights must have 8 entries");
  for (int i = 0; i < kNumConditionCombos; ++i) b.weights[i] = w[i].get<double>();
  return b;
}

inline json to_json(const ParticleBelief& b) {
  json parts = json::array();
  for (const auto& s : b.particles) parts.push_back(s.condition_index());
  return json{{"t", b.t()}, {"particles", parts}, {"weights", b.weights}};
}

}  // namespace strokepomdp
