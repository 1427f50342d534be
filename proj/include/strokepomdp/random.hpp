#pragma once

#include <concepts>
#include <cstdint>
#include <random>

namespace strokepomdp {

/// Anything that hands out uniform doubles in [0, 1).
template <typename R>
concept UniformSource = requires(R& r) {
  { r.uniform() } -> std::convertible_to<double>;
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ull));
}

inline constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

inline constexpr double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Seeded sequential stream. uniform() avoids std::uniform_real_distribution
/// so draws are identical across standard libraries.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(splitmix64(seed)), seed_(seed) {}

  double uniform() { return to_unit(engine_()); }
  std::uint64_t next_u64() { return engine_(); }
  std::uint64_t seed() const { return seed_; }

  /// Integer in [0, n).
  int below(int n) {
    int k = static_cast<int>(uniform() * n);
    return k < n ? k : n - 1;
  }

  /// Independent child stream (stream for episode k, purpose p, ...).
  RandomStream derive(std::uint64_t tag) const { return RandomStream(mix_seed(seed_, tag)); }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

/// Counter-based stream: the j-th draw at a given (seed, scenario, depth) is a
/// pure function of those four numbers, so a scenario replays identically no
/// matter which tree path reaches it.
class ScenarioCursor {
 public:
  ScenarioCursor(std::uint64_t seed, std::uint32_t scenario, std::uint32_t depth)
      : base_(mix_seed(seed, (static_cast<std::uint64_t>(scenario) << 32) | depth)) {}

  double uniform() { return to_unit(splitmix64(base_ + 0x9E3779B97F4A7C15ull * ++slot_)); }

 private:
  std::uint64_t base_;
  std::uint64_t slot_ = 0;
};

}  // namespace strokepomdp
