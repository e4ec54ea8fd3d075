// Shared vocabulary types for the emopred toolkit: emotion labels, the error
// type, and a platform-stable random number generator.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace emopred {

/// Error raised for every contract violation, I/O and protocol failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Emotion : int { neutral = 0, happiness = 1, sadness = 2, anger = 3 };

inline constexpr int kNumEmotions = 4;
inline constexpr std::array<Emotion, kNumEmotions> kAllEmotions = {
    Emotion::neutral, Emotion::happiness, Emotion::sadness, Emotion::anger};
inline constexpr std::array<Emotion, 3> kNonNeutralEmotions = {
    Emotion::happiness, Emotion::sadness, Emotion::anger};

inline constexpr int index_of(Emotion e) { return static_cast<int>(e); }

inline Emotion emotion_from_index(int i) {
  if (i < 0 || i >= kNumEmotions) {
    throw Error("emotion index out of range: " + std::to_string(i));
  }
  return static_cast<Emotion>(i);
}

inline std::string_view to_string(Emotion e) {
  switch (e) {
    case Emotion::neutral: return "neutral";
    case Emotion::happiness: return "happiness";
    case Emotion::sadness: return "sadness";
    case Emotion::anger: return "anger";
  }
  return "?";
}

inline Emotion parse_emotion(std::string_view s) {
  for (Emotion e : kAllEmotions) {
    if (to_string(e) == s) return e;
  }
  throw Error("unknown emotion label '" + std::string(s) + "'");
}

/// Deterministic generator built on the standard-defined mt19937_64 stream.
/// Distributions are implemented here rather than taken from <random>, whose
/// distribution algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), unbiased by rejection.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw Error("uniform_int: empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace emopred
