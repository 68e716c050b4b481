#pragma once

// Counter-based splittable random streams.
//
// Every draw is a pure function of (key, counter): output_n = mix(key + n*phi).
// A stream key is derived from a parent key and a stream name, so the order in
// which subsystems consume randomness never couples them together.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>

namespace v2v {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// Well-known stream names. Using the constants keeps spellings consistent.
namespace stream {
inline constexpr std::string_view kLayout = "layout";
inline constexpr std::string_view kFog = "fog";
inline constexpr std::string_view kDropout = "dropout";
inline constexpr std::string_view kPolicyNoise = "policy_noise";
inline constexpr std::string_view kInit = "init";
inline constexpr std::string_view kMinibatch = "minibatch";
inline constexpr std::string_view kEpisodes = "episodes";
}  // namespace stream

class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr CounterRng() = default;
  constexpr explicit CounterRng(std::uint64_t seed) : key_(detail::mix64(seed ^ 0x5851F42D4C957F2DULL)) {}
  constexpr CounterRng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() { return detail::mix64(key_ + (++counter_) * detail::kGolden); }

  // Independent child stream; does not advance this stream.
  [[nodiscard]] constexpr CounterRng split(std::string_view name) const {
    return CounterRng(detail::mix64(key_ ^ detail::mix64(detail::fnv1a(name))), 0);
  }
  [[nodiscard]] constexpr CounterRng split(std::uint64_t index) const {
    return CounterRng(detail::mix64(key_ ^ detail::mix64(index * detail::kGolden + 0x2545F4914F6CDD1DULL)), 0);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x;
    do {
      x = (*this)();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal by Box-Muller; one pair per call, second value discarded
  // so each draw consumes exactly two counters.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  [[nodiscard]] constexpr std::uint64_t key() const { return key_; }
  [[nodiscard]] constexpr std::uint64_t counter() const { return counter_; }

  friend constexpr bool operator==(const CounterRng&, const CounterRng&) = default;

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

// Deterministic child seed, e.g. one per episode index.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return detail::mix64(detail::mix64(seed) ^ (index + 1) * detail::kGolden);
}

}  // namespace v2v
