#pragma once

// Deterministic random numbers. Every stochastic draw in the project comes
// from an Rng seeded through derive_seed, never from ambient global state.
// Seed tree: master seed -> module label -> worker/run label -> episode label.
// All distribution transforms are written out explicitly so that streams are
// reproducible bit-for-bit across platforms and standard-library versions.

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace advpol {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Child seed for a labelled branch of the seed tree.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t label) {
  std::uint64_t s = parent ^ (0xD1B54A32D192ED03ull * (label + 1));
  std::uint64_t a = splitmix64_next(s);
  std::uint64_t b = splitmix64_next(s);
  return a ^ (b >> 1);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64_next(state_); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Multiply-shift rejection-free mapping.
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
    unsigned __int128 wide = static_cast<unsigned __int128>(next_u64());
    return static_cast<int>((wide * static_cast<unsigned __int128>(n)) >> 64);
  }

  // Standard normal via Box-Muller. Consumes exactly two draws per sample so
  // stream consumption is independent of call history.
  double normal() {
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace advpol
