#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace summint {

// Deterministic RNG helpers. All randomness in the library flows through
// these so that a given seed reproduces byte-identical results across
// platforms and standard-library versions (std::shuffle and the
// <random> distributions are implementation-defined; the mt19937_64
// engine itself is not).

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derive a stream seed from a base seed and one or two tags (fold index,
// replication index, purpose constant, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag,
                                 std::uint64_t tag2 = 0) {
  return splitmix64(splitmix64(base ^ 0x6a09e667f3bcc908ULL) + splitmix64(tag) +
                    0x9e3779b97f4a7c15ULL * tag2);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound) by rejection; bound > 0.
  std::uint64_t uniform_int(std::uint64_t bound);

  // Standard normal via the polar (Marsaglia) method; deterministic given
  // the engine state, no libm trig involved.
  double normal();

  // Standard normal conditioned on |Z| <= cut, by rejection.
  double truncated_normal(double cut = 2.0) {
    for (;;) {
      double z = normal();
      if (z <= cut && z >= -cut) return z;
    }
  }

  // In-place Fisher-Yates; unlike std::shuffle the draw sequence is fully
  // specified, so fold assignments are reproducible everywhere.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace summint
