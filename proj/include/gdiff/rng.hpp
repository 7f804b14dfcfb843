#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace gdiff {

// Deterministic PRNG (xoshiro256++ seeded via splitmix64). Self-contained so
// that streams are bit-reproducible across platforms and library versions.
// Not thread safe; give each worker its own fork().
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (int i = 0; i < 4; ++i) s_[i] = splitmix(x);
    have_spare_ = false;
    spare_ = 0.0;
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive range, unbiased
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw std::invalid_argument("Rng::uniform_int: empty range");
    std::uint64_t range = std::uint64_t(hi - lo) + 1;
    if (range == 0) return std::int64_t(next_u64());  // full 64-bit span
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return lo + std::int64_t(x % range);
  }

  // standard normal, Box-Muller with cached spare
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Derived stream; independent of how many draws the parent has made.
  Rng fork(std::uint64_t stream) const {
    std::uint64_t x = seed_ ^ (0x9E3779B97F4A7C15ull * (stream + 1));
    x = splitmix(x);
    return Rng(x ^ stream);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  static std::uint64_t splitmix(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  static std::uint64_t splitmix(std::uint64_t&& x) {
    std::uint64_t y = x;
    return splitmix(y);
  }

  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool have_spare_;
  double spare_;
};

}  // namespace gdiff
