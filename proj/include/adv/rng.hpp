#pragma once

#include <cstdint>
#include <vector>

namespace adv {

// splitmix64 generator. The standard distributions are not bit-portable
// across library implementations, so every random draw in the project goes
// through this class instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, n), n > 0. Rejection keeps the draw unbiased.
  std::uint64_t next_below(std::uint64_t n) {
    std::uint64_t threshold = (0ull - n) % n;
    for (;;) {
      std::uint64_t v = next_u64();
      if (v >= threshold) return v % n;
    }
  }

  // Uniform integer in [lo, hi], inclusive.
  int next_int(int lo, int hi) {
    return lo + static_cast<int>(next_below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // Uniform double in [0, 1) with 53 bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
  }

  double next_double(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = next_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent stream seed from (seed, salt).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
    Rng r(seed ^ (salt * 0xd1342543de82ef95ull));
    return r.next_u64();
  }

 private:
  std::uint64_t state_;
};

}  // namespace adv
