#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string_view>

// Deterministic RNG. std::mt19937 + distributions are implementation-defined,
// so result files would not reproduce across toolchains; xoshiro256** plus
// explicit conversions keeps every draw bit-stable.
namespace ctxattack {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), n > 0; multiply-shift keeps bias below 2^-64
  std::size_t index(std::size_t n) {
    using u128 = unsigned __int128;
    return static_cast<std::size_t>((static_cast<u128>(next()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::array<std::uint64_t, 4> state_{};
};

// Stable stream key: FNV-1a over the parts (0x1F separators so part
// boundaries stay unambiguous), folded into the root seed.
inline std::uint64_t derive_seed(std::uint64_t root,
                                 std::initializer_list<std::string_view> parts) {
  std::uint64_t s = root;
  std::uint64_t h = 1469598103934665603ULL ^ splitmix64(s);
  for (std::string_view part : parts) {
    for (unsigned char c : part) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0x1F;
    h *= 1099511628211ULL;
  }
  std::uint64_t mix = h;
  return splitmix64(mix);
}

inline Rng derive_rng(std::uint64_t root,
                      std::initializer_list<std::string_view> parts) {
  return Rng(derive_seed(root, parts));
}

}  // namespace ctxattack
