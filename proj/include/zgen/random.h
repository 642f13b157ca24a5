#ifndef ZGEN_RANDOM_H_
#define ZGEN_RANDOM_H_

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

namespace zgen {

// SplitMix64 finalizer. Used both to expand seeds and to combine them.
constexpr std::uint64_t Mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stable 64-bit FNV-1a hash. Never changes between builds or platforms, so
// it is safe to persist.
constexpr std::uint64_t Fnv1a64(std::string_view bytes,
                                std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives a child seed from a master seed and a list of integer tags
// (protocol id, level index, iteration, ...). Independent of call order, so
// per-iteration work may run on any worker.
inline std::uint64_t DeriveSeed(std::uint64_t master,
                                std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = Mix64(master);
  for (std::uint64_t t : tags) h = Mix64(h ^ Mix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

inline std::uint64_t DeriveSeed(std::uint64_t master, std::string_view label,
                                std::initializer_list<std::uint64_t> tags = {}) {
  std::uint64_t h = DeriveSeed(master, {Fnv1a64(label)});
  for (std::uint64_t t : tags) h = Mix64(h ^ Mix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

// xoshiro256** generator with hand-rolled distributions. The standard
// library distributions are implementation-defined; these are not, which
// keeps checkpoints and reports reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) {
    std::uint64_t s = seed;
    for (auto& word : state_) {
      s = Mix64(s);
      word = s;
    }
  }

  std::uint64_t NextU64() {
    const std::uint64_t result = Rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = Rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double Uniform() { return static_cast<double>(NextU64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1); safe to take logs of.
  double UniformOpen() {
    return (static_cast<double>(NextU64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t Below(std::uint64_t n) {
    // Lemire's nearly-divisionless method.
    unsigned __int128 m = static_cast<unsigned __int128>(NextU64()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = -n % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(NextU64()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  double Normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = UniformOpen();
    const double u2 = Uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Standard Gumbel(0, 1) draw.
  double Gumbel() { return -std::log(-std::log(UniformOpen())); }

  template <typename T>
  void Shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[Below(i)]);
    }
  }

 private:
  static constexpr std::uint64_t Rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// k distinct indices from [0, n), in draw order.
inline std::vector<std::size_t> SampleWithoutReplacement(std::size_t n,
                                                         std::size_t k,
                                                         Rng& rng) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + rng.Below(n - i)]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace zgen

#endif  // ZGEN_RANDOM_H_
