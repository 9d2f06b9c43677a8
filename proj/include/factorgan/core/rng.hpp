#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace fgan {

// Deterministic random stream. All draws are built from raw mt19937_64
// output so sequences are identical across platforms (std::*_distribution
// is implementation-defined and is avoided on purpose).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t bits() { return eng_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(bits() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = bits();
    while (x >= limit) x = bits();
    return x % n;
  }

  // Standard normal via Box-Muller; the pair's second value is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Independent child stream labeled by (tag, index).
  Rng derive(const std::string& tag, std::uint64_t index = 0) const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a over the label
    auto mix = [&h](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= 1099511628211ull;
      }
    };
    for (char c : tag) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    mix(index);
    mix(seed_hint_);
    return Rng(splitmix(h));
  }

  // State round-trips through text; the Box-Muller spare is included so a
  // restored stream continues exactly where the saved one stopped.
  std::string serialize_state() const {
    std::ostringstream os;
    os << eng_ << ' ' << seed_hint_ << ' ' << (have_spare_ ? 1 : 0);
    if (have_spare_) {
      os.precision(17);
      os << ' ' << spare_;
    }
    return os.str();
  }

  void restore_state(const std::string& s) {
    std::istringstream is(s);
    int spare_flag = 0;
    is >> eng_ >> seed_hint_ >> spare_flag;
    have_spare_ = spare_flag != 0;
    if (have_spare_) is >> spare_;
  }

  // Remembers the construction seed so derive() differs across roots.
  static Rng seeded(std::uint64_t seed) {
    Rng r(splitmix(seed));
    r.seed_hint_ = seed;
    return r;
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 eng_;
  std::uint64_t seed_hint_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fgan
