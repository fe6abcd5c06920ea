#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace stylecal {

/// Deterministic random stream. Gaussians come from an explicit Box-Muller
/// transform so sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform() {  // in [0, 1)
    return (eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  std::uint64_t next_u64() { return eng_(); }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t hash_tag(std::string_view tag);

/// Stream derivation: (seed, tag, index) -> independent deterministic stream.
/// Parallel workers using per-index streams reproduce serial results exactly.
Rng derive_rng(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

}  // namespace stylecal
