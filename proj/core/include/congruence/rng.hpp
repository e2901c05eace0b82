#pragma once

#include <cstdint>
#include <random>

namespace congruence {

/// Deterministic random stream used everywhere randomness is needed.
///
/// The raw source is std::mt19937_64, whose output sequence is fixed by the
/// C++ standard, and all value mappings are spelled out here so another
/// implementation can reproduce the streams bit for bit:
///   uniform():          (next_u64() >> 11) * 2^-53, in [0, 1)
///   uniform_int(lo,hi): lo + floor(uniform() * (hi - lo + 1)), clamped to hi
///   normal():           Box-Muller; draws u1, u2 by uniform(), returns
///                       sqrt(-2 ln(1-u1)) * cos(2*pi*u2) and caches the
///                       sin twin for the next call
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi);
  int uniform_int(int lo, int hi);  // inclusive bounds
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 mix, used to derive independent per-case seeds from a master
/// seed: case_seed = splitmix64(seed + 0x9E3779B97F4A7C15 * (case_id + 1)).
std::uint64_t splitmix64(std::uint64_t x);

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream_id);

}  // namespace congruence
