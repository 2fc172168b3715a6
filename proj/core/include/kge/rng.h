#ifndef KGE_RNG_H_
#define KGE_RNG_H_

#include <cstdint>
#include <random>
#include <string>

namespace kge {

std::uint64_t splitmix64(std::uint64_t x);

// Deterministic seed for an independent stream, e.g. (eval seed, query index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Thin wrapper over mt19937_64 whose draws do not depend on the standard
// library's distribution implementations, so trajectories are reproducible
// across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform on {0, ..., n - 1}; unbiased. n must be positive.
  std::uint64_t below(std::uint64_t n);

  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

}  // namespace kge

#endif  // KGE_RNG_H_
