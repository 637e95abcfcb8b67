#ifndef TRPOLAB_RNG_HPP_
#define TRPOLAB_RNG_HPP_

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

namespace trpolab {

/// Deterministic counter-splittable random stream (splitmix64 core).
///
/// Every consumer of randomness in the library draws from an Rng that was
/// derived from a single master seed via child(). Streams are identified by
/// their seeds alone, so identical (seed, draw sequence) gives bitwise
/// identical results on every run -- the whole reproducibility story rests
/// on this class plus fixed summation order everywhere else.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(mix(seed ^ 0x9e3779b97f4a7c15ull)), state_(seed_) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

  /// Standard normal via Box-Muller. Consumes exactly two uniforms per call
  /// (no cached spare, so draw counts stay predictable for stream splitting).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    // guard log(0)
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Symmetric Dirichlet(1) draw: exponentials normalized to the simplex.
  Eigen::VectorXd dirichlet(int n) {
    Eigen::VectorXd x(n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double u = uniform();
      if (u >= 1.0) u = 1.0 - 0x1.0p-53;
      x[i] = -std::log(1.0 - u);
      total += x[i];
    }
    x /= total;
    return x;
  }

  /// Index drawn from an (unnormalized is NOT allowed) probability vector.
  int categorical(const Eigen::VectorXd& probs) {
    const double u = uniform();
    double acc = 0.0;
    const int n = static_cast<int>(probs.size());
    for (int i = 0; i < n; ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    // numerical leftover mass: return last index with nonzero probability
    for (int i = n - 1; i >= 0; --i)
      if (probs[i] > 0.0) return i;
    return n - 1;
  }

  /// Independent derived stream. Children depend only on the parent's seed
  /// and the tag, never on how many values the parent has produced.
  Rng child(std::uint64_t tag) const {
    return Rng(mix(seed_ + 0xbf58476d1ce4e5b9ull * (tag + 1)) ^ mix(tag ^ seed_));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace trpolab

#endif  // TRPOLAB_RNG_HPP_
