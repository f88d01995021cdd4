#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include <Eigen/Core>

namespace tdgp {

// splitmix64; used both as a generator step and as a seed mixer.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// All randomness in the pipeline flows from one root seed through named
// derivation: derive_seed(root, "component", index).
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                                 std::uint64_t index = 0) {
  std::uint64_t s = root ^ fnv1a64(label) ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  return splitmix64(s);
}

// Deterministic generator with fully specified output mapping. The standard
// library distributions are implementation-defined, so uniform/normal draws
// are spelled out here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // decorrelate trivially related seeds
    (void)splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // uniform in [0, 1) with 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t uniform_index(std::uint64_t n) {
    // modulo bias is negligible for n << 2^64 and keeps the mapping simple
    return next_u64() % n;
  }

  // standard normal via Box-Muller; one value per call, cache discarded
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
    return m;
  }

  template <typename Vec>
  void shuffle(Vec& v) {
    // Fisher-Yates
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace tdgp
