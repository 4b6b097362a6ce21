#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace cbslab {

/// One splitmix64 step. Used for seed derivation and stable hashing.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a stream seed from a master seed and a set of coordinates
/// (e.g. grid indices of a sweep point). Folding the coordinates one by
/// one means adding a new axis to a sweep never reshuffles the seeds of
/// existing points.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = master;
  splitmix64(h);
  for (std::uint64_t c : coords) {
    h ^= c + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    splitmix64(h);
  }
  return h;
}

/// Deterministic stream of standard Gaussian variates.
///
/// Engine: std::mt19937_64, whose output sequence is pinned by the C++
/// standard, so identical seeds reproduce identical variates on every
/// conforming implementation. Transform: Box-Muller on
///   u1 = ((x >> 11) + 1) * 2^-53   in (0, 1]
///   u2 = (x >> 11) * 2^-53         in [0, 1)
///   z0 = sqrt(-2 ln u1) cos(2 pi u2),  z1 = sqrt(-2 ln u1) sin(2 pi u2)
/// with z1 cached for the next call.
template <typename Scalar = double>
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  Scalar operator()() {
    ++count_;
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 =
        (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = static_cast<Scalar>(radius * std::sin(angle));
    has_spare_ = true;
    return static_cast<Scalar>(radius * std::cos(angle));
  }

  std::uint64_t seed() const { return seed_; }

  /// Number of variates handed out so far; lets tests assert exact
  /// single-pass sample accounting.
  std::uint64_t variates() const { return count_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  std::uint64_t count_ = 0;
  Scalar spare_{};
  bool has_spare_ = false;
};

}  // namespace cbslab
