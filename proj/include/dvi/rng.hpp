#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace dvi {

/// Deterministic splittable generator (splitmix64 core). Normal draws and
/// shuffles are hand-rolled so streams are bit-identical across standard
/// libraries and platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Standard normal via Box-Muller (caches the spare draw).
  double normal();
  void fill_normal(std::span<double> out);
  /// Uniform integer in [0, n).
  uint64_t bounded(uint64_t n);

  /// Independent stream derived from the construction seed and a label;
  /// does not consume state, so fork order is irrelevant.
  Rng fork(std::string_view label) const;
  Rng fork(std::string_view label, uint64_t index) const;

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dvi
