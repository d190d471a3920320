#ifndef RNNHA_RNG_HPP_
#define RNNHA_RNG_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace rnnha {

std::uint64_t splitmix64(std::uint64_t x);
/// Mixes a seed with a stream counter into an independent seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);
/// FNV-1a, used to key per-parameter initialization streams by name.
std::uint64_t hash_name(std::string_view name);

/**
 * Deterministic generator. The distributions are implemented here rather
 * than through <random> so sequences are identical across standard libraries.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

}  // namespace rnnha

#endif  // RNNHA_RNG_HPP_
