#ifndef BIASBENCH_RNG_HPP
#define BIASBENCH_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace biasbench {

// Every random draw in the toolkit flows through this wrapper. Only the raw
// mt19937_64 output stream is used (never std distributions, whose mapping is
// implementation-defined), so identical seeds give identical results on any
// platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform in [0, n). Rejection sampling keeps the draw unbiased.
  std::uint64_t below(std::uint64_t n);

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    if (values.size() < 2) return;
    for (std::size_t i = values.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(below(i + 1));
      std::swap(values[i], values[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// Derives an independent stream seed from a base seed and a purpose tag, so
// e.g. fold shuffling and dropout never share a stream.
std::uint64_t mix_seed(std::uint64_t base, std::string_view tag);
std::uint64_t mix_seed(std::uint64_t base, std::string_view tag, std::uint64_t n);

}  // namespace biasbench

#endif  // BIASBENCH_RNG_HPP
