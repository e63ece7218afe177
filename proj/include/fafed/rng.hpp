#pragma once

#include <cstdint>

namespace fafed {

/// What a random stream is used for. Each (seed, stream index, purpose)
/// triple names an independent stream.
enum class StreamPurpose : std::uint64_t {
  kData = 1,
  kInitBatch = 2,
  kStepBatch = 3,
  kProbe = 4,
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator. The k-th draw is a keyed hash of k, so the
/// whole state of a stream is (key, position). Streams split from the same
/// master seed never share state, which makes results independent of the
/// order in which clients are advanced.
///
/// Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng() = default;
  CounterRng(std::uint64_t seed, std::uint64_t stream, StreamPurpose purpose);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    return mix64(key_ + 0x9e3779b97f4a7c15ULL * counter_++);
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t position() const { return counter_; }

  bool operator==(const CounterRng&) const = default;

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// Uniform double in [0, 1) from the top 53 bits of one draw.
double uniform01(CounterRng& rng);

/// Standard normal via Box-Muller; consumes exactly two draws.
double standard_normal(CounterRng& rng);

}  // namespace fafed
