#include "fafed/rng.hpp"

#include <cmath>
#include <numbers>

namespace fafed {

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream,
                       StreamPurpose purpose)
    : key_(mix64(mix64(seed ^ mix64(static_cast<std::uint64_t>(purpose))) +
                 stream)) {}

double uniform01(CounterRng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double standard_normal(CounterRng& rng) {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace fafed
