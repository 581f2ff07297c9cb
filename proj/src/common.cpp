// SPDX-License-Identifier: Apache-2.0
#include "cramfuse/common.hpp"

namespace cramfuse {

double normalize_angle(double theta) {
  const double two_pi = 2.0 * kPi;
  double t = std::fmod(theta + kPi, two_pi);
  if (t < 0.0) t += two_pi;
  t -= kPi;
  // fmod can land exactly on +pi after the shift back.
  if (t >= kPi) t -= two_pi;
  return t;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

}  // namespace cramfuse
