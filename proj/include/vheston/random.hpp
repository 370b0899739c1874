#pragma once

// Philox4x32-10 (Salmon et al., SC'11). Stateless: every draw is a pure
// function of (key, counter), so a path's numbers do not depend on which
// thread generates it or in what order.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace vheston {

class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter apply(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }
};

struct NormalPair {
  double z1;
  double z2;
};

// Two independent N(0,1) draws addressed by (seed, stream, step), via
// Box-Muller on two 53-bit uniforms.
inline NormalPair normal_pair(std::uint64_t seed, std::uint64_t stream, std::uint64_t step) {
  auto lo = [](std::uint64_t x) { return static_cast<std::uint32_t>(x); };
  auto hi = [](std::uint64_t x) { return static_cast<std::uint32_t>(x >> 32); };
  const auto out = Philox4x32::apply({lo(step), hi(step), lo(stream), hi(stream)}, {lo(seed), hi(seed)});
  constexpr double scale = 0x1.0p-53;
  const std::uint64_t a = ((std::uint64_t{out[0]} << 32) | out[1]) >> 11;
  const std::uint64_t b = ((std::uint64_t{out[2]} << 32) | out[3]) >> 11;
  const double u1 = 1.0 - static_cast<double>(a) * scale;  // (0, 1]
  const double u2 = static_cast<double>(b) * scale;        // [0, 1)
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

}  // namespace vheston
