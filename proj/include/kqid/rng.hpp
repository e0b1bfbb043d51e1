#pragma once

#include <cstdint>
#include <string_view>

namespace kqid {

namespace detail {
[[nodiscard]] constexpr std::uint64_t scramble64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
}  // namespace detail

// Full-avalanche 64-bit mix; stateless.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  return detail::scramble64(z + 0x9E3779B97F4A7C15ull);
}

[[nodiscard]] constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

// Deterministic substream key for (master seed, purpose label, index).
// Every consumer of randomness derives its own key this way, so runs are
// reproducible and streams never collide across purposes.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                                                  std::uint64_t index) noexcept {
  const std::uint64_t s = mix64(master ^ fnv1a64(label));
  return mix64(s ^ (index * 0xD1B54A32D192ED03ull));
}

// Counter-style uniform generator (splitmix64). Draws are independent across
// calls; distinct seeds give unrelated streams.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept {
    state_ += 0x9E3779B97F4A7C15ull;
    return detail::scramble64(state_);
  }

  // Uniform in [0, 1), 53 random bits.
  double next_unit() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_uniform(double lo, double hi) noexcept { return lo + (hi - lo) * next_unit(); }

  // Uniform in [-half_width, half_width).
  double next_symmetric(double half_width) noexcept {
    return (next_unit() - 0.5) * 2.0 * half_width;
  }

 private:
  std::uint64_t state_;
};

}  // namespace kqid
