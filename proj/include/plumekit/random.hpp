#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace plumekit {

/// splitmix64 finalizer; used to whiten derived seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace detail {
inline std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}
inline std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffu;
    h *= 0x100000001b3ULL;
  }
  return h;
}
inline std::uint64_t mix_parts(std::uint64_t h) { return h; }
template <typename First, typename... Rest>
std::uint64_t mix_parts(std::uint64_t h, First&& first, Rest&&... rest) {
  if constexpr (std::is_convertible_v<First, std::string_view>)
    h = fnv1a(h, std::string_view(first));
  else
    h = fnv1a(h, static_cast<std::uint64_t>(first));
  return mix_parts(h, std::forward<Rest>(rest)...);
}
}  // namespace detail

/// Seed fan-out: one master seed plus a label path (strings and integers)
/// yields an independent stream seed. FNV-1a over the parts, then splitmix64.
/// This is the documented hash behind the CLI's single --seed flag.
template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t master, Parts&&... parts) {
  std::uint64_t h = detail::fnv1a(0xcbf29ce484222325ULL, master);
  h = detail::mix_parts(h, std::forward<Parts>(parts)...);
  return splitmix64(h);
}

/// Deterministic random stream. mt19937_64 is fully specified by the
/// standard; uniforms and gaussians are built from raw 64-bit draws rather
/// than std::*_distribution so byte-identical output is portable across
/// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1): top 53 bits of one draw.
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = std::uint64_t(hi - lo) + 1;
    return lo + std::int64_t(double(span) * uniform());
  }

  /// Standard normal via Box-Muller (first variate of each pair).
  double gaussian() {
    double u1 = uniform();
    const double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Standard normal truncated to [-max_abs, max_abs] by resampling.
  double gaussian_truncated(double max_abs) {
    for (;;) {
      const double g = gaussian();
      if (std::abs(g) <= max_abs) return g;
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace plumekit
