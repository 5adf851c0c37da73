#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace wakenllm {

/// Lower-case hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

/// First eight bytes of SHA-256 over the parts joined with '\x1f'.
std::uint64_t digest_u64(std::initializer_list<std::string_view> parts);

/// Independent seed for a named stream, e.g. derive_seed(run_seed, {sample_id, phase}).
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::string_view> parts);

/// Uniform integer in [0, bound) from a 64-bit generator, by rejection.
/// Unlike std::uniform_int_distribution its output is identical on every
/// standard library.
template <class Engine>
std::uint64_t uniform_below(Engine& engine, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t x = engine();
  while (x >= limit) x = engine();
  return x % bound;
}

/// Maps a 64-bit value onto [0, 1) with 53 bits of precision.
inline double unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace wakenllm
