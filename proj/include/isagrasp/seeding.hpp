#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace isagrasp {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based seed derivation: the stream for (stage, item, ...) does not
/// depend on how many other streams were drawn or in which order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(master);
  for (std::uint64_t p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(master, path));
}

/// Stage identifiers used in seed paths.
enum class Stage : std::uint64_t {
  demo = 1,
  retarget = 2,
  source_refine = 3,
  instance = 4,
  transfer_refine = 5,
  features = 6,
  random_init = 7,
  held_out = 8,
  evaluation = 9,
  training = 10,
};

constexpr std::uint64_t stage_id(Stage s) { return static_cast<std::uint64_t>(s); }

}  // namespace isagrasp
