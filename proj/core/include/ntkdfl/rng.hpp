#pragma once

// Seeded randomness shared by every module. Boost.Random distributions are
// used instead of <random>'s because their algorithms are fixed by the
// library, so a seed produces the same stream on every standard library.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

#include <boost/random/mersenne_twister.hpp>

namespace ntkdfl {

using Engine = boost::random::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a over a short tag so derived streams can be named.
constexpr std::uint64_t tag_hash(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derived stream seed: mix64(mix64(seed ^ tag_hash(tag)) ^ a) then folded
/// with b the same way. Fixed so that runs are reproducible across builds.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                    std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = mix64(seed ^ tag_hash(tag));
  h = mix64(h ^ a);
  return mix64(h ^ (b * 0x9e3779b97f4a7c15ULL));
}

inline Engine make_engine(std::uint64_t seed) { return Engine(seed); }

double uniform01(Engine& eng);
double standard_normal(Engine& eng);
double gamma_sample(Engine& eng, double shape);
std::size_t uniform_index(Engine& eng, std::size_t n);

/// Fisher-Yates; std::shuffle's element order is implementation-defined.
template <class T>
void shuffle(std::span<T> items, Engine& eng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = uniform_index(eng, i);
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace ntkdfl
