#ifndef AUTOPOOL_PARALLEL_HPP
#define AUTOPOOL_PARALLEL_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace autopool {

/// Worker count: AUTOPOOL_THREADS if set and positive, else hardware concurrency.
unsigned thread_count();

/// Runs body(i) for i in [0, n). Each index is handled by exactly one thread;
/// callers write results into per-index slots so output order is fixed.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator for item `index` of a run seeded with `seed`.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x51ed2701ULL)));
}

}  // namespace autopool

#endif  // AUTOPOOL_PARALLEL_HPP
