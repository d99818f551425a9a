#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace prgflow {

// Process-wide cap on worker threads. Defaults to PRGFLOW_THREADS when set,
// otherwise 1. Every parallel loop writes into per-index slots and reduces in
// index order, so results never depend on this value.
void set_thread_count(int n);
int thread_count();

// Calls fn(i) for i in [0, n). Work is distributed over thread_count() threads.
// Exceptions from workers are rethrown on the calling thread (first by index).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// splitmix64 finalizer; derive independent per-item seeds from a master seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

}  // namespace prgflow
