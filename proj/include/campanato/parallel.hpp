#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <random>
#include <span>
#include <thread>
#include <vector>

namespace campanato {

/// Runs f(i) for i in [0, n) on up to `workers` threads. Work items must be
/// independent; results are whatever f writes into per-index slots, so the
/// outcome never depends on the worker count. The exception of the lowest
/// failing index is rethrown.
template <class F>
void parallel_for(std::size_t n, int workers, F&& f) {
  const std::size_t w = std::clamp<std::size_t>(workers > 0 ? static_cast<std::size_t>(workers) : 1, 1, std::max<std::size_t>(n, 1));
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (w == 1) {
    run(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + w - 1) / w;
    for (std::size_t t = 0; t < w; ++t) {
      const std::size_t b = t * chunk, e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(run, b, e);
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <class T, class F>
std::vector<T> parallel_map(std::size_t n, int workers, F&& f) {
  std::vector<T> out(n);
  parallel_for(n, workers, [&](std::size_t i) { out[i] = f(i); });
  return out;
}

/// Pairwise summation over a fixed binary tree; the result depends only on
/// the input order.
inline double tree_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return tree_sum(v.first(half)) + tree_sum(v.subspan(half));
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator for sub-task `stream` of a run seeded with `seed`.
inline std::mt19937_64 rng_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(splitmix64(stream)), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

}  // namespace campanato
