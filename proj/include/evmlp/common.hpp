#pragma once

#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace evmlp {

// Recoverable input problem: bad file, bad shape, bad flag value.
// The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken internal invariant. The CLI maps this to exit code 3.
class InternalError : public std::logic_error {
 public:
  explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

inline void check_data(bool cond, const std::string& msg) {
  if (!cond) throw DataError(msg);
}

inline void check_internal(bool cond, const std::string& msg) {
  if (!cond) throw InternalError(msg);
}

// Multiply-accumulate tally. Counts dense-layer MACs only; bias adds,
// activations, normalization and pooling are excluded by convention.
struct MacCounter {
  std::uint64_t macs = 0;
  void add(std::uint64_t m) { macs += m; }
};

// Deterministic RNG. mt19937_64 has a bit-exact standardized stream; the
// uniform mapping below avoids std::uniform_real_distribution, whose output
// is implementation-defined, so the same seed gives the same scalars on any
// conforming standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53 bits.
  double next_unit() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_unit();
  }

  // Uniform integer in [0, n), n > 0.
  std::uint64_t next_below(std::uint64_t n) {
    return gen_() % n;
  }

 private:
  std::mt19937_64 gen_;
};

// Thread count from EVMLP_THREADS, falling back to the hardware count.
inline int default_thread_count() {
  if (const char* env = std::getenv("EVMLP_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Static-chunked parallel loop over [0, n). Each index is visited exactly
// once; callers must write only to disjoint slots so that serial and
// parallel runs are bit-identical.
template <typename Fn>
void parallel_for(std::int64_t n, int threads, Fn&& fn) {
  if (n <= 0) return;
  if (threads < 1) threads = 1;
  if (threads == 1 || n == 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::int64_t t = std::min<std::int64_t>(threads, n);
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(t - 1));
  auto run_chunk = [&fn, n, t](std::int64_t w) {
    std::int64_t lo = w * n / t;
    std::int64_t hi = (w + 1) * n / t;
    for (std::int64_t i = lo; i < hi; ++i) fn(i);
  };
  for (std::int64_t w = 1; w < t; ++w) workers.emplace_back(run_chunk, w);
  run_chunk(0);
  for (auto& th : workers) th.join();
}

}  // namespace evmlp
