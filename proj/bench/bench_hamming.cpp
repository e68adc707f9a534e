// Packed-vs-naive Hamming scan benchmark at n=100000, q=64. Reports wall
// times and asserts the packed kernel is at least 5x the per-entry reference
// on this machine.

#include <chrono>
#include <cstdio>
#include <vector>

#include "mlh/random.hpp"
#include "mlh/retrieval.hpp"

using namespace mlh;

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

template <typename Fn>
double best_of(int reps, Fn&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    double t0 = now_seconds();
    fn();
    best = std::min(best, now_seconds() - t0);
  }
  return best;
}

}  // namespace

int main() {
  const std::uint32_t n = 100000, q = 64, n_queries = 32;
  Rng rng(12345);
  std::vector<std::int8_t> db_bits(std::size_t(n) * q), query_bits(n_queries * q);
  for (auto& b : db_bits) b = rng.next_bool() ? 1 : -1;
  for (auto& b : query_bits) b = rng.next_bool() ? 1 : -1;
  Tensor db_t(n, q), q_t(n_queries, q);
  for (std::size_t i = 0; i < db_bits.size(); ++i) db_t[i] = db_bits[i];
  for (std::size_t i = 0; i < query_bits.size(); ++i) q_t[i] = query_bits[i];
  PackedCodes db = pack(db_t), queries = pack(q_t);

  // Cross-check the kernels agree before timing them.
  std::vector<std::uint32_t> dist(n);
  hamming_scan(queries.row(0), db, dist.data());
  for (std::uint32_t di = 0; di < n; di += 9973) {
    std::uint32_t naive = 0;
    for (std::uint32_t c = 0; c < q; ++c)
      naive += query_bits[c] != db_bits[std::size_t(di) * q + c];
    if (naive != dist[di]) {
      std::printf("FAIL kernel mismatch at row %u: %u vs %u\n", di, naive, dist[di]);
      return 1;
    }
  }

  volatile std::uint64_t sink = 0;
  double naive_time = best_of(5, [&]() {
    std::uint64_t total = 0;
    for (std::uint32_t qi = 0; qi < n_queries; ++qi) {
      const std::int8_t* qrow = query_bits.data() + std::size_t(qi) * q;
      for (std::uint32_t di = 0; di < n; ++di) {
        const std::int8_t* drow = db_bits.data() + std::size_t(di) * q;
        std::uint32_t d = 0;
        for (std::uint32_t c = 0; c < q; ++c) d += qrow[c] != drow[c];
        total += d;
      }
    }
    sink = sink + total;
  });
  double packed_time = best_of(5, [&]() {
    std::uint64_t total = 0;
    for (std::uint32_t qi = 0; qi < n_queries; ++qi) {
      hamming_scan(queries.row(qi), db, dist.data());
      for (std::uint32_t di = 0; di < n; ++di) total += dist[di];
    }
    sink = sink + total;
  });

  double scans = double(n_queries) * n;
  double ratio = naive_time / packed_time;
  std::printf("naive per-entry scan: %8.3f ms  (%.2f ns/code)\n", 1e3 * naive_time,
              1e9 * naive_time / scans);
  std::printf("packed popcount scan: %8.3f ms  (%.2f ns/code)\n", 1e3 * packed_time,
              1e9 * packed_time / scans);
  std::printf("speedup: %.1fx (required: >= 5x)\n", ratio);
  if (ratio < 5.0) {
    std::printf("FAIL\n");
    return 1;
  }
  std::printf("PASS\n");
  return 0;
}
