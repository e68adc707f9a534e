#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlh/binary_io.hpp"
#include "mlh/error.hpp"
#include "mlh/random.hpp"

namespace mlh {

using BigInt = boost::multiprecision::cpp_int;

struct HashConfig {
  std::uint32_t q = 0;  // code length in bits
  std::uint32_t c = 0;  // number of semantic classes

  void validate() const {
    check(q >= 8 && q <= 512, "bad_config", "code length q must be in [8, 512]");
    check(c >= 2, "bad_config", "class count c must be >= 2");
  }
};

inline BigInt binomial(std::uint32_t n, std::uint32_t k) {
  if (k > n) return 0;
  if (k > n - k) k = n - k;
  BigInt r = 1;
  for (std::uint32_t i = 1; i <= k; ++i) {
    r *= n - k + i;
    r /= i;
  }
  return r;
}

// V(q, r) = sum_{i=0}^{r} C(q, i); empty when r is negative.
inline BigInt hamming_ball_volume(std::uint32_t q, std::int64_t r) {
  BigInt sum = 0;
  for (std::int64_t i = 0; i <= r && i <= static_cast<std::int64_t>(q); ++i)
    sum += binomial(q, static_cast<std::uint32_t>(i));
  return sum;
}

enum class GvMode : std::uint8_t { PaperLiteral = 0, StandardGv = 1 };

// Unique d with V(q, d-2) < 2^c <= V(q, d-1); empty when 2^c > 2^q, in which
// case no d satisfies the upper inequality.
inline std::optional<std::uint32_t> gv_min_distance_paper(const HashConfig& cfg) {
  cfg.validate();
  if (cfg.c > cfg.q) return std::nullopt;
  BigInt target = BigInt(1) << cfg.c;
  BigInt upper = 0;  // V(q, d-1)
  for (std::uint32_t d = 1; d <= cfg.q + 1; ++d) {
    BigInt lower = upper;  // V(q, d-2)
    upper += binomial(cfg.q, d - 1);
    if (lower < target && target <= upper) return d;
  }
  return std::nullopt;  // unreachable for c <= q
}

// Largest d with c * V(q, d-2) < 2^q.
inline std::uint32_t gv_min_distance_standard(const HashConfig& cfg) {
  cfg.validate();
  BigInt space = BigInt(1) << cfg.q;
  std::uint32_t best = 1;
  BigInt vol = 0;  // V(q, d-2)
  for (std::uint32_t d = 1; d <= cfg.q + 1; ++d) {
    if (BigInt(cfg.c) * vol < space) best = d;
    else break;
    vol += binomial(cfg.q, d - 1);
  }
  return best;
}

inline std::uint32_t gv_min_distance(const HashConfig& cfg, GvMode mode) {
  if (mode == GvMode::StandardGv) return gv_min_distance_standard(cfg);
  auto d = gv_min_distance_paper(cfg);
  check(d.has_value(), "infeasible",
        "2^c exceeds 2^q at q=" + std::to_string(cfg.q) +
            ", c=" + std::to_string(cfg.c) + "; use the standard-gv mode");
  return *d;
}

// Exact upper bound on the number of length-q codes with min distance d:
// sphere packing plus the trivial d > q and d == q cases. Used to fail fast
// when a requested codebook cannot exist.
inline BigInt codebook_size_upper_bound(std::uint32_t q, std::uint32_t d) {
  if (d > q) return 1;
  if (d == q) return 2;
  BigInt ball = hamming_ball_volume(q, (static_cast<std::int64_t>(d) - 1) / 2);
  return (BigInt(1) << q) / ball;
}

struct Codebook {
  HashConfig config;
  std::uint32_t d = 0;  // min pairwise distance the construction guarantees
  std::uint64_t seed = 0;
  std::vector<std::int8_t> centers;  // c rows of q entries in {-1,+1}

  // Construction metadata (not persisted; the run manifest records it).
  GvMode mode_used = GvMode::PaperLiteral;
  std::uint32_t requested_d = 0;  // != d when the d-1 fallback engaged
  std::uint32_t restarts_used = 0;

  std::span<const std::int8_t> row(std::size_t i) const {
    return {centers.data() + i * config.q, config.q};
  }
};

namespace detail {

inline std::uint32_t row_distance(std::span<const std::int8_t> a,
                                  std::span<const std::int8_t> b) {
  std::uint32_t dist = 0;
  for (std::size_t j = 0; j < a.size(); ++j) dist += a[j] != b[j];
  return dist;
}

// Greedy bit-flip repair: walk the candidate toward distance >= d from every
// accepted row, flipping whichever bit raises the minimum distance most
// (ties: lowest bit index). Stops on success or when no flip strictly helps.
inline bool repair_candidate(std::vector<std::int8_t>& cand,
                             const std::vector<std::int8_t>& accepted,
                             std::uint32_t n_accepted, std::uint32_t q,
                             std::uint32_t d) {
  std::vector<std::uint32_t> dist(n_accepted);
  std::uint32_t min_dist = std::numeric_limits<std::uint32_t>::max();
  for (std::uint32_t r = 0; r < n_accepted; ++r) {
    dist[r] = row_distance({cand.data(), q}, {accepted.data() + r * q, q});
    min_dist = std::min(min_dist, dist[r]);
  }
  for (std::uint32_t flips = 0; flips < q && min_dist < d; ++flips) {
    std::uint32_t best_bit = q;
    std::uint32_t best_min = min_dist;
    for (std::uint32_t b = 0; b < q; ++b) {
      std::uint32_t new_min = std::numeric_limits<std::uint32_t>::max();
      for (std::uint32_t r = 0; r < n_accepted; ++r) {
        bool agrees = cand[b] == accepted[r * q + b];
        std::uint32_t nd = agrees ? dist[r] + 1 : dist[r] - 1;
        new_min = std::min(new_min, nd);
      }
      if (new_min > best_min) {
        best_min = new_min;
        best_bit = b;
      }
    }
    if (best_bit == q) return false;  // local maximum below d
    for (std::uint32_t r = 0; r < n_accepted; ++r) {
      bool agreed = cand[best_bit] == accepted[r * q + best_bit];
      dist[r] += agreed ? 1 : -1;
    }
    cand[best_bit] = static_cast<std::int8_t>(-cand[best_bit]);
    min_dist = best_min;
  }
  return min_dist >= d;
}

}  // namespace detail

// Randomized greedy construction with bit-flip repair: sample uniform +-1
// candidates, repair them toward the accepted set, accept at distance >= d.
// A stall (10*c candidates without an acceptance) restarts from a fresh
// stream; deterministic for a fixed seed.
inline Codebook generate_centers(const HashConfig& cfg, std::uint32_t d,
                                 std::uint64_t seed,
                                 std::uint32_t max_attempts = 100) {
  cfg.validate();
  check(d >= 1, "bad_config", "minimum distance d must be >= 1");
  BigInt bound = codebook_size_upper_bound(cfg.q, d);
  if (BigInt(cfg.c) > bound) {
    throw Error("construction_failed",
                "no length-" + std::to_string(cfg.q) + " code with distance " +
                    std::to_string(d) + " can hold " + std::to_string(cfg.c) +
                    " words (sphere-packing bound " + bound.str() + ")");
  }

  const std::uint32_t q = cfg.q;
  const std::uint32_t stall_limit = 10 * cfg.c;
  std::vector<std::int8_t> accepted(static_cast<std::size_t>(cfg.c) * q);
  std::vector<std::int8_t> cand(q);

  for (std::uint32_t attempt = 0; attempt < max_attempts; ++attempt) {
    Rng rng(derive_seed(seed, "centers", attempt));
    std::uint32_t n_accepted = 0;
    std::uint32_t stall = 0;
    while (n_accepted < cfg.c && stall < stall_limit) {
      for (std::uint32_t b = 0; b < q; ++b)
        cand[b] = rng.next_bool() ? std::int8_t{1} : std::int8_t{-1};
      if (detail::repair_candidate(cand, accepted, n_accepted, q, d)) {
        std::copy(cand.begin(), cand.end(), accepted.begin() + n_accepted * q);
        ++n_accepted;
        stall = 0;
      } else {
        ++stall;
      }
    }
    if (n_accepted == cfg.c) {
      Codebook cb;
      cb.config = cfg;
      cb.d = d;
      cb.seed = seed;
      cb.centers = std::move(accepted);
      cb.requested_d = d;
      cb.restarts_used = attempt;
      return cb;
    }
  }
  throw Error("construction_failed",
              "no codebook found for q=" + std::to_string(cfg.q) +
                  ", c=" + std::to_string(cfg.c) + ", d=" + std::to_string(d) +
                  " after " + std::to_string(max_attempts) + " restarts");
}

// Documented caller behavior on construction failure: retry at d-1, recording
// the originally requested distance in the metadata.
inline Codebook generate_centers_with_fallback(const HashConfig& cfg,
                                               std::uint32_t d,
                                               std::uint64_t seed,
                                               std::uint32_t max_attempts = 100) {
  for (std::uint32_t trial_d = d; trial_d >= 1; --trial_d) {
    try {
      Codebook cb = generate_centers(cfg, trial_d, seed, max_attempts);
      cb.requested_d = d;
      return cb;
    } catch (const Error& e) {
      if (e.code() != "construction_failed" || trial_d == 1) throw;
    }
  }
  throw Error("construction_failed", "unreachable");
}

// Exact O(c^2 * q) minimum pairwise distance; q+1 sentinel when there are no
// pairs.
inline std::uint32_t verify_codebook(const Codebook& cb) {
  check(!cb.centers.empty(), "bad_config", "verify_codebook: empty codebook");
  const std::uint32_t c = cb.config.c;
  if (c < 2) return cb.config.q + 1;
  std::uint32_t min_dist = cb.config.q + 1;
  for (std::uint32_t i = 0; i < c; ++i)
    for (std::uint32_t j = i + 1; j < c; ++j)
      min_dist = std::min(min_dist, detail::row_distance(cb.row(i), cb.row(j)));
  return min_dist;
}

inline constexpr std::uint32_t kCodebookFormatVersion = 1;

inline std::vector<std::uint8_t> serialize_codebook(const Codebook& cb) {
  ByteWriter w;
  w.write_magic("MLHC");
  w.write_u32(kCodebookFormatVersion);
  w.write_u32(cb.config.q);
  w.write_u32(cb.config.c);
  w.write_u32(cb.d);
  w.write_u64(cb.seed);
  for (std::int8_t v : cb.centers) w.write_i8(v);
  return w.bytes();
}

inline void save_codebook(const Codebook& cb, const std::string& path) {
  atomic_write_file(path, serialize_codebook(cb));
}

inline Codebook parse_codebook(std::vector<std::uint8_t> bytes, const std::string& origin) {
  ByteReader r(std::move(bytes), origin);
  r.expect_magic("MLHC", "codebook");
  std::uint32_t version = r.read_u32();
  check(version == kCodebookFormatVersion, "bad_version",
        origin + ": unsupported codebook version " + std::to_string(version));
  Codebook cb;
  cb.config.q = r.read_u32();
  cb.config.c = r.read_u32();
  cb.d = r.read_u32();
  cb.seed = r.read_u64();
  cb.config.validate();
  cb.centers.resize(static_cast<std::size_t>(cb.config.c) * cb.config.q);
  for (auto& v : cb.centers) {
    v = r.read_i8();
    if (v != 1 && v != -1)
      throw Error("bad_value", origin + ": center entry not in {-1,+1} at offset " +
                                   std::to_string(r.offset() - 1));
  }
  r.expect_exhausted();
  cb.requested_d = cb.d;
  return cb;
}

inline Codebook load_codebook(const std::string& path) {
  return parse_codebook(read_file_bytes(path), path);
}

}  // namespace mlh
