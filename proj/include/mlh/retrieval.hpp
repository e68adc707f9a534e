#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mlh/binary_io.hpp"
#include "mlh/error.hpp"
#include "mlh/tensor.hpp"

namespace mlh {

// Bit-packed binary codes: +1 -> bit 1, -1 -> bit 0; code bit j lives in word
// j/64 at bit j%64; trailing pad bits are zero.
struct PackedCodes {
  std::uint32_t n = 0;
  std::uint32_t q = 0;
  std::uint32_t words_per_code = 0;
  std::vector<std::uint64_t> words;

  std::span<const std::uint64_t> row(std::size_t i) const {
    return {words.data() + i * words_per_code, words_per_code};
  }
};

inline PackedCodes pack(const Tensor& codes) {
  PackedCodes out;
  out.n = std::uint32_t(codes.rows());
  out.q = std::uint32_t(codes.cols());
  out.words_per_code = (out.q + 63) / 64;
  out.words.assign(std::size_t(out.n) * out.words_per_code, 0);
  for (std::size_t r = 0; r < codes.rows(); ++r) {
    for (std::size_t j = 0; j < codes.cols(); ++j) {
      double v = codes(r, j);
      check(v == 1.0 || v == -1.0, "bad_value",
            "pack: code entries must be exactly -1 or +1");
      if (v == 1.0)
        out.words[r * out.words_per_code + j / 64] |= std::uint64_t(1) << (j % 64);
    }
  }
  return out;
}

inline Tensor unpack(const PackedCodes& packed) {
  Tensor out(packed.n, packed.q);
  for (std::size_t r = 0; r < packed.n; ++r) {
    auto row = packed.row(r);
    for (std::size_t j = 0; j < packed.q; ++j)
      out(r, j) = (row[j / 64] >> (j % 64)) & 1u ? 1.0 : -1.0;
  }
  return out;
}

inline std::uint32_t hamming(std::span<const std::uint64_t> a,
                             std::span<const std::uint64_t> b) {
  std::uint32_t d = 0;
  for (std::size_t w = 0; w < a.size(); ++w)
    d += std::uint32_t(std::popcount(a[w] ^ b[w]));
  return d;
}

// Distances from one query to the whole database; the hot path of search.
// Flat pointer walk, single-word codes specialized.
inline void hamming_scan(std::span<const std::uint64_t> query, const PackedCodes& db,
                         std::uint32_t* out) {
  const std::uint32_t wpc = db.words_per_code;
  const std::uint64_t* words = db.words.data();
  if (wpc == 1) {
    const std::uint64_t qw = query[0];
    for (std::uint32_t i = 0; i < db.n; ++i)
      out[i] = std::uint32_t(std::popcount(words[i] ^ qw));
    return;
  }
  for (std::uint32_t i = 0; i < db.n; ++i) {
    const std::uint64_t* row = words + std::size_t(i) * wpc;
    std::uint32_t d = 0;
    for (std::uint32_t w = 0; w < wpc; ++w)
      d += std::uint32_t(std::popcount(row[w] ^ query[w]));
    out[i] = d;
  }
}

struct RankedList {
  std::uint32_t query_id = 0;
  std::vector<std::uint32_t> ids;        // ascending distance, ties by id
  std::vector<std::uint32_t> distances;  // nondecreasing
  bool topk_clamped = false;             // topk exceeded the database size
};

// Exact top-k by full linear scan over the packed database.
inline std::vector<RankedList> search(const PackedCodes& queries, const PackedCodes& db,
                                      std::uint32_t topk) {
  check(queries.q == db.q, "shape_mismatch", "query and database code widths differ");
  check(topk >= 1, "bad_config", "topk must be >= 1");
  check(db.n >= 1, "bad_config", "empty database");
  const bool clamped = topk > db.n;
  const std::uint32_t k = std::min(topk, db.n);

  std::vector<RankedList> out(queries.n);
  std::vector<std::uint32_t> dist(db.n);
  std::vector<std::uint32_t> order(db.n);
  for (std::uint32_t qi = 0; qi < queries.n; ++qi) {
    hamming_scan(queries.row(qi), db, dist.data());
    std::iota(order.begin(), order.end(), 0u);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](std::uint32_t a, std::uint32_t b) {
                        return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
                      });
    RankedList& rl = out[qi];
    rl.query_id = qi;
    rl.topk_clamped = clamped;
    rl.ids.assign(order.begin(), order.begin() + k);
    rl.distances.resize(k);
    for (std::uint32_t i = 0; i < k; ++i) rl.distances[i] = dist[rl.ids[i]];
  }
  return out;
}

using RelevanceFn = std::function<bool(std::uint32_t query_id, std::uint32_t db_id)>;

// Label-sharing relevance: the query and database rows share at least one
// class, the same overlap rule as the pairwise similarity matrix.
inline RelevanceFn label_relevance(const Tensor& query_labels, const Tensor& db_labels) {
  check(query_labels.cols() == db_labels.cols(), "shape_mismatch",
        "label widths differ");
  return [&query_labels, &db_labels](std::uint32_t qi, std::uint32_t di) {
    double dot = 0.0;
    for (std::size_t c = 0; c < query_labels.cols(); ++c)
      dot += query_labels(qi, c) * db_labels(di, c);
    return dot > 0.0;
  };
}

struct EvalResult {
  double map = 0.0;
  std::uint32_t k = 0;
  std::vector<double> per_query_ap;  // one entry per evaluated query
  std::uint32_t queries_evaluated = 0;
  std::uint32_t queries_skipped = 0;  // no relevant item anywhere in the db
};

// AP@k = sum_{i<=k} precision@i * rel_i / max(1, #relevant within top-k).
// Queries with no relevant database item at all are excluded from the mean.
inline EvalResult map_at_k(const std::vector<RankedList>& ranked,
                           const RelevanceFn& relevant, std::uint32_t db_size,
                           std::uint32_t k) {
  check(k >= 1, "bad_config", "k must be >= 1");
  EvalResult out;
  out.k = k;
  double sum = 0.0;
  for (const RankedList& rl : ranked) {
    check(!rl.ids.empty(), "bad_config", "empty ranked list");
    bool any_relevant = false;
    for (std::uint32_t di = 0; di < db_size && !any_relevant; ++di)
      any_relevant = relevant(rl.query_id, di);
    if (!any_relevant) {
      ++out.queries_skipped;
      continue;
    }
    std::uint32_t hits = 0;
    double ap_sum = 0.0;
    const std::uint32_t depth = std::min<std::uint32_t>(k, std::uint32_t(rl.ids.size()));
    for (std::uint32_t i = 0; i < depth; ++i) {
      if (relevant(rl.query_id, rl.ids[i])) {
        ++hits;
        ap_sum += double(hits) / double(i + 1);
      }
    }
    double ap = ap_sum / double(std::max<std::uint32_t>(1, hits));
    out.per_query_ap.push_back(ap);
    sum += ap;
    ++out.queries_evaluated;
  }
  if (out.queries_evaluated > 0) out.map = sum / double(out.queries_evaluated);
  return out;
}

struct PrPoint {
  std::uint32_t rank = 0;
  double recall = 0.0;
  double precision = 0.0;
};

// Precision/recall after every rank of one full ranking (topk = n).
inline std::vector<PrPoint> pr_curve(const RankedList& full, const RelevanceFn& relevant,
                                     std::uint32_t db_size) {
  check(full.ids.size() == db_size, "bad_config", "pr_curve needs a full ranking");
  std::uint32_t total_relevant = 0;
  for (std::uint32_t di = 0; di < db_size; ++di)
    total_relevant += relevant(full.query_id, di);
  check(total_relevant > 0, "bad_config", "pr_curve query has no relevant items");
  std::vector<PrPoint> points(db_size);
  std::uint32_t hits = 0;
  for (std::uint32_t r = 0; r < db_size; ++r) {
    hits += relevant(full.query_id, full.ids[r]);
    points[r] = {r + 1, double(hits) / double(total_relevant),
                 double(hits) / double(r + 1)};
  }
  return points;
}

// Macro-averaged curve: mean precision and recall across queries at each
// rank. Queries without relevant items are skipped, mirroring map_at_k.
inline std::vector<PrPoint> mean_pr_curve(const std::vector<RankedList>& ranked,
                                          const RelevanceFn& relevant,
                                          std::uint32_t db_size) {
  std::vector<double> precision(db_size, 0.0), recall(db_size, 0.0);
  std::uint32_t used = 0;
  for (const RankedList& rl : ranked) {
    std::uint32_t total_relevant = 0;
    for (std::uint32_t di = 0; di < db_size; ++di)
      total_relevant += relevant(rl.query_id, di);
    if (total_relevant == 0) continue;
    ++used;
    std::uint32_t hits = 0;
    for (std::uint32_t r = 0; r < db_size; ++r) {
      hits += relevant(rl.query_id, rl.ids[r]);
      precision[r] += double(hits) / double(r + 1);
      recall[r] += double(hits) / double(total_relevant);
    }
  }
  check(used > 0, "bad_config", "no query has relevant items");
  std::vector<PrPoint> points(db_size);
  for (std::uint32_t r = 0; r < db_size; ++r)
    points[r] = {r + 1, recall[r] / used, precision[r] / used};
  return points;
}

inline constexpr std::uint32_t kCodesFormatVersion = 1;

inline std::vector<std::uint8_t> serialize_packed(const PackedCodes& codes) {
  ByteWriter w;
  w.write_magic("MLHB");
  w.write_u32(kCodesFormatVersion);
  w.write_u32(codes.n);
  w.write_u32(codes.q);
  for (std::uint64_t word : codes.words) w.write_u64(word);
  return w.bytes();
}

inline void save_packed(const PackedCodes& codes, const std::string& path) {
  atomic_write_file(path, serialize_packed(codes));
}

inline PackedCodes parse_packed(std::vector<std::uint8_t> bytes, const std::string& origin) {
  ByteReader r(std::move(bytes), origin);
  r.expect_magic("MLHB", "binary codes");
  std::uint32_t version = r.read_u32();
  check(version == kCodesFormatVersion, "bad_version",
        origin + ": unsupported codes version " + std::to_string(version));
  PackedCodes out;
  out.n = r.read_u32();
  out.q = r.read_u32();
  check(out.q >= 1 && out.q <= (1u << 16), "bad_dimension",
        origin + ": implausible code width at offset 12");
  out.words_per_code = (out.q + 63) / 64;
  out.words.resize(std::size_t(out.n) * out.words_per_code);
  for (auto& w : out.words) w = r.read_u64();
  r.expect_exhausted();
  // Pad bits beyond q must be zero.
  if (out.q % 64 != 0) {
    std::uint64_t pad_mask = ~((std::uint64_t(1) << (out.q % 64)) - 1);
    for (std::uint32_t i = 0; i < out.n; ++i)
      check((out.row(i).back() & pad_mask) == 0, "bad_value",
            origin + ": nonzero pad bits in code row " + std::to_string(i));
  }
  return out;
}

inline PackedCodes load_packed(const std::string& path) {
  return parse_packed(read_file_bytes(path), path);
}

}  // namespace mlh
