#include <catch2/catch_amalgamated.hpp>

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "mlh/codebook.hpp"
#include "mlh/random.hpp"

using namespace mlh;

namespace {

// Independent oracle: binomials via Pascal's triangle (the implementation
// uses the multiplicative form).
BigInt pascal_binomial(std::uint32_t n, std::uint32_t k) {
  std::vector<BigInt> row{1};
  for (std::uint32_t i = 1; i <= n; ++i) {
    std::vector<BigInt> next(i + 1, 1);
    for (std::uint32_t j = 1; j < i; ++j) next[j] = row[j - 1] + row[j];
    row = std::move(next);
  }
  return k <= n ? row[k] : BigInt(0);
}

BigInt pascal_partial_sum(std::uint32_t q, std::int64_t upto) {
  BigInt s = 0;
  for (std::int64_t i = 0; i <= upto; ++i) s += pascal_binomial(q, std::uint32_t(i));
  return s;
}

}  // namespace

TEST_CASE("gv paper-literal regression at (q=16, c=10)") {
  // Sums frozen from brute-force enumeration: 1+16+120+560 = 697 < 1024,
  // 697+1820 = 2517 >= 1024.
  REQUIRE(pascal_partial_sum(16, 3) == 697);
  REQUIRE(pascal_partial_sum(16, 4) == 2517);
  HashConfig cfg{16, 10};
  REQUIRE(gv_min_distance(cfg, GvMode::PaperLiteral) == 5);
}

TEST_CASE("gv paper-literal infeasible when 2^c > 2^q") {
  HashConfig cfg{16, 100};
  REQUIRE(!gv_min_distance_paper(cfg).has_value());
  REQUIRE_THROWS_AS(gv_min_distance(cfg, GvMode::PaperLiteral), Error);
}

TEST_CASE("gv standard fallback at (q=16, c=100)") {
  HashConfig cfg{16, 100};
  REQUIRE(gv_min_distance(cfg, GvMode::StandardGv) == 4);
  // Largest d with 100 * V(16, d-2) < 2^16, re-derived with the oracle sums.
  REQUIRE(100 * pascal_partial_sum(16, 2) < 65536);
  REQUIRE(100 * pascal_partial_sum(16, 3) >= 65536);
}

TEST_CASE("gv double inequality holds exactly over random feasible configs") {
  Rng rng(20240811);
  int feasible_seen = 0;
  for (int trial = 0; trial < 60; ++trial) {
    HashConfig cfg;
    cfg.q = 8 + std::uint32_t(rng.next_below(57));
    cfg.c = 2 + std::uint32_t(rng.next_below(31));
    auto d = gv_min_distance_paper(cfg);
    if (!d.has_value()) {
      REQUIRE(cfg.c > cfg.q);
      continue;
    }
    ++feasible_seen;
    BigInt target = BigInt(1) << cfg.c;
    REQUIRE(pascal_partial_sum(cfg.q, std::int64_t(*d) - 2) < target);
    REQUIRE(target <= pascal_partial_sum(cfg.q, std::int64_t(*d) - 1));
  }
  REQUIRE(feasible_seen > 10);
}

TEST_CASE("antipodal pair at full distance") {
  Codebook cb = generate_centers(HashConfig{16, 2}, 16, 7);
  REQUIRE(verify_codebook(cb) == 16);
  for (std::uint32_t j = 0; j < 16; ++j)
    REQUIRE(cb.row(0)[j] == -cb.row(1)[j]);
}

TEST_CASE("construction meets requested distance") {
  Codebook cb = generate_centers(HashConfig{16, 10}, 5, 1);
  REQUIRE(cb.centers.size() == 160);
  for (std::int8_t v : cb.centers) REQUIRE((v == 1 || v == -1));
  REQUIRE(verify_codebook(cb) >= 5);
}

TEST_CASE("construction fails when the code cannot exist") {
  // Sphere-packing oracle: 2^8 / (1 + 8) = 28 < 300.
  REQUIRE((BigInt(1) << 8) / (1 + 8) < 300);
  REQUIRE_THROWS_AS(generate_centers(HashConfig{8, 300}, 3, 1), Error);
}

TEST_CASE("construction is deterministic in the seed") {
  Codebook a = generate_centers(HashConfig{32, 12}, 8, 42);
  Codebook b = generate_centers(HashConfig{32, 12}, 8, 42);
  REQUIRE(a.centers == b.centers);
  Codebook c = generate_centers(HashConfig{32, 12}, 8, 43);
  REQUIRE(a.centers != c.centers);
}

TEST_CASE("generated codebooks verify at gv distance over random configs") {
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    HashConfig cfg;
    cfg.q = 8 + std::uint32_t(rng.next_below(57));
    cfg.c = 2 + std::uint32_t(rng.next_below(31));
    auto paper = gv_min_distance_paper(cfg);
    std::uint32_t d = paper ? *paper : gv_min_distance_standard(cfg);
    Codebook cb = generate_centers_with_fallback(cfg, d, rng.next_u64());
    REQUIRE(verify_codebook(cb) >= cb.d);
    REQUIRE(cb.requested_d == d);
  }
}

TEST_CASE("single-row verify returns the q+1 sentinel") {
  Codebook cb;
  cb.config = HashConfig{16, 2};
  cb.config.c = 1;  // bypass validate: exercising the no-pairs branch only
  cb.centers.assign(16, 1);
  REQUIRE(verify_codebook(cb) == 17);
}

TEST_CASE("codebook file round-trip and corruption errors") {
  Codebook cb = generate_centers(HashConfig{16, 10}, 5, 3);
  auto path = (std::filesystem::temp_directory_path() / "cb_test.mlhc").string();
  save_codebook(cb, path);
  Codebook back = load_codebook(path);
  REQUIRE(back.config.q == cb.config.q);
  REQUIRE(back.config.c == cb.config.c);
  REQUIRE(back.d == cb.d);
  REQUIRE(back.seed == cb.seed);
  REQUIRE(back.centers == cb.centers);

  auto bytes = serialize_codebook(cb);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 7);
  try {
    parse_codebook(truncated, "trunc");
    FAIL("expected truncation error");
  } catch (const Error& e) {
    REQUIRE(e.code() == "truncated");
    REQUIRE(std::string(e.what()).find("offset") != std::string::npos);
  }

  auto wrong = bytes;
  wrong[0] = 'X';
  try {
    parse_codebook(wrong, "magic");
    FAIL("expected magic error");
  } catch (const Error& e) {
    REQUIRE(e.code() == "bad_magic");
  }
  std::filesystem::remove(path);
}
