#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "mlh/dataio.hpp"

using namespace mlh;

TEST_CASE("synthetic generator is deterministic and class-separable") {
  FeatureDataset a = synth_clusters(10, 100, 32, 0.1, 7);
  FeatureDataset b = synth_clusters(10, 100, 32, 0.1, 7);
  REQUIRE(a.features == b.features);
  REQUIRE(a.labels == b.labels);

  // Nearest-centroid classification on well-separated clusters.
  Tensor centroids(10, 32);
  std::vector<std::size_t> counts(10, 0);
  for (std::size_t r = 0; r < a.size(); ++r) {
    std::uint32_t k = a.primary_label(r);
    ++counts[k];
    for (std::size_t c = 0; c < 32; ++c) centroids(k, c) += a.features(r, c);
  }
  for (std::size_t k = 0; k < 10; ++k)
    for (std::size_t c = 0; c < 32; ++c) centroids(k, c) /= double(counts[k]);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < a.size(); ++r) {
    double best = 1e300;
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < 10; ++k) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < 32; ++c) {
        double d = a.features(r, c) - centroids(k, c);
        d2 += d * d;
      }
      if (d2 < best) {
        best = d2;
        best_k = k;
      }
    }
    correct += best_k == a.primary_label(r);
  }
  REQUIRE(double(correct) / double(a.size()) >= 0.99);
}

TEST_CASE("vanishing spread collapses each class onto its mean") {
  FeatureDataset ds = synth_clusters(4, 5, 8, 1e-300, 3);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t s = 1; s < 5; ++s)
      for (std::size_t c = 0; c < 8; ++c)
        REQUIRE(ds.features(k * 5 + s, c) == ds.features(k * 5, c));
}

TEST_CASE("cluster means depend only on seed and class count") {
  FeatureDataset one = synth_clusters(6, 1, 16, 1e-300, 11);
  FeatureDataset many = synth_clusters(6, 7, 16, 1e-300, 11);
  for (std::size_t k = 0; k < 6; ++k)
    for (std::size_t c = 0; c < 16; ++c)
      REQUIRE(one.features(k, c) == many.features(k * 7, c));
}

TEST_CASE("multilabel fraction adds second classes") {
  FeatureDataset ds = synth_clusters(5, 200, 8, 0.1, 13, 0.3);
  std::size_t two_label = 0;
  for (std::size_t r = 0; r < ds.size(); ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 5; ++c) total += ds.labels(r, c);
    REQUIRE(total >= 1.0);
    REQUIRE(total <= 2.0);
    two_label += total == 2.0;
  }
  double frac = double(two_label) / double(ds.size());
  REQUIRE(frac > 0.2);
  REQUIRE(frac < 0.4);
}

TEST_CASE("feature file round-trip is bit exact") {
  FeatureDataset ds = synth_clusters(5, 9, 12, 0.2, 21, 0.25);
  auto path = (std::filesystem::temp_directory_path() / "ds_test.mlhf").string();
  save_features(ds, path);
  FeatureDataset back = load_features(path);
  REQUIRE(back.feature_dim == ds.feature_dim);
  REQUIRE(back.num_classes == ds.num_classes);
  REQUIRE(back.features == ds.features);
  REQUIRE(back.labels == ds.labels);
  std::filesystem::remove(path);
}

TEST_CASE("feature file corruption errors carry offsets") {
  FeatureDataset ds = synth_clusters(3, 4, 6, 0.2, 2);
  auto bytes = serialize_features(ds);

  auto truncated = bytes;
  truncated.resize(40);
  try {
    parse_features(truncated, "t");
    FAIL("expected truncation error");
  } catch (const Error& e) {
    REQUIRE(e.code() == "truncated");
    REQUIRE(std::string(e.what()).find("offset 40") != std::string::npos);
  }

  auto wrong = bytes;
  wrong[1] = 'X';
  try {
    parse_features(wrong, "m");
    FAIL("expected magic error");
  } catch (const Error& e) {
    REQUIRE(e.code() == "bad_magic");
    REQUIRE(std::string(e.what()).find("unrecognized format") != std::string::npos);
  }

  auto oversized = bytes;
  oversized[12] = 0xff;  // feature_dim low byte
  oversized[13] = 0xff;
  oversized[14] = 0xff;
  oversized[15] = 0x7f;
  try {
    parse_features(oversized, "d");
    FAIL("expected dimension error");
  } catch (const Error& e) {
    REQUIRE(e.code() == "bad_dimension");
  }
}

TEST_CASE("stratified split is disjoint, exhaustive, and balanced") {
  FeatureDataset ds = synth_clusters(10, 75, 8, 0.15, 5);
  split_dataset(ds, 50, 200, 9);
  auto q = ds.ids_in(Split::Query);
  auto t = ds.ids_in(Split::Train);
  auto d = ds.ids_in(Split::Database);
  REQUIRE(q.size() == 50);
  REQUIRE(t.size() == 200);
  REQUIRE(d.size() == 500);
  std::vector<bool> seen(ds.size(), false);
  for (auto id : q) seen[id] = true;
  for (auto id : t) {
    REQUIRE(!seen[id]);
    seen[id] = true;
  }
  for (auto id : d) {
    REQUIRE(!seen[id]);
    seen[id] = true;
  }
  for (bool s : seen) REQUIRE(s);

  std::vector<std::size_t> per_class_query(10, 0);
  for (auto id : q) ++per_class_query[ds.primary_label(id)];
  auto [mn, mx] = std::minmax_element(per_class_query.begin(), per_class_query.end());
  REQUIRE(*mx - *mn <= 1);

  FeatureDataset again = synth_clusters(10, 75, 8, 0.15, 5);
  split_dataset(again, 50, 200, 9);
  REQUIRE(again.split == ds.split);
}

TEST_CASE("split edge cases") {
  FeatureDataset ds = synth_clusters(3, 4, 6, 0.2, 2);
  split_dataset(ds, 0, 6, 1);
  REQUIRE(ds.ids_in(Split::Query).empty());
  REQUIRE(ds.ids_in(Split::Train).size() == 6);
  REQUIRE_THROWS_AS(split_dataset(ds, 10, 5, 1), Error);
}

TEST_CASE("subset copies the selected rows in order") {
  FeatureDataset ds = synth_clusters(3, 4, 6, 0.2, 2);
  FeatureDataset sub = ds.subset({5, 0, 7});
  REQUIRE(sub.size() == 3);
  for (std::size_t c = 0; c < 6; ++c) {
    REQUIRE(sub.features(0, c) == ds.features(5, c));
    REQUIRE(sub.features(1, c) == ds.features(0, c));
    REQUIRE(sub.features(2, c) == ds.features(7, c));
  }
  REQUIRE_THROWS_AS(ds.subset({99}), Error);
}
