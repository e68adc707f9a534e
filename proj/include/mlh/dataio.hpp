#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mlh/binary_io.hpp"
#include "mlh/error.hpp"
#include "mlh/random.hpp"
#include "mlh/tensor.hpp"

namespace mlh {

enum class Split : std::uint8_t { Database = 0, Train = 1, Query = 2 };

struct FeatureDataset {
  std::uint32_t feature_dim = 0;
  std::uint32_t num_classes = 0;
  Tensor features;  // n x feature_dim
  Tensor labels;    // n x num_classes multi-hot
  std::vector<Split> split;  // per row; Database until split() assigns

  std::size_t size() const { return features.rows(); }

  std::vector<std::uint32_t> ids_in(Split tag) const {
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = 0; i < split.size(); ++i)
      if (split[i] == tag) out.push_back(i);
    return out;
  }

  FeatureDataset subset(const std::vector<std::uint32_t>& ids) const {
    FeatureDataset out;
    out.feature_dim = feature_dim;
    out.num_classes = num_classes;
    out.features = Tensor(ids.size(), feature_dim);
    out.labels = Tensor(ids.size(), num_classes);
    out.split.assign(ids.size(), Split::Database);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      check(ids[r] < size(), "bad_index", "subset id out of range");
      for (std::uint32_t c = 0; c < feature_dim; ++c)
        out.features(r, c) = features(ids[r], c);
      for (std::uint32_t c = 0; c < num_classes; ++c)
        out.labels(r, c) = labels(ids[r], c);
    }
    return out;
  }

  std::uint32_t primary_label(std::size_t row) const {
    for (std::uint32_t c = 0; c < num_classes; ++c)
      if (labels(row, c) == 1.0) return c;
    throw Error("bad_labels", "row without any label");
  }
};

// Gaussian clusters with means uniform on the unit sphere. `spread` is the
// expected L2 magnitude of the additive noise (per-coordinate sigma =
// spread / sqrt(feature_dim)), so its meaning does not drift with the
// dimension. Means come from a stream keyed only by (seed, class), so they do
// not move when n_per_class changes. multilabel_fraction of the samples
// receive a second random class.
inline FeatureDataset synth_clusters(std::uint32_t num_classes,
                                     std::uint32_t n_per_class,
                                     std::uint32_t feature_dim, double spread,
                                     std::uint64_t seed,
                                     double multilabel_fraction = 0.0) {
  check(num_classes >= 2, "bad_config", "need at least 2 classes");
  check(n_per_class >= 1, "bad_config", "need at least 1 sample per class");
  check(feature_dim >= 1, "bad_config", "feature_dim must be >= 1");
  check(spread > 0.0, "bad_config", "spread must be positive");
  check(multilabel_fraction >= 0.0 && multilabel_fraction < 1.0, "bad_config",
        "multilabel_fraction must be in [0, 1)");

  Tensor means(num_classes, feature_dim);
  Rng mean_rng(derive_seed(seed, "means"));
  for (std::uint32_t k = 0; k < num_classes; ++k) {
    double norm = 0.0;
    for (std::uint32_t c = 0; c < feature_dim; ++c) {
      means(k, c) = mean_rng.next_gaussian();
      norm += means(k, c) * means(k, c);
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) norm = 1.0;
    for (std::uint32_t c = 0; c < feature_dim; ++c) means(k, c) /= norm;
  }

  const std::size_t n = std::size_t(num_classes) * n_per_class;
  FeatureDataset ds;
  ds.feature_dim = feature_dim;
  ds.num_classes = num_classes;
  ds.features = Tensor(n, feature_dim);
  ds.labels = Tensor(n, num_classes);
  ds.split.assign(n, Split::Database);

  Rng noise_rng(derive_seed(seed, "noise"));
  Rng label_rng(derive_seed(seed, "labels"));
  const double sigma = spread / std::sqrt(static_cast<double>(feature_dim));
  std::size_t row = 0;
  for (std::uint32_t k = 0; k < num_classes; ++k) {
    for (std::uint32_t s = 0; s < n_per_class; ++s, ++row) {
      for (std::uint32_t c = 0; c < feature_dim; ++c)
        ds.features(row, c) = means(k, c) + sigma * noise_rng.next_gaussian();
      ds.labels(row, k) = 1.0;
      if (multilabel_fraction > 0.0 && label_rng.next_double() < multilabel_fraction) {
        auto other = std::uint32_t(label_rng.next_below(num_classes - 1));
        if (other >= k) ++other;
        ds.labels(row, other) = 1.0;
      }
    }
  }
  return ds;
}

inline constexpr std::uint32_t kFeatureFormatVersion = 1;

inline std::vector<std::uint8_t> serialize_features(const FeatureDataset& ds) {
  ByteWriter w;
  w.write_magic("MLHF");
  w.write_u32(kFeatureFormatVersion);
  w.write_u32(std::uint32_t(ds.size()));
  w.write_u32(ds.feature_dim);
  w.write_u32(ds.num_classes);
  for (std::size_t i = 0; i < ds.features.size(); ++i) w.write_f64(ds.features[i]);
  const std::size_t label_bytes = (ds.num_classes + 7) / 8;
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t b = 0; b < label_bytes; ++b) {
      std::uint8_t byte = 0;
      for (std::size_t bit = 0; bit < 8; ++bit) {
        std::size_t c = b * 8 + bit;
        if (c < ds.num_classes && ds.labels(r, c) == 1.0) byte |= std::uint8_t(1u << bit);
      }
      w.write_u8(byte);
    }
  }
  return w.bytes();
}

inline void save_features(const FeatureDataset& ds, const std::string& path) {
  atomic_write_file(path, serialize_features(ds));
}

inline FeatureDataset parse_features(std::vector<std::uint8_t> bytes,
                                     const std::string& origin) {
  ByteReader r(std::move(bytes), origin);
  r.expect_magic("MLHF", "feature dataset");
  std::uint32_t version = r.read_u32();
  check(version == kFeatureFormatVersion, "bad_version",
        origin + ": unsupported feature-file version " + std::to_string(version));
  std::uint32_t n = r.read_u32();
  FeatureDataset ds;
  ds.feature_dim = r.read_u32();
  ds.num_classes = r.read_u32();
  check(ds.feature_dim >= 1 && ds.feature_dim <= (1u << 24), "bad_dimension",
        origin + ": implausible feature_dim at offset 12");
  check(ds.num_classes >= 1 && ds.num_classes <= (1u << 24), "bad_dimension",
        origin + ": implausible class count at offset 16");
  ds.features = Tensor(n, ds.feature_dim);
  for (std::size_t i = 0; i < ds.features.size(); ++i) ds.features[i] = r.read_f64();
  check(ds.features.all_finite(), "bad_value", origin + ": non-finite feature");
  ds.labels = Tensor(n, ds.num_classes);
  const std::size_t label_bytes = (ds.num_classes + 7) / 8;
  for (std::size_t row = 0; row < n; ++row) {
    for (std::size_t b = 0; b < label_bytes; ++b) {
      std::uint8_t byte = r.read_u8();
      for (std::size_t bit = 0; bit < 8; ++bit) {
        std::size_t c = b * 8 + bit;
        if (c < ds.num_classes)
          ds.labels(row, c) = (byte >> bit) & 1u ? 1.0 : 0.0;
      }
    }
  }
  r.expect_exhausted();
  ds.split.assign(n, Split::Database);
  return ds;
}

inline FeatureDataset load_features(const std::string& path) {
  return parse_features(read_file_bytes(path), path);
}

// Stratified by primary label: per-class orders are shuffled, then query and
// train rows are drawn round-robin across classes, remainder tagged database.
inline void split_dataset(FeatureDataset& ds, std::uint32_t n_query,
                          std::uint32_t n_train, std::uint64_t seed) {
  check(std::size_t(n_query) + n_train <= ds.size(), "bad_config",
        "split sizes exceed dataset size");
  std::vector<std::vector<std::uint32_t>> per_class(ds.num_classes);
  for (std::uint32_t i = 0; i < ds.size(); ++i)
    per_class[ds.primary_label(i)].push_back(i);
  Rng rng(derive_seed(seed, "split"));
  for (auto& ids : per_class) rng.shuffle(ids);

  ds.split.assign(ds.size(), Split::Database);
  std::vector<std::size_t> cursor(ds.num_classes, 0);
  auto assign_round_robin = [&](std::uint32_t count, Split tag) {
    std::uint32_t assigned = 0;
    while (assigned < count) {
      bool progressed = false;
      for (std::uint32_t k = 0; k < ds.num_classes && assigned < count; ++k) {
        if (cursor[k] < per_class[k].size()) {
          ds.split[per_class[k][cursor[k]++]] = tag;
          ++assigned;
          progressed = true;
        }
      }
      check(progressed, "bad_config", "split exhausted the dataset");
    }
  };
  assign_round_robin(n_query, Split::Query);
  assign_round_robin(n_train, Split::Train);
}

}  // namespace mlh
