#pragma once

#include <chrono>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlh/codebook.hpp"
#include "mlh/dataio.hpp"
#include "mlh/losses.hpp"
#include "mlh/moh.hpp"
#include "mlh/optimizer.hpp"

namespace mlh {

struct TrainConfig {
  double lambda1 = 4.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;
  double learning_rate = 1e-4;
  std::uint32_t batch_size = 64;
  std::uint32_t epochs = 100;
  double rmsprop_decay = 0.9;
  double rmsprop_eps = 1e-8;
  std::uint64_t seed = 1;
  bool mutual_parity_invert = false;
  bool enable_ml = true;
  bool enable_moh = true;
  MoHConfig moh;
  BackboneSpec backbone;
  bool debug_graph = false;

  void validate() const {
    check(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda3 >= 0.0, "bad_config",
          "loss weights must be nonnegative");
    check(learning_rate > 0.0, "bad_config", "learning_rate must be positive");
    check(batch_size >= 2, "bad_config", "batch_size must be >= 2");
    check(epochs >= 1, "bad_config", "epochs must be >= 1");
    check(rmsprop_decay >= 0.0 && rmsprop_decay < 1.0, "bad_config",
          "rmsprop_decay must be in [0, 1)");
    check(rmsprop_eps > 0.0, "bad_config", "rmsprop_eps must be positive");
  }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error("bad_config", "boolean expected for '" + key + "', got '" + v + "'");
}

inline double parse_double(const std::string& v, const std::string& key) {
  std::size_t used = 0;
  double out;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw Error("bad_config", "number expected for '" + key + "', got '" + v + "'");
  }
  check(used == v.size(), "bad_config", "trailing junk in value for '" + key + "'");
  return out;
}

inline std::uint64_t parse_uint(const std::string& v, const std::string& key) {
  std::size_t used = 0;
  std::uint64_t out;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw Error("bad_config", "integer expected for '" + key + "', got '" + v + "'");
  }
  check(used == v.size(), "bad_config", "trailing junk in value for '" + key + "'");
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace detail

inline ExpertKind parse_expert_kind(const std::string& v) {
  if (v == "moh") return ExpertKind::HashTwoLayer;
  if (v == "trad_moe") return ExpertKind::TradMoeTwoLayer;
  if (v == "trad_hash") return ExpertKind::TradHashLinear;
  throw Error("bad_config", "expert_kind must be moh, trad_moe, or trad_hash");
}

inline const char* expert_kind_name(ExpertKind k) {
  switch (k) {
    case ExpertKind::HashTwoLayer: return "moh";
    case ExpertKind::TradMoeTwoLayer: return "trad_moe";
    case ExpertKind::TradHashLinear: return "trad_hash";
  }
  return "moh";
}

// Flat `key = value` lines; '#' starts a comment; unknown keys are rejected.
inline void apply_config_line(TrainConfig& cfg, const std::string& key,
                              const std::string& value) {
  if (key == "lambda1") cfg.lambda1 = detail::parse_double(value, key);
  else if (key == "lambda2") cfg.lambda2 = detail::parse_double(value, key);
  else if (key == "lambda3") cfg.lambda3 = detail::parse_double(value, key);
  else if (key == "learning_rate") cfg.learning_rate = detail::parse_double(value, key);
  else if (key == "batch_size") cfg.batch_size = std::uint32_t(detail::parse_uint(value, key));
  else if (key == "epochs") cfg.epochs = std::uint32_t(detail::parse_uint(value, key));
  else if (key == "rmsprop_decay") cfg.rmsprop_decay = detail::parse_double(value, key);
  else if (key == "rmsprop_eps") cfg.rmsprop_eps = detail::parse_double(value, key);
  else if (key == "seed") cfg.seed = detail::parse_uint(value, key);
  else if (key == "mutual_parity_invert") cfg.mutual_parity_invert = detail::parse_bool(value, key);
  else if (key == "enable_ml") cfg.enable_ml = detail::parse_bool(value, key);
  else if (key == "enable_moh") cfg.enable_moh = detail::parse_bool(value, key);
  else if (key == "feature_dim") cfg.moh.feature_dim = std::uint32_t(detail::parse_uint(value, key));
  else if (key == "hidden_dim") cfg.moh.hidden_dim = std::uint32_t(detail::parse_uint(value, key));
  else if (key == "expert_count") cfg.moh.expert_count = std::uint32_t(detail::parse_uint(value, key));
  else if (key == "activation_ratio") cfg.moh.activation_ratio = detail::parse_double(value, key);
  else if (key == "shared_experts") cfg.moh.shared_experts = detail::parse_bool(value, key);
  else if (key == "use_softmax_gate") cfg.moh.use_softmax_gate = detail::parse_bool(value, key);
  else if (key == "expert_kind") cfg.moh.expert_kind = parse_expert_kind(value);
  else if (key == "backbone") {
    if (value == "identity") cfg.backbone.kind = BackboneKind::Identity;
    else if (value == "mlp") cfg.backbone.kind = BackboneKind::OneHiddenMlp;
    else throw Error("bad_config", "backbone must be identity or mlp");
  } else if (key == "backbone_input_dim")
    cfg.backbone.input_dim = std::uint32_t(detail::parse_uint(value, key));
  else if (key == "backbone_hidden_dim")
    cfg.backbone.hidden_dim = std::uint32_t(detail::parse_uint(value, key));
  else if (key == "debug_graph") cfg.debug_graph = detail::parse_bool(value, key);
  else throw Error("unknown_key", "unknown config key '" + key + "'");
}

inline TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    check(eq != std::string::npos, "bad_config",
          "line " + std::to_string(line_no) + " is not 'key = value'");
    apply_config_line(cfg, detail::trim(line.substr(0, eq)),
                      detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

struct EpochRecord {
  std::uint32_t epoch = 0;
  LossBreakdown mean;  // averaged over the epoch's batches
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  bool completed = false;
};

// Non-finite loss aborts the run; the partial report rides along for the
// diagnostic snapshot.
class TrainAbort : public Error {
 public:
  TrainAbort(const std::string& message, TrainReport partial)
      : Error("non_finite_loss", message), partial_(std::move(partial)) {}
  const TrainReport& partial() const { return partial_; }

 private:
  TrainReport partial_;
};

inline std::string breakdown_json_line(std::uint32_t epoch, const LossBreakdown& b) {
  nlohmann::json j{{"epoch", epoch},
                   {"L", b.total},
                   {"L_C", b.l_center},
                   {"L_P", b.l_pairwise},
                   {"L_M", b.l_mutual},
                   {"parity", branch_name(b.detached_branch)}};
  return j.dump();
}

struct TrainResult {
  MoHModel model;
  TrainReport report;
};

// One run of the full training loop: per batch, backbone features, both
// branch codes through the shared MoH layer, center/pairwise losses, the
// epoch-parity mutual term, weighted total, backward, RMSProp step.
// Deterministic in (dataset, codebook, config, seed).
inline TrainResult train(const FeatureDataset& data, const Codebook& cb,
                         const TrainConfig& cfg_in) {
  TrainConfig cfg = cfg_in;
  cfg.validate();
  check(data.size() >= 2, "bad_config", "training set needs at least 2 samples");
  check(data.num_classes == cb.config.c, "shape_mismatch",
        "dataset classes != codebook classes");

  cfg.moh.q = cb.config.q;
  if (cfg.backbone.kind == BackboneKind::Identity) {
    if (cfg.moh.feature_dim == 0) cfg.moh.feature_dim = data.feature_dim;
    check(cfg.moh.feature_dim == data.feature_dim, "shape_mismatch",
          "feature_dim config does not match the dataset");
    cfg.backbone.input_dim = data.feature_dim;
  } else {
    check(cfg.backbone.input_dim == 0 || cfg.backbone.input_dim == data.feature_dim,
          "shape_mismatch", "backbone input width does not match the dataset");
    cfg.backbone.input_dim = data.feature_dim;
    check(cfg.moh.feature_dim >= 1, "bad_config",
          "mlp backbone needs an explicit feature_dim");
  }

  const double lambda3 = cfg.enable_ml ? cfg.lambda3 : 0.0;
  MoHModel model = build_model(cfg.moh, cfg.backbone, derive_seed(cfg.seed, "model"),
                               cfg.enable_moh);
  RmsProp opt(model.parameters(),
              {cfg.learning_rate, cfg.rmsprop_decay, cfg.rmsprop_eps});

  TrainReport report;
  report.seed = cfg.seed;
  auto t0 = std::chrono::steady_clock::now();

  const std::size_t n = data.size();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  bool dumped_graph = false;

  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", epoch));
    shuffle_rng.shuffle(order);
    Branch detached = detached_branch_for_epoch(epoch, cfg.mutual_parity_invert);

    LossBreakdown sums;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::size_t size = std::min<std::size_t>(cfg.batch_size, n - start);
      if (size < 2) continue;  // pairwise loss needs a pair
      Tensor feats(size, data.feature_dim), labels(size, data.num_classes);
      for (std::size_t r = 0; r < size; ++r) {
        std::uint32_t id = order[start + r];
        for (std::uint32_t c = 0; c < data.feature_dim; ++c)
          feats(r, c) = data.features(id, c);
        for (std::uint32_t c = 0; c < data.num_classes; ++c)
          labels(r, c) = data.labels(id, c);
      }

      TotalLoss total;
      try {
        NodePtr base = backbone_forward(model, constant(feats));
        CodeBatch u_c = branch_codes(model, base, Branch::Center);
        CodeBatch u_p = branch_codes(model, base, Branch::Pairwise);
        NodePtr l_c = center_loss(u_c.u, cb, labels).loss;
        NodePtr l_p = pairwise_loss(u_p.u, labels).loss;
        NodePtr l_m = cfg.enable_ml
                          ? mutual_loss(u_c.u, u_p.u, epoch, cfg.mutual_parity_invert)
                          : nullptr;
        total = total_loss(l_c, l_p, l_m, cfg.lambda1, cfg.lambda2, lambda3, detached);
        check(std::isfinite(total.breakdown.total), "non_finite",
              "total loss is not finite");
      } catch (const Error& e) {
        if (e.code() != "non_finite") throw;
        auto t1 = std::chrono::steady_clock::now();
        report.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        std::ostringstream msg;
        msg << "aborted at epoch " << epoch << ", batch " << batches << ": "
            << e.what();
        throw TrainAbort(msg.str(), std::move(report));
      }

      opt.zero_grad();
      backward(total.loss);
      opt.step();

      if (cfg.debug_graph && !dumped_graph) {
        dumped_graph = true;
        fputs(graph_dump(total.loss).c_str(), stderr);
      }

      sums.l_center += total.breakdown.l_center;
      sums.l_pairwise += total.breakdown.l_pairwise;
      sums.l_mutual += total.breakdown.l_mutual;
      sums.total += total.breakdown.total;
      ++batches;
    }
    check(batches > 0, "bad_config", "no trainable batch in epoch");

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean.l_center = sums.l_center / double(batches);
    rec.mean.l_pairwise = sums.l_pairwise / double(batches);
    rec.mean.l_mutual = sums.l_mutual / double(batches);
    rec.mean.total = sums.total / double(batches);
    rec.mean.lambda1 = cfg.lambda1;
    rec.mean.lambda2 = cfg.lambda2;
    rec.mean.lambda3 = lambda3;
    rec.mean.detached_branch = detached;
    report.epochs.push_back(rec);
  }

  auto t1 = std::chrono::steady_clock::now();
  report.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  report.completed = true;
  return {std::move(model), std::move(report)};
}

// Frozen-model encoding: forward through constants (no graph is built), then
// sign binarization.
inline Tensor encode(const MoHModel& model, const Tensor& features, Branch branch) {
  NoGradGuard frozen;
  NodePtr base = backbone_forward(model, constant(features));
  return binarize(branch_codes(model, base, branch).u->value);
}

}  // namespace mlh
