#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "mlh/autodiff.hpp"
#include "mlh/binary_io.hpp"
#include "mlh/error.hpp"
#include "mlh/random.hpp"

namespace mlh {

enum class Branch : std::uint8_t { Center = 0, Pairwise = 1 };

inline const char* branch_name(Branch b) {
  return b == Branch::Center ? "center" : "pairwise";
}

// Expert designs compared in the gating-module ablation. The hash-expert
// default keeps the two-layer MLP shape but emits code-width output; the
// traditional MoE expert transforms features and routes them through a
// per-branch hash head; the traditional hash expert is a bare projection.
enum class ExpertKind : std::uint8_t {
  HashTwoLayer = 0,
  TradMoeTwoLayer = 1,
  TradHashLinear = 2,
};

enum class BackboneKind : std::uint8_t { Identity = 0, OneHiddenMlp = 1 };

struct MoHConfig {
  std::uint32_t feature_dim = 0;
  std::uint32_t hidden_dim = 0;  // 0: defaults to feature_dim / 2
  std::uint32_t q = 0;
  std::uint32_t expert_count = 64;
  double activation_ratio = 0.25;
  bool shared_experts = true;
  bool use_softmax_gate = false;
  ExpertKind expert_kind = ExpertKind::HashTwoLayer;

  std::uint32_t resolved_hidden_dim() const {
    return hidden_dim > 0 ? hidden_dim : std::max<std::uint32_t>(1, feature_dim / 2);
  }

  std::uint32_t top_k() const {
    auto k = static_cast<std::uint32_t>(
        std::ceil(activation_ratio * static_cast<double>(expert_count)));
    return std::clamp<std::uint32_t>(k, 1, expert_count);
  }

  void validate() const {
    check(feature_dim >= 1, "bad_config", "feature_dim must be >= 1");
    check(q >= 1, "bad_config", "code length q must be >= 1");
    check(expert_count >= 1, "bad_config", "expert_count must be >= 1");
    check(activation_ratio > 0.0 && activation_ratio <= 1.0, "bad_config",
          "activation_ratio must be in (0, 1]");
  }
};

struct BackboneSpec {
  BackboneKind kind = BackboneKind::Identity;
  std::uint32_t input_dim = 0;   // Identity: equals feature_dim
  std::uint32_t hidden_dim = 0;  // OneHiddenMlp only
};

struct Expert {
  NodePtr w1, b1;  // all kinds
  NodePtr w2, b2;  // two-layer kinds only
};

struct ExpertPool {
  ExpertKind kind = ExpertKind::HashTwoLayer;
  std::uint32_t in_dim = 0;
  std::uint32_t hidden_dim = 0;
  std::uint32_t out_dim = 0;  // q, except TradMoe where experts emit in_dim
  std::vector<Expert> experts;
};

struct Gate {
  Branch branch = Branch::Center;
  NodePtr w, b;  // feature_dim x m, 1 x m
};

struct CodeBatch {
  Branch branch = Branch::Center;
  NodePtr u;            // N x q continuous codes
  Tensor gate_weights;  // N x m, zeros at inactive experts; empty when MoH is off
  std::vector<std::vector<std::uint32_t>> selected;  // per-row expert ids, size k
};

namespace detail {

inline NodePtr expert_forward(const ExpertPool& pool, const Expert& e, const NodePtr& x) {
  if (pool.kind == ExpertKind::TradHashLinear)
    return add_bias(matmul(x, e.w1), e.b1);
  return add_bias(matmul(relu(add_bias(matmul(x, e.w1), e.b1)), e.w2), e.b2);
}

}  // namespace detail

// Eq-style mixture: per sample, linear gate scores (softmax only when
// configured), top-k selection with ties broken by lower expert index, and a
// score-weighted sum of the selected experts' outputs. Only selected experts
// run, each on the sub-batch routed to it; gradients flow through every
// selected path. The optional head maps TradMoe mixtures to code width.
inline CodeBatch moh_forward(const NodePtr& features, const ExpertPool& pool,
                             const Gate& gate, const MoHConfig& cfg,
                             const NodePtr& head_w = nullptr,
                             const NodePtr& head_b = nullptr) {
  cfg.validate();
  check(features->value.cols() == cfg.feature_dim, "shape_mismatch",
        "feature width does not match MoH config");
  check(features->value.all_finite(), "non_finite", "non-finite features");
  const std::size_t n = features->value.rows();
  const std::uint32_t m = cfg.expert_count;
  const std::uint32_t k = cfg.top_k();

  NodePtr scores = add_bias(matmul(features, gate.w), gate.b);
  if (cfg.use_softmax_gate) scores = softmax_rows(scores);
  const Tensor& score_values = scores->value;

  std::vector<std::vector<std::uint32_t>> selected(n);
  std::vector<std::vector<std::uint32_t>> rows_for_expert(m);
  std::vector<std::uint32_t> idx(m);
  for (std::size_t r = 0; r < n; ++r) {
    std::iota(idx.begin(), idx.end(), 0u);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                      [&](std::uint32_t a, std::uint32_t b) {
                        double sa = score_values(r, a), sb = score_values(r, b);
                        return sa > sb || (sa == sb && a < b);
                      });
    selected[r].assign(idx.begin(), idx.begin() + k);
    std::sort(selected[r].begin(), selected[r].end());
    for (std::uint32_t e : selected[r]) rows_for_expert[e].push_back(std::uint32_t(r));
  }

  NodePtr mix = constant(Tensor(n, pool.out_dim));
  for (std::uint32_t e = 0; e < m; ++e) {
    const auto& rows = rows_for_expert[e];
    if (rows.empty()) continue;
    NodePtr sub_features = gather_rows(features, rows);
    NodePtr out = detail::expert_forward(pool, pool.experts[e], sub_features);
    NodePtr weight = col_slice(gather_rows(scores, rows), e);
    mix = add(mix, scatter_rows(row_scale(out, weight), rows, n));
  }

  CodeBatch batch;
  batch.branch = gate.branch;
  batch.u = (pool.kind == ExpertKind::TradMoeTwoLayer)
                ? add_bias(matmul(mix, head_w), head_b)
                : mix;
  batch.gate_weights = Tensor(n, m);
  for (std::size_t r = 0; r < n; ++r)
    for (std::uint32_t e : selected[r]) batch.gate_weights(r, e) = score_values(r, e);
  batch.selected = std::move(selected);
  return batch;
}

// Evaluation-time sign; sign(0) = +1 so codes are always in {-1,+1}.
inline Tensor binarize(const Tensor& u) {
  check(u.all_finite(), "non_finite", "binarize of non-finite codes");
  Tensor out = u;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] >= 0.0 ? 1.0 : -1.0;
  return out;
}

struct MoHModel {
  MoHConfig cfg;
  BackboneSpec backbone;
  bool moh_enabled = true;

  std::vector<NodePtr> backbone_params;  // OneHiddenMlp: w1, b1, w2, b2
  ExpertPool pool_center;                // aliases pool_pairwise when shared
  ExpertPool pool_pairwise;
  Gate gate_center, gate_pairwise;
  NodePtr head_center_w, head_center_b;  // TradMoe kind only
  NodePtr head_pairwise_w, head_pairwise_b;
  NodePtr plain_center_w, plain_center_b;  // moh_enabled == false
  NodePtr plain_pairwise_w, plain_pairwise_b;

  // Unique trainable parameters in declared (checkpoint) order.
  std::vector<NodePtr> parameters() const {
    std::vector<NodePtr> out = backbone_params;
    auto push_pool = [&](const ExpertPool& pool) {
      for (const auto& e : pool.experts) {
        out.push_back(e.w1);
        out.push_back(e.b1);
        if (pool.kind != ExpertKind::TradHashLinear) {
          out.push_back(e.w2);
          out.push_back(e.b2);
        }
      }
    };
    if (moh_enabled) {
      push_pool(pool_center);
      if (!cfg.shared_experts) push_pool(pool_pairwise);
      out.insert(out.end(), {gate_center.w, gate_center.b, gate_pairwise.w,
                             gate_pairwise.b});
      if (cfg.expert_kind == ExpertKind::TradMoeTwoLayer)
        out.insert(out.end(),
                   {head_center_w, head_center_b, head_pairwise_w, head_pairwise_b});
    } else {
      out.insert(out.end(), {plain_center_w, plain_center_b, plain_pairwise_w,
                             plain_pairwise_b});
    }
    return out;
  }

  std::size_t parameter_scalars() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p->value.size();
    return n;
  }
};

namespace detail {

inline NodePtr glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(fan_in, fan_out);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_uniform(-a, a);
  return parameter(t);
}

inline NodePtr zero_bias(std::size_t width) { return parameter(Tensor(1, width)); }

inline ExpertPool build_pool(Rng& rng, const MoHConfig& cfg) {
  ExpertPool pool;
  pool.kind = cfg.expert_kind;
  pool.in_dim = cfg.feature_dim;
  pool.hidden_dim = cfg.resolved_hidden_dim();
  pool.out_dim = cfg.expert_kind == ExpertKind::TradMoeTwoLayer ? cfg.feature_dim : cfg.q;
  for (std::uint32_t i = 0; i < cfg.expert_count; ++i) {
    Expert e;
    if (pool.kind == ExpertKind::TradHashLinear) {
      e.w1 = glorot(rng, pool.in_dim, pool.out_dim);
      e.b1 = zero_bias(pool.out_dim);
    } else {
      e.w1 = glorot(rng, pool.in_dim, pool.hidden_dim);
      e.b1 = zero_bias(pool.hidden_dim);
      e.w2 = glorot(rng, pool.hidden_dim, pool.out_dim);
      e.b2 = zero_bias(pool.out_dim);
    }
    pool.experts.push_back(std::move(e));
  }
  return pool;
}

}  // namespace detail

// Initialization is a single splitmix stream consumed in declared parameter
// order, so identical (config, seed) pairs produce bit-identical models.
inline MoHModel build_model(const MoHConfig& cfg, const BackboneSpec& backbone,
                            std::uint64_t seed, bool moh_enabled = true) {
  MoHConfig resolved = cfg;
  if (backbone.kind == BackboneKind::Identity && resolved.feature_dim == 0)
    resolved.feature_dim = backbone.input_dim;
  resolved.validate();
  if (backbone.kind == BackboneKind::Identity && backbone.input_dim != 0)
    check(backbone.input_dim == resolved.feature_dim, "bad_config",
          "identity backbone input width must equal feature_dim");
  if (backbone.kind == BackboneKind::OneHiddenMlp) {
    check(backbone.input_dim >= 1 && backbone.hidden_dim >= 1, "bad_config",
          "mlp backbone needs input_dim and hidden_dim");
  }

  MoHModel model;
  model.cfg = resolved;
  model.backbone = backbone;
  model.moh_enabled = moh_enabled;
  Rng rng(derive_seed(seed, "init"));

  if (backbone.kind == BackboneKind::OneHiddenMlp) {
    model.backbone_params.push_back(detail::glorot(rng, backbone.input_dim, backbone.hidden_dim));
    model.backbone_params.push_back(detail::zero_bias(backbone.hidden_dim));
    model.backbone_params.push_back(detail::glorot(rng, backbone.hidden_dim, resolved.feature_dim));
    model.backbone_params.push_back(detail::zero_bias(resolved.feature_dim));
  }

  if (moh_enabled) {
    model.pool_center = detail::build_pool(rng, resolved);
    model.pool_pairwise =
        resolved.shared_experts ? model.pool_center : detail::build_pool(rng, resolved);
    model.gate_center = {Branch::Center, detail::glorot(rng, resolved.feature_dim, resolved.expert_count),
                         detail::zero_bias(resolved.expert_count)};
    model.gate_pairwise = {Branch::Pairwise,
                           detail::glorot(rng, resolved.feature_dim, resolved.expert_count),
                           detail::zero_bias(resolved.expert_count)};
    if (resolved.expert_kind == ExpertKind::TradMoeTwoLayer) {
      model.head_center_w = detail::glorot(rng, resolved.feature_dim, resolved.q);
      model.head_center_b = detail::zero_bias(resolved.q);
      model.head_pairwise_w = detail::glorot(rng, resolved.feature_dim, resolved.q);
      model.head_pairwise_b = detail::zero_bias(resolved.q);
    }
  } else {
    model.plain_center_w = detail::glorot(rng, resolved.feature_dim, resolved.q);
    model.plain_center_b = detail::zero_bias(resolved.q);
    model.plain_pairwise_w = detail::glorot(rng, resolved.feature_dim, resolved.q);
    model.plain_pairwise_b = detail::zero_bias(resolved.q);
  }
  return model;
}

inline NodePtr backbone_forward(const MoHModel& model, const NodePtr& input) {
  if (model.backbone.kind == BackboneKind::Identity) return input;
  const auto& p = model.backbone_params;
  return add_bias(matmul(relu(add_bias(matmul(input, p[0]), p[1])), p[2]), p[3]);
}

// Branch codes for any model variant: MoH mixture, TradMoe mixture + head, or
// the plain per-branch hash layer used by the no-MoH baseline.
inline CodeBatch branch_codes(const MoHModel& model, const NodePtr& features, Branch branch) {
  if (!model.moh_enabled) {
    CodeBatch batch;
    batch.branch = branch;
    bool center = branch == Branch::Center;
    batch.u = add_bias(matmul(features, center ? model.plain_center_w : model.plain_pairwise_w),
                       center ? model.plain_center_b : model.plain_pairwise_b);
    return batch;
  }
  bool center = branch == Branch::Center;
  return moh_forward(features, center ? model.pool_center : model.pool_pairwise,
                     center ? model.gate_center : model.gate_pairwise, model.cfg,
                     center ? model.head_center_w : model.head_pairwise_w,
                     center ? model.head_center_b : model.head_pairwise_b);
}

inline constexpr std::uint32_t kModelFormatVersion = 1;

inline std::vector<std::uint8_t> serialize_model(const MoHModel& model) {
  ByteWriter w;
  w.write_magic("MLHM");
  w.write_u32(kModelFormatVersion);
  w.write_u8(model.moh_enabled ? 1 : 0);
  w.write_u8(static_cast<std::uint8_t>(model.backbone.kind));
  w.write_u32(model.backbone.input_dim);
  w.write_u32(model.backbone.hidden_dim);
  w.write_u32(model.cfg.feature_dim);
  w.write_u32(model.cfg.hidden_dim);
  w.write_u32(model.cfg.q);
  w.write_u32(model.cfg.expert_count);
  w.write_f64(model.cfg.activation_ratio);
  w.write_u8(model.cfg.shared_experts ? 1 : 0);
  w.write_u8(model.cfg.use_softmax_gate ? 1 : 0);
  w.write_u8(static_cast<std::uint8_t>(model.cfg.expert_kind));
  for (const auto& p : model.parameters())
    for (std::size_t i = 0; i < p->value.size(); ++i) w.write_f64(p->value[i]);
  return w.bytes();
}

inline void save_model(const MoHModel& model, const std::string& path) {
  atomic_write_file(path, serialize_model(model));
}

inline MoHModel parse_model(std::vector<std::uint8_t> bytes, const std::string& origin) {
  ByteReader r(std::move(bytes), origin);
  r.expect_magic("MLHM", "model checkpoint");
  std::uint32_t version = r.read_u32();
  check(version == kModelFormatVersion, "bad_version",
        origin + ": unsupported checkpoint version " + std::to_string(version));
  bool moh_enabled = r.read_u8() != 0;
  BackboneSpec backbone;
  backbone.kind = static_cast<BackboneKind>(r.read_u8());
  backbone.input_dim = r.read_u32();
  backbone.hidden_dim = r.read_u32();
  MoHConfig cfg;
  cfg.feature_dim = r.read_u32();
  cfg.hidden_dim = r.read_u32();
  cfg.q = r.read_u32();
  cfg.expert_count = r.read_u32();
  cfg.activation_ratio = r.read_f64();
  cfg.shared_experts = r.read_u8() != 0;
  cfg.use_softmax_gate = r.read_u8() != 0;
  cfg.expert_kind = static_cast<ExpertKind>(r.read_u8());

  MoHModel model = build_model(cfg, backbone, 0, moh_enabled);
  for (const auto& p : model.parameters())
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = r.read_f64();
  r.expect_exhausted();
  return model;
}

inline MoHModel load_model(const std::string& path) {
  return parse_model(read_file_bytes(path), path);
}

}  // namespace mlh
