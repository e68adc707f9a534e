#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "mlh/autodiff.hpp"
#include "mlh/codebook.hpp"
#include "mlh/moh.hpp"

namespace mlh {

// Multi-hot label rows; every sample carries at least one class.
inline void validate_labels(const Tensor& labels) {
  for (std::size_t r = 0; r < labels.rows(); ++r) {
    bool any = false;
    for (std::size_t c = 0; c < labels.cols(); ++c) {
      double v = labels(r, c);
      check(v == 0.0 || v == 1.0, "bad_labels", "label entries must be 0 or 1");
      any = any || v == 1.0;
    }
    check(any, "bad_labels", "label row " + std::to_string(r) + " has no class");
  }
}

// S_ij = 1 iff the label vectors overlap; symmetric with unit diagonal.
inline Tensor similarity_matrix(const Tensor& labels) {
  const std::size_t n = labels.rows();
  Tensor s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < labels.cols(); ++c) dot += labels(i, c) * labels(j, c);
      s(i, j) = s(j, i) = dot > 0.0 ? 1.0 : 0.0;
    }
  return s;
}

struct CenterLossResult {
  NodePtr loss;
  Tensor probabilities;  // N x c softmax rows (pre-clamp)
};

// Cross-entropy over softmax of sqrt(q)-scaled cosine similarity to the hash
// centers. Centers enter as constants; probabilities are clamped to
// [1e-7, 1-1e-7] before both log terms since the second one diverges as
// P -> 1.
inline CenterLossResult center_loss(const NodePtr& u_center, const Codebook& cb,
                                    const Tensor& labels) {
  const std::uint32_t q = cb.config.q;
  const std::uint32_t c = cb.config.c;
  const std::size_t n = u_center->value.rows();
  check(u_center->value.cols() == q, "shape_mismatch", "code width != codebook q");
  check(labels.cols() == c, "shape_mismatch", "label width != codebook c");
  check(labels.rows() == n, "shape_mismatch", "label rows != batch size");
  validate_labels(labels);

  // Rows of the codebook all have norm sqrt(q), so the normalized transpose
  // is just centers / sqrt(q).
  Tensor centers_t(q, c);
  double inv_norm = 1.0 / std::sqrt(static_cast<double>(q));
  for (std::uint32_t i = 0; i < c; ++i) {
    auto row = cb.row(i);
    for (std::uint32_t j = 0; j < q; ++j) centers_t(j, i) = row[j] * inv_norm;
  }

  NodePtr cosine = matmul(row_l2_normalize(u_center), constant(centers_t));
  NodePtr probs = softmax_rows(scale(cosine, std::sqrt(static_cast<double>(q))));
  NodePtr clamped = clamp(probs, 1e-7, 1.0 - 1e-7);

  Tensor ones(n, c, 1.0);
  Tensor flipped = ones;  // 1 - y
  for (std::size_t i = 0; i < flipped.size(); ++i) flipped[i] -= labels[i];
  NodePtr log_p = elementwise_log(clamped);
  NodePtr log_not_p = elementwise_log(sub(constant(ones), clamped));
  NodePtr per_entry = add(hadamard(constant(labels), log_p),
                          hadamard(constant(flipped), log_not_p));
  NodePtr loss = scale(sum_all(per_entry), -1.0 / static_cast<double>(n));
  return {loss, probs->value};
}

struct PairwiseLossResult {
  NodePtr loss;
  Tensor logits;      // I = (1/2) U U^T
  Tensor similarity;  // S
};

// Pair likelihood loss in the overflow-free form log(1+e^{-|I|}) + max(0, I)
// - S*I, summed over all ordered pairs (diagonal included) and divided by N.
inline PairwiseLossResult pairwise_loss(const NodePtr& u_pair, const Tensor& labels) {
  const std::size_t n = u_pair->value.rows();
  check(n >= 2, "bad_batch", "pairwise loss needs at least 2 samples");
  check(labels.rows() == n, "shape_mismatch", "label rows != batch size");
  validate_labels(labels);
  Tensor s = similarity_matrix(labels);

  NodePtr logits = scale(matmul(u_pair, transpose(u_pair)), 0.5);
  NodePtr per_pair = sub(softplus(logits), hadamard(logits, constant(s)));
  NodePtr loss = scale(sum_all(per_pair), 1.0 / static_cast<double>(n));
  return {loss, logits->value, s};
}

// Alternating cosine mutual loss: even epochs detach the center codes and
// train the pairwise branch toward them; odd epochs swap. The invert flag
// reproduces the opposite pairing.
inline NodePtr mutual_loss(const NodePtr& u_center, const NodePtr& u_pair,
                           std::uint64_t epoch, bool parity_invert = false) {
  check(u_center->value.same_shape(u_pair->value), "shape_mismatch",
        "mutual loss needs equally shaped code batches");
  bool detach_center = (epoch % 2 == 0);
  if (parity_invert) detach_center = !detach_center;
  NodePtr cos = detach_center ? row_cosine(u_pair, detach(u_center))
                              : row_cosine(u_center, detach(u_pair));
  Tensor ones(u_center->value.rows(), 1, 1.0);
  return mean_all(sub(constant(ones), cos));
}

inline Branch detached_branch_for_epoch(std::uint64_t epoch, bool parity_invert) {
  bool detach_center = (epoch % 2 == 0);
  if (parity_invert) detach_center = !detach_center;
  return detach_center ? Branch::Center : Branch::Pairwise;
}

struct LossBreakdown {
  double l_center = 0.0;
  double l_pairwise = 0.0;
  double l_mutual = 0.0;
  double total = 0.0;
  double lambda1 = 0.0, lambda2 = 0.0, lambda3 = 0.0;
  Branch detached_branch = Branch::Center;
};

struct TotalLoss {
  NodePtr loss;
  LossBreakdown breakdown;
};

// L = l1*L_C + l2*L_P + l3*L_M, accumulated left to right; the breakdown
// records the exact computed value. A null mutual term contributes zero.
inline TotalLoss total_loss(const NodePtr& l_center, const NodePtr& l_pair,
                            const NodePtr& l_mutual, double lambda1, double lambda2,
                            double lambda3, Branch detached) {
  check(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda3 >= 0.0, "bad_config",
        "loss weights must be nonnegative");
  NodePtr loss = add(scale(l_center, lambda1), scale(l_pair, lambda2));
  if (l_mutual) loss = add(loss, scale(l_mutual, lambda3));
  TotalLoss out;
  out.loss = loss;
  out.breakdown.l_center = l_center->value(0, 0);
  out.breakdown.l_pairwise = l_pair->value(0, 0);
  out.breakdown.l_mutual = l_mutual ? l_mutual->value(0, 0) : 0.0;
  out.breakdown.total = loss->value(0, 0);
  out.breakdown.lambda1 = lambda1;
  out.breakdown.lambda2 = lambda2;
  out.breakdown.lambda3 = lambda3;
  out.breakdown.detached_branch = detached;
  return out;
}

}  // namespace mlh
