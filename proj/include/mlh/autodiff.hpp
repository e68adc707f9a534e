#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mlh/error.hpp"
#include "mlh/tensor.hpp"

namespace mlh {

// Reverse-mode engine over dense 2-D tensors. Define-by-run: each forward
// pass builds a fresh DAG of Nodes; node values are never mutated after
// creation (parameter leaves are updated between passes by the optimizer).
struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // same shape, zero until backward accumulates into it
  bool requires_grad = false;
  bool detached = false;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

  explicit Node(Tensor v, bool req)
      : value(std::move(v)), grad(value.rows(), value.cols()), requires_grad(req) {}
};

inline NodePtr constant(Tensor v) { return std::make_shared<Node>(std::move(v), false); }

inline NodePtr parameter(Tensor v) { return std::make_shared<Node>(std::move(v), true); }

// Stop-gradient: same value, no edge to the producing subgraph.
inline NodePtr detach(const NodePtr& x) {
  auto n = std::make_shared<Node>(x->value, false);
  n->detached = true;
  n->op = "detach";
  return n;
}

// Count of rows whose L2 norm hit the 1e-12 floor in row_l2_normalize since
// the last reset; per thread, since a graph is confined to one thread.
inline std::uint64_t& eps_floor_hits() {
  thread_local std::uint64_t hits = 0;
  return hits;
}

// While false, ops propagate values only: no parents, no backward closures.
inline bool& grad_enabled() {
  thread_local bool on = true;
  return on;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
  ~NoGradGuard() { grad_enabled() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

namespace detail {

inline NodePtr make_op(const char* op, Tensor value, std::vector<NodePtr> parents,
                       std::function<void(Node&)> backprop) {
  check(value.all_finite(), "non_finite",
        std::string("non-finite values out of op '") + op + "'");
  bool req = false;
  if (grad_enabled())
    for (const auto& p : parents) req = req || p->requires_grad;
  auto n = std::make_shared<Node>(std::move(value), req);
  n->op = op;
  if (req) {  // constants build no graph
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

}  // namespace detail

inline NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  Tensor out = matmul_values(a->value, b->value);
  return detail::make_op("matmul", std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad)
      a->grad.add_in_place(matmul_values(self.grad, transpose_values(b->value)));
    if (b->requires_grad)
      b->grad.add_in_place(matmul_values(transpose_values(a->value), self.grad));
  });
}

inline NodePtr add(const NodePtr& a, const NodePtr& b) {
  check(a->value.same_shape(b->value), "shape_mismatch", "add shapes differ");
  Tensor out = a->value;
  out.add_in_place(b->value);
  return detail::make_op("add", std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) a->grad.add_in_place(self.grad);
    if (b->requires_grad) b->grad.add_in_place(self.grad);
  });
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b) {
  check(a->value.same_shape(b->value), "shape_mismatch", "sub shapes differ");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  return detail::make_op("sub", std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) a->grad.add_in_place(self.grad);
    if (b->requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) b->grad[i] -= self.grad[i];
  });
}

inline NodePtr hadamard(const NodePtr& a, const NodePtr& b) {
  check(a->value.same_shape(b->value), "shape_mismatch", "hadamard shapes differ");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return detail::make_op("hadamard", std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        a->grad[i] += self.grad[i] * b->value[i];
    if (b->requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        b->grad[i] += self.grad[i] * a->value[i];
  });
}

// x: N x C, bias: 1 x C added to every row.
inline NodePtr add_bias(const NodePtr& x, const NodePtr& bias) {
  check(bias->value.rows() == 1 && bias->value.cols() == x->value.cols(),
        "shape_mismatch", "add_bias expects a 1 x cols row vector");
  Tensor out = x->value;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bias->value(0, c);
  return detail::make_op("add_bias", std::move(out), {x, bias}, [x, bias](Node& self) {
    if (x->requires_grad) x->grad.add_in_place(self.grad);
    if (bias->requires_grad)
      for (std::size_t r = 0; r < self.grad.rows(); ++r)
        for (std::size_t c = 0; c < self.grad.cols(); ++c)
          bias->grad(0, c) += self.grad(r, c);
  });
}

// Subgradient 0 at 0.
inline NodePtr relu(const NodePtr& x) {
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
  return detail::make_op("relu", std::move(out), {x}, [x](Node& self) {
    if (!x->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (x->value[i] > 0.0) x->grad[i] += self.grad[i];
  });
}

inline NodePtr scale(const NodePtr& x, double s) {
  Tensor out = x->value;
  out.scale_in_place(s);
  return detail::make_op("scale", std::move(out), {x}, [x, s](Node& self) {
    if (!x->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += s * self.grad[i];
  });
}

inline NodePtr add_scalar(const NodePtr& x, double s) {
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s;
  return detail::make_op("add_scalar", std::move(out), {x}, [x](Node& self) {
    if (x->requires_grad) x->grad.add_in_place(self.grad);
  });
}

inline NodePtr sum_all(const NodePtr& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x->value.size(); ++i) s += x->value[i];
  Tensor out(1, 1, s);
  return detail::make_op("sum_all", std::move(out), {x}, [x](Node& self) {
    if (!x->requires_grad) return;
    double g = self.grad(0, 0);
    for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
  });
}

inline NodePtr mean_all(const NodePtr& x) {
  check(x->value.size() > 0, "shape_mismatch", "mean_all of empty tensor");
  double s = 0.0;
  for (std::size_t i = 0; i < x->value.size(); ++i) s += x->value[i];
  double inv = 1.0 / static_cast<double>(x->value.size());
  Tensor out(1, 1, s * inv);
  return detail::make_op("mean_all", std::move(out), {x}, [x, inv](Node& self) {
    if (!x->requires_grad) return;
    double g = self.grad(0, 0) * inv;
    for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
  });
}

inline NodePtr elementwise_log(const NodePtr& x) {
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) {
    check(out[i] > 0.0, "domain_error", "log of non-positive entry");
    out[i] = std::log(out[i]);
  }
  return detail::make_op("log", std::move(out), {x}, [x](Node& self) {
    if (!x->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      x->grad[i] += self.grad[i] / x->value[i];
  });
}

// Gradient passes only strictly inside (lo, hi).
inline NodePtr clamp(const NodePtr& x, double lo, double hi) {
  check(lo < hi, "bad_config", "clamp bounds out of order");
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], lo, hi);
  return detail::make_op("clamp", std::move(out), {x}, [x, lo, hi](Node& self) {
    if (!x->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (x->value[i] > lo && x->value[i] < hi) x->grad[i] += self.grad[i];
  });
}

// Numerically stable log(1 + e^x): log1p(e^{-|x|}) + max(x, 0). Backward is
// the logistic sigmoid, also computed without overflow.
inline NodePtr softplus(const NodePtr& x) {
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::log1p(std::exp(-std::abs(out[i]))) + std::max(out[i], 0.0);
  return detail::make_op("softplus", std::move(out), {x}, [x](Node& self) {
    if (!x->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      double v = x->value[i];
      double sig = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                            : std::exp(v) / (1.0 + std::exp(v));
      x->grad[i] += self.grad[i] * sig;
    }
  });
}

// Rows sum to 1; max-subtraction keeps e^x bounded.
inline NodePtr softmax_rows(const NodePtr& x) {
  Tensor out = x->value;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double mx = out(r, 0);
    for (std::size_t c = 1; c < out.cols(); ++c) mx = std::max(mx, out(r, c));
    double denom = 0.0;
    for (std::size_t c = 0; c < out.cols(); ++c) {
      out(r, c) = std::exp(out(r, c) - mx);
      denom += out(r, c);
    }
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) /= denom;
  }
  return detail::make_op("softmax_rows", std::move(out), {x}, [x](Node& self) {
    if (!x->requires_grad) return;
    for (std::size_t r = 0; r < self.grad.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < self.grad.cols(); ++c)
        dot += self.grad(r, c) * self.value(r, c);
      for (std::size_t c = 0; c < self.grad.cols(); ++c)
        x->grad(r, c) += self.value(r, c) * (self.grad(r, c) - dot);
    }
  });
}

// y = x / max(||x||_2, 1e-12) per row. Floored rows propagate through the
// constant denominator and bump the eps_floor_hits diagnostic.
inline NodePtr row_l2_normalize(const NodePtr& x) {
  constexpr double kEps = 1e-12;
  Tensor out = x->value;
  std::vector<double> norms(out.rows());
  std::vector<bool> floored(out.rows());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < out.cols(); ++c) sq += out(r, c) * out(r, c);
    double n = std::sqrt(sq);
    floored[r] = n <= kEps;
    if (floored[r]) ++eps_floor_hits();
    norms[r] = floored[r] ? kEps : n;
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) /= norms[r];
  }
  return detail::make_op(
      "row_l2_normalize", std::move(out), {x},
      [x, norms = std::move(norms), floored = std::move(floored)](Node& self) {
        if (!x->requires_grad) return;
        for (std::size_t r = 0; r < self.grad.rows(); ++r) {
          if (floored[r]) {
            for (std::size_t c = 0; c < self.grad.cols(); ++c)
              x->grad(r, c) += self.grad(r, c) / norms[r];
            continue;
          }
          double dot = 0.0;
          for (std::size_t c = 0; c < self.grad.cols(); ++c)
            dot += self.grad(r, c) * self.value(r, c);
          for (std::size_t c = 0; c < self.grad.cols(); ++c)
            x->grad(r, c) +=
                (self.grad(r, c) - self.value(r, c) * dot) / norms[r];
        }
      });
}

// N x 1 column of row sums.
inline NodePtr row_sum(const NodePtr& x) {
  Tensor out(x->value.rows(), 1);
  for (std::size_t r = 0; r < x->value.rows(); ++r)
    for (std::size_t c = 0; c < x->value.cols(); ++c) out(r, 0) += x->value(r, c);
  return detail::make_op("row_sum", std::move(out), {x}, [x](Node& self) {
    if (!x->requires_grad) return;
    for (std::size_t r = 0; r < x->grad.rows(); ++r)
      for (std::size_t c = 0; c < x->grad.cols(); ++c)
        x->grad(r, c) += self.grad(r, 0);
  });
}

// y[r, c] = x[r, c] * s[r, 0] with s an N x 1 column.
inline NodePtr row_scale(const NodePtr& x, const NodePtr& s) {
  check(s->value.cols() == 1 && s->value.rows() == x->value.rows(),
        "shape_mismatch", "row_scale expects an N x 1 scale column");
  Tensor out = x->value;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= s->value(r, 0);
  return detail::make_op("row_scale", std::move(out), {x, s}, [x, s](Node& self) {
    for (std::size_t r = 0; r < self.grad.rows(); ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < self.grad.cols(); ++c) {
        if (x->requires_grad) x->grad(r, c) += self.grad(r, c) * s->value(r, 0);
        acc += self.grad(r, c) * x->value(r, c);
      }
      if (s->requires_grad) s->grad(r, 0) += acc;
    }
  });
}

inline NodePtr transpose(const NodePtr& x) {
  return detail::make_op("transpose", transpose_values(x->value), {x}, [x](Node& self) {
    if (!x->requires_grad) return;
    x->grad.add_in_place(transpose_values(self.grad));
  });
}

inline NodePtr gather_rows(const NodePtr& x, std::vector<std::uint32_t> idx) {
  Tensor out(idx.size(), x->value.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] < x->value.rows(), "bad_index", "gather_rows index out of range");
    for (std::size_t c = 0; c < out.cols(); ++c) out(i, c) = x->value(idx[i], c);
  }
  return detail::make_op("gather_rows", std::move(out), {x},
                         [x, idx = std::move(idx)](Node& self) {
                           if (!x->requires_grad) return;
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             for (std::size_t c = 0; c < self.grad.cols(); ++c)
                               x->grad(idx[i], c) += self.grad(i, c);
                         });
}

// Rows of x placed (added) at idx within an out_rows-tall zero tensor.
inline NodePtr scatter_rows(const NodePtr& x, std::vector<std::uint32_t> idx,
                            std::size_t out_rows) {
  check(idx.size() == x->value.rows(), "shape_mismatch",
        "scatter_rows needs one index per row");
  Tensor out(out_rows, x->value.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] < out_rows, "bad_index", "scatter_rows index out of range");
    for (std::size_t c = 0; c < out.cols(); ++c) out(idx[i], c) += x->value(i, c);
  }
  return detail::make_op("scatter_rows", std::move(out), {x},
                         [x, idx = std::move(idx)](Node& self) {
                           if (!x->requires_grad) return;
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             for (std::size_t c = 0; c < self.grad.cols(); ++c)
                               x->grad(i, c) += self.grad(idx[i], c);
                         });
}

inline NodePtr col_slice(const NodePtr& x, std::size_t col) {
  check(col < x->value.cols(), "bad_index", "col_slice column out of range");
  Tensor out(x->value.rows(), 1);
  for (std::size_t r = 0; r < out.rows(); ++r) out(r, 0) = x->value(r, col);
  return detail::make_op("col_slice", std::move(out), {x}, [x, col](Node& self) {
    if (!x->requires_grad) return;
    for (std::size_t r = 0; r < self.grad.rows(); ++r)
      x->grad(r, col) += self.grad(r, 0);
  });
}

// Per-row cosine similarity of two equally shaped matrices, as a composite of
// normalize / hadamard / row_sum. Values in [-1, 1]; eps-floored norms.
inline NodePtr row_cosine(const NodePtr& a, const NodePtr& b) {
  check(a->value.same_shape(b->value), "shape_mismatch", "row_cosine shapes differ");
  return row_sum(hadamard(row_l2_normalize(a), row_l2_normalize(b)));
}

// Reverse topological traversal from a scalar loss; grads accumulate with +=
// so calling backward twice without zeroing doubles them.
inline void backward(const NodePtr& loss) {
  check(loss->value.rows() == 1 && loss->value.cols() == 1, "non_scalar_loss",
        "backward requires a 1x1 loss");
  if (!loss->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next_parent] = stack.back();
    if (next_parent < node->parents.size()) {
      Node* p = node->parents[next_parent++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss->grad(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
}

inline void zero_grad(const std::vector<NodePtr>& params) {
  for (const auto& p : params) p->grad.fill(0.0);
}

// Debug dump: op, shape, grad norm per reachable node.
inline std::string graph_dump(const NodePtr& root) {
  std::ostringstream os;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    double gn = 0.0;
    for (std::size_t i = 0; i < n->grad.size(); ++i) gn += n->grad[i] * n->grad[i];
    os << n->op << " [" << n->value.rows() << "x" << n->value.cols()
       << "] grad_norm=" << std::sqrt(gn) << "\n";
    for (const auto& p : n->parents)
      if (seen.insert(p.get()).second) stack.push_back(p.get());
  }
  return os.str();
}

}  // namespace mlh
