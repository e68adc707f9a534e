#pragma once

#include <cmath>
#include <vector>

#include "mlh/autodiff.hpp"

namespace mlh {

struct RmsPropConfig {
  double learning_rate = 1e-4;
  double decay = 0.9;
  double eps = 1e-8;
};

// acc <- decay*acc + (1-decay)*g^2;  theta <- theta - lr * g / (sqrt(acc)+eps)
class RmsProp {
 public:
  RmsProp(std::vector<NodePtr> params, RmsPropConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    check(cfg_.learning_rate > 0.0 && cfg_.eps > 0.0, "bad_config",
          "rmsprop needs positive learning_rate and eps");
    check(cfg_.decay >= 0.0 && cfg_.decay < 1.0, "bad_config",
          "rmsprop decay must be in [0, 1)");
    acc_.reserve(params_.size());
    for (const auto& p : params_) acc_.emplace_back(p->value.rows(), p->value.cols());
  }

  void zero_grad() { mlh::zero_grad(params_); }

  void step() {
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      Tensor& theta = params_[pi]->value;
      const Tensor& g = params_[pi]->grad;
      Tensor& acc = acc_[pi];
      for (std::size_t i = 0; i < theta.size(); ++i) {
        acc[i] = cfg_.decay * acc[i] + (1.0 - cfg_.decay) * g[i] * g[i];
        theta[i] -= cfg_.learning_rate * g[i] / (std::sqrt(acc[i]) + cfg_.eps);
      }
    }
  }

  const std::vector<Tensor>& accumulators() const { return acc_; }

 private:
  std::vector<NodePtr> params_;
  RmsPropConfig cfg_;
  std::vector<Tensor> acc_;
};

}  // namespace mlh
