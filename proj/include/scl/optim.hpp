#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "scl/tensor.hpp"

namespace scl {

enum class OptimizerKind { SGD, ADAM };

inline const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::SGD ? "sgd" : "adam";
}

inline OptimizerKind optimizer_from_name(const std::string& s) {
  if (s == "sgd") return OptimizerKind::SGD;
  if (s == "adam") return OptimizerKind::ADAM;
  throw std::invalid_argument("unknown optimizer '" + s + "' (expected sgd|adam)");
}

// Updates a fixed set of named parameters in place. Adam keeps per-parameter
// first/second moment buffers and applies bias correction.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::vector<std::pair<std::string, Tensor>> params, double lr,
            double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : kind_(kind), params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr_ <= 0) throw std::invalid_argument("optimizer: learning rate must be positive");
    if (kind_ == OptimizerKind::ADAM) {
      m_.reserve(params_.size());
      v_.reserve(params_.size());
      for (auto& [name, p] : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
      }
    }
  }

  void step() {
    ++steps_;
    for (size_t pi = 0; pi < params_.size(); ++pi) {
      auto& [name, p] = params_[pi];
      if (!p.has_grad())
        throw std::invalid_argument("optimizer: parameter '" + name +
                                    "' has no gradient; call backward() before step()");
      const auto& g = p.grad();
      auto& w = p.mutable_values();
      if (kind_ == OptimizerKind::SGD) {
        for (size_t i = 0; i < w.size(); ++i) w[i] -= lr_ * g[i];
      } else {
        auto& m = m_[pi];
        auto& v = v_[pi];
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
        for (size_t i = 0; i < w.size(); ++i) {
          m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
          v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
          w[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
        }
      }
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
  }

  long step_count() const { return steps_; }
  double learning_rate() const { return lr_; }
  OptimizerKind kind() const { return kind_; }
  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }

 private:
  OptimizerKind kind_;
  std::vector<std::pair<std::string, Tensor>> params_;
  double lr_, beta1_, beta2_, eps_;
  long steps_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace scl
