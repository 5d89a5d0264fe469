#pragma once

// Optimizers: AdamW (decoupled weight decay) for pretraining, SGD with
// momentum and step-decayed learning rate for fine-tuning. Both mutate the
// parameter leaves in place and read whatever gradients the last backward
// pass accumulated; a missing gradient counts as zero.

#include "sgt/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace sgt {

// lr(epoch) = lr0 * gamma^floor(epoch / step_epochs), epochs counted from 0.
inline double step_lr(double lr0, double gamma, int step_epochs, int epoch) {
  if (step_epochs < 1) throw std::invalid_argument("step_lr: step_epochs must be >= 1");
  if (epoch < 0) throw std::invalid_argument("step_lr: epoch must be >= 0");
  return lr0 * std::pow(gamma, static_cast<double>(epoch / step_epochs));
}

template <typename S>
class AdamWT {
 public:
  struct Config {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double eps = 1e-8;
  };

  AdamWT(std::vector<TensorT<S>> params, Config cfg)
      : cfg_(cfg), params_(std::move(params)) {
    validate();
    for (auto& p : params_) {
      m_.emplace_back(Array::Zero(p.size()));
      v_.emplace_back(Array::Zero(p.size()));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto* st = params_[i].storage();
      st->ensure_grad();
      Array& m = m_[i];
      Array& v = v_[i];
      for (Eigen::Index j = 0; j < st->values.size(); ++j) {
        const double g = static_cast<double>(st->grad(j));
        m(j) = static_cast<S>(cfg_.beta1 * static_cast<double>(m(j)) + (1.0 - cfg_.beta1) * g);
        v(j) = static_cast<S>(cfg_.beta2 * static_cast<double>(v(j)) + (1.0 - cfg_.beta2) * g * g);
        const double mhat = static_cast<double>(m(j)) / bc1;
        const double vhat = static_cast<double>(v(j)) / bc2;
        const double upd = mhat / (std::sqrt(vhat) + cfg_.eps) +
                           cfg_.weight_decay * static_cast<double>(st->values(j));
        st->values(j) = static_cast<S>(static_cast<double>(st->values(j)) - cfg_.lr * upd);
      }
    }
  }

  bool state_finite() const {
    for (const auto& a : m_)
      if (!a.allFinite()) return false;
    for (const auto& a : v_)
      if (!a.allFinite()) return false;
    return true;
  }

  const Config& config() const { return cfg_; }

 private:
  using Array = Eigen::Array<S, Eigen::Dynamic, 1>;

  void validate() const {
    if (cfg_.lr <= 0) throw std::invalid_argument("AdamW: lr must be > 0");
    if (cfg_.beta1 < 0 || cfg_.beta1 >= 1 || cfg_.beta2 < 0 || cfg_.beta2 >= 1)
      throw std::invalid_argument("AdamW: betas must lie in [0,1)");
    if (cfg_.eps <= 0) throw std::invalid_argument("AdamW: eps must be > 0");
    if (cfg_.weight_decay < 0) throw std::invalid_argument("AdamW: weight_decay must be >= 0");
  }

  Config cfg_;
  std::int64_t t_ = 0;
  std::vector<TensorT<S>> params_;
  std::vector<Array> m_, v_;
};

template <typename S>
class SgdT {
 public:
  struct Config {
    double lr = 0.005;
    double momentum = 0.9;
  };

  SgdT(std::vector<TensorT<S>> params, Config cfg)
      : cfg_(cfg), params_(std::move(params)) {
    if (cfg_.lr <= 0) throw std::invalid_argument("SGD: lr must be > 0");
    if (cfg_.momentum < 0 || cfg_.momentum >= 1)
      throw std::invalid_argument("SGD: momentum must lie in [0,1)");
    for (auto& p : params_) velocity_.emplace_back(Array::Zero(p.size()));
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  // v <- momentum * v + g; theta <- theta - lr * v
  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto* st = params_[i].storage();
      st->ensure_grad();
      Array& v = velocity_[i];
      v = static_cast<S>(cfg_.momentum) * v + st->grad;
      st->values -= static_cast<S>(cfg_.lr) * v;
    }
  }

  void set_lr(double lr) {
    if (lr <= 0) throw std::invalid_argument("SGD: lr must be > 0");
    cfg_.lr = lr;
  }
  double lr() const { return cfg_.lr; }

  bool state_finite() const {
    for (const auto& a : velocity_)
      if (!a.allFinite()) return false;
    return true;
  }

 private:
  using Array = Eigen::Array<S, Eigen::Dynamic, 1>;
  Config cfg_;
  std::vector<TensorT<S>> params_;
  std::vector<Array> velocity_;
};

using AdamW = AdamWT<float>;
using Sgd = SgdT<float>;

}  // namespace sgt
