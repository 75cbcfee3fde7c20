#pragma once

#include <cstddef>
#include <vector>

#include "ccf/errors.hpp"
#include "ccf/model/backward.hpp"
#include "ccf/model/classifier.hpp"

namespace ccf {

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient:
///   v <- momentum * v + (grad + weight_decay * theta)
///   theta <- theta - lr * v
/// Velocity buffers start at zero and are created on the first step.
class SgdMomentum {
 public:
  SgdMomentum(double momentum = 0.9, double weight_decay = 5e-4)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(Classifier& model, const GradientBundle& grads, double lr) {
    if (!(lr > 0.0)) throw InvalidParameter("learning rate must be > 0");
    auto params = model.parameters();
    if (grads.parameters.size() != params.size()) {
      throw ShapeError("gradient bundle does not match model parameters");
    }
    if (velocity_.empty()) {
      for (const Tensor* p : params) velocity_.emplace_back(p->shape());
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor& p = *params[k];
      Tensor& v = velocity_[k];
      const Tensor& g = grads.parameters[k];
      p.require_same_shape(g);
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = momentum_ * v[i] + (g[i] + weight_decay_ * p[i]);
        p[i] -= lr * v[i];
      }
    }
  }

  const std::vector<Tensor>& velocity() const noexcept { return velocity_; }

 private:
  double momentum_;
  double weight_decay_;
  std::vector<Tensor> velocity_;
};

}  // namespace ccf
