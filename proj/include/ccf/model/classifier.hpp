#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ccf/errors.hpp"
#include "ccf/numerics/rng.hpp"
#include "ccf/numerics/tensor.hpp"

namespace ccf {

/// Affine map y = W x + b. `bias` is empty when the layer has none.
struct DenseLayer {
  Tensor weight;  // out x in
  Tensor bias;    // out, or empty

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
  bool has_bias() const { return !bias.empty(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// MLP classifier f(x) = W g(x), where g is a stack of affine+ReLU layers
/// (possibly empty, in which case g is the identity) and W is the linear head.
///
/// The head has no bias unless requested, so that the entries of an
/// attribution vector g(x) * W[i] sum to logit i exactly.
class Classifier {
 public:
  Classifier() = default;

  Classifier(std::size_t input_dim, std::vector<DenseLayer> hidden, DenseLayer head)
      : input_dim_(input_dim), hidden_(std::move(hidden)), head_(std::move(head)) {
    validate();
  }

  /// PyTorch-style init: every weight and bias ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static Classifier mlp(std::size_t input_dim, const std::vector<std::size_t>& widths,
                        std::size_t classes, RngStream& rng, bool head_bias = false) {
    if (input_dim == 0 || classes == 0) throw InvalidParameter("mlp: zero input or class count");
    auto make = [&rng](std::size_t in, std::size_t out, bool bias) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      DenseLayer layer{Tensor({out, in}), bias ? Tensor({out}) : Tensor()};
      for (double& v : layer.weight.data()) v = rng.uniform(-bound, bound);
      for (double& v : layer.bias.data()) v = rng.uniform(-bound, bound);
      return layer;
    };
    std::vector<DenseLayer> hidden;
    std::size_t width = input_dim;
    for (std::size_t w : widths) {
      if (w == 0) throw InvalidParameter("mlp: zero-width hidden layer");
      hidden.push_back(make(width, w, true));
      width = w;
    }
    DenseLayer head = make(width, classes, head_bias);
    return Classifier(input_dim, std::move(hidden), std::move(head));
  }

  /// Linear classifier with no hidden layers: logits = W x.
  static Classifier linear(Tensor head_weight) {
    const std::size_t in = head_weight.cols();
    return Classifier(in, {}, DenseLayer{std::move(head_weight), Tensor()});
  }

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t feature_dim() const { return head_.in_dim(); }
  std::size_t class_count() const { return head_.out_dim(); }

  const std::vector<DenseLayer>& hidden() const noexcept { return hidden_; }
  std::vector<DenseLayer>& hidden() noexcept { return hidden_; }
  const DenseLayer& head() const noexcept { return head_; }
  DenseLayer& head() noexcept { return head_; }

  /// g(x) for a batch (rows) or a single sample (vector).
  Tensor features(const Tensor& x) const {
    Tensor h = as_batch(x);
    for (const DenseLayer& layer : hidden_) {
      h = affine(h, layer.weight, layer.bias);
      for (double& v : h.data()) v = v > 0.0 ? v : 0.0;
    }
    return h;
  }

  /// W g + b applied to precomputed features.
  Tensor apply_head(const Tensor& feats) const { return affine(feats, head_.weight, head_.bias); }

  Tensor forward(const Tensor& x) const { return apply_head(features(x)); }

  /// Parameter tensors in a fixed order: hidden (weight, bias)..., head weight, head bias.
  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (DenseLayer& l : hidden_) {
      out.push_back(&l.weight);
      if (l.has_bias()) out.push_back(&l.bias);
    }
    out.push_back(&head_.weight);
    if (head_.has_bias()) out.push_back(&head_.bias);
    return out;
  }

  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> out;
    for (const DenseLayer& l : hidden_) {
      out.push_back(&l.weight);
      if (l.has_bias()) out.push_back(&l.bias);
    }
    out.push_back(&head_.weight);
    if (head_.has_bias()) out.push_back(&head_.bias);
    return out;
  }

  friend bool operator==(const Classifier&, const Classifier&) = default;

 private:
  Tensor as_batch(const Tensor& x) const {
    if (x.rank() == 1) {
      if (x.size() != input_dim_) throw ShapeError(width_message(x.size()));
      return x.reshaped({1, x.size()});
    }
    if (x.rank() != 2 || x.cols() != input_dim_) {
      throw ShapeError(x.rank() == 2 ? width_message(x.cols())
                                     : "input must be a vector or a batch matrix");
    }
    return x;
  }

  std::string width_message(std::size_t got) const {
    return "input width " + std::to_string(got) + ", model expects " + std::to_string(input_dim_);
  }

  void validate() const {
    std::size_t width = input_dim_;
    for (const DenseLayer& l : hidden_) {
      if (l.weight.rank() != 2 || l.in_dim() != width) throw ShapeError("hidden layer width chain broken");
      if (l.has_bias() && l.bias.size() != l.out_dim()) throw ShapeError("hidden bias length");
      width = l.out_dim();
    }
    if (head_.weight.rank() != 2 || head_.in_dim() != width) {
      throw ShapeError("head column count must equal feature dimension");
    }
    if (head_.has_bias() && head_.bias.size() != head_.out_dim()) throw ShapeError("head bias length");
  }

  std::size_t input_dim_ = 0;
  std::vector<DenseLayer> hidden_;
  DenseLayer head_;
};

/// Index of the largest entry in each row (first on ties).
inline std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k) {
      if (row[k] > row[best]) best = k;
    }
    out[r] = best;
  }
  return out;
}

}  // namespace ccf
