#pragma once

#include <cstddef>
#include <vector>

#include "ccf/model/classifier.hpp"
#include "ccf/model/loss.hpp"
#include "ccf/numerics/tensor.hpp"

namespace ccf {

/// Gradients of the batch-mean loss.
struct GradientBundle {
  std::vector<Tensor> parameters;  // same order and shapes as Classifier::parameters()
  Tensor input;                    // same shape as the input batch
  double loss = 0.0;               // batch mean
  std::vector<double> sample_losses;
  Tensor logits;
};

enum class GradientScope { all, input_only, parameters_only };

/// Exact reverse-mode gradients of mean_b loss(f(x_b), target_b).
inline GradientBundle backward(const Classifier& model, const Tensor& x, const Targets& targets,
                               const LossSpec& spec, GradientScope scope = GradientScope::all) {
  const bool vector_input = x.rank() == 1;
  const Tensor batch_x = vector_input ? x.reshaped({1, x.size()}) : x;
  if (batch_x.rank() != 2 || batch_x.cols() != model.input_dim()) {
    throw ShapeError("backward: input width does not match model");
  }
  const std::size_t B = batch_x.rows();
  const auto& hidden = model.hidden();

  // Forward, keeping pre-activations and activations.
  std::vector<Tensor> acts{batch_x};
  std::vector<Tensor> pre;
  pre.reserve(hidden.size());
  for (const DenseLayer& layer : hidden) {
    pre.push_back(affine(acts.back(), layer.weight, layer.bias));
    Tensor h = pre.back();
    for (double& v : h.data()) v = v > 0.0 ? v : 0.0;
    acts.push_back(std::move(h));
  }
  const DenseLayer& head = model.head();
  Tensor logits = affine(acts.back(), head.weight, head.bias);

  LogitLoss ll = logit_loss(logits, targets, spec);
  GradientBundle out;
  out.sample_losses = ll.losses;
  double total = 0.0;
  for (double v : ll.losses) total += v;
  out.loss = B ? total / static_cast<double>(B) : 0.0;
  out.logits = std::move(logits);

  Tensor delta = std::move(ll.grad);
  if (B) delta *= 1.0 / static_cast<double>(B);

  const bool want_params = scope != GradientScope::input_only;
  const bool want_input = scope != GradientScope::parameters_only;

  // dW = delta^T * a, db = column sums of delta.
  auto layer_grads = [&](const Tensor& d, const Tensor& a, const DenseLayer& layer) {
    const std::size_t out_dim = layer.out_dim(), in_dim = layer.in_dim();
    Tensor gw({out_dim, in_dim});
    Tensor gb = layer.has_bias() ? Tensor({out_dim}) : Tensor();
    for (std::size_t b = 0; b < B; ++b) {
      const auto dr = d.row(b);
      const auto ar = a.row(b);
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double dv = dr[o];
        if (dv == 0.0) continue;
        double* wrow = gw.data().data() + o * in_dim;
        for (std::size_t i = 0; i < in_dim; ++i) wrow[i] += dv * ar[i];
        if (layer.has_bias()) gb[o] += dv;
      }
    }
    return std::pair{std::move(gw), std::move(gb)};
  };
  // delta_prev = delta * W
  auto propagate = [&](const Tensor& d, const DenseLayer& layer) {
    const std::size_t out_dim = layer.out_dim(), in_dim = layer.in_dim();
    Tensor prev({B, in_dim});
    for (std::size_t b = 0; b < B; ++b) {
      const auto dr = d.row(b);
      auto pr = prev.row(b);
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double dv = dr[o];
        if (dv == 0.0) continue;
        const double* wrow = layer.weight.data().data() + o * in_dim;
        for (std::size_t i = 0; i < in_dim; ++i) pr[i] += dv * wrow[i];
      }
    }
    return prev;
  };

  std::vector<std::pair<Tensor, Tensor>> grads(hidden.size() + 1);
  if (want_params) grads.back() = layer_grads(delta, acts.back(), head);
  if (!hidden.empty() || want_input) delta = propagate(delta, head);
  for (std::size_t l = hidden.size(); l-- > 0;) {
    const Tensor& z = pre[l];
    for (std::size_t i = 0; i < delta.size(); ++i) {
      if (!(z[i] > 0.0)) delta[i] = 0.0;
    }
    if (want_params) grads[l] = layer_grads(delta, acts[l], hidden[l]);
    if (l > 0 || want_input) delta = propagate(delta, hidden[l]);
  }

  if (want_params) {
    for (std::size_t l = 0; l < grads.size(); ++l) {
      const DenseLayer& layer = l < hidden.size() ? hidden[l] : head;
      out.parameters.push_back(std::move(grads[l].first));
      if (layer.has_bias()) out.parameters.push_back(std::move(grads[l].second));
    }
  }
  if (want_input) out.input = vector_input ? delta.reshaped({x.size()}) : std::move(delta);
  return out;
}

/// Batch-mean loss without gradients.
inline double loss_value(const Classifier& model, const Tensor& x, const Targets& targets,
                         const LossSpec& spec) {
  const auto ll = logit_loss(model.forward(x), targets, spec);
  double total = 0.0;
  for (double v : ll.losses) total += v;
  return ll.losses.empty() ? 0.0 : total / static_cast<double>(ll.losses.size());
}

}  // namespace ccf
