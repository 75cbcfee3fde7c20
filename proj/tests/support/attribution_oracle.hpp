#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ccf/attribution/attribution.hpp"

namespace ccf::testing {

/// Instance-wise matrix by the literal double loop: every sample of class i
/// against every sample of class j, one attribution_vector call each.
inline Tensor brute_force_instance_matrix(const Classifier& model, const Dataset& data) {
  const std::size_t K = model.class_count();
  Tensor c({K, K});
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = 0; j < K; ++j) {
      double total = 0.0;
      std::size_t count = 0;
      for (std::size_t a = 0; a < data.size(); ++a) {
        if (data.labels[a] != i) continue;
        const Tensor va = attribution_vector(model, Tensor::vector(std::vector<double>(
                                                        data.inputs.row(a).begin(), data.inputs.row(a).end())), i);
        double best = -2.0;
        for (std::size_t b = 0; b < data.size(); ++b) {
          if (data.labels[b] != j) continue;
          const Tensor vb = attribution_vector(
              model, Tensor::vector(std::vector<double>(data.inputs.row(b).begin(), data.inputs.row(b).end())), j);
          best = std::max(best, cosine_similarity(va, vb));
        }
        total += best;
        ++count;
      }
      c(i, j) = total / static_cast<double>(count);
    }
  }
  return c;
}

inline double brute_force_cas(const Tensor& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    for (std::size_t j = 0; j < c.cols(); ++j) {
      if (i != j) s += std::max(c(i, j), 0.0);
    }
  }
  return s;
}

/// Feature extractor output multiplied by c (last hidden layer scaled) and
/// head divided by c. ReLU is positively homogeneous, so the logits are
/// unchanged up to rounding.
inline Classifier scale_features(Classifier m, double c) {
  auto& last = m.hidden().back();
  for (double& v : last.weight.data()) v *= c;
  for (double& v : last.bias.data()) v *= c;
  for (double& v : m.head().weight.data()) v /= c;
  return m;
}

/// Head rows reordered so that new class k is old class perm[k].
inline Classifier permute_classes(Classifier m, const std::vector<std::size_t>& perm) {
  const Tensor w = m.head().weight;
  for (std::size_t k = 0; k < perm.size(); ++k) {
    auto dst = m.head().weight.row(k);
    const auto src = w.row(perm[k]);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return m;
}

inline Dataset relabel(Dataset d, const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inverse(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) inverse[perm[k]] = k;
  for (auto& y : d.labels) y = inverse[y];
  return d;
}

}  // namespace ccf::testing
