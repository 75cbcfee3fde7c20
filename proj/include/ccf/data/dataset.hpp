#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ccf/errors.hpp"
#include "ccf/numerics/tensor.hpp"

namespace ccf {

/// Labelled samples: one input row per label.
struct Dataset {
  Tensor inputs;  // n x d
  std::vector<std::size_t> labels;
  std::size_t class_count = 0;
  std::string spec_hash;  // provenance of generated data; empty when loaded from disk
  std::string split;      // "train", "test", or free-form

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  std::size_t dim() const { return inputs.rank() == 2 ? inputs.cols() : 0; }

  void validate() const {
    if (!labels.empty() && (inputs.rank() != 2 || inputs.rows() != labels.size())) {
      throw ShapeError("dataset has " + std::to_string(labels.size()) + " labels but inputs shape " +
                       Tensor::shape_string(inputs.shape()));
    }
    for (std::size_t y : labels) {
      if (y >= class_count) throw InvalidParameter("label " + std::to_string(y) + " out of range");
    }
    if (!inputs.all_finite()) throw InvalidParameter("dataset inputs must be finite");
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(class_count, 0);
    for (std::size_t y : labels) ++counts[y];
    return counts;
  }

  /// Sample indices grouped by class.
  std::vector<std::vector<std::size_t>> indices_by_class() const {
    std::vector<std::vector<std::size_t>> out(class_count);
    for (std::size_t i = 0; i < labels.size(); ++i) out[labels[i]].push_back(i);
    return out;
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset d;
    d.inputs = inputs.gather_rows(idx);
    d.labels.reserve(idx.size());
    for (std::size_t i : idx) d.labels.push_back(labels[i]);
    d.class_count = class_count;
    d.spec_hash = spec_hash;
    d.split = split;
    return d;
  }
};

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kHex[h & 0xf];
    h >>= 4;
  }
  return s;
}

}  // namespace ccf
