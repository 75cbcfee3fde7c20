#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ccf/attack/attack.hpp"
#include "ccf/data/dataset.hpp"
#include "ccf/errors.hpp"
#include "ccf/model/classifier.hpp"
#include "ccf/numerics/rng.hpp"
#include "ccf/numerics/tensor.hpp"

namespace ccf {

struct AttributionProvenance {
  std::string attack;  // "clean" or a compact attack description
  std::string dataset_id;
  std::string checkpoint_id;
};

/// Class-pair cosine similarities of attribution vectors.
///
/// For the class-mean variant `class_vectors` holds the per-class mean
/// attribution vectors (K x n) and `c` is symmetric. The instance-wise
/// variant leaves `class_vectors` empty and `c` may be asymmetric.
struct AttributionMatrix {
  Tensor c;
  Tensor class_vectors;
  std::vector<std::size_t> sample_counts;
  AttributionProvenance provenance;

  std::size_t classes() const { return c.empty() ? 0 : c.rows(); }
};

inline std::string describe(const std::optional<AttackConfig>& attack) {
  if (!attack || attack->epsilon == 0.0) return "clean";
  auto shortest = [](double v) {
    char buf[32];
    return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
  };
  return "pgd:" + to_string(attack->norm) + ":eps=" + shortest(attack->epsilon) +
         ":alpha=" + shortest(attack->step_size) + ":steps=" + std::to_string(attack->steps) +
         ":rs=" + (attack->random_start ? "1" : "0");
}

/// A_i(x) = g(x) * W[i] (elementwise), for one sample.
inline Tensor attribution_vector(const Classifier& model, const Tensor& x, std::size_t cls) {
  if (cls >= model.class_count()) throw InvalidParameter("attribution_vector: class out of range");
  const Tensor g = model.features(x.rank() == 1 ? x : x.reshaped({x.size()}));
  if (g.rows() != 1) throw ShapeError("attribution_vector expects a single sample");
  const std::size_t n = model.feature_dim();
  Tensor a({n});
  const auto w = model.head().weight.row(cls);
  for (std::size_t j = 0; j < n; ++j) a[j] = g[j] * w[j];
  return a;
}

/// Row b is A_{classes[b]}(x_b) given precomputed features (batch x n).
inline Tensor attribution_rows(const Tensor& feats, const Tensor& head_weight,
                               std::span<const std::size_t> classes) {
  const std::size_t n = head_weight.cols();
  if (feats.cols() != n || feats.rows() != classes.size()) throw ShapeError("attribution_rows shape");
  Tensor out({classes.size(), n});
  for (std::size_t b = 0; b < classes.size(); ++b) {
    const auto g = feats.row(b);
    const auto w = head_weight.row(classes[b]);
    auto o = out.row(b);
    for (std::size_t j = 0; j < n; ++j) o[j] = g[j] * w[j];
  }
  return out;
}

namespace detail {

inline void require_all_classes(std::span<const std::size_t> labels, std::size_t K) {
  std::vector<std::size_t> counts(K, 0);
  for (std::size_t y : labels) {
    if (y >= K) throw InvalidParameter("label out of range for attribution");
    ++counts[y];
  }
  std::vector<std::size_t> missing;
  for (std::size_t k = 0; k < K; ++k) {
    if (counts[k] == 0) missing.push_back(k);
  }
  if (!missing.empty()) throw MissingClassError(std::move(missing));
}

/// Inputs the attribution is measured on: PGD examples, or the clean inputs
/// when there is no attack or epsilon is 0.
inline Tensor attributed_inputs(const Classifier& model, const Dataset& data,
                                const std::optional<AttackConfig>& attack, RngStream& rng) {
  if (!attack || attack->epsilon == 0.0) return data.inputs;
  return pgd(model, data.inputs, data.labels, *attack, rng);
}

}  // namespace detail

/// Cosine matrix of the given class vectors (rows).
inline Tensor cosine_matrix(const Tensor& class_vectors) {
  const std::size_t K = class_vectors.rows();
  Tensor c({K, K});
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = 0; j < K; ++j) {
      c(i, j) = cosine_similarity(class_vectors.row(i), class_vectors.row(j));
    }
  }
  return c;
}

/// Class-mean attribution matrix from inputs that have already been
/// perturbed (or not). Sums are compensated (Neumaier) so the result does
/// not depend on sample order beyond the last ulp.
inline AttributionMatrix class_attribution_matrix_at(const Classifier& model, const Tensor& inputs,
                                                     std::span<const std::size_t> labels) {
  const std::size_t K = model.class_count();
  detail::require_all_classes(labels, K);
  const Tensor feats = model.features(inputs);
  const Tensor rows = attribution_rows(feats, model.head().weight, labels);
  const std::size_t n = model.feature_dim();

  Tensor sums({K, n}), comp({K, n});
  std::vector<std::size_t> counts(K, 0);
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const std::size_t y = labels[b];
    ++counts[y];
    const auto a = rows.row(b);
    for (std::size_t j = 0; j < n; ++j) {
      double& s = sums(y, j);
      const double t = s + a[j];
      comp(y, j) += std::fabs(s) >= std::fabs(a[j]) ? (s - t) + a[j] : (a[j] - t) + s;
      s = t;
    }
  }
  Tensor means({K, n});
  for (std::size_t y = 0; y < K; ++y) {
    for (std::size_t j = 0; j < n; ++j) {
      means(y, j) = (sums(y, j) + comp(y, j)) / static_cast<double>(counts[y]);
    }
  }
  AttributionMatrix out;
  out.c = cosine_matrix(means);
  out.class_vectors = std::move(means);
  out.sample_counts = std::move(counts);
  return out;
}

/// Feature attribution correlation matrix: per class y, the mean over test
/// samples of A_y(x + delta(x)) with delta from untargeted PGD on label y,
/// then pairwise cosine similarity of the class means.
inline AttributionMatrix class_attribution_matrix(const Classifier& model, const Dataset& data,
                                                  const std::optional<AttackConfig>& attack,
                                                  RngStream& rng) {
  if (data.class_count != model.class_count()) {
    throw ShapeError("dataset has " + std::to_string(data.class_count) + " classes, model has " +
                     std::to_string(model.class_count()));
  }
  detail::require_all_classes(data.labels, model.class_count());
  AttributionMatrix m =
      class_attribution_matrix_at(model, detail::attributed_inputs(model, data, attack, rng), data.labels);
  m.provenance.attack = describe(attack);
  m.provenance.dataset_id = data.spec_hash.empty() ? data.split : data.spec_hash + ":" + data.split;
  return m;
}

/// Class Attribution Similarity: sum over ordered pairs i != j of max(C[i,j], 0).
inline double cas(const Tensor& c) {
  if (c.rank() != 2 || c.rows() != c.cols()) throw ShapeError("cas expects a square matrix");
  double s = 0.0;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    for (std::size_t j = 0; j < c.cols(); ++j) {
      if (i != j) s += std::max(c(i, j), 0.0);
    }
  }
  return s;
}

inline double cas(const AttributionMatrix& m) { return cas(m.c); }

struct InstanceCas {
  AttributionMatrix matrix;
  double icas = 0.0;
};

/// Instance-wise matrix from per-sample attribution rows (row b is
/// A_{labels[b]}(x_b)). Entry [i,j] averages, over samples x of class i, the
/// best cosine similarity against any sample of class j. The diagonal uses
/// the same rule within class i (a sample's best match is usually itself).
inline InstanceCas instance_cas_from_rows(const Tensor& rows, std::span<const std::size_t> labels,
                                          std::size_t K) {
  detail::require_all_classes(labels, K);
  const std::size_t N = labels.size();
  const std::size_t n = rows.cols();
  // Unit-normalised copies; zero rows stay zero so their cosine is 0.
  Tensor unit = rows;
  for (std::size_t b = 0; b < N; ++b) {
    auto r = unit.row(b);
    const double nr = norm2(r);
    if (nr > 0.0) {
      for (double& v : r) v /= nr;
    }
  }
  std::vector<std::vector<std::size_t>> by_class(K);
  for (std::size_t b = 0; b < N; ++b) by_class[labels[b]].push_back(b);

  InstanceCas out;
  out.matrix.c = Tensor({K, K});
  out.matrix.sample_counts.resize(K);
  for (std::size_t i = 0; i < K; ++i) {
    out.matrix.sample_counts[i] = by_class[i].size();
    for (std::size_t j = 0; j < K; ++j) {
      double total = 0.0;
      for (std::size_t a : by_class[i]) {
        const auto ua = unit.row(a);
        double best = -INFINITY;
        for (std::size_t b : by_class[j]) {
          const auto ub = unit.row(b);
          double s = 0.0;
          for (std::size_t k = 0; k < n; ++k) s += ua[k] * ub[k];
          best = std::max(best, std::clamp(s, -1.0, 1.0));
        }
        total += best;
      }
      out.matrix.c(i, j) = total / static_cast<double>(by_class[i].size());
    }
  }
  out.icas = cas(out.matrix.c);
  return out;
}

inline InstanceCas instance_cas_matrix(const Classifier& model, const Dataset& data,
                                       const std::optional<AttackConfig>& attack, RngStream& rng) {
  if (data.class_count != model.class_count()) throw ShapeError("dataset / model class count mismatch");
  detail::require_all_classes(data.labels, model.class_count());
  const Tensor inputs = detail::attributed_inputs(model, data, attack, rng);
  const Tensor rows = attribution_rows(model.features(inputs), model.head().weight, data.labels);
  InstanceCas out = instance_cas_from_rows(rows, data.labels, model.class_count());
  out.matrix.provenance.attack = describe(attack);
  out.matrix.provenance.dataset_id = data.spec_hash.empty() ? data.split : data.spec_hash + ":" + data.split;
  return out;
}

struct MatrixDiff {
  Tensor diff;
  double delta_cas = 0.0;
};

/// C_best - C_last and cas(C_best) - cas(C_last).
inline MatrixDiff matrix_diff(const Tensor& best, const Tensor& last) {
  if (best.shape() != last.shape()) {
    throw ShapeError("matrix_diff: " + Tensor::shape_string(best.shape()) + " vs " +
                     Tensor::shape_string(last.shape()));
  }
  return MatrixDiff{best - last, cas(best) - cas(last)};
}

// ---------------------------------------------------------------------------
// Text matrix format:
//   # optional comment lines
//   K <k>
//   labels <label_0> ... <label_{k-1}>
//   <k rows of k numbers, shortest round-trip decimal form>

inline void write_matrix(std::ostream& os, const Tensor& c, const std::vector<std::string>& labels,
                         const std::string& comment = {}) {
  const std::size_t K = c.rows();
  if (c.cols() != K) throw ShapeError("write_matrix expects a square matrix");
  if (labels.size() != K) throw ShapeError("write_matrix: label count");
  if (!comment.empty()) os << "# " << comment << '\n';
  os << "K " << K << "\nlabels";
  for (const auto& l : labels) os << ' ' << l;
  os << '\n';
  char buf[64];
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = 0; j < K; ++j) {
      const auto res = std::to_chars(buf, buf + sizeof buf, c(i, j));
      if (j) os << ' ';
      os.write(buf, res.ptr - buf);
    }
    os << '\n';
  }
}

inline std::vector<std::string> default_class_labels(std::size_t K) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < K; ++k) out.push_back(std::to_string(k));
  return out;
}

struct LabelledMatrix {
  Tensor c;
  std::vector<std::string> labels;
};

inline LabelledMatrix read_matrix(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() -> std::string {
    while (std::getline(is, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty() && line[0] != '#') return line;
    }
    throw ParseError("unexpected end of matrix file", line_no);
  };
  std::istringstream head(next());
  std::string tag;
  std::size_t K = 0;
  if (!(head >> tag >> K) || tag != "K") throw ParseError("expected 'K <count>'", line_no);
  std::istringstream lab(next());
  if (!(lab >> tag) || tag != "labels") throw ParseError("expected 'labels ...'", line_no);
  LabelledMatrix out{Tensor({K, K}), {}};
  std::string l;
  while (lab >> l) out.labels.push_back(l);
  if (out.labels.size() != K) throw ParseError("label count does not match K", line_no);
  for (std::size_t i = 0; i < K; ++i) {
    std::istringstream row(next());
    for (std::size_t j = 0; j < K; ++j) {
      std::string tok;
      if (!(row >> tok)) throw ParseError("matrix row too short", line_no);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw ParseError("bad number '" + tok + "'", line_no);
      }
      out.c(i, j) = v;
    }
    std::string extra;
    if (row >> extra) throw ParseError("matrix row too long", line_no);
  }
  return out;
}

}  // namespace ccf
