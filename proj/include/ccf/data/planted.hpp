#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ccf/data/dataset.hpp"
#include "ccf/errors.hpp"
#include "ccf/numerics/rng.hpp"
#include "ccf/numerics/tensor.hpp"

namespace ccf {

/// Planted-feature classification data.
///
/// Every feature group (there are `replication` of them) holds K
/// class-specific coordinates followed by K(K-1)/2 cross-class coordinates,
/// one per unordered class pair. A sample of class i draws N(mu, sigma^2) on
/// its own class-specific coordinate and on the K-1 pair coordinates that
/// involve i; every other signal coordinate is exactly 0. `noise_dims`
/// N(0, sigma^2) coordinates follow the signal block. With `rotate`, a fixed
/// random orthogonal matrix (drawn from the seed) mixes all coordinates,
/// identically for train and test.
///
/// Pairs are listed in descending lexicographic order, so for K = 3 pair
/// slot p is the pair that excludes class p; with R = 1 the signal block of a
/// class-0 sample is then (mu, 0, 0 | 0, mu, mu) in expectation.
struct PlantedSpec {
  std::size_t classes = 4;
  std::size_t replication = 2;
  std::size_t noise_dims = 16;
  double mu = 1.0;
  double sigma = 0.35;
  bool rotate = true;
  std::size_t n_train = 1000;  // per class
  std::size_t n_test = 500;    // per class
  std::uint64_t seed = 0;

  std::size_t pair_count() const { return classes * (classes - 1) / 2; }
  std::size_t group_dim() const { return classes + pair_count(); }
  std::size_t signal_dim() const { return replication * group_dim(); }
  std::size_t total_dim() const { return signal_dim() + noise_dims; }

  void validate() const {
    if (classes < 3) throw InvalidParameter("planted data needs at least 3 classes");
    if (replication < 1) throw InvalidParameter("planted replication must be >= 1");
    if (!(mu > 0.0) || !std::isfinite(mu)) throw InvalidParameter("planted mu must be > 0");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidParameter("planted sigma must be >= 0");
  }

  std::string canonical() const {
    std::ostringstream os;
    os.precision(17);
    os << "planted:K=" << classes << ";R=" << replication << ";noise=" << noise_dims
       << ";mu=" << mu << ";sigma=" << sigma << ";rotate=" << rotate << ";train=" << n_train
       << ";test=" << n_test << ";seed=" << seed;
    return os.str();
  }

  std::string hash() const { return fnv1a_hex(canonical()); }

  /// Slot of pair {i, j} (i != j) within a group's cross-class block.
  std::size_t pair_slot(std::size_t i, std::size_t j) const {
    if (i == j || i >= classes || j >= classes) throw InvalidParameter("pair_slot: bad class pair");
    if (i > j) std::swap(i, j);
    // Lexicographic rank of (i, j), then reversed.
    const std::size_t lex = i * classes - i * (i + 1) / 2 + (j - i - 1);
    return pair_count() - 1 - lex;
  }

  std::size_t class_coordinate(std::size_t group, std::size_t cls) const {
    return group * group_dim() + cls;
  }

  std::size_t pair_coordinate(std::size_t group, std::size_t i, std::size_t j) const {
    return group * group_dim() + classes + pair_slot(i, j);
  }
};

/// d x d orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
inline Tensor random_orthogonal(std::size_t d, RngStream& rng) {
  Tensor q({d, d});
  for (double& v : q.data()) v = rng.normal();
  for (std::size_t r = 0; r < d; ++r) {
    auto row = q.row(r);
    // Two passes of modified Gram-Schmidt keep the basis orthogonal to ~1e-15.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t p = 0; p < r; ++p) {
        const auto prev = q.row(p);
        const double c = dot(row, prev);
        for (std::size_t i = 0; i < d; ++i) row[i] -= c * prev[i];
      }
    }
    const double n = norm2(row);
    if (n == 0.0) throw Error("random_orthogonal: degenerate draw");
    for (double& v : row) v /= n;
  }
  return q;
}

namespace detail {

inline Dataset planted_split(const PlantedSpec& spec, std::size_t per_class, RngStream rng,
                             const std::string& split) {
  const std::size_t K = spec.classes;
  const std::size_t d = spec.total_dim();
  Dataset ds;
  ds.inputs = Tensor({K * per_class, d});
  ds.labels.reserve(K * per_class);
  ds.class_count = K;
  ds.spec_hash = spec.hash();
  ds.split = split;
  std::size_t row = 0;
  for (std::size_t cls = 0; cls < K; ++cls) {
    for (std::size_t n = 0; n < per_class; ++n, ++row) {
      auto x = ds.inputs.row(row);
      for (std::size_t g = 0; g < spec.replication; ++g) {
        x[spec.class_coordinate(g, cls)] = rng.normal(spec.mu, spec.sigma);
        for (std::size_t other = 0; other < K; ++other) {
          if (other == cls) continue;
          x[spec.pair_coordinate(g, cls, other)] = rng.normal(spec.mu, spec.sigma);
        }
      }
      for (std::size_t k = 0; k < spec.noise_dims; ++k) {
        x[spec.signal_dim() + k] = rng.normal(0.0, spec.sigma);
      }
      ds.labels.push_back(cls);
    }
  }
  return ds;
}

inline void apply_rotation(Dataset& ds, const Tensor& q) {
  if (ds.empty()) return;
  ds.inputs = affine(ds.inputs, q, Tensor());
}

}  // namespace detail

struct PlantedData {
  Dataset train;
  Dataset test;
  Tensor rotation;  // empty unless spec.rotate
};

/// Generates the train and test splits. Deterministic in the PlantedSpec, seed included.
inline PlantedData generate_planted(const PlantedSpec& spec) {
  spec.validate();
  const RngStream root(spec.seed, 0x706c616e746564ull);
  PlantedData out{detail::planted_split(spec, spec.n_train, root.split(1), "train"),
                  detail::planted_split(spec, spec.n_test, root.split(2), "test"), Tensor()};
  if (spec.rotate) {
    RngStream rot = root.split(3);
    out.rotation = random_orthogonal(spec.total_dim(), rot);
    detail::apply_rotation(out.train, out.rotation);
    detail::apply_rotation(out.test, out.rotation);
  }
  return out;
}

}  // namespace ccf
