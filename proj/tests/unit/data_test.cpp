#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <vector>

#include "ccf/data/planted.hpp"
#include "ccf/data/tabular.hpp"

namespace ccf {
namespace {

PlantedSpec small_spec() {
  PlantedSpec s;
  s.classes = 3;
  s.replication = 1;
  s.noise_dims = 0;
  s.rotate = false;
  s.n_train = 50;
  s.n_test = 20;
  s.seed = 4;
  return s;
}

TEST(Planted, Dimensions) {
  PlantedSpec s;
  EXPECT_EQ(s.pair_count(), 6u);
  EXPECT_EQ(s.signal_dim(), 2u * (4 + 6));
  EXPECT_EQ(s.total_dim(), 36u);
  const auto d = generate_planted(s);
  EXPECT_EQ(d.train.dim(), 36u);
  EXPECT_EQ(d.train.size(), 4000u);
  EXPECT_EQ(d.test.size(), 2000u);
}

TEST(Planted, ThreeClassZeroPattern) {
  const auto s = small_spec();
  const auto d = generate_planted(s);
  for (const Dataset* ds : {&d.train, &d.test}) {
    for (std::size_t r = 0; r < ds->size(); ++r) {
      const auto x = ds->inputs.row(r);
      const std::size_t y = ds->labels[r];
      for (std::size_t j = 0; j < 3; ++j) {
        if (j != y) {
          EXPECT_EQ(x[s.class_coordinate(0, j)], 0.0);
        }
      }
      // The pair slot excluding class y is slot y and must be zero.
      EXPECT_EQ(x[3 + y], 0.0);
      for (std::size_t j = 0; j < 3; ++j) {
        if (j != y) {
          EXPECT_NE(x[s.pair_coordinate(0, y, j)], 0.0);
        }
      }
    }
  }
}

TEST(Planted, DegenerateVarianceGivesMeanPattern) {
  auto s = small_spec();
  s.sigma = 1e-12;
  const auto d = generate_planted(s);
  const double expect[6] = {1, 0, 0, 0, 1, 1};
  const auto x = d.train.inputs.row(0);
  ASSERT_EQ(d.train.labels[0], 0u);
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(x[k], expect[k], 1e-9);
}

TEST(Planted, BalancedAndDeterministic) {
  PlantedSpec s;
  s.n_train = 30;
  s.n_test = 10;
  const auto a = generate_planted(s), b = generate_planted(s);
  for (auto c : a.train.class_counts()) EXPECT_EQ(c, 30u);
  for (auto c : a.test.class_counts()) EXPECT_EQ(c, 10u);
  for (std::size_t i = 0; i < a.train.inputs.size(); ++i) ASSERT_EQ(a.train.inputs[i], b.train.inputs[i]);
  s.seed = 1;
  EXPECT_NE(generate_planted(s).train.inputs[0], a.train.inputs[0]);
  EXPECT_NE(a.train.spec_hash, generate_planted(s).train.spec_hash);
}

TEST(Planted, RotationPreservesDistances) {
  PlantedSpec s;
  s.n_train = 50;
  s.n_test = 10;
  auto plain = s;
  plain.rotate = false;
  const auto rot = generate_planted(s), raw = generate_planted(plain);
  RngStream r(2, 0);
  for (int t = 0; t < 100; ++t) {
    const std::size_t i = r.uniform_index(rot.train.size()), j = r.uniform_index(rot.train.size());
    auto dist = [](const Dataset& d, std::size_t a, std::size_t b) {
      double s2 = 0.0;
      for (std::size_t k = 0; k < d.dim(); ++k) s2 += std::pow(d.inputs(a, k) - d.inputs(b, k), 2);
      return std::sqrt(s2);
    };
    EXPECT_NEAR(dist(rot.train, i, j), dist(raw.train, i, j), 1e-9);
  }
}

// Solves A x = b in place by Gaussian elimination with partial pivoting.
std::vector<double> solve(std::vector<double> A, std::vector<double> b, std::size_t n) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(A[r * n + c]) > std::abs(A[piv * n + c])) piv = r;
    }
    for (std::size_t k = 0; k < n; ++k) std::swap(A[c * n + k], A[piv * n + k]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = A[r * n + c] / A[c * n + c];
      for (std::size_t k = c; k < n; ++k) A[r * n + k] -= f * A[c * n + k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= A[r * n + k] * x[k];
    x[r] = s / A[r * n + r];
  }
  return x;
}

TEST(Planted, RotatedDataIsLinearlyDecodable) {
  PlantedSpec s;
  s.classes = 3;
  s.sigma = 0.5;  // mu / sigma = 2
  s.n_train = 1000;
  s.n_test = 1000;
  const auto d = generate_planted(s);
  const std::size_t D = d.train.dim() + 1, K = 3;
  // Ridge regression onto one-hot targets with an intercept column.
  std::vector<double> gram(D * D, 0.0), rhs(D * K, 0.0);
  for (std::size_t r = 0; r < d.train.size(); ++r) {
    std::vector<double> f(d.train.inputs.row(r).begin(), d.train.inputs.row(r).end());
    f.push_back(1.0);
    for (std::size_t a = 0; a < D; ++a) {
      for (std::size_t b = 0; b < D; ++b) gram[a * D + b] += f[a] * f[b];
      rhs[a * K + d.train.labels[r]] += f[a];
    }
  }
  for (std::size_t a = 0; a < D; ++a) gram[a * D + a] += 1e-3;
  std::vector<std::vector<double>> coef(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> b(D);
    for (std::size_t a = 0; a < D; ++a) b[a] = rhs[a * K + k];
    coef[k] = solve(gram, b, D);
  }
  std::size_t correct = 0;
  for (std::size_t r = 0; r < d.test.size(); ++r) {
    std::size_t best = 0;
    double best_v = -1e300;
    for (std::size_t k = 0; k < K; ++k) {
      double v = coef[k][D - 1];
      for (std::size_t a = 0; a + 1 < D; ++a) v += coef[k][a] * d.test.inputs(r, a);
      if (v > best_v) best_v = v, best = k;
    }
    correct += best == d.test.labels[r];
  }
  EXPECT_GT(correct / double(d.test.size()), 0.95);
}

TEST(Planted, Validation) {
  PlantedSpec s;
  s.classes = 2;
  EXPECT_THROW(generate_planted(s), InvalidParameter);
  s = PlantedSpec{};
  s.replication = 0;
  EXPECT_THROW(generate_planted(s), InvalidParameter);
}

TEST(Tabular, ThreeRowDelimitedFile) {
  std::istringstream is("2,3\n1.5,2,0\n-1,0.25,2\n# comment\n\n3,4,1\n");
  const Dataset d = read_tabular(is, TabularFormat::delimited_text);
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.dim(), 2u);
  EXPECT_EQ(d.class_count, 3u);
  EXPECT_EQ(d.inputs(1, 1), 0.25);
  EXPECT_EQ(d.labels[2], 1u);
}

TEST(Tabular, EmptyFileGivesEmptyDataset) {
  std::istringstream is("");
  EXPECT_TRUE(read_tabular(is, TabularFormat::delimited_text).empty());
  std::istringstream raw("");
  EXPECT_TRUE(read_tabular(raw, TabularFormat::raw_matrix).empty());
}

TEST(Tabular, ErrorsCarryLineNumbers) {
  std::istringstream bad_label("2,2\n1,2,0\n1,2,5\n");
  try {
    read_tabular(bad_label, TabularFormat::delimited_text);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  std::istringstream bad_number("2,2\n1,x,0\n");
  EXPECT_THROW(read_tabular(bad_number, TabularFormat::delimited_text), ParseError);
  std::istringstream ragged("1 2 0\n1 0\n");
  EXPECT_THROW(read_tabular(ragged, TabularFormat::raw_matrix), ParseError);
}

TEST(Tabular, RawMatrixInfersClassCount) {
  std::istringstream is("0.5 1 0\n2 3 4\n");
  const Dataset d = read_tabular(is, TabularFormat::raw_matrix);
  EXPECT_EQ(d.class_count, 5u);
  std::istringstream again("0.5 1 0\n2 3 4\n");
  EXPECT_THROW(read_tabular(again, TabularFormat::raw_matrix, 3), ParseError);
}

TEST(Tabular, RoundTrip) {
  PlantedSpec s;
  s.n_train = 20;
  s.n_test = 5;
  const auto d = generate_planted(s);
  for (auto fmt : {TabularFormat::delimited_text, TabularFormat::raw_matrix}) {
    std::stringstream ss;
    write_tabular(ss, d.train, fmt);
    const Dataset back = read_tabular(ss, fmt, d.train.class_count);
    ASSERT_EQ(back.size(), d.train.size());
    for (std::size_t i = 0; i < back.inputs.size(); ++i) {
      ASSERT_NEAR(back.inputs[i], d.train.inputs[i], 1e-12 * (1 + std::abs(d.train.inputs[i])));
    }
    EXPECT_EQ(back.labels, d.train.labels);
  }
  const auto path = std::filesystem::temp_directory_path() / "ccf_tabular_roundtrip.txt";
  save_tabular(path, d.test);
  const Dataset loaded = load_tabular(path, TabularFormat::delimited_text);
  EXPECT_EQ(loaded.labels, d.test.labels);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace ccf
