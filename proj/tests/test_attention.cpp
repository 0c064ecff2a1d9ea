#include <gtest/gtest.h>

#include <cmath>

#include "ort/model/attention.hpp"
#include "ort/numerics/grad_check.hpp"

using namespace ort;

namespace {

Tensor<double> random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0,
                             bool grad = false) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>({r, c}, std::move(v), grad);
}

Tensor<double> probe(const Tensor<double>& y, std::uint64_t seed = 77) {
  Rng rng(seed);
  std::vector<double> w(y.size());
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return sum(mul(y, Tensor<double>(y.shape(), std::move(w))));
}

double row_sum(const Tensor<double>& t, std::size_t r) {
  double s = 0;
  for (std::size_t j = 0; j < t.cols(); ++j) s += t.at(r, j);
  return s;
}

}  // namespace

TEST(AppearanceAttention, ZeroInputsGiveZeroMatrix) {
  const auto o = appearance_attention(Tensor<double>::zeros({3, 4}), Tensor<double>::zeros({3, 4}));
  for (double v : o.data()) EXPECT_EQ(v, 0.0);
}

TEST(AppearanceAttention, HandCaseAndScaling) {
  Tensor<double> q({2, 4}, {1, 0, 0, 0, 0, 1, 0, 0});
  Tensor<double> k({2, 4}, {2, 0, 0, 0, 0, 2, 0, 0});
  const auto o = appearance_attention(q, k);
  EXPECT_DOUBLE_EQ(o.at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(o.at(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(o.at(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(o.at(1, 1), 1.0);
  // Width 64 divides the raw dot product by 8.
  const auto one = Tensor<double>::filled({1, 64}, 1.0);
  EXPECT_DOUBLE_EQ(appearance_attention(one, one).item(), 64.0 / 8.0);
  EXPECT_THROW(appearance_attention(q, Tensor<double>::zeros({2, 3})), DimensionError);
}

TEST(StandardHead, SingleTokenReturnsValueRow) {
  Rng rng(1);
  const auto v = random_matrix(1, 5, rng);
  const auto out = standard_head(random_matrix(1, 3, rng), random_matrix(1, 3, rng), v);
  for (std::size_t j = 0; j < 5; ++j) EXPECT_DOUBLE_EQ(out.at(0, j), v.at(0, j));
}

TEST(StandardHead, UniformScoresAverageValues) {
  Rng rng(2);
  const auto v = random_matrix(4, 3, rng);
  const auto out = standard_head(Tensor<double>::zeros({4, 2}), Tensor<double>::zeros({4, 2}), v);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < 4; ++i) mean += v.at(i, j) / 4.0;
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.at(i, j), mean, 1e-15);
  }
}

TEST(StandardHead, MatchesExplicitTwoStepOracle) {
  Rng rng(3);
  const auto q = random_matrix(3, 4, rng), k = random_matrix(3, 4, rng), v = random_matrix(3, 4, rng);
  const auto out = standard_head(q, k, v);
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> s(3);
    double mx = -1e300;
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t c = 0; c < 4; ++c) s[j] += q.at(i, c) * k.at(j, c);
      s[j] /= 2.0;
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (auto& x : s) z += (x = std::exp(x - mx));
    for (std::size_t c = 0; c < 4; ++c) {
      double o = 0;
      for (std::size_t j = 0; j < 3; ++j) o += s[j] / z * v.at(j, c);
      EXPECT_NEAR(out.at(i, c), o, 1e-14);
    }
  }
}

TEST(CombinedAttention, HandExamples) {
  const auto w = combined_attention(Tensor<double>::zeros({1, 2}), Tensor<double>({1, 2}, {1.0, 3.0}));
  EXPECT_NEAR(w.at(0, 0), 0.25, 1e-12);
  EXPECT_NEAR(w.at(0, 1), 0.75, 1e-12);
  Rng rng(4);
  const auto a = random_matrix(1, 3, rng, -2, 2);
  const auto z = combined_attention(a, Tensor<double>({1, 3}, {1.0, 0.0, 0.0}));
  EXPECT_NEAR(z.at(0, 0), 1.0, 1e-9);
  EXPECT_EQ(z.at(0, 1), 0.0);
  EXPECT_EQ(z.at(0, 2), 0.0);
}

TEST(CombinedAttention, ConstantGateReducesToSoftmax) {
  Rng rng(5);
  for (double c : {1.0, 0.01, 3.5, 250.0}) {
    const auto a = random_matrix(5, 5, rng, -4, 4);
    const auto w = combined_attention(a, Tensor<double>::filled({5, 5}, c));
    const auto s = softmax_rows(a);
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], s[i], 1e-6);
  }
}

TEST(CombinedAttention, RowsAreStochasticIncludingPartialZeroGates) {
  Rng rng(6);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(7);
    const auto a = random_matrix(n, n, rng, -10, 10);
    std::vector<double> g(n * n);
    for (auto& x : g) x = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.0, 5.0);
    const auto w = combined_attention(a, Tensor<double>({n, n}, g));
    for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(row_sum(w, i), 1.0, 1e-6);
    for (double v : w.data()) ASSERT_GE(v, 0.0);
  }
}

TEST(CombinedAttention, AllZeroGateRowFallsBackToSoftmax) {
  Rng rng(7);
  const auto a = random_matrix(3, 3, rng, -2, 2);
  const Tensor<double> g({3, 3}, {0, 0, 0, 1, 2, 3, 0, 0, 0});
  AttentionStats stats;
  const auto w = combined_attention(a, g, &stats);
  const auto s = softmax_rows(a);
  EXPECT_EQ(stats.gate_fallback_rows, 2u);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(w.at(0, j), s.at(0, j), 1e-15);
    EXPECT_NEAR(w.at(2, j), s.at(2, j), 1e-15);
  }
  EXPECT_NEAR(row_sum(w, 1), 1.0, 1e-12);
}

TEST(CombinedAttention, InputValidation) {
  EXPECT_THROW(combined_attention(Tensor<double>::zeros({2, 2}), Tensor<double>::zeros({2, 3})), DimensionError);
  EXPECT_THROW(combined_attention(Tensor<double>::zeros({2, 2}), Tensor<double>({2, 2}, {1, -1, 1, 1})),
               NumericError);
  EXPECT_THROW(combined_attention(Tensor<double>({1, 2}, {0.0, INFINITY}), Tensor<double>::filled({1, 2}, 1.0)),
               NumericError);
}

TEST(CombinedAttention, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  auto a = random_matrix(4, 4, rng, -2, 2, true);
  auto g = random_matrix(4, 4, rng, 0.2, 3.0, true);
  const auto r = grad_check([&] { return probe(combined_attention(a, g)); }, {{"omega_a", a}, {"omega_g", g}});
  EXPECT_TRUE(r.passed) << r.worst_tensor << " " << r.max_rel_error;
}

TEST(CombinedAttention, FallbackRowGradientIsSoftmaxGradient) {
  Rng rng(9);
  auto a = random_matrix(2, 3, rng, -2, 2, true);
  Tensor<double> g({2, 3}, {0, 0, 0, 0.5, 1.0, 2.0}, true);
  // Finite differences on the gate would cross into the gated branch, so only
  // the appearance scores are checked here.
  const auto r = grad_check([&] { return probe(combined_attention(a, g)); }, {{"omega_a", a}});
  EXPECT_TRUE(r.passed) << r.max_rel_error;
  g.zero_grad();
  a.zero_grad();
  backward(probe(combined_attention(a, g)));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(g.grad()[j], 0.0);
}

TEST(CombinedAttention, FloatStaysFiniteWithLargeScoresOnZeroGates) {
  Tensor<float> a({2, 3}, {120.0f, 0.0f, -5.0f, 0.0f, 90.0f, 1.0f}, true);
  Tensor<float> g({2, 3}, {0.0f, 1e-11f, 2.0f, 1e-30f, 0.0f, 1e-3f}, true);
  const auto w = combined_attention(a, g);
  for (float v : w.data()) ASSERT_TRUE(std::isfinite(v));
  EXPECT_EQ(w.at(0, 0), 0.0f);
  EXPECT_EQ(w.at(1, 1), 0.0f);
  EXPECT_NEAR(w.at(0, 1) + w.at(0, 2), 1.0f, 1e-6f);
  EXPECT_NEAR(w.at(1, 0) + w.at(1, 2), 1.0f, 1e-6f);
  backward(sum(mul(w, Tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6}))));
  for (float v : a.grad()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(g.grad()[0], 0.0f);
  EXPECT_EQ(g.grad()[4], 0.0f);
}
