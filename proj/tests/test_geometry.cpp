#include <gtest/gtest.h>

#include <cmath>

#include "ort/geometry.hpp"
#include "ort/numerics/grad_check.hpp"

using namespace ort;

namespace {

// Centers and sizes on a dyadic grid so differences are exact in binary.
std::vector<BoundingBox> grid_boxes(Rng& rng, std::size_t n) {
  std::vector<BoundingBox> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({static_cast<double>(rng.below(512)) / 4.0, static_cast<double>(rng.below(512)) / 4.0,
                   1.0 + static_cast<double>(rng.below(256)) / 4.0, 1.0 + static_cast<double>(rng.below(256)) / 4.0});
  }
  return out;
}

GeometricParams<double> random_params(const GeometryConfig& cfg, Rng& rng) {
  std::vector<double> w(cfg.d_g);
  for (auto& v : w) v = rng.uniform(-0.5, 0.5);
  return {Tensor<double>({cfg.d_g, 1}, std::move(w), true)};
}

}  // namespace

TEST(Displacement, IdenticalBoxesHitTheClamp) {
  const BoundingBox b{10, 10, 1, 1};
  const auto l = displacement(b, b);
  EXPECT_DOUBLE_EQ(l[0], std::log(1e-3));
  EXPECT_DOUBLE_EQ(l[1], std::log(1e-3));
  EXPECT_EQ(l[2], 0.0);
  EXPECT_EQ(l[3], 0.0);
  EXPECT_NEAR(l[0], -6.9078, 1e-4);
}

TEST(Displacement, HandEvaluatedPair) {
  const auto l = displacement({10, 10, 4, 4}, {14, 13, 8, 8});
  EXPECT_NEAR(l[0], 0.0, 1e-12);
  EXPECT_NEAR(l[1], -0.2876820724517809, 1e-12);
  EXPECT_NEAR(l[2], 0.6931471805599453, 1e-12);
  EXPECT_NEAR(l[3], 0.6931471805599453, 1e-12);
}

TEST(Displacement, VerbatimVariantDividesByY) {
  GeometryConfig cfg;
  cfg.y_denominator = YDenominator::paper_verbatim_y;
  const auto l = displacement({10, 10, 4, 4}, {14, 13, 8, 8}, cfg);
  EXPECT_NEAR(l[1], std::log(3.0 / 10.0), 1e-12);
  const auto moved = displacement({110, 110, 4, 4}, {114, 113, 8, 8}, cfg);
  EXPECT_NE(l[1], moved[1]);
}

TEST(Displacement, TranslationLeavesLambdaBitwiseUnchanged) {
  const BoundingBox m{10, 10, 4, 4}, n{14, 13, 8, 8};
  const auto a = displacement(m, n);
  const auto b = displacement({110, 110, 4, 4}, {114, 113, 8, 8});
  EXPECT_EQ(a, b);
}

TEST(Displacement, ScaleInvarianceWithSeparatedCenters) {
  Rng rng(21);
  for (double s : {0.5, 2.0, 10.0}) {
    for (int trial = 0; trial < 200; ++trial) {
      const BoundingBox m{rng.uniform(0, 500), rng.uniform(0, 500), rng.uniform(1, 80), rng.uniform(1, 80)};
      BoundingBox n{rng.uniform(0, 500), rng.uniform(0, 500), rng.uniform(1, 80), rng.uniform(1, 80)};
      if (std::abs(m.x_center - n.x_center) < 1.0 || std::abs(m.y_center - n.y_center) < 1.0) continue;
      const auto a = displacement(m, n);
      const auto b = displacement({m.x_center * s, m.y_center * s, m.w * s, m.h * s},
                                  {n.x_center * s, n.y_center * s, n.w * s, n.h * s});
      for (int c = 0; c < 4; ++c) EXPECT_NEAR(a[c], b[c], 1e-12);
    }
  }
}

TEST(Displacement, DistanceTermsSymmetricForEqualSizes) {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const double w = rng.uniform(1, 50), h = rng.uniform(1, 50);
    const BoundingBox m{rng.uniform(0, 300), rng.uniform(0, 300), w, h};
    const BoundingBox n{rng.uniform(0, 300), rng.uniform(0, 300), w, h};
    const auto a = displacement(m, n), b = displacement(n, m);
    EXPECT_EQ(a[0], b[0]);
    EXPECT_EQ(a[1], b[1]);
  }
  const auto a = displacement({0, 0, 2, 2}, {5, 5, 4, 4});
  const auto b = displacement({5, 5, 4, 4}, {0, 0, 2, 2});
  EXPECT_NE(a, b);
}

TEST(SinusoidalEmbed, ZeroInputAlternatesZeroAndOne) {
  const auto e = sinusoidal_embed({0, 0, 0, 0});
  ASSERT_EQ(e.size(), 64u);
  for (std::size_t i = 0; i < e.size(); ++i) EXPECT_EQ(e[i], i % 2 == 0 ? 0.0 : 1.0);
}

TEST(SinusoidalEmbed, FrequencyLayoutForSmallWidth) {
  GeometryConfig cfg;
  cfg.d_g = 16;
  const auto e = sinusoidal_embed({1, 0, 0, 0}, cfg);
  ASSERT_EQ(e.size(), 16u);
  EXPECT_DOUBLE_EQ(e[0], std::sin(1.0));
  EXPECT_DOUBLE_EQ(e[1], std::cos(1.0));
  EXPECT_NEAR(e[2], std::sin(std::pow(1000.0, -0.5)), 1e-15);
  EXPECT_NEAR(e[3], std::cos(std::pow(1000.0, -0.5)), 1e-15);
  for (std::size_t i = 4; i < 16; ++i) EXPECT_EQ(e[i], i % 2 == 0 ? 0.0 : 1.0);
}

TEST(SinusoidalEmbed, EntriesBounded) {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const Displacement l{rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    for (double v : sinusoidal_embed(l)) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(GeometryConfig, RejectsWidthsNotDivisibleByEight) {
  GeometryConfig cfg;
  cfg.d_g = 12;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.d_g = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.d_g = 64;
  cfg.eps_clamp = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(GeometricWeight, ZeroAndNegativeProjectionGiveZero) {
  GeometryConfig cfg;
  const Displacement l{0.3, -1.2, 0.5, 0.1};
  GeometricParams<double> zero{Tensor<double>::zeros({cfg.d_g, 1}, true)};
  EXPECT_EQ(geometric_weight(l, zero, cfg).item(), 0.0);
  // Scale the embedding itself so the dot product is exactly -5.
  const auto e = sinusoidal_embed(l, cfg);
  double ee = 0;
  for (double v : e) ee += v * v;
  std::vector<double> w(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) w[i] = -5.0 * e[i] / ee;
  GeometricParams<double> neg{Tensor<double>({cfg.d_g, 1}, w, true)};
  EXPECT_EQ(geometric_weight(l, neg, cfg).item(), 0.0);
}

TEST(GeometricWeight, GradientMatchesFiniteDifferences) {
  GeometryConfig cfg;
  Rng rng(24);
  auto p = random_params(cfg, rng);
  // Pick a displacement with a positive pre-activation to stay off the kink.
  Displacement l{0.0, 0.0, 0.0, 0.0};
  for (int tries = 0; tries < 100; ++tries) {
    l = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    if (geometric_weight(l, p, cfg).item() > 0.1) break;
  }
  ASSERT_GT(geometric_weight(l, p, cfg).item(), 0.1);
  const auto r = grad_check([&] { return geometric_weight(l, p, cfg); }, {{"w_g", p.w_g}});
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(GeometryMatrix, EntriesMatchScalarWeights) {
  GeometryConfig cfg;
  Rng rng(25);
  const auto p = random_params(cfg, rng);
  const std::vector<BoundingBox> boxes{{20, 30, 10, 8}, {60, 32, 12, 12}, {40, 90, 30, 20}};
  const auto g = geometry_matrix(boxes, p, cfg);
  ASSERT_EQ(g.shape(), (Shape{3, 3}));
  for (std::size_t m = 0; m < 3; ++m) {
    for (std::size_t n = 0; n < 3; ++n) {
      EXPECT_NEAR(g.at(m, n), geometric_weight(displacement(boxes[m], boxes[n], cfg), p, cfg).item(), 1e-12);
    }
  }
}

TEST(GeometryMatrix, SingleBoxUsesIdenticalBoxDisplacement) {
  GeometryConfig cfg;
  Rng rng(26);
  const auto p = random_params(cfg, rng);
  const BoundingBox b{5, 5, 3, 3};
  const auto g = geometry_matrix(std::vector<BoundingBox>{b}, p, cfg);
  ASSERT_EQ(g.shape(), (Shape{1, 1}));
  EXPECT_NEAR(g.item(), geometric_weight(displacement(b, b, cfg), p, cfg).item(), 1e-15);
}

TEST(GeometryMatrix, NonnegativeFiniteAndTranslationInvariant) {
  GeometryConfig cfg;
  Rng rng(27);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_params(cfg, rng);
    const auto boxes = grid_boxes(rng, 1 + rng.below(6));
    auto moved = boxes;
    const double tx = static_cast<double>(rng.below(400)) / 2.0, ty = static_cast<double>(rng.below(400)) / 2.0;
    for (auto& b : moved) {
      b.x_center += tx;
      b.y_center += ty;
    }
    const auto g = geometry_matrix(boxes, p, cfg);
    const auto h = geometry_matrix(moved, p, cfg);
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_GE(g[i], 0.0);
      EXPECT_TRUE(std::isfinite(g[i]));
      EXPECT_EQ(g[i], h[i]);
    }
  }
}

TEST(GeometryMatrix, ScaleInvariantWithinTolerance) {
  GeometryConfig cfg;
  Rng rng(28);
  const auto p = random_params(cfg, rng);
  const std::vector<BoundingBox> boxes{{20, 30, 10, 8}, {60, 32, 12, 12}, {40, 90, 30, 20}, {75, 10, 5, 9}};
  const auto g = geometry_matrix(boxes, p, cfg);
  for (double s : {0.5, 2.0, 10.0}) {
    auto scaled = boxes;
    for (auto& b : scaled) b = {b.x_center * s, b.y_center * s, b.w * s, b.h * s};
    const auto h = geometry_matrix(scaled, p, cfg);
    // Diagonal entries use the clamp and are excluded.
    for (std::size_t m = 0; m < 4; ++m) {
      for (std::size_t n = 0; n < 4; ++n) {
        if (m != n) {
          EXPECT_NEAR(g.at(m, n), h.at(m, n), 1e-12);
        }
      }
    }
  }
}

TEST(InitGeometricParams, GatesStartPositive) {
  GeometryConfig cfg;
  Rng rng(29);
  const auto p = init_geometric_params<double>(cfg, rng);
  const auto boxes = grid_boxes(rng, 6);
  const auto g = geometry_matrix(boxes, p, cfg);
  for (double v : g.data()) EXPECT_GT(v, 0.0);
}

TEST(OrderBoxes, SortsByEachKeyStably) {
  const std::vector<BoundingBox> areas{{0, 0, 2, 2}, {0, 0, 4, 4}, {0, 0, 1, 1}};
  EXPECT_EQ(order_boxes(areas, BoxOrder::by_area_desc), (std::vector<std::size_t>{1, 0, 2}));
  const std::vector<BoundingBox> sorted{{1, 1, 3, 3}, {2, 2, 2, 2}, {3, 3, 1, 1}};
  EXPECT_EQ(order_boxes(sorted, BoxOrder::left_to_right), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(order_boxes(sorted, BoxOrder::top_to_bottom), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(order_boxes(sorted, BoxOrder::by_area_desc), (std::vector<std::size_t>{0, 1, 2}));
  const std::vector<BoundingBox> equal(4, BoundingBox{5, 5, 2, 2});
  for (auto mode : {BoxOrder::none, BoxOrder::by_area_desc, BoxOrder::left_to_right, BoxOrder::top_to_bottom}) {
    EXPECT_EQ(order_boxes(equal, mode), (std::vector<std::size_t>{0, 1, 2, 3}));
  }
  const std::vector<BoundingBox> mixed{{9, 1, 1, 1}, {3, 7, 1, 1}, {5, 4, 1, 1}};
  EXPECT_EQ(order_boxes(mixed, BoxOrder::left_to_right), (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_EQ(order_boxes(mixed, BoxOrder::top_to_bottom), (std::vector<std::size_t>{0, 2, 1}));
}

TEST(OrderBoxes, NamesRoundTrip) {
  for (auto mode : {BoxOrder::none, BoxOrder::by_area_desc, BoxOrder::left_to_right, BoxOrder::top_to_bottom}) {
    EXPECT_EQ(box_order_from_string(to_string(mode)), mode);
  }
  EXPECT_THROW(box_order_from_string("diagonal"), ConfigError);
}
