#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

namespace sfm::gmm {
namespace {

// e^0 : e^-8 normalized, and log N(0; 0, 1), in 50-digit arithmetic.
constexpr double kNearShare = 0.999664649869533522;
constexpr double kFarShare = 0.000335350130466478;
constexpr double kStdNormalLogMode = -0.918938533204672742;

TEST(Responsibilities, SingleComponent) {
  const auto p = make_params({1.0}, {0.3, -1.0}, {2.0, 0.5});
  const auto post = responsibilities(Vector{5.0, 5.0}, p);
  ASSERT_EQ(post.a.size(), 1u);
  EXPECT_DOUBLE_EQ(post.a[0], 1.0);
}

TEST(Responsibilities, SymmetricComponents) {
  const auto p = make_params({0.5, 0.5}, {-2.0, 2.0}, {1.0, 1.0});
  const auto post = responsibilities(Vector{0.0}, p);
  EXPECT_NEAR(post.a[0], 0.5, 1e-15);
  EXPECT_NEAR(post.a[1], 0.5, 1e-15);
}

TEST(Responsibilities, ReferenceRatio) {
  const auto p = make_params({0.5, 0.5}, {0.0, 4.0}, {1.0, 1.0});
  const auto post = responsibilities(Vector{0.0}, p);
  EXPECT_NEAR(post.a[0], kNearShare, 1e-11);
  EXPECT_NEAR(post.a[1], kFarShare, 1e-11);
}

TEST(Responsibilities, NoUnderflowFarFromEveryMean) {
  const auto p = make_params({0.3, 0.7}, {0.0, 0.0, 1.0, 1.0}, {1.0, 1.0, 1.0, 1.0});
  const auto post = responsibilities(Vector{70.0, 70.0}, p);
  EXPECT_NEAR(post.a[0] + post.a[1], 1.0, 1e-15);
  for (double v : post.a) {
    EXPECT_TRUE(std::isfinite(std::log(v)));
    EXPECT_GE(v, 0.0);
  }
}

TEST(SampleZ, PointMass) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_z(GmmPosterior{{1.0, 0.0, 0.0, 0.0}}, rng).active, 0u);
}

TEST(SampleZ, FairCoin) {
  Rng rng(2);
  int first = 0;
  for (int i = 0; i < 100000; ++i) first += sample_z(GmmPosterior{{0.5, 0.5}}, rng).active == 0 ? 1 : 0;
  EXPECT_NEAR(first / 1e5, 0.5, 0.01);
}

TEST(SampleZ, ThreeWayFrequencies) {
  Rng rng(3);
  const Vector a{0.2, 0.3, 0.5};
  Vector counts(3, 0.0);
  for (int i = 0; i < 100000; ++i) counts[sample_z(GmmPosterior{a}, rng).active] += 1.0;
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(counts[k] / 1e5, a[k], 0.01);
}

TEST(FeatureBlock, SecondComponentActive) {
  const auto b = feature_block_gmm(Vector{-1.0}, OneHotZ{2, 1}, GmmPosterior{{0.5, 0.5}});
  const Vector expected{0, 0, 0, 0, -1, 1, 1, std::log(0.5)};
  ASSERT_EQ(b.size(), expected.size());
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_DOUBLE_EQ(b[i], expected[i]);
}

TEST(FeatureBlock, InactiveComponentsAreZeroAndDimensionFixed) {
  Rng rng(5);
  for (std::size_t K : {1u, 3u, 4u}) {
    for (std::size_t d : {1u, 2u, 5u}) {
      Vector x(d);
      for (double& v : x) v = uniform01(rng) * 4 - 2;
      Vector a(K, 1.0 / static_cast<double>(K));
      const OneHotZ z{K, K - 1};
      const auto b = feature_block_gmm(x, z, GmmPosterior{a});
      ASSERT_EQ(b.size(), K * (2 * d + 2));
      for (std::size_t i = 0; i < (K - 1) * (2 * d + 2); ++i) EXPECT_EQ(b[i], 0.0);
    }
  }
}

TEST(JointLogDensity, StandardNormalAtMode) {
  const auto p = make_params({1.0}, {0.0}, {1.0});
  EXPECT_NEAR(joint_log_density_gmm(Vector{0.0}, OneHotZ{1, 0}, p), kStdNormalLogMode, 1e-15);
}

TEST(JointLogDensity, TranslationInvariant) {
  const auto p = make_params({0.4, 0.6}, {0.5, -1.0, 2.0, 1.0}, {1.5, 0.5, 0.7, 2.0});
  const auto q = make_params({0.4, 0.6}, {3.5, 2.0, 5.0, 4.0}, {1.5, 0.5, 0.7, 2.0});
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_NEAR(joint_log_density_gmm(Vector{0.2, 0.1}, OneHotZ{2, k}, p),
                joint_log_density_gmm(Vector{3.2, 3.1}, OneHotZ{2, k}, q), 1e-12);
  }
}

TEST(JointLogDensity, MarginalizesToMixtureDensity) {
  const auto p = make_params({0.3, 0.7}, {-1.0, 2.0}, {0.5, 2.0});
  const double x = 0.4;
  const double pi = std::acos(-1.0);
  const double mixture = 0.3 * std::exp(-0.5 * (x + 1) * (x + 1) / 0.5) / std::sqrt(2 * pi * 0.5) +
                         0.7 * std::exp(-0.5 * (x - 2) * (x - 2) / 2.0) / std::sqrt(2 * pi * 2.0);
  const double summed = std::exp(joint_log_density_gmm(Vector{x}, OneHotZ{2, 0}, p)) +
                        std::exp(joint_log_density_gmm(Vector{x}, OneHotZ{2, 1}, p));
  EXPECT_NEAR(summed, mixture, 1e-15);
  EXPECT_NEAR(std::exp(log_marginal_gmm(Vector{x}, p)), mixture, 1e-15);
}

TEST(MStep, DegenerateCluster) {
  const auto prev = make_params({0.5, 0.5}, {0.0, 1.0}, {1.0, 1.0}, 1e-3);
  const Vector c{2.5};
  std::vector<WeightedSample<Vector, OneHotZ>> s(10, {&c, OneHotZ{2, 0}, 1.0});
  const auto r = m_step_gmm(s, prev);
  ASSERT_TRUE(r.applied);
  EXPECT_DOUBLE_EQ(r.params.means[0], 2.5);
  EXPECT_DOUBLE_EQ(r.params.variances[0], 1e-3);
  EXPECT_DOUBLE_EQ(r.params.weights[0], 1.0);
  // No mass: the second component keeps its previous mean and variance.
  EXPECT_DOUBLE_EQ(r.params.means[1], 1.0);
  EXPECT_DOUBLE_EQ(r.params.variances[1], 1.0);
}

TEST(MStep, EvenSplit) {
  const auto prev = make_params({0.5, 0.5}, {0.0, 0.0}, {1.0, 1.0});
  const Vector lo{-1.0}, hi{1.0};
  std::vector<WeightedSample<Vector, OneHotZ>> s{{&lo, OneHotZ{2, 0}, 1.0}, {&hi, OneHotZ{2, 1}, 1.0}};
  const auto r = m_step_gmm(s, prev);
  EXPECT_DOUBLE_EQ(r.params.weights[0], 0.5);
  EXPECT_DOUBLE_EQ(r.params.weights[1], 0.5);
  EXPECT_DOUBLE_EQ(r.params.means[0], -1.0);
  EXPECT_DOUBLE_EQ(r.params.means[1], 1.0);
}

TEST(MStep, NoSamplesIsNoOp) {
  const auto prev = make_params({0.5, 0.5}, {0.0, 1.0}, {1.0, 1.0});
  const auto r = m_step_gmm({}, prev);
  EXPECT_FALSE(r.applied);
  EXPECT_EQ(r.params, prev);
}

TEST(MStep, RecoversMeansFromExactPosteriorDraws) {
  const auto truth = make_params({0.4, 0.6}, {-2.0, 2.0}, {1.0, 1.0});
  Rng rng(21);
  std::normal_distribution<double> n;
  std::vector<Vector> xs;
  for (int i = 0; i < 200; ++i) {
    const std::size_t k = uniform01(rng) < 0.4 ? 0 : 1;
    xs.push_back({truth.means[k] + n(rng)});
  }
  std::vector<WeightedSample<Vector, OneHotZ>> s;
  for (const auto& x : xs) s.push_back({&x, sample_z(responsibilities(x, truth), rng), 1.0});
  const auto r = m_step_gmm(s, make_params({0.5, 0.5}, {0.0, 0.1}, {1.0, 1.0}));
  EXPECT_NEAR(r.params.means[0], -2.0, 0.2);
  EXPECT_NEAR(r.params.means[1], 2.0, 0.2);
}

TEST(MonteCarloEm, LikelihoodDoesNotDecrease) {
  const auto truth = make_params({0.5, 0.5}, {-1.5, 1.5}, {0.6, 0.6});
  const GmmBackend backend(GmmConfig{2, 1e-4, 1e-12});
  const int iters = 8;
  std::vector<double> mean_ll(iters + 1, 0.0);
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    std::normal_distribution<double> n;
    std::vector<Vector> xs;
    for (int i = 0; i < 150; ++i) xs.push_back({truth.means[i % 2] + std::sqrt(0.6) * n(rng)});
    std::vector<const Vector*> ptrs;
    for (const auto& x : xs) ptrs.push_back(&x);
    auto p = backend.initialize(ptrs, rng);
    auto ll = [&] {
      double s = 0.0;
      for (const auto& x : xs) s += backend.log_marginal(x, p);
      return s / static_cast<double>(xs.size());
    };
    mean_ll[0] += ll() / 10.0;
    for (int t = 1; t <= iters; ++t) {
      std::vector<WeightedSample<Vector, OneHotZ>> s;
      for (const auto& x : xs) {
        const auto post = backend.approx_posterior(x, p);
        for (int j = 0; j < 5; ++j) s.push_back({&x, backend.sample_hidden(x, p, post, rng), 0.2});
      }
      p = backend.update_parameters(s, p);
      mean_ll[t] += ll() / 10.0;
    }
  }
  for (int t = 1; t <= iters; ++t) EXPECT_GE(mean_ll[t], mean_ll[t - 1] - 0.05) << t;
  EXPECT_GT(mean_ll[iters], mean_ll[0]);
}

TEST(Initialize, DistinctPointsAndUniformWeights) {
  Rng rng(8);
  std::vector<Vector> xs;
  for (int i = 0; i < 20; ++i) xs.push_back({static_cast<double>(i), 1.0});
  std::vector<const Vector*> ptrs;
  for (const auto& x : xs) ptrs.push_back(&x);
  const GmmBackend backend(GmmConfig{4, 1e-4, 1e-12});
  const auto p = backend.initialize(ptrs, rng);
  EXPECT_EQ(p.K, 4u);
  EXPECT_EQ(p.d, 2u);
  for (double w : p.weights) EXPECT_DOUBLE_EQ(w, 0.25);
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = a + 1; b < 4; ++b) EXPECT_NE(p.means[a * 2], p.means[b * 2]);
  }
}

TEST(Initialize, RejectsRaggedInput) {
  Rng rng(8);
  const Vector a{1.0, 2.0}, b{1.0};
  std::vector<const Vector*> ptrs{&a, &b};
  EXPECT_THROW(GmmBackend(GmmConfig{1, 1e-4, 1e-12}).initialize(ptrs, rng), InvalidArgument);
}

TEST(Backend, ValidatesDimension) {
  const GmmBackend backend;
  const auto p = make_params({1.0}, {0.0, 0.0}, {1.0, 1.0});
  EXPECT_THROW(backend.validate(Vector{1.0}, p), InvalidArgument);
  EXPECT_NO_THROW(backend.validate(Vector{1.0, 2.0}, p));
}

}  // namespace
}  // namespace sfm::gmm
