#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

namespace sfm {
namespace {

using gmm::GmmBackend;
using gmm::GmmConfig;
using gmm::OneHotZ;
using hmm::HmmBackend;
using hmm::HmmConfig;

StochasticFeature feature_with_margin_zero(std::size_t dim) {
  StochasticFeature f;
  f.phi.assign(dim, 0.0);
  f.phi[0] = 1.0;
  f.phi_bar = f.phi;
  return f;
}

TEST(TiltExponent, Examples) {
  const auto f = feature_with_margin_zero(3);
  const Vector u{0.0, 1.0, 1.0};
  TiltConfig cfg;
  cfg.C = 0.0;
  EXPECT_EQ(tilt_exponent(f, Label::positive, u, cfg), 0.0);
  cfg.C = 1.0;
  EXPECT_DOUBLE_EQ(tilt_exponent(f, Label::positive, u, cfg), -0.5);
  cfg.C = 2.0;
  // 2 * (1/2) * 2 Phi(0) Phi(0)
  EXPECT_DOUBLE_EQ(tilt_exponent(f, Label::unlabeled, u, cfg), -0.5);
}

TEST(TiltExponent, PaperScale) {
  TiltConfig cfg{1.0, 4, 2, 2, WeightScale::paper, 1, 10};
  EXPECT_DOUBLE_EQ(tilt_weight(Label::positive, cfg), 8.0);
  EXPECT_DOUBLE_EQ(tilt_weight(Label::unlabeled, cfg), 4.0);
  cfg.weight_scale = WeightScale::per_example;
  EXPECT_DOUBLE_EQ(tilt_weight(Label::negative, cfg), 1.0);
  EXPECT_DOUBLE_EQ(tilt_weight(Label::unlabeled, cfg), 0.5);
}

TEST(TiltConfig, Validation) {
  TiltConfig cfg;
  cfg.C = -1.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = TiltConfig{};
  cfg.n_draws = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = TiltConfig{};
  cfg.max_attempts = cfg.n_draws - 1;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

double gauss(double x, double mu, double var) {
  return std::exp(-0.5 * (x - mu) * (x - mu) / var) / std::sqrt(2.0 * std::acos(-1.0) * var);
}

/// P(z = k | x) for a one-dimensional mixture, by hand.
Vector responsibilities(double x, const Vector& w, const Vector& mu, const Vector& var) {
  Vector r(w.size());
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) s += (r[k] = w[k] * gauss(x, mu[k], var[k]));
  for (double& v : r) v /= s;
  return r;
}

struct GmmFixture {
  GmmBackend backend{GmmConfig{2, 1e-4, 1e-12}};
  ModelPair<GmmBackend> models{gmm::make_params({0.4, 0.6}, {-1.0, 1.5}, {1.0, 0.5}),
                               gmm::make_params({0.5, 0.5}, {0.5, -2.0}, {0.8, 1.2})};
  Vector x{0.3};
  Vector rp = responsibilities(0.3, {0.4, 0.6}, {-1.0, 1.5}, {1.0, 0.5});
  Vector rm = responsibilities(0.3, {0.5, 0.5}, {0.5, -2.0}, {0.8, 1.2});
};

/// Normalized tilted mass over the four (z+, z-) cells, cell = 2 i + j.
Vector tilted_target(const GmmFixture& f, Label y, const Vector& u, const TiltConfig& cfg) {
  const auto post = posterior_pair(f.backend, f.x, f.models);
  Vector mass(4);
  double z = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      const auto feat = assemble(f.backend.feature_block(f.x, OneHotZ{2, i}, post.plus),
                                 f.backend.feature_block(f.x, OneHotZ{2, j}, post.minus), {});
      z += (mass[2 * i + j] = f.rp[i] * f.rm[j] * std::exp(tilt_exponent(feat, y, u, cfg)));
    }
  }
  for (double& v : mass) v /= z;
  return mass;
}

Vector frequencies(const GmmFixture& f, Label y, const Vector& u, TiltConfig cfg, std::size_t n, Rng& rng,
                   double* rate = nullptr) {
  Vector counts(4, 0.0);
  cfg.n_draws = n;
  cfg.max_attempts = 1000 * n;
  const auto set = rejection_sample(f.backend, f.x, y, f.models, u, cfg, rng);
  EXPECT_FALSE(set.degraded);
  for (const auto& d : set.draws) counts[2 * d.plus.active + d.minus.active] += 1.0 / static_cast<double>(n);
  if (rate) *rate = set.acceptance_rate;
  return counts;
}

double total_variation(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

TEST(RejectionSampler, ZeroCAcceptsEverythingFromTheProposal) {
  GmmFixture f;
  Rng rng(61);
  TiltConfig cfg;
  cfg.C = 0.0;
  double rate = 0.0;
  const Vector u(2 * 4 * 2 + 1, 0.3);
  const auto freq = frequencies(f, Label::positive, u, cfg, 100000, rng, &rate);
  EXPECT_EQ(rate, 1.0);
  Vector product(4);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) product[2 * i + j] = f.rp[i] * f.rm[j];
  EXPECT_LT(total_variation(freq, product), 0.02);
}

TEST(RejectionSampler, MatchesEnumeratedTiltedPosterior) {
  GmmFixture f;
  Rng rng(62);
  const Vector u = canned_weights(2 * 4 * 2 + 1, 5);
  for (Label y : {Label::positive, Label::negative, Label::unlabeled}) {
    TiltConfig cfg{3.0, 1, 1, 1, WeightScale::per_example, 1, 10};
    const auto target = tilted_target(f, y, u, cfg);
    EXPECT_LT(total_variation(frequencies(f, y, u, cfg, 100000, rng), target), 0.02);
  }
}

TEST(RejectionSampler, LibraryEnumerationAgreesWithHandOracle) {
  GmmFixture f;
  const Vector u = canned_weights(2 * 4 * 2 + 1, 5);
  TiltConfig cfg{3.0, 1, 1, 0, WeightScale::per_example, 1, 10};
  const auto lib = enumerate_tilted(f.backend, f.x, Label::positive, f.models, u, cfg);
  const auto hand = tilted_target(f, Label::positive, u, cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_NEAR(lib.mass[lib.cell(OneHotZ{2, i}, OneHotZ{2, j})], hand[2 * i + j], 1e-12);
    }
  }
}

TEST(RejectionSampler, AcceptanceRateEstimatesNormalizerGmm) {
  const GmmBackend backend(GmmConfig{4, 1e-4, 1e-12});
  const ModelPair<GmmBackend> models{
      gmm::make_params({0.1, 0.2, 0.3, 0.4}, {0, 0, 1, 1, -1, 0, 2, -1}, {1, 1, 0.5, 2, 1, 0.7, 0.3, 1}),
      gmm::make_params({0.25, 0.25, 0.25, 0.25}, {1, 0, 0, 1, -1, -1, 0.5, 0.5}, {1, 1, 1, 1, 2, 2, 0.5, 0.5})};
  const Vector u = canned_weights(2 * backend.block_dim(models.plus) + 1, 9);
  const TiltConfig cfg{2.0, 1, 1, 0, WeightScale::per_example, 1, 10};
  const auto cmp = compare_sampler(backend, Vector{0.4, -0.2}, Label::negative, models, u, cfg, 100000, 63);
  EXPECT_LT(cmp.tv, 0.02);
  EXPECT_LT(std::abs(cmp.acceptance_rate - cmp.Z), 3.0 * cmp.standard_error);
}

TEST(RejectionSampler, MatchesEnumerationHmm) {
  const HmmBackend backend(HmmConfig{2, 3, 1e-8, 2});
  const auto models = canned_hmm_pair();
  const Vector u = canned_weights(2 * backend.block_dim(models.plus) + 1, 11);
  for (Label y : {Label::positive, Label::unlabeled}) {
    const TiltConfig cfg{2.0, 1, 1, 1, WeightScale::per_example, 1, 10};
    const auto cmp = compare_sampler(backend, hmm::Sequence{1, 0, 2, 2}, y, models, u, cfg, 100000, 64);
    EXPECT_LT(cmp.tv, 0.02);
    EXPECT_LT(std::abs(cmp.acceptance_rate - cmp.Z), 3.0 * cmp.standard_error);
  }
}

TEST(RejectionSampler, ExhaustedAttemptsFallBack) {
  GmmFixture f;
  const Vector u(2 * 4 * 2 + 1, 0.0);
  TiltConfig cfg{1e6, 1, 1, 0, WeightScale::per_example, 5, 50};
  Rng rng(65);
  const auto set = rejection_sample(f.backend, f.x, Label::positive, f.models, u, cfg, rng);
  EXPECT_TRUE(set.degraded);
  EXPECT_EQ(set.accepted, 0u);
  EXPECT_EQ(set.attempts, 50u);
  EXPECT_EQ(set.acceptance_rate, 0.0);
  ASSERT_EQ(set.draws.size(), 5u);
  for (std::size_t j = 0; j + 1 < set.draws.size(); ++j) EXPECT_GE(set.draws[j].exponent, set.draws[j + 1].exponent);
}

TEST(RejectionSampler, RaisingCNeverRaisesAcceptance) {
  GmmFixture f;
  Rng rng(66);
  const Vector u = canned_weights(2 * 4 * 2 + 1, 13);
  for (const auto& d : draw_untilted(f.backend, f.x, f.models, 200, rng)) {
    double prev = 1.0;
    for (double C : {0.0, 0.1, 0.5, 1.0, 4.0, 20.0}) {
      for (Label y : {Label::positive, Label::unlabeled}) {
        TiltConfig cfg;
        cfg.C = C;
        const double p = std::exp(tilt_exponent(d.feature, y, u, cfg));
        EXPECT_LE(p, 1.0);
        if (y == Label::positive) {
          EXPECT_LE(p, prev);
          prev = p;
        }
      }
    }
  }
}

TEST(RejectionSampler, SeededStreamsReproduce) {
  GmmFixture f;
  const Vector u = canned_weights(2 * 4 * 2 + 1, 3);
  TiltConfig cfg;
  cfg.C = 2.0;
  Rng a(67), b(67);
  const auto s1 = rejection_sample(f.backend, f.x, Label::negative, f.models, u, cfg, a, 4);
  const auto s2 = rejection_sample(f.backend, f.x, Label::negative, f.models, u, cfg, b, 4);
  ASSERT_EQ(s1.draws.size(), s2.draws.size());
  EXPECT_EQ(s1.attempts, s2.attempts);
  for (std::size_t j = 0; j < s1.draws.size(); ++j) {
    EXPECT_EQ(s1.draws[j].feature.phi, s2.draws[j].feature.phi);
    EXPECT_EQ(s1.draws[j].feature.source.example, 4u);
    EXPECT_EQ(s1.draws[j].feature.source.draw, j);
  }
}

}  // namespace
}  // namespace sfm
