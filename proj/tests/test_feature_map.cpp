#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

namespace sfm {
namespace {

TEST(Assemble, ZeroBlocksLeaveOnlyBias) {
  const auto f = assemble(Vector{0.0, 0.0}, Vector{0.0, 0.0});
  EXPECT_EQ(f.phi, (Vector{0, 0, 0, 0, 1}));
  EXPECT_EQ(f.phi_bar, (Vector{0, 0, 0, 0, 1}));
}

TEST(Assemble, NormalizesByEuclideanLength) {
  const auto f = assemble(Vector{3.0}, Vector{0.0});
  EXPECT_EQ(f.phi, (Vector{3, 0, 1}));
  EXPECT_NEAR(norm(f.phi_bar), 1.0, 1e-15);
  EXPECT_NEAR(f.phi_bar[0], 3.0 / std::sqrt(10.0), 1e-15);
  EXPECT_NEAR(f.phi_bar[2], 1.0 / std::sqrt(10.0), 1e-15);
}

TEST(Assemble, GmmBlockSingleComponent) {
  const auto block = gmm::feature_block_gmm(Vector{2.0}, gmm::OneHotZ{1, 0}, gmm::GmmPosterior{{1.0}});
  EXPECT_EQ(block, (Vector{2.0, 4.0, 1.0, 0.0}));
}

TEST(Assemble, RejectsNonFiniteEntries) {
  EXPECT_THROW(assemble(Vector{std::nan("")}, Vector{0.0}), InvalidFeature);
  EXPECT_THROW(assemble(Vector{0.0}, Vector{-INFINITY}), InvalidFeature);
}

TEST(Assemble, KeepsSource) {
  const auto f = assemble(Vector{1.0}, Vector{1.0}, SampleSource{7, 3});
  EXPECT_EQ(f.source.example, 7u);
  EXPECT_EQ(f.source.draw, 3u);
}

TEST(Assemble, DimensionAndTrailingOneForBothBackends) {
  Rng rng(3);
  const gmm::GmmBackend gb(gmm::GmmConfig{2, 1e-4, 1e-12});
  const auto models = canned_gmm_pair();
  const Vector x{0.4};
  const auto post = posterior_pair(gb, x, models);
  for (int k = 0; k < 20; ++k) {
    const auto d = propose(gb, x, models, post, rng, {});
    EXPECT_EQ(d.feature.phi.size(), 2 * gb.block_dim(models.plus) + 1);
    EXPECT_EQ(d.feature.phi.back(), 1.0);
  }
  const hmm::HmmBackend hb(hmm::HmmConfig{2, 3, 1e-8, 2});
  const auto hm = canned_hmm_pair();
  const hmm::Sequence s{0, 1, 2, 2};
  const auto hpost = posterior_pair(hb, s, hm);
  for (int k = 0; k < 20; ++k) {
    const auto d = propose(hb, s, hm, hpost, rng, {});
    EXPECT_EQ(d.feature.phi.size(), 2 * hb.block_dim(hm.plus) + 1);
    EXPECT_EQ(d.feature.phi.back(), 1.0);
  }
}

TEST(Normalized, Idempotent) {
  const auto f = assemble(Vector{1.5, -2.0, 0.25}, Vector{4.0, 0.0, 1.0});
  const Vector again = normalized(f.phi_bar);
  for (std::size_t i = 0; i < again.size(); ++i) EXPECT_NEAR(again[i], f.phi_bar[i], 1e-16);
}

}  // namespace
}  // namespace sfm
