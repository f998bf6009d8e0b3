#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "sfm/errors.hpp"
#include "sfm/numerics.hpp"
#include "sfm/random.hpp"

namespace sfm {

/// Per-model feature elements for one (x, h) realization.
using FeatureBlock = Vector;

/// Which example and which draw produced a feature.
struct SampleSource {
  std::size_t example = 0;
  std::size_t draw = 0;
};

/// phi = [block(+); block(-); 1] together with its unit-norm version.
///
/// The trailing constant is the only bias in the system: the last weight
/// coordinate absorbs the class-prior log ratio and the models' normalizers.
struct StochasticFeature {
  Vector phi;
  Vector phi_bar;
  SampleSource source;
};

inline Vector normalized(std::span<const double> v) {
  const double n = norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw InvalidFeature("normalized: vector has zero or non-finite norm");
  Vector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

inline StochasticFeature assemble(std::span<const double> block_plus, std::span<const double> block_minus,
                                  SampleSource source = {}) {
  StochasticFeature f;
  f.phi.reserve(block_plus.size() + block_minus.size() + 1);
  for (double v : block_plus) {
    if (!std::isfinite(v)) throw InvalidFeature("assemble: non-finite entry in positive-model block");
    f.phi.push_back(v);
  }
  for (double v : block_minus) {
    if (!std::isfinite(v)) throw InvalidFeature("assemble: non-finite entry in negative-model block");
    f.phi.push_back(v);
  }
  f.phi.push_back(1.0);
  f.phi_bar = normalized(f.phi);
  f.source = source;
  return f;
}

enum class Label : int { negative = -1, unlabeled = 0, positive = 1 };

inline int sign_of(Label y) { return static_cast<int>(y); }

/// One (x, h) pair handed to a backend's parameter update.
template <class Input, class Hidden>
struct WeightedSample {
  const Input* x = nullptr;
  Hidden h;
  double weight = 1.0;
};

/// Outcome of a backend M-step.
template <class P>
struct MStepResult {
  P params;
  /// False when the samples carried no mass and `params` is the previous value.
  bool applied = false;
};

/// What a class-conditional generative model must provide to be coupled to
/// the Gibbs classifier.
///
/// `approx_posterior` returns everything needed both to draw h ~ P(h | x) and
/// to build the feature block; `update_parameters` is the model's own M-step
/// and keeps `previous` values where the samples carry no information.
template <class B>
concept GenerativeBackend = requires(const B& b, const typename B::Input& x, const typename B::Params& p,
                                     const typename B::Posterior& post, const typename B::Hidden& h, Rng& rng,
                                     std::span<const WeightedSample<typename B::Input, typename B::Hidden>> samples,
                                     std::span<const typename B::Input* const> inputs) {
  { b.approx_posterior(x, p) } -> std::same_as<typename B::Posterior>;
  { b.sample_hidden(x, p, post, rng) } -> std::same_as<typename B::Hidden>;
  { b.joint_log_density(x, h, p) } -> std::convertible_to<double>;
  { b.feature_block(x, h, post) } -> std::same_as<FeatureBlock>;
  { b.update_parameters(samples, p) } -> std::same_as<typename B::Params>;
  { b.block_dim(p) } -> std::convertible_to<std::size_t>;
  { b.initialize(inputs, rng) } -> std::same_as<typename B::Params>;
  { b.log_marginal(x, p) } -> std::convertible_to<double>;
  b.validate(x, p);
};

}  // namespace sfm
