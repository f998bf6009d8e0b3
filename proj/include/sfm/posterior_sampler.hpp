#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sfm/errors.hpp"
#include "sfm/feature_map.hpp"
#include "sfm/numerics.hpp"
#include "sfm/pac_bayes.hpp"
#include "sfm/random.hpp"

namespace sfm {

/// How the per-example loss is weighted in the tilt exponent.
///  - paper:       m^2/m_l for labeled examples, m^2/(2 m_u) for unlabeled ones.
///  - per_example: 1 for labeled, 1/2 for unlabeled (the disagreement is halved
///                 as in the objective).
/// The paper scale drives acceptance to zero for anything but tiny m.
enum class WeightScale { paper, per_example };

struct TiltConfig {
  double C = 1.0;
  std::size_t m = 1;
  std::size_t m_l = 1;
  std::size_t m_u = 0;
  WeightScale weight_scale = WeightScale::per_example;
  std::size_t n_draws = 5;
  std::size_t max_attempts = 1000;

  void validate() const {
    if (C < 0.0 || !std::isfinite(C)) throw InvalidArgument("TiltConfig: C must be finite and nonnegative");
    if (n_draws == 0) throw InvalidArgument("TiltConfig: n_draws must be at least 1");
    if (max_attempts < n_draws) throw InvalidArgument("TiltConfig: max_attempts must be >= n_draws");
  }
};

inline double tilt_weight(Label y, const TiltConfig& cfg) {
  const double m = static_cast<double>(cfg.m);
  if (y == Label::unlabeled) {
    return cfg.weight_scale == WeightScale::paper ? m * m / (2.0 * static_cast<double>(cfg.m_u)) : 0.5;
  }
  return cfg.weight_scale == WeightScale::paper ? m * m / static_cast<double>(cfg.m_l) : 1.0;
}

/// -C E_{Q(w)}[weighted loss]: the log acceptance probability of a proposal.
/// The expected loss is Phi(y a) for labeled examples and 2 Phi(a) Phi(-a)
/// for unlabeled ones, a = u . phi_bar.
inline double tilt_exponent(const StochasticFeature& feature, Label y, std::span<const double> u,
                            const TiltConfig& cfg) {
  if (cfg.C == 0.0) return 0.0;
  const double loss =
      y == Label::unlabeled ? expected_disagreement(u, feature.phi_bar) : expected_error(u, feature.phi_bar, y);
  return -cfg.C * tilt_weight(y, cfg) * loss;
}

/// The two class-conditional models of one binary task.
template <class Backend>
struct ModelPair {
  typename Backend::Params plus;
  typename Backend::Params minus;
};

template <class Backend>
struct HiddenDraw {
  typename Backend::Hidden plus;
  typename Backend::Hidden minus;
  StochasticFeature feature;
  double exponent = 0.0;
};

template <class Backend>
struct HiddenSampleSet {
  std::vector<HiddenDraw<Backend>> draws;
  std::size_t attempts = 0;
  std::size_t accepted = 0;
  /// accepted / attempts; estimates the normalizer Z_i.
  double acceptance_rate = 0.0;
  /// Attempts ran out; `draws` holds the best-scoring proposals instead.
  bool degraded = false;

  double mean_exponent() const {
    double s = 0.0;
    for (const auto& d : draws) s += d.exponent;
    return draws.empty() ? 0.0 : s / static_cast<double>(draws.size());
  }
};

/// Both models' posteriors for one input.
template <class Backend>
struct PosteriorPair {
  typename Backend::Posterior plus;
  typename Backend::Posterior minus;
};

template <GenerativeBackend Backend>
PosteriorPair<Backend> posterior_pair(const Backend& backend, const typename Backend::Input& x,
                                      const ModelPair<Backend>& models) {
  return {backend.approx_posterior(x, models.plus), backend.approx_posterior(x, models.minus)};
}

/// One proposal from P(h+ | x, theta+) P(h- | x, theta-) and its feature.
template <GenerativeBackend Backend>
HiddenDraw<Backend> propose(const Backend& backend, const typename Backend::Input& x,
                            const ModelPair<Backend>& models, const PosteriorPair<Backend>& post, Rng& rng,
                            SampleSource source = {}) {
  HiddenDraw<Backend> d{backend.sample_hidden(x, models.plus, post.plus, rng),
                        backend.sample_hidden(x, models.minus, post.minus, rng),
                        {},
                        0.0};
  d.feature = assemble(backend.feature_block(x, d.plus, post.plus), backend.feature_block(x, d.minus, post.minus),
                       source);
  return d;
}

/// Draws `cfg.n_draws` pairs (h+, h-) from the tilted posterior
///   Q_i(h+, h-) ∝ P(h+ | x) P(h- | x) exp(tilt_exponent)
/// by rejection from the untilted proposal. The tilt factor never exceeds 1,
/// so the proposal dominates Q_i and acceptance with probability
/// exp(exponent) is exact.
///
/// If `max_attempts` is exhausted the set is flagged degraded and filled with
/// the accepted draws plus the highest-exponent rejected proposals.
template <GenerativeBackend Backend>
HiddenSampleSet<Backend> rejection_sample(const Backend& backend, const typename Backend::Input& x, Label y,
                                          const ModelPair<Backend>& models, const PosteriorPair<Backend>& post,
                                          std::span<const double> u, const TiltConfig& cfg, Rng& rng,
                                          std::size_t example_index = 0) {
  cfg.validate();
  HiddenSampleSet<Backend> out;
  out.draws.reserve(cfg.n_draws);
  std::vector<HiddenDraw<Backend>> rejected_best;
  const auto by_exponent_desc = [](const auto& a, const auto& b) { return a.exponent > b.exponent; };

  while (out.accepted < cfg.n_draws && out.attempts < cfg.max_attempts) {
    HiddenDraw<Backend> d = propose(backend, x, models, post, rng, SampleSource{example_index, out.attempts});
    d.exponent = tilt_exponent(d.feature, y, u, cfg);
    ++out.attempts;
    if (uniform01(rng) < std::exp(d.exponent)) {
      d.feature.source.draw = out.accepted;
      out.draws.push_back(std::move(d));
      ++out.accepted;
      continue;
    }
    // Min-heap on the exponent: the front is the weakest kept proposal.
    if (rejected_best.size() < cfg.n_draws) {
      rejected_best.push_back(std::move(d));
      std::push_heap(rejected_best.begin(), rejected_best.end(), by_exponent_desc);
    } else if (d.exponent > rejected_best.front().exponent) {
      std::pop_heap(rejected_best.begin(), rejected_best.end(), by_exponent_desc);
      rejected_best.back() = std::move(d);
      std::push_heap(rejected_best.begin(), rejected_best.end(), by_exponent_desc);
    }
  }

  out.acceptance_rate = static_cast<double>(out.accepted) / static_cast<double>(out.attempts);
  if (out.accepted < cfg.n_draws) {
    out.degraded = true;
    std::stable_sort(rejected_best.begin(), rejected_best.end(), by_exponent_desc);
    for (auto& d : rejected_best) {
      if (out.draws.size() == cfg.n_draws) break;
      d.feature.source.draw = out.draws.size();
      out.draws.push_back(std::move(d));
    }
  }
  return out;
}

template <GenerativeBackend Backend>
HiddenSampleSet<Backend> rejection_sample(const Backend& backend, const typename Backend::Input& x, Label y,
                                          const ModelPair<Backend>& models, std::span<const double> u,
                                          const TiltConfig& cfg, Rng& rng, std::size_t example_index = 0) {
  return rejection_sample(backend, x, y, models, posterior_pair(backend, x, models), u, cfg, rng, example_index);
}

/// `n` untilted draws from P(h+ | x) P(h- | x).
template <GenerativeBackend Backend>
std::vector<HiddenDraw<Backend>> draw_untilted(const Backend& backend, const typename Backend::Input& x,
                                               const ModelPair<Backend>& models, std::size_t n, Rng& rng,
                                               std::size_t example_index = 0) {
  const auto post = posterior_pair(backend, x, models);
  std::vector<HiddenDraw<Backend>> out;
  out.reserve(n);
  for (std::size_t j = 0; j < n; ++j) out.push_back(propose(backend, x, models, post, rng, SampleSource{example_index, j}));
  return out;
}

template <class Backend>
ExampleFeatures to_features(const HiddenSampleSet<Backend>& set, Label y) {
  ExampleFeatures ex{y, {}};
  ex.phi_bar.reserve(set.draws.size());
  for (const auto& d : set.draws) ex.phi_bar.push_back(d.feature.phi_bar);
  return ex;
}

template <class Backend>
ExampleFeatures to_features(std::span<const HiddenDraw<Backend>> draws, Label y) {
  ExampleFeatures ex{y, {}};
  for (const auto& d : draws) ex.phi_bar.push_back(d.feature.phi_bar);
  return ex;
}

}  // namespace sfm
