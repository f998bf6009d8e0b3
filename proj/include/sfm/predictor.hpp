#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sfm/errors.hpp"
#include "sfm/feature_map.hpp"
#include "sfm/numerics.hpp"
#include "sfm/posterior_sampler.hpp"
#include "sfm/random.hpp"
#include "sfm/task.hpp"

namespace sfm {

struct Prediction {
  Label label = Label::negative;
  double score = 0.0;
  Vector votes;
};

struct PredictConfig {
  std::size_t n = 5;
  /// Score with phi_bar (as in training) rather than the raw phi.
  bool normalized = true;
};

/// Majority vote over `n` untilted hidden draws:
/// label = +1 iff (1/n) sum_j u . phi_j > 0, otherwise -1.
template <GenerativeBackend Backend>
Prediction predict(const TrainedTask<Backend>& task, const typename Backend::Input& x, const PredictConfig& cfg,
                   Rng& rng) {
  if (cfg.n == 0) throw InvalidArgument("predict: n must be at least 1");
  task.backend.validate(x, task.models.plus);
  task.backend.validate(x, task.models.minus);
  const auto draws = draw_untilted(task.backend, x, task.models, cfg.n, rng);
  Prediction p;
  p.votes.reserve(cfg.n);
  for (const auto& d : draws) {
    p.votes.push_back(dot(task.u, cfg.normalized ? d.feature.phi_bar : d.feature.phi));
    p.score += p.votes.back();
  }
  p.score /= static_cast<double>(cfg.n);
  p.label = p.score > 0.0 ? Label::positive : Label::negative;
  return p;
}

/// Predictions for a batch; example i uses stream (seed, {i}).
template <GenerativeBackend Backend>
std::vector<Prediction> predict_all(const TrainedTask<Backend>& task, std::span<const typename Backend::Input> xs,
                                    const PredictConfig& cfg, std::uint64_t seed) {
  std::vector<Prediction> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Rng rng = make_stream(seed, {i});
    out.push_back(predict(task, xs[i], cfg, rng));
  }
  return out;
}

/// Fraction of correctly classified labeled examples.
template <GenerativeBackend Backend>
double evaluate(const TrainedTask<Backend>& task, std::span<const typename Backend::Input> xs,
                std::span<const Label> labels, const PredictConfig& cfg, std::uint64_t seed) {
  if (xs.empty()) throw InvalidArgument("evaluate: empty dataset");
  if (xs.size() != labels.size()) throw InvalidArgument("evaluate: inputs and labels differ in length");
  const auto preds = predict_all(task, xs, cfg, seed);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i].label == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(xs.size());
}

/// Held-out Gibbs risk: mean over examples and untilted draws of
/// Phi(y u . phi_bar).
template <GenerativeBackend Backend>
double gibbs_risk(const TrainedTask<Backend>& task, std::span<const typename Backend::Input> xs,
                  std::span<const Label> labels, std::size_t n, std::uint64_t seed) {
  if (xs.empty()) throw InvalidArgument("gibbs_risk: empty dataset");
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Rng rng = make_stream(seed, {i});
    const auto draws = draw_untilted(task.backend, xs[i], task.models, n, rng);
    double acc = 0.0;
    for (const auto& d : draws) acc += expected_error(task.u, d.feature.phi_bar, labels[i]);
    s += acc / static_cast<double>(n);
  }
  return s / static_cast<double>(xs.size());
}

}  // namespace sfm
