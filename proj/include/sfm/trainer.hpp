#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfm/errors.hpp"
#include "sfm/feature_map.hpp"
#include "sfm/numerics.hpp"
#include "sfm/pac_bayes.hpp"
#include "sfm/parallel.hpp"
#include "sfm/posterior_sampler.hpp"
#include "sfm/predictor.hpp"
#include "sfm/random.hpp"
#include "sfm/task.hpp"

namespace sfm {

enum class CUpdate { gradient, cross_validation, fixed };

struct TrainConfig {
  double gamma_u = 5.0;
  double gamma_c = 0.5;
  std::size_t max_outer_iters = 30;
  /// Restarts of the whole training loop (multi_restart_train).
  std::size_t restarts = 1;
  /// Random starting points are drawn uniformly from [-init_range, init_range]^dim.
  double init_range = 20.0;
  double u0_fraction = 0.5;
  /// Starting points for the prior-mean search; the first is the origin.
  std::size_t u0_restarts = 10;
  std::size_t u0_iters = 100;
  double delta = 0.05;
  double C_init = 1.0;
  CUpdate c_update = CUpdate::gradient;
  double C_min = 1e-3;
  double convergence_tol = 1e-5;
  std::size_t convergence_patience = 3;
  std::uint64_t seed = 1;
  /// Untilted Monte Carlo EM passes on each class model before the prior mean is fit.
  std::size_t warmup_iters = 5;
  std::size_t max_halvings = 20;
  double max_degraded_fraction = 0.2;
  double divergence_norm = 1e6;

  WeightScale weight_scale = WeightScale::per_example;
  std::size_t n_draws = 5;
  /// 0 means 200 * n_draws.
  std::size_t max_attempts = 0;
  bool exact_pairing = false;

  std::vector<double> cv_grid = default_cv_grid();
  std::size_t cv_folds = 10;

  std::size_t attempts_limit() const { return max_attempts == 0 ? 200 * n_draws : max_attempts; }

  static std::vector<double> default_cv_grid() {
    std::vector<double> g;
    for (int k = -6; k <= 6; ++k) g.push_back(std::ldexp(1.0, k));
    return g;
  }

  void validate() const {
    if (!(gamma_u > 0.0) || !(gamma_c > 0.0)) throw InvalidArgument("TrainConfig: learning rates must be positive");
    if (!(u0_fraction > 0.0 && u0_fraction <= 1.0)) throw InvalidArgument("TrainConfig: u0_fraction must lie in (0, 1]");
    if (!(init_range >= 0.0)) throw InvalidArgument("TrainConfig: init_range must be nonnegative");
    if (!(delta > 0.0 && delta <= 1.0)) throw InvalidArgument("TrainConfig: delta must lie in (0, 1]");
    if (!(C_init >= 0.0)) throw InvalidArgument("TrainConfig: C_init must be nonnegative");
    if (c_update != CUpdate::fixed && !(C_init > 0.0)) throw InvalidArgument("TrainConfig: C_init must be positive");
    if (restarts == 0 || u0_restarts == 0) throw InvalidArgument("TrainConfig: restart counts must be at least 1");
    if (n_draws == 0) throw InvalidArgument("TrainConfig: n_draws must be at least 1");
    if (max_outer_iters == 0) throw InvalidArgument("TrainConfig: max_outer_iters must be at least 1");
    if (attempts_limit() < n_draws) throw InvalidArgument("TrainConfig: max_attempts must be >= n_draws");
    if (c_update == CUpdate::cross_validation && (cv_grid.empty() || cv_folds < 2)) {
      throw InvalidArgument("TrainConfig: cross-validation needs a grid and at least 2 folds");
    }
  }
};

template <class Input>
struct TrainingSet {
  std::vector<Input> labeled;
  std::vector<Label> labels;
  std::vector<Input> unlabeled;

  std::size_t m_l() const { return labeled.size(); }
  std::size_t m_u() const { return unlabeled.size(); }
};

/// Where the weight mean starts the main loop.
enum class StartPoint { prior_mean, random_box };

namespace detail {

// Stream tags, so every random decision has its own seed path.
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kWarmupStream = 2;
inline constexpr std::uint64_t kPriorStream = 3;
inline constexpr std::uint64_t kSampleStream = 4;
inline constexpr std::uint64_t kStartStream = 5;
inline constexpr std::uint64_t kFoldStream = 6;
inline constexpr std::uint64_t kSubsetStream = 7;

inline Vector random_box(std::size_t dim, double range, Rng& rng) {
  Vector u(dim);
  for (double& v : u) v = range * (2.0 * uniform01(rng) - 1.0);
  return u;
}

struct DescentResult {
  Vector x;
  double value = 0.0;
  bool moved = false;
};

/// One gradient step with step-halving until the objective does not increase.
inline DescentResult backtracking_step(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double fx, std::span<const double> grad,
                                       double step, std::size_t max_halvings) {
  Vector cand(x.size());
  for (std::size_t h = 0; h <= max_halvings; ++h, step *= 0.5) {
    for (std::size_t k = 0; k < x.size(); ++k) cand[k] = x[k] - step * grad[k];
    const double fc = f(cand);
    if (fc <= fx) return {cand, fc, true};
  }
  return {Vector(x.begin(), x.end()), fx, false};
}

}  // namespace detail

/// Prior mean: minimizes the labeled Gibbs risk plus half the unlabeled
/// disagreement on `subset`, by backtracking gradient descent from
/// `cfg.u0_restarts` starting points (the origin, then uniform draws from the
/// init box). Returns the best end point found.
inline Vector init_u0(const FeatureSet& subset, std::size_t dim, const TrainConfig& cfg, Rng& rng) {
  if (subset.labeled.empty()) throw InvalidArgument("init_u0: labeled fraction is empty");
  const auto f = [&](std::span<const double> u) { return risk_objective(subset, u); };
  Vector best;
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < cfg.u0_restarts; ++r) {
    Vector u = r == 0 ? Vector(dim, 0.0) : detail::random_box(dim, cfg.init_range, rng);
    double value = f(u);
    for (std::size_t it = 0; it < cfg.u0_iters; ++it) {
      const Vector g = risk_objective_gradient(subset, u);
      auto step = detail::backtracking_step(f, u, value, g, cfg.gamma_u, cfg.max_halvings);
      if (!step.moved) break;
      u = std::move(step.x);
      value = step.value;
    }
    if (value < best_value) {
      best_value = value;
      best = std::move(u);
    }
  }
  return best;
}

namespace detail {

template <GenerativeBackend Backend>
ModelPair<Backend> initialize_models(const Backend& backend, const TrainingSet<typename Backend::Input>& data,
                                     std::uint64_t seed) {
  using Input = typename Backend::Input;
  std::vector<const Input*> pos, neg;
  for (std::size_t i = 0; i < data.m_l(); ++i) {
    (data.labels[i] == Label::positive ? pos : neg).push_back(&data.labeled[i]);
  }
  Rng rp = make_stream(seed, {kInitStream, 0});
  Rng rn = make_stream(seed, {kInitStream, 1});
  return {backend.initialize(std::span<const Input* const>(pos), rp),
          backend.initialize(std::span<const Input* const>(neg), rn)};
}

/// Untilted Monte Carlo EM on each class model from its own labeled examples.
template <GenerativeBackend Backend>
void warmup_models(const Backend& backend, const TrainingSet<typename Backend::Input>& data,
                   ModelPair<Backend>& models, const TrainConfig& cfg) {
  using Input = typename Backend::Input;
  using Hidden = typename Backend::Hidden;
  const double w = 1.0 / static_cast<double>(cfg.n_draws);
  for (std::size_t pass = 0; pass < cfg.warmup_iters; ++pass) {
    std::vector<WeightedSample<Input, Hidden>> pos, neg;
    for (std::size_t i = 0; i < data.m_l(); ++i) {
      const bool is_pos = data.labels[i] == Label::positive;
      const auto& params = is_pos ? models.plus : models.minus;
      const auto post = backend.approx_posterior(data.labeled[i], params);
      Rng rng = make_stream(cfg.seed, {kWarmupStream, pass, i});
      for (std::size_t j = 0; j < cfg.n_draws; ++j) {
        (is_pos ? pos : neg).push_back({&data.labeled[i], backend.sample_hidden(data.labeled[i], params, post, rng), w});
      }
    }
    models.plus = backend.update_parameters(std::span<const WeightedSample<Input, Hidden>>(pos), models.plus);
    models.minus = backend.update_parameters(std::span<const WeightedSample<Input, Hidden>>(neg), models.minus);
  }
}

/// Untilted features for a random `fraction` of the labeled and unlabeled
/// sets. The labeled share is drawn per class, so both classes are present.
template <GenerativeBackend Backend>
FeatureSet untilted_subset(const Backend& backend, const TrainingSet<typename Backend::Input>& data,
                           const ModelPair<Backend>& models, const TrainConfig& cfg) {
  auto pick = [&](std::vector<std::size_t> idx, std::uint64_t which) {
    Rng rng = make_stream(cfg.seed, {kSubsetStream, which});
    shuffle_in_place(std::span<std::size_t>(idx), rng);
    const std::size_t n = idx.size();
    const auto keep = static_cast<std::size_t>(std::ceil(cfg.u0_fraction * static_cast<double>(n)));
    idx.resize(std::min(n, std::max<std::size_t>(keep, n > 0 ? 1 : 0)));
    return idx;
  };
  std::vector<std::size_t> pos, neg, unl(data.m_u());
  for (std::size_t i = 0; i < data.m_l(); ++i) (data.labels[i] == Label::positive ? pos : neg).push_back(i);
  for (std::size_t i = 0; i < data.m_u(); ++i) unl[i] = i;
  std::vector<std::size_t> labeled = pick(pos, 0);
  for (std::size_t i : pick(neg, 2)) labeled.push_back(i);
  std::sort(labeled.begin(), labeled.end());
  std::vector<std::size_t> unlabeled = pick(unl, 1);
  std::sort(unlabeled.begin(), unlabeled.end());

  FeatureSet fs;
  for (std::size_t i : labeled) {
    Rng rng = make_stream(cfg.seed, {kPriorStream, 0, i});
    const auto draws = draw_untilted(backend, data.labeled[i], models, cfg.n_draws, rng, i);
    fs.labeled.push_back(to_features<Backend>(std::span<const HiddenDraw<Backend>>(draws), data.labels[i]));
  }
  for (std::size_t i : unlabeled) {
    Rng rng = make_stream(cfg.seed, {kPriorStream, 1, i});
    const auto draws = draw_untilted(backend, data.unlabeled[i], models, cfg.n_draws, rng, data.m_l() + i);
    fs.unlabeled.push_back(to_features<Backend>(std::span<const HiddenDraw<Backend>>(draws), Label::unlabeled));
  }
  return fs;
}

template <class Input>
void check_training_set(const TrainingSet<Input>& data) {
  if (data.labeled.empty()) throw InvalidArgument("train: labeled set is empty");
  if (data.labeled.size() != data.labels.size()) throw InvalidArgument("train: labels and inputs differ in length");
  bool pos = false, neg = false;
  for (Label y : data.labels) {
    if (y == Label::unlabeled) throw InvalidArgument("train: labeled set contains an unlabeled example");
    (y == Label::positive ? pos : neg) = true;
  }
  if (!pos || !neg) throw InvalidArgument("train: both classes need at least one labeled example");
}

}  // namespace detail

/// Risks, KL terms and both bounds for one round of hidden samples at (u, C).
/// Bounds stay NaN when C = 0.
template <class Backend>
RiskReport assess_samples(std::span<const HiddenSampleSet<Backend>> sets, const FeatureSet& fs,
                          std::span<const double> u, std::span<const double> u0, double C, double delta,
                          bool exact_pairing) {
  RiskReport r = empirical_risks(fs, u, exact_pairing);
  r.kl_w = kl_weights(u, u0);
  double hidden = 0.0;
  for (const auto& s : sets) hidden += hidden_kl_estimate(s.mean_exponent(), s.acceptance_rate, s.attempts);
  const double md = static_cast<double>(fs.m());
  r.kl_hidden = hidden / md;
  r.kl_total = r.kl_w + r.kl_hidden;
  r.J = surrogate_objective(fs, u, u0, C);
  r.J_Q = C * (r.e_S + 0.5 * r.d_S) + r.kl_total / md;
  if (C > 0.0) {
    r.bound_supervised = bound_supervised(r.R_S, r.kl_total, C, delta, md);
    r.bound_semisupervised = bound_semisupervised(r.e_S, r.d_S, r.kl_total, C, delta, md);
  }
  return r;
}

template <GenerativeBackend Backend>
TrainedTask<Backend> train_fixed_start(const Backend& backend, const TrainingSet<typename Backend::Input>& data,
                                       const TrainConfig& cfg, StartPoint start, std::uint64_t start_seed);

/// Joint training of the class models, the weight posterior and C.
///
/// Each outer iteration: (E) draws tilted hidden samples for every example;
/// (M1) refits theta+ from the positive examples' h+ draws and theta- from the
/// negative examples' h- draws; (M2) takes one backtracking gradient step on
/// J(u) over this iteration's samples; (M3) moves C down the bound gradient
/// when c_update is gradient. Stops after `convergence_patience` consecutive
/// iterations with |dJ| < convergence_tol, or at max_outer_iters.
template <GenerativeBackend Backend>
TrainedTask<Backend> train(const Backend& backend, const TrainingSet<typename Backend::Input>& data,
                           const TrainConfig& cfg) {
  return train_fixed_start(backend, data, cfg, StartPoint::prior_mean, 0);
}

template <GenerativeBackend Backend>
double select_C_by_cross_validation(const Backend& backend, const TrainingSet<typename Backend::Input>& data,
                                    const TrainConfig& cfg);

template <GenerativeBackend Backend>
TrainedTask<Backend> train_fixed_start(const Backend& backend, const TrainingSet<typename Backend::Input>& data,
                                       const TrainConfig& cfg_in, StartPoint start, std::uint64_t start_seed) {
  using Input = typename Backend::Input;
  using Hidden = typename Backend::Hidden;
  cfg_in.validate();
  detail::check_training_set(data);

  TrainConfig cfg = cfg_in;
  TrainedTask<Backend> task{backend, {}, {}, {}, cfg.C_init, cfg.delta, false, false, {}, 0};
  if (cfg.c_update == CUpdate::cross_validation) {
    task.C = select_C_by_cross_validation(backend, data, cfg);
    task.c_adapted = true;
    cfg.c_update = CUpdate::fixed;
  }

  task.models = detail::initialize_models(backend, data, cfg.seed);
  for (std::size_t i = 0; i < data.m_l(); ++i) {
    backend.validate(data.labeled[i], task.models.plus);
  }
  for (const auto& x : data.unlabeled) backend.validate(x, task.models.plus);
  detail::warmup_models(backend, data, task.models, cfg);

  const std::size_t dim = 2 * backend.block_dim(task.models.plus) + 1;
  {
    const FeatureSet subset = detail::untilted_subset(backend, data, task.models, cfg);
    Rng rng = make_stream(cfg.seed, {detail::kPriorStream, 2});
    task.u0 = init_u0(subset, dim, cfg, rng);
  }
  if (start == StartPoint::random_box) {
    Rng rng = make_stream(start_seed, {detail::kStartStream});
    task.u = detail::random_box(dim, cfg.init_range, rng);
  } else {
    task.u = task.u0;
  }

  const std::size_t m_l = data.m_l();
  const std::size_t m_u = data.m_u();
  const std::size_t m = m_l + m_u;
  const auto input_at = [&](std::size_t i) -> const Input& {
    return i < m_l ? data.labeled[i] : data.unlabeled[i - m_l];
  };
  const auto label_at = [&](std::size_t i) { return i < m_l ? data.labels[i] : Label::unlabeled; };

  double previous_J = std::numeric_limits<double>::quiet_NaN();
  std::size_t calm = 0;
  for (std::size_t iter = 0; iter < cfg.max_outer_iters; ++iter) {
    TiltConfig tilt{task.C, m, m_l, m_u, cfg.weight_scale, cfg.n_draws, cfg.attempts_limit()};

    // (E) tilted hidden samples, one independent stream per example.
    std::vector<HiddenSampleSet<Backend>> sets(m);
    parallel_for(m, [&](std::size_t i) {
      Rng rng = make_stream(cfg.seed, {detail::kSampleStream, iter, i});
      sets[i] = rejection_sample(backend, input_at(i), label_at(i), task.models, task.u, tilt, rng, i);
    });
    std::size_t degraded = 0;
    double rate_sum = 0.0;
    for (const auto& s : sets) {
      degraded += s.degraded ? 1 : 0;
      rate_sum += s.acceptance_rate;
    }
    task.degraded_total += degraded;
    if (static_cast<double>(degraded) > cfg.max_degraded_fraction * static_cast<double>(m)) {
      throw TrainingAborted("train: " + std::to_string(degraded) + " of " + std::to_string(m) +
                            " examples exhausted their sampling attempts at iteration " + std::to_string(iter) +
                            " (C = " + std::to_string(task.C) + "); lower C or raise sampler.max_attempts");
    }

    // (M1) class models from their own class's draws only.
    {
      std::vector<WeightedSample<Input, Hidden>> pos, neg;
      for (std::size_t i = 0; i < m_l; ++i) {
        const double w = 1.0 / static_cast<double>(sets[i].draws.size());
        for (const auto& d : sets[i].draws) {
          if (data.labels[i] == Label::positive) {
            pos.push_back({&data.labeled[i], d.plus, w});
          } else {
            neg.push_back({&data.labeled[i], d.minus, w});
          }
        }
      }
      task.models.plus = backend.update_parameters(std::span<const WeightedSample<Input, Hidden>>(pos), task.models.plus);
      task.models.minus = backend.update_parameters(std::span<const WeightedSample<Input, Hidden>>(neg), task.models.minus);
    }

    // (M2) weight-mean step on this iteration's features.
    FeatureSet fs;
    fs.labeled.reserve(m_l);
    fs.unlabeled.reserve(m_u);
    for (std::size_t i = 0; i < m; ++i) {
      auto ex = to_features(sets[i], label_at(i));
      (i < m_l ? fs.labeled : fs.unlabeled).push_back(std::move(ex));
    }
    const auto J = [&](std::span<const double> u) { return surrogate_objective(fs, u, task.u0, task.C); };
    double J_now = J(task.u);
    {
      const Vector g = grad_u(fs, task.u, task.u0, task.C);
      auto step = detail::backtracking_step(J, task.u, J_now, g, cfg.gamma_u, cfg.max_halvings);
      task.u = std::move(step.x);
      J_now = step.value;
    }
    if (!std::isfinite(norm(task.u)) || norm(task.u) > cfg.divergence_norm) {
      throw TrainingAborted("train: weight mean diverged at iteration " + std::to_string(iter));
    }

    // Risks and bounds at the updated weights.
    IterationRecord rec;
    rec.iteration = iter;
    rec.C = task.C;
    rec.degraded = degraded;
    rec.acceptance_rate = rate_sum / static_cast<double>(m);
    RiskReport& r = rec.risks;
    r = assess_samples(std::span<const HiddenSampleSet<Backend>>(sets), fs, task.u, task.u0, task.C, task.delta,
                       cfg.exact_pairing);
    r.J = J_now;
    const double md = static_cast<double>(m);
    const double risk = r.e_S + 0.5 * r.d_S;

    // (M3) trade-off constant.
    if (cfg.c_update == CUpdate::gradient) {
      const double g = grad_C(r.J_Q, risk, task.C, task.delta, md);
      task.C = std::max(cfg.C_min, task.C - cfg.gamma_c * g);
      task.c_adapted = true;
    }
    task.history.push_back(rec);

    if (std::isfinite(previous_J) && std::abs(J_now - previous_J) < cfg.convergence_tol) {
      if (++calm >= cfg.convergence_patience) {
        task.converged = true;
        break;
      }
    } else {
      calm = 0;
    }
    previous_J = J_now;
  }
  return task;
}

/// Runs `cfg.restarts` independent trainings and keeps the one with the
/// smallest final J(u). Restart 0 is exactly `train(cfg)`; restart r > 0 uses
/// a derived seed and starts the weight mean uniformly in the init box.
template <GenerativeBackend Backend>
TrainedTask<Backend> multi_restart_train(const Backend& backend, const TrainingSet<typename Backend::Input>& data,
                                         const TrainConfig& cfg) {
  cfg.validate();
  std::optional<TrainedTask<Backend>> best;
  std::optional<TrainingAborted> last_abort;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    TrainConfig run = cfg;
    if (r > 0) run.seed = derive_seed(cfg.seed, {detail::kStartStream, r});
    try {
      auto task = r == 0 ? train(backend, data, run)
                         : train_fixed_start(backend, data, run, StartPoint::random_box, run.seed);
      if (!best || task.history.back().risks.J < best->history.back().risks.J) best = std::move(task);
    } catch (const TrainingAborted& e) {
      last_abort = e;
    }
  }
  if (!best) throw *last_abort;
  return std::move(*best);
}

/// Picks C from `cfg.cv_grid` by stratified k-fold cross-validation accuracy
/// on the labeled set (unlabeled data stays in every training fold). Ties go
/// to the earlier grid value.
template <GenerativeBackend Backend>
double select_C_by_cross_validation(const Backend& backend, const TrainingSet<typename Backend::Input>& data,
                                    const TrainConfig& cfg) {
  using Input = typename Backend::Input;
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < data.m_l(); ++i) (data.labels[i] == Label::positive ? pos : neg).push_back(i);
  Rng rng = make_stream(cfg.seed, {detail::kFoldStream});
  shuffle_in_place(std::span<std::size_t>(pos), rng);
  shuffle_in_place(std::span<std::size_t>(neg), rng);
  const std::size_t folds = std::min(cfg.cv_folds, data.m_l());
  std::vector<std::size_t> fold_of(data.m_l());
  std::size_t next = 0;
  for (std::size_t i : pos) fold_of[i] = next++ % folds;
  for (std::size_t i : neg) fold_of[i] = next++ % folds;

  double best_C = cfg.cv_grid.front();
  double best_acc = -1.0;
  for (double C : cfg.cv_grid) {
    double acc_sum = 0.0;
    std::size_t scored = 0;
    for (std::size_t f = 0; f < folds; ++f) {
      TrainingSet<Input> fit;
      fit.unlabeled = data.unlabeled;
      std::vector<Input> held;
      std::vector<Label> held_y;
      for (std::size_t i = 0; i < data.m_l(); ++i) {
        if (fold_of[i] == f) {
          held.push_back(data.labeled[i]);
          held_y.push_back(data.labels[i]);
        } else {
          fit.labeled.push_back(data.labeled[i]);
          fit.labels.push_back(data.labels[i]);
        }
      }
      if (held.empty()) continue;
      TrainConfig sub = cfg;
      sub.c_update = CUpdate::fixed;
      sub.C_init = C;
      sub.seed = derive_seed(cfg.seed, {detail::kFoldStream, f});
      try {
        detail::check_training_set(fit);
        const auto task = train(backend, fit, sub);
        acc_sum += evaluate(task, std::span<const Input>(held), std::span<const Label>(held_y), PredictConfig{},
                            derive_seed(sub.seed, {1}));
        ++scored;
      } catch (const TrainingAborted&) {
        ++scored;
      } catch (const InvalidArgument&) {
        // A fold without both classes cannot be trained; it does not vote.
      }
    }
    const double acc = scored > 0 ? acc_sum / static_cast<double>(scored) : 0.0;
    if (acc > best_acc) {
      best_acc = acc;
      best_C = C;
    }
  }
  return best_C;
}

}  // namespace sfm
