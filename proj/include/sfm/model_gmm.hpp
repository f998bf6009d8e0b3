#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sfm/errors.hpp"
#include "sfm/feature_map.hpp"
#include "sfm/numerics.hpp"
#include "sfm/random.hpp"

namespace sfm::gmm {

struct GmmConfig {
  std::size_t K = 4;
  /// Variance floor as a fraction of the per-dimension data variance.
  double variance_floor_scale = 1e-4;
  /// Responsibilities are floored here before renormalization, keeping log a_k finite.
  double posterior_floor = 1e-12;
};

/// Diagonal-covariance mixture. Means and variances are K x d, row-major.
struct GmmParams {
  std::size_t K = 0;
  std::size_t d = 0;
  Vector weights;
  Vector means;
  Vector variances;
  /// Per-dimension lower bound applied to every re-estimated variance.
  Vector variance_floor;

  double mean(std::size_t k, std::size_t j) const { return means[k * d + j]; }
  double variance(std::size_t k, std::size_t j) const { return variances[k * d + j]; }

  bool operator==(const GmmParams&) const = default;
};

/// Responsibilities a_k of one example.
struct GmmPosterior {
  Vector a;
};

/// One-hot component indicator, stored as the index of its single 1.
struct OneHotZ {
  std::size_t K = 0;
  std::size_t active = 0;

  double operator[](std::size_t k) const { return k == active ? 1.0 : 0.0; }
  bool operator==(const OneHotZ&) const = default;
};

/// Builds parameters with uniform weights and a uniform variance floor; for
/// tests and hand-made models.
inline GmmParams make_params(Vector weights, Vector means, Vector variances, double floor = 1e-8) {
  GmmParams p;
  p.K = weights.size();
  if (p.K == 0 || means.size() % p.K != 0 || variances.size() != means.size()) {
    throw InvalidArgument("gmm::make_params: inconsistent shapes");
  }
  p.d = means.size() / p.K;
  p.weights = std::move(weights);
  p.means = std::move(means);
  p.variances = std::move(variances);
  p.variance_floor.assign(p.d, floor);
  return p;
}

inline double log_component_density(std::span<const double> x, const GmmParams& p, std::size_t k) {
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  double s = 0.0;
  for (std::size_t j = 0; j < p.d; ++j) {
    const double var = p.variance(k, j);
    const double diff = x[j] - p.mean(k, j);
    s += kLog2Pi + std::log(var) + diff * diff / var;
  }
  return -0.5 * s;
}

/// log pi_k + log N(x; mu_k, diag var_k) for every k.
inline Vector component_log_joint(std::span<const double> x, const GmmParams& p) {
  Vector l(p.K);
  for (std::size_t k = 0; k < p.K; ++k) {
    l[k] = std::log(p.weights[k]) + log_component_density(x, p, k);
  }
  return l;
}

inline GmmPosterior responsibilities(std::span<const double> x, const GmmParams& p, double posterior_floor = 1e-12) {
  const Vector l = component_log_joint(x, p);
  const double z = log_sum_exp(l);
  GmmPosterior post;
  post.a.resize(p.K);
  for (std::size_t k = 0; k < p.K; ++k) post.a[k] = std::exp(l[k] - z);
  floor_and_normalize(post.a, posterior_floor);
  return post;
}

inline OneHotZ sample_z(const GmmPosterior& post, Rng& rng) {
  return OneHotZ{post.a.size(), sample_categorical(post.a, rng)};
}

/// Per component i: [z_i x (d), z_i x*x (d), z_i, z_i log a_i]; length K(2d+2).
inline FeatureBlock feature_block_gmm(std::span<const double> x, const OneHotZ& z, const GmmPosterior& post) {
  const std::size_t K = post.a.size();
  const std::size_t d = x.size();
  const std::size_t stride = 2 * d + 2;
  FeatureBlock block(K * stride, 0.0);
  const std::size_t i = z.active;
  double* out = block.data() + i * stride;
  for (std::size_t j = 0; j < d; ++j) {
    out[j] = x[j];
    out[d + j] = x[j] * x[j];
  }
  out[2 * d] = 1.0;
  out[2 * d + 1] = std::log(post.a[i]);
  return block;
}

inline double joint_log_density_gmm(std::span<const double> x, const OneHotZ& z, const GmmParams& p) {
  return std::log(p.weights[z.active]) + log_component_density(x, p, z.active);
}

inline double log_marginal_gmm(std::span<const double> x, const GmmParams& p) {
  return log_sum_exp(component_log_joint(x, p));
}

/// Weighted maximum-likelihood update from sampled indicators. Components that
/// receive no mass keep their previous mean and variance.
inline MStepResult<GmmParams> m_step_gmm(std::span<const WeightedSample<Vector, OneHotZ>> samples,
                                         const GmmParams& previous) {
  GmmParams next = previous;
  const std::size_t K = previous.K;
  const std::size_t d = previous.d;
  Vector mass(K, 0.0);
  Vector sum_x(K * d, 0.0);
  for (const auto& s : samples) {
    if (s.weight <= 0.0) continue;
    const std::size_t k = s.h.active;
    mass[k] += s.weight;
    for (std::size_t j = 0; j < d; ++j) sum_x[k * d + j] += s.weight * (*s.x)[j];
  }
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  if (!(total > 0.0)) return {previous, false};

  for (std::size_t k = 0; k < K; ++k) {
    if (mass[k] <= 0.0) continue;
    for (std::size_t j = 0; j < d; ++j) next.means[k * d + j] = sum_x[k * d + j] / mass[k];
  }
  Vector sum_sq(K * d, 0.0);
  for (const auto& s : samples) {
    if (s.weight <= 0.0) continue;
    const std::size_t k = s.h.active;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = (*s.x)[j] - next.means[k * d + j];
      sum_sq[k * d + j] += s.weight * diff * diff;
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    next.weights[k] = mass[k] / total;
    if (mass[k] <= 0.0) continue;
    for (std::size_t j = 0; j < d; ++j) {
      next.variances[k * d + j] = std::max(sum_sq[k * d + j] / mass[k], previous.variance_floor[j]);
    }
  }
  return {std::move(next), true};
}

class GmmBackend {
 public:
  using Input = Vector;
  using Params = GmmParams;
  using Posterior = GmmPosterior;
  using Hidden = OneHotZ;

  static constexpr const char* kName = "gmm";

  GmmBackend() = default;
  explicit GmmBackend(GmmConfig cfg) : cfg_(cfg) {
    if (cfg_.K == 0) throw InvalidArgument("gmm: K must be at least 1");
    if (!(cfg_.posterior_floor > 0.0) || cfg_.posterior_floor * static_cast<double>(cfg_.K) >= 1.0) {
      throw InvalidArgument("gmm: posterior_floor out of range");
    }
  }

  const GmmConfig& config() const { return cfg_; }

  void validate(const Input& x, const Params& p) const {
    if (x.size() != p.d) {
      throw InvalidArgument("gmm: input has dimension " + std::to_string(x.size()) + ", model expects " +
                            std::to_string(p.d));
    }
    for (double v : x) {
      if (!std::isfinite(v)) throw InvalidArgument("gmm: non-finite input value");
    }
  }

  Posterior approx_posterior(const Input& x, const Params& p) const {
    return responsibilities(x, p, cfg_.posterior_floor);
  }

  Hidden sample_hidden(const Input&, const Params&, const Posterior& post, Rng& rng) const {
    return sample_z(post, rng);
  }

  double joint_log_density(const Input& x, const Hidden& z, const Params& p) const {
    return joint_log_density_gmm(x, z, p);
  }

  FeatureBlock feature_block(const Input& x, const Hidden& z, const Posterior& post) const {
    return feature_block_gmm(x, z, post);
  }

  Params update_parameters(std::span<const WeightedSample<Input, Hidden>> samples, const Params& previous) const {
    return m_step_gmm(samples, previous).params;
  }

  std::size_t block_dim(const Params& p) const { return p.K * (2 * p.d + 2); }

  double log_marginal(const Input& x, const Params& p) const { return log_marginal_gmm(x, p); }

  /// Every value z can take; used by exact-enumeration checks.
  std::vector<Hidden> enumerate_hidden(const Input&, const Params& p) const {
    std::vector<Hidden> out;
    for (std::size_t k = 0; k < p.K; ++k) out.push_back(OneHotZ{p.K, k});
    return out;
  }

  /// Means at K distinct random training points, variances at the global data
  /// variance, uniform weights.
  Params initialize(std::span<const Input* const> inputs, Rng& rng) const {
    if (inputs.empty()) throw InvalidArgument("gmm: cannot initialize from an empty set");
    const std::size_t d = inputs.front()->size();
    const std::size_t n = inputs.size();
    Vector mu(d, 0.0), var(d, 0.0);
    for (const Input* x : inputs) {
      if (x->size() != d) throw InvalidArgument("gmm: inputs differ in dimension");
      for (std::size_t j = 0; j < d; ++j) mu[j] += (*x)[j];
    }
    for (double& v : mu) v /= static_cast<double>(n);
    for (const Input* x : inputs) {
      for (std::size_t j = 0; j < d; ++j) var[j] += ((*x)[j] - mu[j]) * ((*x)[j] - mu[j]);
    }
    for (double& v : var) {
      v /= static_cast<double>(n);
      if (!(v > 0.0)) v = 1.0;
    }

    Params p;
    p.K = cfg_.K;
    p.d = d;
    p.weights.assign(p.K, 1.0 / static_cast<double>(p.K));
    p.means.resize(p.K * d);
    p.variances.resize(p.K * d);
    p.variance_floor.resize(d);
    for (std::size_t j = 0; j < d; ++j) p.variance_floor[j] = cfg_.variance_floor_scale * var[j];

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_in_place(std::span<std::size_t>(order), rng);
    for (std::size_t k = 0; k < p.K; ++k) {
      const Input& seed_point = *inputs[order[k % n]];
      for (std::size_t j = 0; j < d; ++j) {
        p.means[k * d + j] = seed_point[j];
        p.variances[k * d + j] = var[j];
      }
    }
    return p;
  }

 private:
  GmmConfig cfg_{};
};

static_assert(GenerativeBackend<GmmBackend>);

}  // namespace sfm::gmm
