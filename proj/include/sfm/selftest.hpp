#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sfm/feature_map.hpp"
#include "sfm/model_gmm.hpp"
#include "sfm/model_hmm.hpp"
#include "sfm/numerics.hpp"
#include "sfm/pac_bayes.hpp"
#include "sfm/posterior_sampler.hpp"
#include "sfm/random.hpp"

namespace sfm {

// ---------------------------------------------------------------------------
// Brute-force oracles
// ---------------------------------------------------------------------------

/// The tilted pair posterior over every (h+, h-) configuration, normalized by
/// direct summation. `mass[i * minus.size() + j]` is the normalized mass of
/// (plus[i], minus[j]); `Z` is the expected acceptance probability.
template <class Backend>
struct EnumeratedTarget {
  std::vector<typename Backend::Hidden> plus;
  std::vector<typename Backend::Hidden> minus;
  std::vector<double> mass;
  double Z = 0.0;

  std::size_t cell(const typename Backend::Hidden& hp, const typename Backend::Hidden& hm) const {
    const auto i = std::find(plus.begin(), plus.end(), hp) - plus.begin();
    const auto j = std::find(minus.begin(), minus.end(), hm) - minus.begin();
    if (static_cast<std::size_t>(i) == plus.size() || static_cast<std::size_t>(j) == minus.size()) {
      throw ContractViolation("EnumeratedTarget: configuration outside the enumeration");
    }
    return static_cast<std::size_t>(i) * minus.size() + static_cast<std::size_t>(j);
  }
};

namespace detail {

/// P(h | x) over the enumeration, from the joint density alone.
template <class Backend>
std::vector<double> enumerated_conditional(const Backend& backend, const typename Backend::Input& x,
                                           const std::vector<typename Backend::Hidden>& hs,
                                           const typename Backend::Params& p) {
  std::vector<double> logp;
  for (const auto& h : hs) logp.push_back(backend.joint_log_density(x, h, p));
  const double lse = log_sum_exp(logp);
  for (double& v : logp) v = std::exp(v - lse);
  return logp;
}

}  // namespace detail

template <class Backend>
EnumeratedTarget<Backend> enumerate_tilted(const Backend& backend, const typename Backend::Input& x, Label y,
                                           const ModelPair<Backend>& models, std::span<const double> u,
                                           const TiltConfig& tilt) {
  EnumeratedTarget<Backend> t;
  t.plus = backend.enumerate_hidden(x, models.plus);
  t.minus = backend.enumerate_hidden(x, models.minus);
  const auto pp = detail::enumerated_conditional(backend, x, t.plus, models.plus);
  const auto pm = detail::enumerated_conditional(backend, x, t.minus, models.minus);
  const auto post_p = backend.approx_posterior(x, models.plus);
  const auto post_m = backend.approx_posterior(x, models.minus);
  for (std::size_t i = 0; i < t.plus.size(); ++i) {
    const auto bp = backend.feature_block(x, t.plus[i], post_p);
    for (std::size_t j = 0; j < t.minus.size(); ++j) {
      const auto f = assemble(bp, backend.feature_block(x, t.minus[j], post_m), {});
      const double w = pp[i] * pm[j] * std::exp(tilt_exponent(f, y, u, tilt));
      t.mass.push_back(w);
      t.Z += w;
    }
  }
  for (double& w : t.mass) w /= t.Z;
  return t;
}

/// Accepted-draw frequencies against an enumerated target.
struct SamplerComparison {
  double tv = 0.0;
  double acceptance_rate = 0.0;
  double Z = 0.0;
  /// Binomial standard error of the acceptance rate at Z.
  double standard_error = 0.0;
  std::size_t accepted = 0;
};

/// Runs the rejection sampler until `n_accepted` draws are collected (in
/// batches of `batch`) and compares with brute force.
template <class Backend>
SamplerComparison compare_sampler(const Backend& backend, const typename Backend::Input& x, Label y,
                                  const ModelPair<Backend>& models, std::span<const double> u, TiltConfig tilt,
                                  std::size_t n_accepted, std::uint64_t seed, std::size_t batch = 1000) {
  const auto target = enumerate_tilted(backend, x, y, models, u, tilt);
  std::vector<double> counts(target.mass.size(), 0.0);
  tilt.n_draws = batch;
  tilt.max_attempts = std::numeric_limits<std::size_t>::max() / 2;
  const auto post = posterior_pair(backend, x, models);
  Rng rng(seed);
  SamplerComparison out;
  std::size_t attempts = 0;
  while (out.accepted < n_accepted) {
    const auto set = rejection_sample(backend, x, y, models, post, u, tilt, rng, 0);
    for (const auto& d : set.draws) counts[target.cell(d.plus, d.minus)] += 1.0;
    out.accepted += set.accepted;
    attempts += set.attempts;
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    out.tv += std::abs(counts[c] / static_cast<double>(out.accepted) - target.mass[c]);
  }
  out.tv *= 0.5;
  out.acceptance_rate = static_cast<double>(out.accepted) / static_cast<double>(attempts);
  out.Z = target.Z;
  out.standard_error = std::sqrt(target.Z * (1.0 - target.Z) / static_cast<double>(attempts));
  return out;
}

/// Relative error |a - b| / max(|b|, floor), taking the worst entry.
inline double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8) {
  if (a.size() != b.size()) throw InvalidArgument("max_relative_error: length mismatch");
  double scale = floor;
  for (double v : b) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst / scale;
}

/// A random FeatureSet with unit-norm draws whose scores spread over [-3, 3].
inline FeatureSet random_feature_set(std::size_t dim, std::size_t n_draws, std::size_t m_l, std::size_t m_u, Rng& rng) {
  std::normal_distribution<double> normal;
  auto unit = [&] {
    Vector v(dim);
    for (double& x : v) x = normal(rng);
    const double n = norm(v);
    for (double& x : v) x /= n;
    return v;
  };
  FeatureSet fs;
  for (std::size_t i = 0; i < m_l + m_u; ++i) {
    ExampleFeatures ex{i < m_l ? (uniform01(rng) < 0.5 ? Label::positive : Label::negative) : Label::unlabeled, {}};
    for (std::size_t j = 0; j < n_draws; ++j) ex.phi_bar.push_back(unit());
    (i < m_l ? fs.labeled : fs.unlabeled).push_back(std::move(ex));
  }
  return fs;
}

// ---------------------------------------------------------------------------
// Self-verification suite
// ---------------------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool passed = false;
  double max_error = 0.0;
  double tolerance = 0.0;
};

/// Swappable pieces, so a fixture can plant a fault and watch a check fail.
struct SelftestHooks {
  std::function<Vector(const FeatureSet&, std::span<const double>, std::span<const double>, double)> grad_u =
      [](const FeatureSet& fs, std::span<const double> u, std::span<const double> u0, double C) {
        return sfm::grad_u(fs, u, u0, C);
      };
  std::function<double(double, double, double, double, double)> grad_C =
      [](double J_Q, double slope, double C, double delta, double m) { return sfm::grad_C(J_Q, slope, C, delta, m); };
  /// Accepted draws per sampler check.
  std::size_t sampler_draws = 100000;
};

namespace detail {

inline CheckResult finish(std::string name, double err, double tol) {
  return {std::move(name), std::isfinite(err) && err < tol, err, tol};
}

}  // namespace detail

inline CheckResult check_phi_identities() {
  double err = 0.0;
  for (int k = -600; k <= 600; ++k) {
    const double a = k / 100.0;
    err = std::max(err, std::abs(phi_tail(a) + phi_tail(-a) - 1.0));
  }
  err = std::max(err, std::abs(phi_tail(0.0) - 0.5));
  return detail::finish("phi complement identity", err, 1e-12);
}

inline CheckResult check_phi_derivative() {
  double err = 0.0;
  for (int k = -600; k <= 600; ++k) {
    const double a = k / 100.0;
    const double h = 1e-5;
    const double fd = (phi_tail(a + h) - phi_tail(a - h)) / (2 * h);
    err = std::max(err, std::abs(fd + gauss_pdf(a)));
  }
  return detail::finish("phi derivative vs finite differences", err, 1e-8);
}

inline CheckResult check_grad_u(const SelftestHooks& hooks, std::size_t instances = 20, std::uint64_t seed = 11) {
  double err = 0.0;
  for (std::size_t k = 0; k < instances; ++k) {
    Rng rng = make_stream(seed, {k});
    const std::size_t dim = 2 + uniform_index(29, rng);
    const std::size_t n = 1 + uniform_index(5, rng);
    const std::size_t m_l = 1 + uniform_index(20, rng);
    const std::size_t m_u = uniform_index(21, rng);
    const FeatureSet fs = random_feature_set(dim, n, m_l, m_u, rng);
    Vector u(dim), u0(dim);
    for (double& v : u) v = 2.0 * (2.0 * uniform01(rng) - 1.0);
    for (double& v : u0) v = 2.0 * uniform01(rng) - 1.0;
    const double C = 0.1 + 10.0 * uniform01(rng);
    const auto f = [&](std::span<const double> x) { return surrogate_objective(fs, x, u0, C); };
    const Vector fd = finite_diff_gradient(f, u, 1e-5);
    err = std::max(err, max_relative_error(hooks.grad_u(fs, u, u0, C), fd));
  }
  return detail::finish("grad_u vs finite differences", err, 1e-5);
}

inline CheckResult check_grad_C(const SelftestHooks& hooks) {
  struct Setting {
    double R, kl, C, delta, m;
  };
  const Setting settings[] = {
      {0.2, 5.0, 1.0, 0.05, 100.0}, {0.05, 1.0, 3.0, 0.01, 500.0}, {0.4, 20.0, 0.5, 0.1, 50.0},
      {0.1, 2.0, 8.0, 0.05, 1000.0}, {0.3, 0.5, 0.2, 0.005, 20.0},
  };
  double err = 0.0;
  for (const auto& s : settings) {
    const auto B = [&](double C) { return bound_supervised(s.R, s.kl, C, s.delta, s.m); };
    const double h = 1e-6 * std::max(1.0, s.C);
    const double fd = (B(s.C + h) - B(s.C - h)) / (2.0 * h);
    const double J_Q = s.C * s.R + s.kl / s.m;
    const double g = hooks.grad_C(J_Q, s.R, s.C, s.delta, s.m);
    err = std::max(err, std::abs(g - fd) / std::max(std::abs(fd), 1e-8));
  }
  return detail::finish("grad_C vs finite differences", err, 1e-4);
}

inline CheckResult check_risk_decomposition(std::uint64_t seed = 13) {
  double err = 0.0;
  for (int k = -600; k <= 600; ++k) {
    const double a = k / 100.0;
    err = std::max(err, std::abs(phi_tail(a) * phi_tail(a) + phi_tail(a) * phi_tail(-a) - phi_tail(a)));
  }
  for (std::size_t b = 0; b < 10; ++b) {
    Rng rng = make_stream(seed, {b});
    const std::size_t dim = 3 + uniform_index(10, rng);
    const FeatureSet fs = random_feature_set(dim, 1 + uniform_index(5, rng), 5 + uniform_index(20, rng), 0, rng);
    Vector u(dim);
    for (double& v : u) v = 3.0 * (2.0 * uniform01(rng) - 1.0);
    const auto r = empirical_risks(fs, u);
    err = std::max(err, std::abs(r.e_S + 0.5 * r.d_S - r.R_S));
  }
  return detail::finish("risk decomposition", err, 1e-10);
}

/// Two-component mixtures in one dimension, classes offset from each other.
inline ModelPair<gmm::GmmBackend> canned_gmm_pair() {
  return {gmm::make_params({0.4, 0.6}, {-1.0, 1.5}, {1.0, 0.5}), gmm::make_params({0.5, 0.5}, {0.5, -2.0}, {0.8, 1.2})};
}

/// Two-state, three-symbol chains with different dynamics.
inline ModelPair<hmm::HmmBackend> canned_hmm_pair() {
  return {hmm::make_params(2, 3, {0.7, 0.3}, {0.8, 0.2, 0.3, 0.7}, {0.6, 0.3, 0.1, 0.1, 0.3, 0.6}),
          hmm::make_params(2, 3, {0.4, 0.6}, {0.5, 0.5, 0.1, 0.9}, {0.2, 0.2, 0.6, 0.5, 0.4, 0.1})};
}

inline Vector canned_weights(std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Vector u(dim);
  for (double& v : u) v = 2.0 * uniform01(rng) - 1.0;
  return u;
}

inline std::vector<CheckResult> check_sampler_gmm(const SelftestHooks& hooks, std::uint64_t seed = 17) {
  const gmm::GmmBackend backend(gmm::GmmConfig{2, 1e-4, 1e-12});
  const auto models = canned_gmm_pair();
  const Vector u = canned_weights(2 * backend.block_dim(models.plus) + 1, seed);
  const TiltConfig tilt{1.5, 1, 1, 0, WeightScale::per_example, 1, 1000};
  const auto cmp = compare_sampler(backend, Vector{0.3}, Label::positive, models, u, tilt, hooks.sampler_draws, seed);
  return {detail::finish("gmm sampler total variation", cmp.tv, 0.02),
          detail::finish("gmm acceptance rate (standard errors)",
                         std::abs(cmp.acceptance_rate - cmp.Z) / cmp.standard_error, 3.0)};
}

inline std::vector<CheckResult> check_sampler_hmm(const SelftestHooks& hooks, std::uint64_t seed = 19) {
  const hmm::HmmBackend backend(hmm::HmmConfig{2, 3, 1e-8, 2});
  const auto models = canned_hmm_pair();
  const Vector u = canned_weights(2 * backend.block_dim(models.plus) + 1, seed);
  const TiltConfig tilt{1.5, 1, 1, 0, WeightScale::per_example, 1, 1000};
  const hmm::Sequence x{0, 2, 1, 2};
  const auto cmp = compare_sampler(backend, x, Label::negative, models, u, tilt, hooks.sampler_draws, seed);
  return {detail::finish("hmm sampler total variation", cmp.tv, 0.02),
          detail::finish("hmm acceptance rate (standard errors)",
                         std::abs(cmp.acceptance_rate - cmp.Z) / cmp.standard_error, 3.0)};
}

/// Forward-backward likelihood against a sum over every state path.
inline CheckResult check_hmm_likelihood() {
  const auto models = canned_hmm_pair();
  const hmm::HmmBackend backend(hmm::HmmConfig{2, 3, 1e-8, 2});
  double err = 0.0;
  for (const auto& x : {hmm::Sequence{0, 1}, hmm::Sequence{2, 2, 0}, hmm::Sequence{0, 2, 1, 2, 1}}) {
    for (const auto* p : {&models.plus, &models.minus}) {
      std::vector<double> logs;
      for (const auto& q : backend.enumerate_hidden(x, *p)) logs.push_back(backend.joint_log_density(x, q, *p));
      err = std::max(err, std::abs(log_sum_exp(logs) - backend.log_marginal(x, *p)));
    }
  }
  return detail::finish("hmm likelihood vs enumeration", err, 1e-10);
}

inline std::vector<CheckResult> run_selftest(const SelftestHooks& hooks = {}) {
  std::vector<CheckResult> out;
  out.push_back(check_phi_identities());
  out.push_back(check_phi_derivative());
  out.push_back(check_grad_u(hooks));
  out.push_back(check_grad_C(hooks));
  out.push_back(check_risk_decomposition());
  out.push_back(check_hmm_likelihood());
  for (auto& c : check_sampler_gmm(hooks)) out.push_back(std::move(c));
  for (auto& c : check_sampler_hmm(hooks)) out.push_back(std::move(c));
  return out;
}

/// One line per check: status, name, max observed error and tolerance.
inline bool report_selftest(std::ostream& out, const std::vector<CheckResult>& results) {
  bool all = true;
  for (const auto& r : results) {
    all = all && r.passed;
    char buf[64];
    std::snprintf(buf, sizeof buf, "max_error=%.3e tolerance=%.1e", r.max_error, r.tolerance);
    out << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << buf << "\n";
  }
  out << (all ? "selftest passed" : "selftest FAILED") << "\n";
  return all;
}

}  // namespace sfm
