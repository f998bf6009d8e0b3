#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "sfm/sfm.hpp"

namespace sfm::testing {

/// Two isotropic unit-variance Gaussians at (+offset, 0) and (-offset, 0),
/// alternating labels, drawn from `rng`.
struct ClusterData {
  std::vector<Vector> x;
  std::vector<Label> y;
};

inline ClusterData two_clusters(std::size_t per_class, double offset, Rng& rng) {
  std::normal_distribution<double> n;
  ClusterData d;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const bool pos = i % 2 == 0;
    d.x.push_back({n(rng) + (pos ? offset : -offset), n(rng)});
    d.y.push_back(pos ? Label::positive : Label::negative);
  }
  return d;
}

/// The Bayes rule for two_clusters: sign of the first coordinate.
inline double map_oracle_accuracy(const ClusterData& d) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < d.x.size(); ++i) ok += (d.x[i][0] > 0) == (d.y[i] == Label::positive) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(d.x.size());
}

inline hmm::Sequence sample_sequence(const hmm::HmmParams& p, std::size_t T, Rng& rng) {
  hmm::Sequence x;
  std::size_t s = sample_categorical(p.pi0, rng);
  for (std::size_t t = 0; t < T; ++t) {
    x.push_back(static_cast<int>(sample_categorical(std::span<const double>(p.B).subspan(s * p.K_out, p.K_out), rng)));
    s = sample_categorical(std::span<const double>(p.A).subspan(s * p.M, p.M), rng);
  }
  return x;
}

/// Exact log P(x) by summing over every state path; independent of the
/// library's forward recursion.
inline double brute_force_log_likelihood(const hmm::Sequence& x, const hmm::HmmParams& p) {
  const std::size_t T = x.size();
  std::vector<std::size_t> q(T, 0);
  double total = 0.0;
  while (true) {
    double pr = p.pi0[q[0]] * p.B[q[0] * p.K_out + static_cast<std::size_t>(x[0])];
    for (std::size_t t = 1; t < T; ++t) {
      pr *= p.A[q[t - 1] * p.M + q[t]] * p.B[q[t] * p.K_out + static_cast<std::size_t>(x[t])];
    }
    total += pr;
    std::size_t t = 0;
    while (t < T && ++q[t] == p.M) q[t++] = 0;
    if (t == T) break;
  }
  return std::log(total);
}

/// Generators of the two-HMM sequence task: a sticky chain against a
/// switching one, with overlapping emissions. The likelihood-ratio rule
/// scores about 0.985 at length 20.
inline std::pair<hmm::HmmParams, hmm::HmmParams> two_generators() {
  return {hmm::make_params(2, 4, {0.5, 0.5}, {0.85, 0.15, 0.15, 0.85},
                           {0.565, 0.215, 0.11, 0.11, 0.11, 0.11, 0.215, 0.565}),
          hmm::make_params(2, 4, {0.5, 0.5}, {0.2, 0.8, 0.8, 0.2},
                           {0.11, 0.565, 0.215, 0.11, 0.11, 0.215, 0.565, 0.11})};
}

struct SequenceData {
  std::vector<hmm::Sequence> x;
  std::vector<Label> y;
};

inline SequenceData two_hmm_sequences(std::size_t per_class, std::size_t T, Rng& rng) {
  const auto [gp, gn] = two_generators();
  SequenceData d;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const bool pos = i % 2 == 0;
    d.x.push_back(sample_sequence(pos ? gp : gn, T, rng));
    d.y.push_back(pos ? Label::positive : Label::negative);
  }
  return d;
}

/// Likelihood-ratio rule with the true generators.
inline double likelihood_ratio_accuracy(const SequenceData& d) {
  const auto [gp, gn] = two_generators();
  std::size_t ok = 0;
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    const bool pos = brute_force_log_likelihood(d.x[i], gp) > brute_force_log_likelihood(d.x[i], gn);
    ok += pos == (d.y[i] == Label::positive) ? 1 : 0;
  }
  return static_cast<double>(ok) / static_cast<double>(d.x.size());
}

/// Composite Simpson rule on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// Phi by direct tail quadrature, for |a| small enough that no cancellation
/// matters.
inline double phi_tail_by_quadrature(double a) {
  const double k = 1.0 / std::sqrt(2.0 * std::acos(-1.0));
  return simpson([&](double t) { return k * std::exp(-0.5 * t * t); }, a, 40.0, 200000);
}

}  // namespace sfm::testing
