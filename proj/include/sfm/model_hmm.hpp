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
#include "sfm/random.hpp"

namespace sfm::hmm {

using Sequence = std::vector<int>;

struct HmmConfig {
  std::size_t M = 10;
  std::size_t K_out = 22;
  /// Applied to every re-estimated row and to the per-example transition
  /// posterior before its log enters the features.
  double prob_floor = 1e-8;
  std::size_t min_length = 2;
};

/// Discrete-output HMM. A is M x M and B is M x K_out, both row-major and
/// row-stochastic.
struct HmmParams {
  std::size_t M = 0;
  std::size_t K_out = 0;
  Vector pi0;
  Vector A;
  Vector B;

  double trans(std::size_t i, std::size_t j) const { return A[i * M + j]; }
  double emit(std::size_t i, int symbol) const { return B[i * K_out + static_cast<std::size_t>(symbol)]; }

  bool operator==(const HmmParams&) const = default;
};

/// Hidden state per time step, t = 0 .. T-1.
struct StatePath {
  std::size_t M = 0;
  std::vector<std::size_t> states;

  bool operator==(const StatePath&) const = default;
};

/// Exact posterior of the state chain for one sequence.
///
/// `alpha` holds the normalized forward (filtering) distributions, which is
/// what backward sampling needs. `A_post` is the per-example transition
/// posterior, floored and row-normalized.
struct HmmPosterior {
  std::size_t T = 0;
  std::size_t M = 0;
  std::size_t K_out = 0;
  Vector alpha;
  Vector gamma;
  Vector xi;
  Vector A_post;
  double log_likelihood = 0.0;

  double gamma_at(std::size_t t, std::size_t i) const { return gamma[t * M + i]; }
  double xi_at(std::size_t t, std::size_t i, std::size_t j) const { return xi[(t * M + i) * M + j]; }
};

inline HmmParams make_params(std::size_t M, std::size_t K_out, Vector pi0, Vector A, Vector B) {
  if (pi0.size() != M || A.size() != M * M || B.size() != M * K_out) {
    throw InvalidArgument("hmm::make_params: inconsistent shapes");
  }
  return HmmParams{M, K_out, std::move(pi0), std::move(A), std::move(B)};
}

inline void check_tokens(std::span<const int> x, std::size_t K_out) {
  if (x.empty()) throw InvalidSequence("hmm: empty sequence");
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (x[t] < 0 || static_cast<std::size_t>(x[t]) >= K_out) {
      throw InvalidSequence("hmm: token " + std::to_string(x[t]) + " at position " + std::to_string(t) +
                            " outside alphabet of size " + std::to_string(K_out));
    }
  }
}

/// Scaled forward-backward recursions.
inline HmmPosterior forward_backward(std::span<const int> x, const HmmParams& p, double prob_floor = 1e-8) {
  check_tokens(x, p.K_out);
  const std::size_t T = x.size();
  const std::size_t M = p.M;
  HmmPosterior post;
  post.T = T;
  post.M = M;
  post.K_out = p.K_out;
  post.alpha.assign(T * M, 0.0);
  Vector scale(T, 0.0);

  for (std::size_t i = 0; i < M; ++i) post.alpha[i] = p.pi0[i] * p.emit(i, x[0]);
  for (std::size_t t = 0; t < T; ++t) {
    if (t > 0) {
      for (std::size_t j = 0; j < M; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < M; ++i) s += post.alpha[(t - 1) * M + i] * p.trans(i, j);
        post.alpha[t * M + j] = s * p.emit(j, x[t]);
      }
    }
    double c = 0.0;
    for (std::size_t i = 0; i < M; ++i) c += post.alpha[t * M + i];
    if (!(c > 0.0)) {
      throw InvalidSequence("hmm: sequence has zero probability under the model at position " + std::to_string(t));
    }
    for (std::size_t i = 0; i < M; ++i) post.alpha[t * M + i] /= c;
    scale[t] = c;
    post.log_likelihood += std::log(c);
  }

  Vector beta(T * M, 1.0);
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t i = 0; i < M; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < M; ++j) s += p.trans(i, j) * p.emit(j, x[t + 1]) * beta[(t + 1) * M + j];
      beta[t * M + i] = s / scale[t + 1];
    }
  }

  post.gamma.assign(T * M, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
      post.gamma[t * M + i] = post.alpha[t * M + i] * beta[t * M + i];
      s += post.gamma[t * M + i];
    }
    for (std::size_t i = 0; i < M; ++i) post.gamma[t * M + i] /= s;
  }

  post.xi.assign((T - 1) * M * M, 0.0);
  Vector counts(M * M, 0.0);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t j = 0; j < M; ++j) {
        const double v = post.alpha[t * M + i] * p.trans(i, j) * p.emit(j, x[t + 1]) * beta[(t + 1) * M + j];
        post.xi[(t * M + i) * M + j] = v;
        s += v;
      }
    }
    for (std::size_t ij = 0; ij < M * M; ++ij) {
      post.xi[t * M * M + ij] /= s;
      counts[ij] += post.xi[t * M * M + ij];
    }
  }

  post.A_post = counts;
  for (std::size_t i = 0; i < M; ++i) {
    floor_and_normalize(std::span<double>(post.A_post).subspan(i * M, M), prob_floor);
  }
  return post;
}

/// Forward-filter backward-sample: an exact draw from P(q | x, theta).
inline StatePath sample_path(const HmmParams& p, const HmmPosterior& post, Rng& rng) {
  const std::size_t T = post.T;
  const std::size_t M = post.M;
  StatePath q{M, std::vector<std::size_t>(T)};
  q.states[T - 1] = sample_categorical(std::span<const double>(post.alpha).subspan((T - 1) * M, M), rng);
  Vector w(M);
  for (std::size_t t = T - 1; t-- > 0;) {
    const std::size_t next = q.states[t + 1];
    for (std::size_t i = 0; i < M; ++i) w[i] = post.alpha[t * M + i] * p.trans(i, next);
    q.states[t] = sample_categorical(w, rng);
  }
  return q;
}

/// [q^0 (M); transition counts (M*M); counts * log A_post (M*M);
///  state-symbol co-occurrence counts (M*K_out)].
inline FeatureBlock feature_block_hmm(std::span<const int> x, const StatePath& q, std::span<const double> A_post,
                                      std::size_t K_out) {
  const std::size_t M = q.M;
  FeatureBlock block(M + 2 * M * M + M * K_out, 0.0);
  const std::size_t trans_off = M;
  const std::size_t log_off = M + M * M;
  const std::size_t emit_off = M + 2 * M * M;
  block[q.states[0]] = 1.0;
  for (std::size_t t = 0; t + 1 < q.states.size(); ++t) {
    const std::size_t ij = q.states[t] * M + q.states[t + 1];
    block[trans_off + ij] += 1.0;
    block[log_off + ij] += std::log(A_post[ij]);
  }
  for (std::size_t t = 0; t < q.states.size(); ++t) {
    block[emit_off + q.states[t] * K_out + static_cast<std::size_t>(x[t])] += 1.0;
  }
  return block;
}

inline double joint_log_density_hmm(std::span<const int> x, const StatePath& q, const HmmParams& p) {
  double s = std::log(p.pi0[q.states[0]]);
  for (std::size_t t = 0; t < q.states.size(); ++t) {
    if (t + 1 < q.states.size()) s += std::log(p.trans(q.states[t], q.states[t + 1]));
    s += std::log(p.emit(q.states[t], x[t]));
  }
  return s;
}

/// Weighted re-estimation of pi0, A and B from sampled paths. Rows without
/// any mass keep their previous values; every row is floored afterwards.
inline MStepResult<HmmParams> m_step_hmm(std::span<const WeightedSample<Sequence, StatePath>> samples,
                                              const HmmParams& previous, double prob_floor = 1e-8) {
  const std::size_t M = previous.M;
  const std::size_t K = previous.K_out;
  Vector pi(M, 0.0), A(M * M, 0.0), B(M * K, 0.0);
  double total = 0.0;
  for (const auto& s : samples) {
    if (s.weight <= 0.0) continue;
    const auto& states = s.h.states;
    total += s.weight;
    pi[states[0]] += s.weight;
    for (std::size_t t = 0; t < states.size(); ++t) {
      if (t + 1 < states.size()) A[states[t] * M + states[t + 1]] += s.weight;
      B[states[t] * K + static_cast<std::size_t>((*s.x)[t])] += s.weight;
    }
  }
  if (!(total > 0.0)) return {previous, false};

  HmmParams next = previous;
  auto refresh_row = [prob_floor](std::span<double> target, std::span<const double> counts) {
    double mass = 0.0;
    for (double c : counts) mass += c;
    if (mass > 0.0) std::copy(counts.begin(), counts.end(), target.begin());
    floor_and_normalize(target, prob_floor);
  };
  refresh_row(next.pi0, pi);
  for (std::size_t i = 0; i < M; ++i) {
    refresh_row(std::span<double>(next.A).subspan(i * M, M), std::span<const double>(A).subspan(i * M, M));
    refresh_row(std::span<double>(next.B).subspan(i * K, K), std::span<const double>(B).subspan(i * K, K));
  }
  return {std::move(next), true};
}

class HmmBackend {
 public:
  using Input = Sequence;
  using Params = HmmParams;
  using Posterior = HmmPosterior;
  using Hidden = StatePath;

  static constexpr const char* kName = "hmm";

  HmmBackend() = default;
  explicit HmmBackend(HmmConfig cfg) : cfg_(cfg) {
    if (cfg_.M == 0 || cfg_.K_out == 0) throw InvalidArgument("hmm: M and K_out must be positive");
    if (!(cfg_.prob_floor > 0.0) || cfg_.prob_floor * static_cast<double>(std::max(cfg_.M, cfg_.K_out)) >= 1.0) {
      throw InvalidArgument("hmm: prob_floor out of range");
    }
  }

  const HmmConfig& config() const { return cfg_; }

  void validate(const Input& x, const Params& p) const {
    check_tokens(x, p.K_out);
    if (x.size() < cfg_.min_length) {
      throw InvalidSequence("hmm: sequence of length " + std::to_string(x.size()) + " is shorter than " +
                            std::to_string(cfg_.min_length));
    }
  }

  Posterior approx_posterior(const Input& x, const Params& p) const { return forward_backward(x, p, cfg_.prob_floor); }

  Hidden sample_hidden(const Input&, const Params& p, const Posterior& post, Rng& rng) const {
    return sample_path(p, post, rng);
  }

  double joint_log_density(const Input& x, const Hidden& q, const Params& p) const {
    return joint_log_density_hmm(x, q, p);
  }

  FeatureBlock feature_block(const Input& x, const Hidden& q, const Posterior& post) const {
    return feature_block_hmm(x, q, post.A_post, post.K_out);
  }

  Params update_parameters(std::span<const WeightedSample<Input, Hidden>> samples, const Params& previous) const {
    return m_step_hmm(samples, previous, cfg_.prob_floor).params;
  }

  std::size_t block_dim(const Params& p) const { return p.M + 2 * p.M * p.M + p.M * p.K_out; }

  double log_marginal(const Input& x, const Params& p) const { return forward_backward(x, p, cfg_.prob_floor).log_likelihood; }

  /// All M^T state paths; only for tiny instances.
  std::vector<Hidden> enumerate_hidden(const Input& x, const Params& p) const {
    const std::size_t T = x.size();
    double count = std::pow(static_cast<double>(p.M), static_cast<double>(T));
    if (count > 1e6) throw InvalidArgument("hmm: path space too large to enumerate");
    std::vector<Hidden> out;
    StatePath q{p.M, std::vector<std::size_t>(T, 0)};
    while (true) {
      out.push_back(q);
      std::size_t t = 0;
      while (t < T && ++q.states[t] == p.M) q.states[t++] = 0;
      if (t == T) break;
    }
    return out;
  }

  /// Uniform initial distribution, near-uniform random transitions, and
  /// emissions from the pooled symbol frequencies with random perturbation.
  Params initialize(std::span<const Input* const> inputs, Rng& rng) const {
    const std::size_t M = cfg_.M;
    const std::size_t K = cfg_.K_out;
    Vector freq(K, 1.0);
    for (const Input* x : inputs) {
      for (int s : *x) {
        if (s >= 0 && static_cast<std::size_t>(s) < K) freq[static_cast<std::size_t>(s)] += 1.0;
      }
    }
    Params p;
    p.M = M;
    p.K_out = K;
    p.pi0.assign(M, 1.0);
    floor_and_normalize(p.pi0, cfg_.prob_floor);
    p.A.resize(M * M);
    p.B.resize(M * K);
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t j = 0; j < M; ++j) p.A[i * M + j] = 1.0 + uniform01(rng);
      for (std::size_t k = 0; k < K; ++k) p.B[i * K + k] = freq[k] * (0.5 + uniform01(rng));
      floor_and_normalize(std::span<double>(p.A).subspan(i * M, M), cfg_.prob_floor);
      floor_and_normalize(std::span<double>(p.B).subspan(i * K, K), cfg_.prob_floor);
    }
    return p;
  }

 private:
  HmmConfig cfg_{};
};

static_assert(GenerativeBackend<HmmBackend>);

}  // namespace sfm::hmm
