#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "sfm/errors.hpp"
#include "sfm/feature_map.hpp"
#include "sfm/numerics.hpp"

namespace sfm {

/// Gaussian weight posterior N(u, I) with prior N(u0, I), plus the bound's
/// trade-off constant and confidence.
struct ClassifierState {
  Vector u;
  Vector u0;
  double C = 1.0;
  double delta = 0.05;

  void validate() const {
    if (u.size() != u0.size()) throw InvalidArgument("ClassifierState: u and u0 differ in dimension");
    if (!(C > 0.0)) throw InvalidArgument("ClassifierState: C must be positive");
    if (!(delta > 0.0 && delta <= 1.0)) throw InvalidArgument("ClassifierState: delta must lie in (0, 1]");
  }
};

/// Unit-normalized features of every accepted hidden draw of one example.
struct ExampleFeatures {
  Label y = Label::unlabeled;
  std::vector<Vector> phi_bar;
};

struct FeatureSet {
  std::vector<ExampleFeatures> labeled;
  std::vector<ExampleFeatures> unlabeled;

  std::size_t m_l() const { return labeled.size(); }
  std::size_t m_u() const { return unlabeled.size(); }
  std::size_t m() const { return labeled.size() + unlabeled.size(); }
};

/// Empirical risks, divergences and bounds at one classifier state.
///
/// `d_S` is the disagreement that enters the semi-supervised bound: measured
/// on the unlabeled set when there is one, otherwise on the labeled set, so
/// that e_S + d_S / 2 = R_S and both bounds coincide in supervised mode.
/// `d_Su` is the unlabeled-only disagreement used by the training objective
/// (zero without unlabeled data).
struct RiskReport {
  double e_S = 0.0;
  double d_S = 0.0;
  double d_Su = 0.0;
  double R_S = 0.0;
  double kl_w = 0.0;
  double kl_hidden = 0.0;
  double kl_total = 0.0;
  double J = 0.0;
  double J_Q = 0.0;
  double bound_supervised = std::numeric_limits<double>::quiet_NaN();
  double bound_semisupervised = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {
inline void require_unit(std::span<const double> phi_bar) {
  if (std::abs(norm(phi_bar) - 1.0) > 1e-6) throw ContractViolation("phi_bar must have unit norm");
}
inline double label_sign(Label y) {
  if (y == Label::unlabeled) throw InvalidArgument("a labeled example is required here");
  return static_cast<double>(sign_of(y));
}
}  // namespace detail

/// E_{w~N(u,I)} I(sign(w.phi_bar) != y) = Phi(y u.phi_bar).
inline double expected_error(std::span<const double> u, std::span<const double> phi_bar, Label y) {
  detail::require_unit(phi_bar);
  return phi_tail(detail::label_sign(y) * dot(u, phi_bar));
}

/// Probability that two independent weight draws disagree: 2 Phi(a) Phi(-a).
inline double expected_disagreement(std::span<const double> u, std::span<const double> phi_bar) {
  detail::require_unit(phi_bar);
  const double a = dot(u, phi_bar);
  return 2.0 * phi_tail(a) * phi_tail(-a);
}

/// KL(N(u, I) || N(u0, I)).
inline double kl_weights(std::span<const double> u, std::span<const double> u0) {
  if (u.size() != u0.size()) throw InvalidArgument("kl_weights: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - u0[i]) * (u[i] - u0[i]);
  return 0.5 * s;
}

/// e_S, d_S, d_Su and R_S of the Gibbs classifier on sampled features.
///
/// e_S pairs the two independent weight draws on the same hidden sample,
/// Phi(y a)^2 per draw. With `exact_pairing` the two draws also use
/// independent hidden samples, (mean_j Phi(y a_j))^2 per example.
inline RiskReport empirical_risks(const FeatureSet& fs, std::span<const double> u, bool exact_pairing = false) {
  if (fs.labeled.empty()) throw InvalidArgument("empirical_risks: labeled set is empty");
  RiskReport r;

  auto disagreement = [&](const ExampleFeatures& ex) {
    if (ex.phi_bar.empty()) throw InvalidArgument("empirical_risks: example without hidden samples");
    const double n = static_cast<double>(ex.phi_bar.size());
    if (!exact_pairing) {
      double s = 0.0;
      for (const auto& f : ex.phi_bar) s += expected_disagreement(u, f);
      return s / n;
    }
    double up = 0.0, down = 0.0;
    for (const auto& f : ex.phi_bar) {
      detail::require_unit(f);
      const double a = dot(u, f);
      up += phi_tail(a);
      down += phi_tail(-a);
    }
    return 2.0 * (up / n) * (down / n);
  };

  double e = 0.0, risk = 0.0, d_l = 0.0;
  for (const auto& ex : fs.labeled) {
    if (ex.phi_bar.empty()) throw InvalidArgument("empirical_risks: example without hidden samples");
    const double n = static_cast<double>(ex.phi_bar.size());
    double err = 0.0, err_sq = 0.0;
    for (const auto& f : ex.phi_bar) {
      const double p = expected_error(u, f, ex.y);
      err += p;
      err_sq += p * p;
    }
    risk += err / n;
    e += exact_pairing ? (err / n) * (err / n) : err_sq / n;
    d_l += disagreement(ex);
  }
  const double m_l = static_cast<double>(fs.labeled.size());
  r.R_S = risk / m_l;
  r.e_S = e / m_l;

  if (fs.unlabeled.empty()) {
    r.d_Su = 0.0;
    r.d_S = d_l / m_l;
  } else {
    double d_u = 0.0;
    for (const auto& ex : fs.unlabeled) d_u += disagreement(ex);
    r.d_Su = d_u / static_cast<double>(fs.unlabeled.size());
    r.d_S = r.d_Su;
  }
  return r;
}

/// The C-free part of the surrogate: labeled Gibbs risk plus half the
/// unlabeled disagreement, each averaged over examples and their draws.
inline double risk_objective(const FeatureSet& fs, std::span<const double> u) {
  double s = 0.0;
  if (!fs.labeled.empty()) {
    double lab = 0.0;
    for (const auto& ex : fs.labeled) {
      double acc = 0.0;
      for (const auto& f : ex.phi_bar) acc += phi_tail(detail::label_sign(ex.y) * dot(u, f));
      lab += acc / static_cast<double>(ex.phi_bar.size());
    }
    s += lab / static_cast<double>(fs.labeled.size());
  }
  if (!fs.unlabeled.empty()) {
    double unl = 0.0;
    for (const auto& ex : fs.unlabeled) {
      double acc = 0.0;
      for (const auto& f : ex.phi_bar) {
        const double a = dot(u, f);
        acc += phi_tail(a) * phi_tail(-a);
      }
      unl += acc / static_cast<double>(ex.phi_bar.size());
    }
    s += unl / static_cast<double>(fs.unlabeled.size());
  }
  return s;
}

inline Vector risk_objective_gradient(const FeatureSet& fs, std::span<const double> u) {
  Vector g(u.size(), 0.0);
  auto axpy = [&g](double c, const Vector& f) {
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += c * f[k];
  };
  if (!fs.labeled.empty()) {
    const double scale = 1.0 / static_cast<double>(fs.labeled.size());
    for (const auto& ex : fs.labeled) {
      const double y = detail::label_sign(ex.y);
      const double w = scale / static_cast<double>(ex.phi_bar.size());
      for (const auto& f : ex.phi_bar) axpy(-w * gauss_pdf(y * dot(u, f)) * y, f);
    }
  }
  if (!fs.unlabeled.empty()) {
    const double scale = 1.0 / static_cast<double>(fs.unlabeled.size());
    for (const auto& ex : fs.unlabeled) {
      const double w = scale / static_cast<double>(ex.phi_bar.size());
      for (const auto& f : ex.phi_bar) {
        const double a = dot(u, f);
        axpy(w * gauss_pdf(a) * (phi_tail(a) - phi_tail(-a)), f);
      }
    }
  }
  return g;
}

/// J(u) = |u - u0|^2 / 2m + C * risk_objective(u), with m = m_l + m_u.
inline double surrogate_objective(const FeatureSet& fs, std::span<const double> u, std::span<const double> u0,
                                  double C) {
  const double m = static_cast<double>(fs.m());
  if (m == 0.0) throw InvalidArgument("surrogate_objective: no examples");
  return kl_weights(u, u0) / m + C * risk_objective(fs, u);
}

inline Vector grad_u(const FeatureSet& fs, std::span<const double> u, std::span<const double> u0, double C) {
  const double m = static_cast<double>(fs.m());
  if (m == 0.0) throw InvalidArgument("grad_u: no examples");
  if (u.size() != u0.size()) throw InvalidArgument("grad_u: dimension mismatch");
  Vector g = risk_objective_gradient(fs, u);
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = (u[k] - u0[k]) / m + C * g[k];
  return g;
}

namespace detail {
inline void check_bound_args(double C, double delta, double m) {
  if (!(C > 0.0)) throw InvalidArgument("bound: C must be positive");
  if (!(delta > 0.0 && delta <= 1.0)) throw InvalidArgument("bound: delta must lie in (0, 1]");
  if (!(m >= 1.0)) throw InvalidArgument("bound: m must be at least 1");
}
}  // namespace detail

/// Explicit PAC-Bayes bound on the true Gibbs risk, holding with probability
/// at least 1 - delta:
///   (1 - exp(-C R_S - (KL - ln delta) / m)) / (1 - exp(-C)).
/// Returned unclamped; see clamp_bound.
inline double bound_supervised(double R_S, double kl_total, double C, double delta, double m) {
  detail::check_bound_args(C, delta, m);
  if (!(R_S >= 0.0 && R_S <= 1.0)) throw InvalidArgument("bound_supervised: R_S outside [0, 1]");
  if (!(kl_total >= 0.0)) throw InvalidArgument("bound_supervised: KL must be nonnegative");
  return -std::expm1(-C * R_S - (kl_total - std::log(delta)) / m) / -std::expm1(-C);
}

/// Same bound with the empirical risk written as e_S + d_S / 2.
inline double bound_semisupervised(double e_S, double d_S, double kl_total, double C, double delta, double m) {
  return bound_supervised(e_S + 0.5 * d_S, kl_total, C, delta, m);
}

inline double clamp_bound(double raw) { return std::min(raw, 1.0); }

/// dB/dC for B(C) = (1 - exp(-J(C) + ln(delta) / m)) / (1 - exp(-C)), where
/// `J_Q` is J at the current C and `risk_slope` = dJ/dC, the C-weighted risk
/// (e_S + d_S / 2 when the hidden KL is held fixed).
inline double grad_C(double J_Q, double risk_slope, double C, double delta, double m) {
  detail::check_bound_args(C, delta, m);
  const double e = std::exp(-C);
  const double one_minus = -std::expm1(-C);
  const double tail = std::exp(-J_Q + std::log(delta) / m);
  return -e / (one_minus * one_minus) * (1.0 - tail) + risk_slope * tail / one_minus;
}

/// KL(Q_i || P(h | x_i)) of one tilted hidden posterior, estimated from the
/// accepted draws' mean tilt exponent and the acceptance rate Z_i:
/// E_Q[log Q/P] = E_Q[exponent] - log Z_i. Clamped at zero.
inline double hidden_kl_estimate(double mean_exponent, double acceptance_rate, std::size_t attempts) {
  const double floor_rate = 0.5 / static_cast<double>(std::max<std::size_t>(attempts, 1));
  const double z = std::max(acceptance_rate, floor_rate);
  return std::max(0.0, mean_exponent - std::log(z));
}

}  // namespace sfm
