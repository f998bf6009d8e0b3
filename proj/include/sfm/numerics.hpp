#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "sfm/errors.hpp"

namespace sfm {

using Vector = std::vector<double>;

namespace detail {
inline void require_finite(double a, const char* fn) {
  if (!std::isfinite(a)) {
    throw InvalidArgument(std::string(fn) + ": non-finite argument");
  }
}
}  // namespace detail

/// Upper tail of the standard normal, P(Z > a) = erfc(a / sqrt 2) / 2.
///
/// erfc keeps full relative precision in both tails, where 1 - cdf(a) would
/// cancel for large positive a.
inline double phi_tail(double a) {
  detail::require_finite(a, "phi_tail");
  return 0.5 * std::erfc(a / std::numbers::sqrt2);
}

/// Standard normal density (mean 0, std 1).
inline double gauss_pdf(double a) {
  detail::require_finite(a, "gauss_pdf");
  constexpr double kInvSqrt2Pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return kInvSqrt2Pi * std::exp(-0.5 * a * a);
}

/// Central-difference gradient of `f` at `x`.
inline Vector finite_diff_gradient(const std::function<double(std::span<const double>)>& f,
                                   std::span<const double> x, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("finite_diff_gradient: eps must be positive");
  Vector probe(x.begin(), x.end());
  Vector grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = probe[i];
    probe[i] = xi + eps;
    const double up = f(probe);
    probe[i] = xi - eps;
    const double down = f(probe);
    probe[i] = xi;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

/// log(sum(exp(v))); -inf for an empty span or all -inf entries.
inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

/// Floors every entry at `floor` and renormalizes so entries sum to one.
/// The result is (1 - n*floor) * p/sum(p) + floor, so every entry stays >= floor.
inline void floor_and_normalize(std::span<double> p, double floor) {
  double total = 0.0;
  for (double x : p) total += x;
  const double n = static_cast<double>(p.size());
  const double keep = 1.0 - n * floor;
  for (double& x : p) {
    const double base = total > 0.0 ? x / total : 1.0 / n;
    x = keep * base + floor;
  }
}

}  // namespace sfm
