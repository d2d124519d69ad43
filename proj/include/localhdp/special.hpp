#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Core>
#include <boost/math/special_functions/digamma.hpp>

namespace localhdp::math {

inline double digamma(double x) { return boost::math::digamma(x); }

/// log Σ exp(x_i), stable for any finite input.
template <typename Derived>
double log_sum_exp(const Eigen::DenseBase<Derived>& x) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum());
}

/// Replaces each row of `logits` by its softmax.
template <typename Derived>
void softmax_rows(Eigen::DenseBase<Derived>& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double m = row.maxCoeff();
    row = (row.array() - m).exp();
    row /= row.sum();
  }
}

/// Σ p log p with the 0 log 0 = 0 convention.
template <typename Derived>
double neg_entropy(const Eigen::DenseBase<Derived>& p) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      if (p(i, j) > 0.0) s += p(i, j) * std::log(p(i, j));
  return s;
}

/// E[log Beta(a, b) density] evaluated under itself, i.e. minus its entropy.
inline double beta_neg_entropy(double a, double b) {
  const double dab = digamma(a + b);
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * (digamma(a) - dab) +
         (b - 1.0) * (digamma(b) - dab);
}

/// E[log σ_k] for the truncated stick-breaking construction with
/// Beta(first_k, second_k) proportions; the last stick takes the remainder.
inline Eigen::VectorXd expected_log_sticks(const Eigen::VectorXd& first, const Eigen::VectorXd& second) {
  const auto n = first.size();
  Eigen::VectorXd out(n + 1);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double dsum = digamma(first[k] + second[k]);
    out[k] = digamma(first[k]) - dsum + acc;
    acc += digamma(second[k]) - dsum;
  }
  out[n] = acc;
  return out;
}

/// σ_k = E[β'_k] Π_{l<k} (1 − E[β'_l]) with E[β'_last] = 1.
inline Eigen::VectorXd expected_sticks(const Eigen::VectorXd& first, const Eigen::VectorXd& second) {
  const auto n = first.size();
  Eigen::VectorXd out(n + 1);
  double rest = 1.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double p = first[k] / (first[k] + second[k]);
    out[k] = rest * p;
    rest *= 1.0 - p;
  }
  out[n] = rest;
  return out;
}

}  // namespace localhdp::math
