#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace lnmfa::detail {

/// log(sum_k exp(a_k) + 1), shifted by the running max so the implicit
/// reference term exp(0) = 1 never overflows, for any finite a.
inline double log_sum_exp_ref(const Eigen::ArrayXd& a) {
  const double shift = std::max(0.0, a.maxCoeff());
  return shift + std::log((a - shift).exp().sum() + std::exp(-shift));
}

/// s_k = exp(a_k) / (sum_j exp(a_j) + 1), same max-shift stabilization.
/// Entries are in (0, 1) and sum to strictly less than 1.
inline Eigen::ArrayXd softmax_ref(const Eigen::ArrayXd& a) {
  const double shift = std::max(0.0, a.maxCoeff());
  Eigen::ArrayXd e = (a - shift).exp();
  return e / (e.sum() + std::exp(-shift));
}

/// log(sum_k exp(a_k)) over a plain vector (no reference term).
inline double log_sum_exp(const Eigen::ArrayXd& a) {
  const double shift = a.maxCoeff();
  if (!std::isfinite(shift)) return shift;  // all -inf stays -inf
  return shift + std::log((a - shift).exp().sum());
}

}  // namespace lnmfa::detail
