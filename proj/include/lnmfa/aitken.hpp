#pragma once

#include <cmath>
#include <optional>

namespace lnmfa {

/// Aitken acceleration check on three consecutive objective values.
/// Computes a = (l+ - l) / (l - l-) and the asymptotic extrapolation
/// l_inf = l + (l+ - l) / (1 - a); reports convergence when l_inf is within
/// eps of the latest value. Never converged while a >= 1; a flat sequence is
/// converged; an underflowing denominator with a moving numerator is not.
inline bool aitken_converged(double l_prev2, double l_prev, double l_curr,
                             double eps = 1e-2) {
  constexpr double tiny = 1e-12;
  const double d1 = l_prev - l_prev2;
  const double d2 = l_curr - l_prev;
  if (std::abs(d1) < tiny) return std::abs(d2) < tiny;
  const double a = d2 / d1;
  if (a >= 1.0) return false;
  const double l_inf = l_prev + d2 / (1.0 - a);
  return std::abs(l_inf - l_curr) < eps;
}

/// Sweep-by-sweep Aitken tracker: keeps the previous asymptotic estimate and
/// declares convergence when two successive extrapolations agree within eps.
class AitkenMonitor {
 public:
  explicit AitkenMonitor(double eps = 1e-2) : eps_(eps) {}

  /// Feed the latest objective value; returns true once converged.
  bool push(double l) {
    constexpr double tiny = 1e-12;
    vals_[0] = vals_[1];
    vals_[1] = vals_[2];
    vals_[2] = l;
    ++count_;
    if (count_ < 3) return false;
    const double d1 = vals_[1] - vals_[0];
    const double d2 = vals_[2] - vals_[1];
    if (std::abs(d1) < tiny) return std::abs(d2) < tiny;
    const double a = d2 / d1;
    if (a >= 1.0) return false;  // not in the geometric regime yet
    const double l_inf = vals_[1] + d2 / (1.0 - a);
    const bool ok = prev_l_inf_ && std::abs(l_inf - *prev_l_inf_) < eps_;
    prev_l_inf_ = l_inf;
    return ok;
  }

 private:
  double eps_;
  int count_ = 0;
  double vals_[3] = {0, 0, 0};
  std::optional<double> prev_l_inf_;
};

}  // namespace lnmfa
