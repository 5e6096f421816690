#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "lnmfa/math_detail.hpp"

namespace lnmfa {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Observed counts: n samples by K+1 taxa, last column is the log-ratio
/// reference. Stored as doubles but every entry is a nonnegative integer and
/// every row has at least one count.
struct CountMatrix {
  MatrixXd w;
  std::vector<std::string> taxa_names;
  std::vector<std::string> sample_ids;

  Eigen::Index n() const { return w.rows(); }
  Eigen::Index n_taxa() const { return w.cols(); }
  /// Latent dimension K = number of taxa minus the reference.
  Eigen::Index K() const { return w.cols() - 1; }

  void validate() const {
    if (w.cols() < 2) throw std::invalid_argument("count matrix needs at least 2 taxa");
    if (!taxa_names.empty() && static_cast<Eigen::Index>(taxa_names.size()) != w.cols())
      throw std::invalid_argument("taxa name count does not match column count");
    if (!sample_ids.empty() && static_cast<Eigen::Index>(sample_ids.size()) != w.rows())
      throw std::invalid_argument("sample id count does not match row count");
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      double rowsum = 0;
      for (Eigen::Index k = 0; k < w.cols(); ++k) {
        const double c = w(i, k);
        if (!(c >= 0) || c != std::floor(c))
          throw std::invalid_argument("count matrix entry at row " + std::to_string(i) +
                                      ", col " + std::to_string(k) +
                                      " is not a nonnegative integer");
        rowsum += c;
      }
      if (rowsum < 1)
        throw std::invalid_argument("count matrix row " + std::to_string(i) +
                                    " sums to zero");
    }
  }
};

/// Additive log-ratio transform: y_k = log(p_k / p_{K+1}), last entry of p is
/// the reference. Requires a strictly positive composition.
inline VectorXd alr(const VectorXd& p) {
  const Eigen::Index kp1 = p.size();
  if (kp1 < 2) throw std::domain_error("alr: composition needs at least 2 entries");
  for (Eigen::Index k = 0; k < kp1; ++k) {
    if (!(p[k] > 0.0))
      throw std::domain_error("alr: entry " + std::to_string(k) +
                              " is not strictly positive");
  }
  const double log_ref = std::log(p[kp1 - 1]);
  VectorXd y(kp1 - 1);
  for (Eigen::Index k = 0; k + 1 < kp1; ++k) y[k] = std::log(p[k]) - log_ref;
  return y;
}

/// Inverse additive log-ratio. Max-shift stabilized: finite y of any
/// magnitude maps strictly inside the simplex and sums to one.
inline VectorXd alr_inv(const VectorXd& y) {
  const Eigen::Index K = y.size();
  const double shift = std::max(0.0, y.maxCoeff());
  Eigen::ArrayXd e = (y.array() - shift).exp();
  const double eref = std::exp(-shift);
  const double denom = e.sum() + eref;
  VectorXd p(K + 1);
  p.head(K) = (e / denom).matrix();
  p[K] = eref / denom;
  return p;
}

/// Replace zero counts by a small pseudo-count. Initialization helper only;
/// likelihood evaluation always uses the raw counts.
inline MatrixXd replace_zeros(const CountMatrix& counts, double pseudo = 0.001) {
  if (!(pseudo > 0.0)) throw std::invalid_argument("replace_zeros: pseudo must be > 0");
  MatrixXd out = counts.w;
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index k = 0; k < out.cols(); ++k)
      if (out(i, k) == 0.0) out(i, k) = pseudo;
  return out;
}

/// Row-normalized compositions of a positive matrix (e.g. zero-replaced counts).
inline MatrixXd to_compositions(const MatrixXd& positive_counts) {
  MatrixXd p = positive_counts;
  for (Eigen::Index i = 0; i < p.rows(); ++i) p.row(i) /= p.row(i).sum();
  return p;
}

}  // namespace lnmfa
