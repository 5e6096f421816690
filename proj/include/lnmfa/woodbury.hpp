#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <string>

#include "lnmfa/elbo.hpp"
#include "lnmfa/errors.hpp"

namespace lnmfa {

/// Inverse and log-determinant of Sigma = Lambda Lambda' + D through the
/// low-rank identity, so the only factorization is q x q:
///   Sigma^-1 = D^-1 - D^-1 Lambda (I_q + Lambda' D^-1 Lambda)^-1 Lambda' D^-1
///   log|Sigma| = log|I_q + Lambda' D^-1 Lambda| + sum_k log d_k
inline SigmaFactor woodbury_inverse(const MatrixXd& lambda, const VectorXd& d) {
  const Eigen::Index K = d.size();
  for (Eigen::Index k = 0; k < K; ++k)
    if (!(d[k] > 0.0))
      throw NumericError("woodbury_inverse: noise variance entry " + std::to_string(k) +
                         " is not positive");
  SigmaFactor f;
  const VectorXd dinv = d.cwiseInverse();
  if (lambda.cols() == 0) {
    f.inv = dinv.asDiagonal();
    f.log_det = d.array().log().sum();
    return f;
  }
  const MatrixXd b = dinv.asDiagonal() * lambda;  // D^-1 Lambda
  MatrixXd core = lambda.transpose() * b;
  core.diagonal().array() += 1.0;
  Eigen::LLT<MatrixXd> llt(core);
  if (llt.info() != Eigen::Success)
    throw NumericError("woodbury_inverse: core matrix not SPD");
  f.inv = -b * llt.solve(b.transpose());
  f.inv.diagonal() += dinv;
  f.log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum() +
              d.array().log().sum();
  return f;
}

}  // namespace lnmfa
