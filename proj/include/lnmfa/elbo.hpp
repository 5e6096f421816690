#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "lnmfa/errors.hpp"
#include "lnmfa/math_detail.hpp"

namespace lnmfa {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Gaussian variational site q(y) = N(m, diag(v^2)) for one observation and
/// one component. v holds standard deviations, all strictly positive.
struct VariationalSite {
  VectorXd m;
  VectorXd v;
};

/// Gaussian variational factor posterior q(u) = N(mtilde, vtilde).
struct FactorSite {
  VectorXd mtilde;
  MatrixXd vtilde;
};

/// log multinomial coefficient log( (sum w)! / prod w_k! ) via log-gamma.
inline double multinomial_log_coeff(const VectorXd& w) {
  double total = 0.0, sum_lg = 0.0;
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    const double c = w[k];
    if (!(c >= 0) || c != std::floor(c))
      throw std::invalid_argument("multinomial_log_coeff: counts must be nonnegative integers");
    total += c;
    sum_lg += std::lgamma(c + 1.0);
  }
  return std::lgamma(total + 1.0) - sum_lg;
}

/// Inverse and log-determinant of a covariance, however obtained (dense
/// factorization or the low-rank identity in woodbury.hpp).
struct SigmaFactor {
  MatrixXd inv;
  double log_det = 0.0;
};

/// Dense SPD factorization. Throws NumericError when the Cholesky fails.
inline SigmaFactor factor_spd(const MatrixXd& sigma) {
  Eigen::LLT<MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw NumericError("factor_spd: matrix of size " + std::to_string(sigma.rows()) +
                       " is not symmetric positive definite");
  SigmaFactor f;
  f.inv = llt.solve(MatrixXd::Identity(sigma.rows(), sigma.cols()));
  f.log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return f;
}

namespace detail {

// Reusable per-thread buffers for the bound evaluations and the Newton
// iteration; the engine touches these millions of times per fit.
struct EvalScratch {
  ArrayXd a, e, s;
  VectorXd delta, tmp_k, siginv_delta, score, dir, x0, dm, dv;
  VectorXd tmp_q;
  MatrixXd mat;

  void resize_k(Eigen::Index K) {
    if (a.size() == K) return;
    a.resize(K);
    e.resize(K);
    s.resize(K);
    delta.resize(K);
    tmp_k.resize(K);
    siginv_delta.resize(K);
    score.resize(K);
    dir.resize(K);
    x0.resize(K);
    dm.resize(K);
    dv.resize(K);
    mat.resize(K, K);
  }
  void resize_q(Eigen::Index q) {
    if (tmp_q.size() != q) tmp_q.resize(q);
  }
};

inline EvalScratch& tls_scratch() {
  static thread_local EvalScratch ws;
  return ws;
}

// Fills ws.a and ws.e and returns log(sum_k exp(a_k) + 1) with max-shift
// stabilization; optionally fills the softmax ws.s against the same shift.
inline double lse_ref(const VariationalSite& site, EvalScratch& ws, bool want_softmax) {
  ws.a = site.m.array() + 0.5 * site.v.array().square();
  const double shift = std::max(0.0, ws.a.maxCoeff());
  ws.e = (ws.a - shift).exp();
  const double denom = ws.e.sum() + std::exp(-shift);
  if (want_softmax) ws.s = ws.e / denom;
  return shift + std::log(denom);
}

// Shared cycle-1 evaluation; C is the per-observation multinomial constant,
// total = sum of all K+1 counts, wstar the first K counts.
inline double elbo1_core(double C, const VectorXd& wstar, double total,
                         const VariationalSite& site, const VectorXd& mu,
                         const SigmaFactor& sf, EvalScratch& ws) {
  const Eigen::Index K = site.m.size();
  ws.resize_k(K);
  const double lse = lse_ref(site, ws, false);
  ws.delta = site.m - mu;
  ws.tmp_k.noalias() = sf.inv * ws.delta;
  const double quad = ws.delta.dot(ws.tmp_k);
  const double tr = (sf.inv.diagonal().array() * site.v.array().square()).sum();
  const double log_det_v = 2.0 * site.v.array().log().sum();
  return C + wstar.dot(site.m) - total * lse + 0.5 * log_det_v +
         0.5 * static_cast<double>(K) - 0.5 * sf.log_det - 0.5 * quad - 0.5 * tr;
}

// Scores with respect to m and the standard deviations v, into ws.dm/ws.dv.
// Leaves ws.s at the current site and ws.siginv_delta = Sigma^-1 (m - mu).
inline void elbo1_grad_core(const VectorXd& wstar, double total,
                            const VariationalSite& site, const VectorXd& mu,
                            const SigmaFactor& sf, EvalScratch& ws) {
  ws.resize_k(site.m.size());
  lse_ref(site, ws, true);
  ws.delta = site.m - mu;
  ws.siginv_delta.noalias() = sf.inv * ws.delta;
  ws.dm = wstar - ws.siginv_delta;
  ws.dm.array() -= total * ws.s;
  ws.dv = (site.v.array().inverse() - site.v.array() * sf.inv.diagonal().array() -
           total * site.v.array() * ws.s)
              .matrix();
}

// Per-component precomputations for the cycle-2 bound.
struct Cycle2Component {
  VectorXd dinv;         // 1 / diag(D)
  double sum_log_d = 0;  // log |D|
  MatrixXd dinv_lambda;  // D^-1 Lambda, K x q
  MatrixXd lt_dinv_l;    // Lambda' D^-1 Lambda, q x q
};

inline Cycle2Component make_cycle2_component(const MatrixXd& lambda, const VectorXd& d) {
  for (Eigen::Index k = 0; k < d.size(); ++k)
    if (!(d[k] > 0.0))
      throw NumericError("cycle-2 bound: noise variance entry " + std::to_string(k) +
                         " is not positive");
  Cycle2Component c;
  c.dinv = d.cwiseInverse();
  c.sum_log_d = d.array().log().sum();
  c.dinv_lambda = c.dinv.asDiagonal() * lambda;
  c.lt_dinv_l = lambda.transpose() * c.dinv_lambda;
  return c;
}

inline double elbo2_core(double C, const VectorXd& wstar, double total,
                         const VariationalSite& site, const FactorSite& fsite,
                         double log_det_vtilde, const VectorXd& mu,
                         const Cycle2Component& c, EvalScratch& ws) {
  const Eigen::Index K = site.m.size();
  const Eigen::Index q = fsite.mtilde.size();
  ws.resize_k(K);
  ws.resize_q(q);
  const double lse = lse_ref(site, ws, false);
  const double log_det_v = 2.0 * site.v.array().log().sum();
  ws.delta = site.m - mu;
  ws.tmp_k.noalias() = c.dinv_lambda * fsite.mtilde;  // D^-1 Lambda mtilde
  ws.tmp_q.noalias() = c.lt_dinv_l * fsite.mtilde;
  const double gauss =
      log_det_v + log_det_vtilde + static_cast<double>(q) + static_cast<double>(K) -
      c.sum_log_d - fsite.mtilde.squaredNorm() - fsite.vtilde.trace() -
      (c.dinv.array() * (site.v.array().square() + ws.delta.array().square())).sum() +
      2.0 * ws.delta.dot(ws.tmp_k) - fsite.mtilde.dot(ws.tmp_q) -
      c.lt_dinv_l.cwiseProduct(fsite.vtilde).sum();
  return C + wstar.dot(site.m) - total * lse + 0.5 * gauss;
}

inline double log_det_spd(const MatrixXd& m, const char* what) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw NumericError(std::string(what) + ": not SPD");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace detail

/// Cycle-1 evidence lower bound for one observation under one component,
/// multinomial constant included. Sigma must be SPD.
inline double elbo_cycle1(const VectorXd& w, const VariationalSite& site,
                          const VectorXd& mu, const SigmaFactor& sf) {
  const Eigen::Index K = site.m.size();
  return detail::elbo1_core(multinomial_log_coeff(w), w.head(K), w.sum(), site, mu, sf,
                            detail::tls_scratch());
}

inline double elbo_cycle1(const VectorXd& w, const VariationalSite& site,
                          const VectorXd& mu, const MatrixXd& sigma) {
  return elbo_cycle1(w, site, mu, factor_spd(sigma));
}

/// Score functions of the cycle-1 bound with respect to the site mean m and
/// the site standard deviations v.
inline std::pair<VectorXd, VectorXd> elbo_cycle1_grad(const VectorXd& w,
                                                      const VariationalSite& site,
                                                      const VectorXd& mu,
                                                      const SigmaFactor& sf) {
  const Eigen::Index K = site.m.size();
  auto& ws = detail::tls_scratch();
  detail::elbo1_grad_core(w.head(K), w.sum(), site, mu, sf, ws);
  return {ws.dm, ws.dv};
}

inline std::pair<VectorXd, VectorXd> elbo_cycle1_grad(const VectorXd& w,
                                                      const VariationalSite& site,
                                                      const VectorXd& mu,
                                                      const MatrixXd& sigma) {
  return elbo_cycle1_grad(w, site, mu, factor_spd(sigma));
}

/// Cycle-2 evidence lower bound with the latent-factor site made explicit.
/// D is the diagonal of the component noise covariance.
inline double elbo_cycle2(const VectorXd& w, const VariationalSite& site,
                          const FactorSite& fsite, const VectorXd& mu,
                          const MatrixXd& lambda, const VectorXd& d) {
  const Eigen::Index K = site.m.size();
  const auto c = detail::make_cycle2_component(lambda, d);
  const double log_det_vtilde = detail::log_det_spd(fsite.vtilde, "elbo_cycle2 vtilde");
  return detail::elbo2_core(multinomial_log_coeff(w), w.head(K), w.sum(), site, fsite,
                            log_det_vtilde, mu, c, detail::tls_scratch());
}

}  // namespace lnmfa
