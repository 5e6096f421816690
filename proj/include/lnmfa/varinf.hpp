#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "lnmfa/elbo.hpp"
#include "lnmfa/errors.hpp"

namespace lnmfa {

/// Controls for the safeguarded Newton iteration on one variational site.
struct NewtonConfig {
  int max_iters = 20;
  double grad_tol = 1e-6;
  int step_halvings = 30;
  double v_floor = 1e-4;
};

struct SiteUpdateReport {
  bool converged = false;
  int iters = 0;
  double grad_norm = 0.0;
  double elbo = 0.0;  // cycle-1 bound at the returned site
};

namespace detail {

// In-place lower Cholesky tuned for the small systems this file solves;
// returns false when a pivot is not positive.
inline bool cholesky_inplace(MatrixXd& a) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > 0.0)) return false;
    d = std::sqrt(d);
    a(j, j) = d;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double x = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) x -= a(i, k) * a(j, k);
      a(i, j) = x / d;
    }
  }
  return true;
}

inline void cholesky_solve(const MatrixXd& l, const VectorXd& b, VectorXd& x) {
  const Eigen::Index n = l.rows();
  x = b;
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = x[i];
    for (Eigen::Index k = 0; k < i; ++k) s -= l(i, k) * x[k];
    x[i] = s / l(i, i);
  }
  for (Eigen::Index i = n; i-- > 0;) {
    double s = x[i];
    for (Eigen::Index k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
    x[i] = s / l(i, i);
  }
}

// Safeguarded Newton on (m, v), v first then m. Every step is backtracked
// until the bound does not decrease beyond one-ulp rounding slack, so the
// site can only improve; v is kept at or above v_floor throughout. The
// scores are checked before stepping, making already-converged sites cheap,
// and a block whose own score is below tolerance is left alone.
inline SiteUpdateReport update_site_core(double C, const VectorXd& wstar, double total,
                                         VariationalSite& site, const VectorXd& mu,
                                         const SigmaFactor& sf, const NewtonConfig& cfg,
                                         EvalScratch& ws) {
  const Eigen::Index K = site.m.size();
  ws.resize_k(K);
  site.v = site.v.cwiseMax(cfg.v_floor);
  SiteUpdateReport rep;
  double f = elbo1_core(C, wstar, total, site, mu, sf, ws);

  for (int it = 0;; ++it) {
    elbo1_grad_core(wstar, total, site, mu, sf, ws);  // also leaves ws.s current
    const double norm_v = ws.dv.lpNorm<Eigen::Infinity>();
    const double norm_m = ws.dm.lpNorm<Eigen::Infinity>();
    rep.grad_norm = std::max(norm_m, norm_v);
    if (rep.grad_norm < cfg.grad_tol) {
      rep.converged = true;
      break;
    }
    if (it == cfg.max_iters) break;
    ++rep.iters;
    // comparisons at the rounding resolution of the bound itself
    const double slack = 1e-14 * (1.0 + std::abs(f));
    bool v_moved = false;

    // v step: the negated Jacobian of the v-score is SPD (diagonal dominance
    // of the softmax curvature), so the Newton direction always ascends.
    if (norm_v >= cfg.grad_tol) {
      const ArrayXd varr = site.v.array();
      ws.tmp_k = (varr * ws.s).matrix();
      ws.mat.noalias() = (-total) * (ws.tmp_k * ws.tmp_k.transpose());
      ws.mat.diagonal().array() += varr.inverse().square() + sf.inv.diagonal().array() +
                                   total * ws.s * (1.0 + varr.square());
      if (cholesky_inplace(ws.mat))
        cholesky_solve(ws.mat, ws.dv, ws.dir);
      else
        ws.dir = ws.dv / ws.mat.diagonal().cwiseAbs().maxCoeff();
      ws.x0 = site.v;
      double step = 1.0;
      for (int h = 0; h <= cfg.step_halvings; ++h, step *= 0.5) {
        site.v = (ws.x0 + step * ws.dir).cwiseMax(cfg.v_floor);
        const double fv = elbo1_core(C, wstar, total, site, mu, sf, ws);
        if (fv >= f - slack) {
          f = std::max(f, fv);
          break;
        }
        if (h == cfg.step_halvings) site.v = ws.x0;
      }
      v_moved = (site.v - ws.x0).lpNorm<Eigen::Infinity>() != 0.0;
    }

    // m step: negated Hessian is Sigma^-1 + total (diag(s) - s s'), SPD.
    if (norm_m >= cfg.grad_tol || v_moved) {
      if (v_moved) {
        // m unchanged since the score evaluation, so Sigma^-1 (m - mu) is
        // still valid; only the softmax term moved with v.
        lse_ref(site, ws, true);
        ws.score = wstar - ws.siginv_delta;
        ws.score.array() -= total * ws.s;
      } else {
        ws.score = ws.dm;
      }
      ws.tmp_k = ws.s.matrix();
      ws.mat.noalias() = (-total) * (ws.tmp_k * ws.tmp_k.transpose());
      ws.mat += sf.inv;
      ws.mat.diagonal().array() += total * ws.s;
      if (cholesky_inplace(ws.mat))
        cholesky_solve(ws.mat, ws.score, ws.dir);
      else
        ws.dir = ws.score / ws.mat.diagonal().cwiseAbs().maxCoeff();
      ws.x0 = site.m;
      double step = 1.0;
      for (int h = 0; h <= cfg.step_halvings; ++h, step *= 0.5) {
        site.m = ws.x0 + step * ws.dir;
        const double fm = elbo1_core(C, wstar, total, site, mu, sf, ws);
        if (fm >= f - slack) {
          f = std::max(f, fm);
          break;
        }
        if (h == cfg.step_halvings) site.m = ws.x0;
      }
    }
  }
  rep.elbo = f;
  return rep;
}

}  // namespace detail

/// Maximize the cycle-1 bound over the site (m, v) by safeguarded Newton.
/// The returned site never has a lower bound value than the input site;
/// non-convergence within max_iters is reported, not fatal.
inline VariationalSite update_site(const VectorXd& w, const VariationalSite& site,
                                   const VectorXd& mu, const MatrixXd& sigma,
                                   const NewtonConfig& cfg = {},
                                   SiteUpdateReport* report = nullptr) {
  const Eigen::Index K = site.m.size();
  VariationalSite out = site;
  const auto rep = detail::update_site_core(multinomial_log_coeff(w), w.head(K), w.sum(),
                                            out, mu, factor_spd(sigma), cfg,
                                            detail::tls_scratch());
  if (report) *report = rep;
  return out;
}

/// Closed-form maximizer of the cycle-2 bound over the factor site:
///   vtilde = (Lambda' D^-1 Lambda + I_q)^-1
///   mtilde = vtilde Lambda' D^-1 (m - mu)
inline FactorSite update_factor_site(const VariationalSite& site, const VectorXd& mu,
                                     const MatrixXd& lambda, const VectorXd& d) {
  const Eigen::Index q = lambda.cols();
  for (Eigen::Index k = 0; k < d.size(); ++k)
    if (!(d[k] > 0.0)) throw NumericError("update_factor_site: D must be positive");
  const MatrixXd dinv_lambda = d.cwiseInverse().asDiagonal() * lambda;
  MatrixXd core = lambda.transpose() * dinv_lambda;
  core.diagonal().array() += 1.0;
  Eigen::LLT<MatrixXd> llt(core);
  if (llt.info() != Eigen::Success)
    throw NumericError("update_factor_site: core matrix not SPD");
  FactorSite f;
  f.vtilde = llt.solve(MatrixXd::Identity(q, q));
  f.vtilde = 0.5 * (f.vtilde + f.vtilde.transpose()).eval();  // enforce symmetry
  f.mtilde = f.vtilde * (dinv_lambda.transpose() * (site.m - mu));
  return f;
}

}  // namespace lnmfa
