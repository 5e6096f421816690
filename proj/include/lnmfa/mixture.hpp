#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lnmfa/aitken.hpp"
#include "lnmfa/compositional.hpp"
#include "lnmfa/elbo.hpp"
#include "lnmfa/errors.hpp"
#include "lnmfa/kmeans.hpp"
#include "lnmfa/model_family.hpp"
#include "lnmfa/varinf.hpp"
#include "lnmfa/woodbury.hpp"

namespace lnmfa {

/// Parameters of one mixture component; the latent covariance is
/// Sigma = Lambda Lambda' + diag(d).
struct ComponentParams {
  VectorXd mu;      // K
  MatrixXd lambda;  // K x q
  VectorXd d;       // K positive noise variances

  MatrixXd sigma() const {
    MatrixXd s = lambda * lambda.transpose();
    s.diagonal() += d;
    return s;
  }
};

/// Full engine state: mixing proportions, component parameters, the
/// per-observation-per-component variational sites, the factor sites (means
/// per pair, covariance per component) and the responsibilities.
struct MixtureState {
  VectorXd pi;
  std::vector<ComponentParams> components;
  std::vector<VariationalSite> sites;  // n*G, observation-major
  std::vector<VectorXd> mtilde;        // n*G factor means
  std::vector<MatrixXd> vtilde;        // per-component factor covariance
  MatrixXd resp;                       // n x G
  Eigen::Index n = 0;
  int G = 0;
  int q = 0;

  VariationalSite& site(Eigen::Index i, int g) { return sites[i * G + g]; }
  const VariationalSite& site(Eigen::Index i, int g) const { return sites[i * G + g]; }
};

/// Per-component conditional-maximization statistics.
struct MStepStats {
  MatrixXd S;          // K x K weighted scatter of site means
  MatrixXd sigma_hat;  // K x K scatter plus site covariances
  MatrixXd beta;       // q x K, (L'D^-1L + I)^-1 L'D^-1 with old params
  MatrixXd theta;      // q x q, vtilde + beta S beta'
  double n_g = 0.0;    // effective component size
};

/// Softmax responsibilities from component bound values (n x G), computed in
/// log space: z_ig = pi_g exp(F_ig) / sum_h pi_h exp(F_ih).
inline MatrixXd responsibilities(const VectorXd& pi, const MatrixXd& elbo_values) {
  const Eigen::Index n = elbo_values.rows();
  const Eigen::Index G = elbo_values.cols();
  const Eigen::ArrayXd log_pi = pi.array().log();
  MatrixXd resp(n, G);
  Eigen::ArrayXd lw(G);
  for (Eigen::Index i = 0; i < n; ++i) {
    lw = elbo_values.row(i).transpose().array() + log_pi;
    const double mx = lw.maxCoeff();
    if (!std::isfinite(mx))
      throw NumericError("responsibilities: observation " + std::to_string(i) +
                         " has no finite component weight");
    lw = (lw - mx).exp();
    resp.row(i) = (lw / lw.sum()).matrix().transpose();
  }
  return resp;
}

/// Closed-form mixing proportions and component means from the current
/// responsibilities and site means. Throws DegenerateComponentError when a
/// component's effective size drops below min_weight.
inline std::pair<VectorXd, std::vector<VectorXd>> update_pi_mu(const MixtureState& s,
                                                               double min_weight = 1.0) {
  const Eigen::Index n = s.n;
  const int G = s.G;
  VectorXd n_g = s.resp.colwise().sum();
  for (int g = 0; g < G; ++g)
    if (n_g[g] < min_weight)
      throw DegenerateComponentError("component " + std::to_string(g + 1) +
                                     " collapsed (effective size " +
                                     std::to_string(n_g[g]) + ")");
  VectorXd pi = n_g / static_cast<double>(n);
  const Eigen::Index K = s.sites.front().m.size();
  std::vector<VectorXd> mu(G, VectorXd::Zero(K));
  for (Eigen::Index i = 0; i < n; ++i)
    for (int g = 0; g < G; ++g) mu[g] += s.resp(i, g) * s.site(i, g).m;
  for (int g = 0; g < G; ++g) mu[g] /= n_g[g];
  return {std::move(pi), std::move(mu)};
}

/// Conditional-maximization statistics for component g: scatter matrices use
/// the freshly updated mean, beta and theta use the pre-update loadings and
/// noise, which is what the alternating scheme prescribes.
inline MStepStats mstep_stats(const MixtureState& s, int g, double min_weight = 1.0) {
  const Eigen::Index n = s.n;
  const auto& comp = s.components[g];
  const Eigen::Index K = comp.mu.size();
  MStepStats st;
  st.n_g = s.resp.col(g).sum();
  if (st.n_g < min_weight)
    throw DegenerateComponentError("component " + std::to_string(g + 1) +
                                   " collapsed (effective size " +
                                   std::to_string(st.n_g) + ")");
  st.S = MatrixXd::Zero(K, K);
  VectorXd vdiag = VectorXd::Zero(K);
  VectorXd delta(K);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = s.resp(i, g);
    const auto& site = s.site(i, g);
    delta = site.m - comp.mu;
    st.S.selfadjointView<Eigen::Lower>().rankUpdate(delta, r);
    vdiag.array() += r * site.v.array().square();
  }
  st.S = st.S.selfadjointView<Eigen::Lower>();
  st.S /= st.n_g;
  st.sigma_hat = st.S;
  st.sigma_hat.diagonal() += vdiag / st.n_g;

  const MatrixXd dinv_lambda = comp.d.cwiseInverse().asDiagonal() * comp.lambda;
  MatrixXd core = comp.lambda.transpose() * dinv_lambda;
  core.diagonal().array() += 1.0;
  Eigen::LLT<MatrixXd> llt(core);
  if (llt.info() != Eigen::Success)
    throw NumericError("mstep_stats: factor core matrix not SPD");
  const Eigen::Index q = comp.lambda.cols();
  MatrixXd vt = llt.solve(MatrixXd::Identity(q, q));
  st.beta = vt * dinv_lambda.transpose();
  st.theta = 0.5 * (vt + vt.transpose()) + st.beta * st.S * st.beta.transpose();
  st.theta = 0.5 * (st.theta + st.theta.transpose()).eval();
  return st;
}

namespace detail {

// diag(A * B) where A is K x q and B is q x K.
inline VectorXd diag_of_product(const MatrixXd& a, const MatrixXd& b) {
  return (a.array() * b.transpose().array()).rowwise().sum().matrix();
}

// Residual noise diagonal diag{Sigma_hat - 2 Lambda beta S + Lambda theta Lambda'}
// evaluated at the pre-update loadings.
inline VectorXd mstep_noise_diag(const MStepStats& st, const MatrixXd& lambda_old) {
  VectorXd m = st.sigma_hat.diagonal();
  m -= 2.0 * diag_of_product(lambda_old, st.beta * st.S);
  const MatrixXd lt = lambda_old * st.theta;
  m += (lt.array() * lambda_old.array()).rowwise().sum().matrix();
  return m;
}

}  // namespace detail

/// The eight constrained conditional-maximization updates for the loadings
/// and noise terms. stats must have been computed with the components' old
/// parameters; components are updated in place.
inline void update_lambda_d(const std::vector<MStepStats>& stats,
                            const ModelConstraint& model,
                            std::vector<ComponentParams>& components) {
  const int G = static_cast<int>(components.size());
  const Eigen::Index K = components.front().mu.size();
  const Eigen::Index q = components.front().lambda.cols();
  constexpr double d_floor = 1e-10;
  double n_total = 0;
  for (const auto& st : stats) n_total += st.n_g;

  // New loadings. Unshared: Lambda_g = S_g beta_g' theta_g^-1. Shared: solve
  // row by row, lambda_i = r_i (sum_g (n_g/d_gi) theta_g)^-1 with r_i the ith
  // row of sum_g n_g D_g^-1 S_g beta_g'.
  std::vector<MatrixXd> new_lambda(G);
  if (!model.lambda_shared) {
    for (int g = 0; g < G; ++g) {
      Eigen::LLT<MatrixXd> llt(stats[g].theta);
      if (llt.info() != Eigen::Success)
        throw NumericError("update_lambda_d: theta not SPD for component " +
                           std::to_string(g + 1));
      new_lambda[g] = llt.solve(stats[g].beta * stats[g].S).transpose();
    }
  } else {
    MatrixXd r = MatrixXd::Zero(K, q);
    for (int g = 0; g < G; ++g)
      r += stats[g].n_g * (components[g].d.cwiseInverse().asDiagonal() *
                           (stats[g].S * stats[g].beta.transpose()));
    MatrixXd shared(K, q);
    for (Eigen::Index k = 0; k < K; ++k) {
      MatrixXd a = MatrixXd::Zero(q, q);
      for (int g = 0; g < G; ++g)
        a += (stats[g].n_g / components[g].d[k]) * stats[g].theta;
      Eigen::LLT<MatrixXd> llt(a);
      if (llt.info() != Eigen::Success)
        throw NumericError("update_lambda_d: shared-loading system not SPD at row " +
                           std::to_string(k));
      shared.row(k) = llt.solve(r.row(k).transpose()).transpose();
    }
    for (int g = 0; g < G; ++g) new_lambda[g] = shared;
  }

  // New noise, always evaluated at the old loadings.
  std::vector<VectorXd> noise(G);
  if (!model.d_shared) {
    for (int g = 0; g < G; ++g) {
      VectorXd m = detail::mstep_noise_diag(stats[g], components[g].lambda);
      if (model.d_isotropic) m.setConstant(m.mean());
      noise[g] = m.cwiseMax(d_floor);
    }
  } else {
    VectorXd pooled = VectorXd::Zero(K);
    for (int g = 0; g < G; ++g)
      pooled += stats[g].n_g * detail::mstep_noise_diag(stats[g], components[g].lambda);
    pooled /= n_total;
    if (model.d_isotropic) pooled.setConstant(pooled.mean());
    const VectorXd shared = pooled.cwiseMax(d_floor);
    for (int g = 0; g < G; ++g) noise[g] = shared;
  }

  for (int g = 0; g < G; ++g) {
    components[g].lambda = new_lambda[g];
    components[g].d = noise[g];
  }
}

/// How to produce the starting partition. The default runs a short
/// full-covariance Gaussian-mixture EM on the log-ratio data, seeded by
/// k-means.
struct InitSpec {
  enum class Method { gmm, kmeans, random, labels };
  Method method = Method::gmm;
  std::uint64_t seed = 1;
  std::vector<int> labels;  // 1-based, only for Method::labels
};

struct AecmConfig {
  int max_sweeps = 500;
  double aitken_eps = 1e-2;
  NewtonConfig newton{};
  double min_component_weight = 1.0;
  int retries = 3;
  int workers = 1;
  double pseudo_count = 0.001;
  double init_v = 0.1;          // initial diagonal of the site covariance
  bool check_woodbury = false;  // cross-check low-rank vs dense every 10th sweep
};

struct FitResult {
  ModelConstraint model;
  int G = 0;
  int q = 0;
  Eigen::Index n = 0;
  Eigen::Index K = 0;
  MixtureState state;
  std::vector<int> labels;  // 1-based argmax responsibilities
  std::vector<double> objective_trace;
  double objective = 0.0;
  double bic = 0.0;
  bool converged = false;
  int sweeps = 0;
  std::uint64_t seed = 0;  // initialization seed actually used
  int restarts = 0;        // degenerate-component restarts consumed
};

namespace detail {

inline std::vector<int> initial_partition(const MatrixXd& y, int G, const InitSpec& init,
                                          int attempt) {
  const std::uint64_t seed = init.seed + static_cast<std::uint64_t>(attempt);
  if (attempt > 0 || init.method == InitSpec::Method::gmm) return gmm_labels(y, G, seed);
  if (init.method == InitSpec::Method::kmeans) return kmeans_labels(y, G, seed);
  if (init.method == InitSpec::Method::random) return random_labels(y.rows(), G, seed);
  if (static_cast<Eigen::Index>(init.labels.size()) != y.rows())
    throw std::invalid_argument("init labels length does not match data");
  return init.labels;
}

// Eigendecomposition-based loading/noise start from a covariance estimate:
// columns of Lambda are the leading eigenvectors scaled by sqrt eigenvalue,
// the noise picks up the residual diagonal.
inline void eigen_init(const MatrixXd& cov, int q, MatrixXd& lambda, VectorXd& d) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw NumericError("eigen_init: decomposition failed");
  const Eigen::Index K = cov.rows();
  lambda.resize(K, q);
  for (int j = 0; j < q; ++j) {
    const Eigen::Index idx = K - 1 - j;  // descending eigenvalues
    const double ev = std::max(es.eigenvalues()[idx], 1e-4);
    VectorXd col = es.eigenvectors().col(idx);
    Eigen::Index imax = 0;
    col.cwiseAbs().maxCoeff(&imax);
    if (col[imax] < 0) col = -col;  // deterministic sign
    lambda.col(j) = std::sqrt(ev) * col;
  }
  d = (cov - lambda * lambda.transpose()).diagonal().cwiseMax(1e-4);
}

inline void initialize_state(const MatrixXd& y, const std::vector<int>& labels, int G,
                             int q, const ModelConstraint& model, const AecmConfig& cfg,
                             MixtureState& s) {
  const Eigen::Index n = y.rows();
  const Eigen::Index K = y.cols();
  s.n = n;
  s.G = G;
  s.q = q;
  s.pi.resize(G);
  s.components.assign(G, {});
  s.resp = MatrixXd::Zero(n, G);
  for (Eigen::Index i = 0; i < n; ++i) s.resp(i, labels[i] - 1) = 1.0;

  std::vector<MatrixXd> cov(G);
  MatrixXd pooled = MatrixXd::Zero(K, K);
  for (int g = 0; g < G; ++g) {
    const double n_g = s.resp.col(g).sum();
    VectorXd mean = VectorXd::Zero(K);
    for (Eigen::Index i = 0; i < n; ++i)
      if (labels[i] - 1 == g) mean += y.row(i).transpose();
    mean /= std::max(n_g, 1.0);
    MatrixXd c = MatrixXd::Zero(K, K);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (labels[i] - 1 != g) continue;
      const VectorXd delta = y.row(i).transpose() - mean;
      c.selfadjointView<Eigen::Lower>().rankUpdate(delta, 1.0);
    }
    c = MatrixXd(c.selfadjointView<Eigen::Lower>()) / std::max(n_g, 1.0);
    c.diagonal().array() += 1e-6;  // guard against tiny clusters
    cov[g] = c;
    pooled += (n_g / static_cast<double>(n)) * c;
    s.pi[g] = n_g / static_cast<double>(n);
    s.components[g].mu = mean;
  }

  std::vector<VectorXd> resid(G);
  for (int g = 0; g < G; ++g) {
    MatrixXd lambda;
    VectorXd d;
    eigen_init(model.lambda_shared ? pooled : cov[g], q, lambda, d);
    resid[g] = (cov[g] - lambda * lambda.transpose()).diagonal().cwiseMax(1e-4);
    s.components[g].lambda = lambda;
  }
  if (model.d_shared) {
    VectorXd shared = VectorXd::Zero(K);
    for (int g = 0; g < G; ++g) shared += s.pi[g] * resid[g];
    for (int g = 0; g < G; ++g) resid[g] = shared;
  }
  for (int g = 0; g < G; ++g) {
    if (model.d_isotropic) resid[g].setConstant(resid[g].mean());
    s.components[g].d = resid[g];
  }

  const double v0 = std::sqrt(cfg.init_v);
  s.sites.assign(static_cast<std::size_t>(n) * G, {});
  for (Eigen::Index i = 0; i < n; ++i)
    for (int g = 0; g < G; ++g) {
      auto& site = s.site(i, g);
      site.m = y.row(i).transpose();
      site.v = VectorXd::Constant(K, v0);
    }
  s.mtilde.assign(static_cast<std::size_t>(n) * G, VectorXd::Zero(q));
  s.vtilde.assign(G, MatrixXd::Identity(q, q));
}

inline void check_woodbury_consistency(const ComponentParams& comp,
                                       const SigmaFactor& low_rank) {
  const SigmaFactor dense = factor_spd(comp.sigma());
  const double inv_err = (dense.inv - low_rank.inv).cwiseAbs().maxCoeff();
  const double det_err = std::abs(dense.log_det - low_rank.log_det);
  if (inv_err > 1e-10 || det_err > 1e-10)
    throw NumericError("low-rank and dense covariance paths disagree (inv " +
                       std::to_string(inv_err) + ", logdet " + std::to_string(det_err) +
                       ")");
}

inline FitResult fit_aecm_once(const CountMatrix& counts, int G, int q,
                               const ModelConstraint& model, const InitSpec& init,
                               const AecmConfig& cfg, int attempt) {
  const Eigen::Index n = counts.n();
  const Eigen::Index K = counts.K();

  // Per-observation constants.
  std::vector<VectorXd> wstar(n);
  VectorXd totals(n), log_coeff(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    wstar[i] = counts.w.row(i).head(K).transpose();
    totals[i] = counts.w.row(i).sum();
    log_coeff[i] = multinomial_log_coeff(counts.w.row(i).transpose());
  }

  MatrixXd y(n, K);
  {
    const MatrixXd comp = to_compositions(replace_zeros(counts, cfg.pseudo_count));
    for (Eigen::Index i = 0; i < n; ++i) y.row(i) = alr(comp.row(i).transpose()).transpose();
  }

  FitResult result;
  result.model = model;
  result.G = G;
  result.q = q;
  result.n = n;
  result.K = K;
  result.seed = init.seed + static_cast<std::uint64_t>(attempt);
  result.restarts = attempt;

  MixtureState& s = result.state;
  const auto labels0 = initial_partition(y, G, init, attempt);
  initialize_state(y, labels0, G, q, model, cfg, s);

  std::vector<SigmaFactor> sigma(G);
  for (int g = 0; g < G; ++g)
    sigma[g] = woodbury_inverse(s.components[g].lambda, s.components[g].d);

  MatrixXd f1(n, G), f2(n, G);
  AitkenMonitor monitor(cfg.aitken_eps);
  const int n_workers = std::max(1, cfg.workers);
  (void)n_workers;

  for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    if (cfg.check_woodbury && sweep % 10 == 1)
      for (int g = 0; g < G; ++g) check_woodbury_consistency(s.components[g], sigma[g]);

    // Cycle 1: refresh sites, responsibilities, mixing proportions, means.
#pragma omp parallel for schedule(static) num_threads(n_workers)
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& ws = tls_scratch();
      for (int g = 0; g < G; ++g) {
        auto rep = update_site_core(log_coeff[i], wstar[i], totals[i], s.site(i, g),
                                    s.components[g].mu, sigma[g], cfg.newton, ws);
        f1(i, g) = rep.elbo;
      }
    }
    s.resp = responsibilities(s.pi, f1);
    {
      auto [pi, mu] = update_pi_mu(s, cfg.min_component_weight);
      s.pi = pi;
      for (int g = 0; g < G; ++g) s.components[g].mu = mu[g];
    }

    // Cycle 2: factor sites in closed form, responsibilities, then the
    // constrained loading/noise updates.
    std::vector<Cycle2Component> c2(G);
    std::vector<MatrixXd> beta(G);
    std::vector<double> log_det_vtilde(G);
    for (int g = 0; g < G; ++g) {
      c2[g] = make_cycle2_component(s.components[g].lambda, s.components[g].d);
      MatrixXd core = c2[g].lt_dinv_l;
      core.diagonal().array() += 1.0;
      Eigen::LLT<MatrixXd> llt(core);
      if (llt.info() != Eigen::Success)
        throw NumericError("fit_aecm: factor core matrix not SPD");
      MatrixXd vt = llt.solve(MatrixXd::Identity(q, q));
      s.vtilde[g] = 0.5 * (vt + vt.transpose());
      log_det_vtilde[g] =
          -2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      beta[g] = s.vtilde[g] * c2[g].dinv_lambda.transpose();
    }
#pragma omp parallel for schedule(static) num_threads(n_workers)
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& ws = tls_scratch();
      for (int g = 0; g < G; ++g) {
        s.mtilde[i * G + g].noalias() = beta[g] * (s.site(i, g).m - s.components[g].mu);
        const FactorSite fsite{s.mtilde[i * G + g], s.vtilde[g]};
        f2(i, g) = elbo2_core(log_coeff[i], wstar[i], totals[i], s.site(i, g), fsite,
                              log_det_vtilde[g], s.components[g].mu, c2[g], ws);
      }
    }
    s.resp = responsibilities(s.pi, f2);

    // Surrogate mixture objective at the cycle-2 state; the loading/noise
    // update below enters next sweep's value.
    {
      double obj = 0.0;
      Eigen::ArrayXd lw(G);
      const Eigen::ArrayXd log_pi = s.pi.array().log();
      for (Eigen::Index i = 0; i < n; ++i) {
        lw = f2.row(i).transpose().array() + log_pi;
        obj += log_sum_exp(lw);
      }
      result.objective_trace.push_back(obj);
    }

    std::vector<MStepStats> stats(G);
    for (int g = 0; g < G; ++g) stats[g] = mstep_stats(s, g, cfg.min_component_weight);
    update_lambda_d(stats, model, s.components);
    for (int g = 0; g < G; ++g)
      sigma[g] = woodbury_inverse(s.components[g].lambda, s.components[g].d);

    result.sweeps = sweep;
    if (monitor.push(result.objective_trace.back())) {
      result.converged = true;
      break;
    }
  }

  // Final objective with the post-update parameters (the per-sweep trace
  // lags the last loading/noise update by construction).
  {
    VectorXd row_objective(n);
#pragma omp parallel for schedule(static) num_threads(n_workers)
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& ws = tls_scratch();
      Eigen::ArrayXd lw(G);
      for (int g = 0; g < G; ++g)
        lw[g] = std::log(s.pi[g]) + elbo1_core(log_coeff[i], wstar[i], totals[i],
                                               s.site(i, g), s.components[g].mu, sigma[g],
                                               ws);
      row_objective[i] = log_sum_exp(lw);
    }
    result.objective = row_objective.sum();
  }

  const long long p = count_free_params(model, G, static_cast<int>(K), q);
  result.bic =
      2.0 * result.objective - static_cast<double>(p) * std::log(static_cast<double>(n));
  result.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    for (int g = 1; g < G; ++g)
      if (s.resp(i, g) > s.resp(i, best)) best = g;
    result.labels[i] = best + 1;
  }
  return result;
}

}  // namespace detail

/// Fit one member of the family by the two-cycle alternating scheme with
/// variational Gaussian updates. Restarts with a fresh initialization seed
/// when a component degenerates, up to cfg.retries times.
inline FitResult fit_aecm(const CountMatrix& counts, int G, int q,
                          const ModelConstraint& model, const InitSpec& init = {},
                          const AecmConfig& cfg = {}) {
  counts.validate();
  const Eigen::Index K = counts.K();
  if (G < 1) throw std::invalid_argument("fit_aecm: G must be >= 1");
  if (counts.n() <= G)
    throw std::invalid_argument("fit_aecm: need more observations than components");
  if (q < 1 || q > K)
    throw std::invalid_argument("fit_aecm: q must be in [1, K], got q=" +
                                std::to_string(q) + ", K=" + std::to_string(K));
  if (cfg.max_sweeps < 1 || !(cfg.aitken_eps > 0) || !(cfg.newton.grad_tol > 0) ||
      !(cfg.newton.v_floor > 0) || cfg.newton.max_iters < 1)
    throw std::invalid_argument("fit_aecm: invalid configuration");
  for (int attempt = 0;; ++attempt) {
    try {
      return detail::fit_aecm_once(counts, G, q, model, init, cfg, attempt);
    } catch (const DegenerateComponentError&) {
      if (attempt >= cfg.retries) throw;
    }
  }
}

}  // namespace lnmfa
