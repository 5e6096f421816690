#include <catch2/catch.hpp>

#include <cmath>
#include <random>

#include "lnmfa/elbo.hpp"
#include "lnmfa/varinf.hpp"
#include "oracles.hpp"

using namespace lnmfa;

namespace {
VariationalSite rand_site(Eigen::Index K, std::mt19937_64& rng) {
  VariationalSite s;
  s.m = oracle::rand_vec(K, rng, -1.5, 1.5);
  s.v = oracle::rand_vec(K, rng, 0.05, 1.0);
  return s;
}
}  // namespace

TEST_CASE("update_site drives both scores below tolerance") {
  std::mt19937_64 rng(101);
  NewtonConfig cfg;
  cfg.max_iters = 60;
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index K = 1 + rng() % 3;
    const VectorXd w = oracle::rand_counts(K + 1, rng);
    const VectorXd mu = oracle::rand_vec(K, rng);
    const MatrixXd sigma = oracle::rand_spd(K, rng);
    const auto start = rand_site(K, rng);

    SiteUpdateReport rep_out;
    const auto site = update_site(w, start, mu, sigma, cfg, &rep_out);
    const auto [dm, dv] = elbo_cycle1_grad(w, site, mu, sigma);
    REQUIRE(rep_out.converged);
    REQUIRE(std::max(dm.lpNorm<Eigen::Infinity>(), dv.lpNorm<Eigen::Infinity>()) < 1e-6);
    REQUIRE(elbo_cycle1(w, site, mu, sigma) >= elbo_cycle1(w, start, mu, sigma));
  }
}

TEST_CASE("update_site matches a derivative-free maximizer") {
  std::mt19937_64 rng(103);
  NewtonConfig cfg;
  cfg.max_iters = 80;
  cfg.grad_tol = 1e-9;
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::Index K = 1 + rng() % 2;
    const VectorXd w = oracle::rand_counts(K + 1, rng);
    const VectorXd mu = oracle::rand_vec(K, rng);
    const MatrixXd sigma = oracle::rand_spd(K, rng);
    const auto start = rand_site(K, rng);
    const auto site = update_site(w, start, mu, sigma, cfg);
    const double newton_val = elbo_cycle1(w, site, mu, sigma);

    // independent maximizer over (m, log v), unconstrained coordinates
    auto objective = [&](const VectorXd& x) {
      VariationalSite s;
      s.m = x.head(K);
      s.v = x.tail(K).array().exp().matrix();
      return elbo_cycle1(w, s, mu, sigma);
    };
    VectorXd x0(2 * K);
    x0.head(K) = start.m;
    x0.tail(K) = start.v.array().log().matrix();
    auto [xbest, nm_val] = oracle::nelder_mead_max(objective, x0, 0.5, 4000);
    REQUIRE(newton_val >= nm_val - 1e-6);
    REQUIRE(std::abs(newton_val - nm_val) < 1e-6);
  }
}

TEST_CASE("update_site is idempotent at the fixed point") {
  std::mt19937_64 rng(107);
  NewtonConfig cfg;
  cfg.max_iters = 60;
  cfg.grad_tol = 1e-8;
  const Eigen::Index K = 3;
  const VectorXd w = oracle::rand_counts(K + 1, rng);
  const VectorXd mu = oracle::rand_vec(K, rng);
  const MatrixXd sigma = oracle::rand_spd(K, rng);
  const auto opt = update_site(w, rand_site(K, rng), mu, sigma, cfg);

  SiteUpdateReport rep;
  const auto again = update_site(w, opt, mu, sigma, cfg, &rep);
  REQUIRE(rep.iters == 0);  // no Newton step needed at the fixed point
  REQUIRE((again.m - opt.m).lpNorm<Eigen::Infinity>() < 1e-8);
  REQUIRE((again.v - opt.v).lpNorm<Eigen::Infinity>() < 1e-8);
  REQUIRE(elbo_cycle1(w, again, mu, sigma) == Approx(elbo_cycle1(w, opt, mu, sigma)));
}

TEST_CASE("update_site never decreases the bound, one iteration at a time") {
  std::mt19937_64 rng(109);
  NewtonConfig one;
  one.max_iters = 1;
  for (int rep = 0; rep < 30; ++rep) {
    const Eigen::Index K = 1 + rng() % 4;
    const VectorXd w = oracle::rand_counts(K + 1, rng);
    const VectorXd mu = oracle::rand_vec(K, rng);
    const MatrixXd sigma = oracle::rand_spd(K, rng);
    VariationalSite site = rand_site(K, rng);
    double prev = elbo_cycle1(w, site, mu, sigma);
    for (int sweep = 0; sweep < 5; ++sweep) {
      site = update_site(w, site, mu, sigma, one);
      const double cur = elbo_cycle1(w, site, mu, sigma);
      REQUIRE(cur >= prev - 1e-12);
      prev = cur;
    }
  }
}

TEST_CASE("update_site respects the standard-deviation floor") {
  std::mt19937_64 rng(113);
  const Eigen::Index K = 2;
  VectorXd w(K + 1);
  w << 5000, 3000, 2000;  // large totals push v towards zero
  const VectorXd mu = VectorXd::Zero(K);
  const MatrixXd sigma = MatrixXd::Identity(K, K);
  NewtonConfig cfg;
  cfg.max_iters = 50;
  const auto site = update_site(w, rand_site(K, rng), mu, sigma, cfg);
  REQUIRE(site.v.minCoeff() >= cfg.v_floor);
}

TEST_CASE("update_factor_site closed forms") {
  std::mt19937_64 rng(127);

  SECTION("zero loadings decouple the factors") {
    const Eigen::Index K = 4, q = 2;
    VariationalSite site = rand_site(K, rng);
    const VectorXd mu = oracle::rand_vec(K, rng);
    const auto f = update_factor_site(site, mu, MatrixXd::Zero(K, q),
                                      oracle::rand_vec(K, rng, 0.1, 1.0));
    REQUIRE(f.mtilde.lpNorm<Eigen::Infinity>() == 0.0);
    REQUIRE((f.vtilde - MatrixXd::Identity(q, q)).lpNorm<Eigen::Infinity>() == 0.0);
  }

  SECTION("conditional-form identities on random instances") {
    for (int rep = 0; rep < 40; ++rep) {
      const Eigen::Index K = 1 + rng() % 20;
      const Eigen::Index q = 1 + rng() % std::min<Eigen::Index>(5, K);
      VariationalSite site = rand_site(K, rng);
      const VectorXd mu = oracle::rand_vec(K, rng);
      const MatrixXd lambda = oracle::rand_mat(K, q, rng);
      const VectorXd d = oracle::rand_vec(K, rng, 0.1, 1.0);
      const auto f = update_factor_site(site, mu, lambda, d);

      MatrixXd sigma = lambda * lambda.transpose();
      sigma.diagonal() += d;
      const MatrixXd sigma_inv = sigma.inverse();
      const MatrixXd vtilde_cond =
          MatrixXd::Identity(q, q) - lambda.transpose() * sigma_inv * lambda;
      const VectorXd mtilde_cond = lambda.transpose() * (sigma_inv * (site.m - mu));
      REQUIRE((f.vtilde - vtilde_cond).lpNorm<Eigen::Infinity>() < 1e-10);
      REQUIRE((f.mtilde - mtilde_cond).lpNorm<Eigen::Infinity>() < 1e-10);
    }
  }

  SECTION("output maximizes the cycle-2 bound") {
    const Eigen::Index K = 4, q = 2;
    const VectorXd w = oracle::rand_counts(K + 1, rng);
    VariationalSite site = rand_site(K, rng);
    const VectorXd mu = oracle::rand_vec(K, rng);
    const MatrixXd lambda = oracle::rand_mat(K, q, rng);
    const VectorXd d = oracle::rand_vec(K, rng, 0.1, 1.0);
    const auto f = update_factor_site(site, mu, lambda, d);
    const double best = elbo_cycle2(w, site, f, mu, lambda, d);

    for (int rep = 0; rep < 20; ++rep) {
      FactorSite other = f;
      other.mtilde += 0.3 * oracle::rand_vec(q, rng);
      MatrixXd jitter = 0.1 * oracle::rand_mat(q, q, rng);
      other.vtilde = f.vtilde + jitter * jitter.transpose();
      REQUIRE(elbo_cycle2(w, site, other, mu, lambda, d) <= best + 1e-12);
    }
  }

  SECTION("nonpositive noise is rejected") {
    const Eigen::Index K = 2, q = 1;
    VariationalSite site = rand_site(K, rng);
    VectorXd d(K);
    d << 0.5, 0.0;
    REQUIRE_THROWS_AS(
        update_factor_site(site, VectorXd::Zero(K), MatrixXd::Ones(K, q), d),
        NumericError);
  }
}
