#include <catch2/catch.hpp>

#include <cmath>
#include <random>

#include "lnmfa/compositional.hpp"
#include "oracles.hpp"

using namespace lnmfa;

namespace {
VectorXd make_vec(std::initializer_list<double> xs) {
  VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}
}  // namespace

TEST_CASE("alr maps the uniform composition to the origin") {
  const VectorXd y = alr(make_vec({0.25, 0.25, 0.25, 0.25}));
  REQUIRE(y.size() == 3);
  REQUIRE(y.lpNorm<Eigen::Infinity>() == Approx(0.0).margin(1e-15));
}

TEST_CASE("alr of (0.5, 0.25, 0.25)") {
  const VectorXd y = alr(make_vec({0.5, 0.25, 0.25}));
  REQUIRE(y[0] == Approx(std::log(2.0)).epsilon(1e-12));
  REQUIRE(y[1] == Approx(0.0).margin(1e-15));
}

TEST_CASE("alr rejects nonpositive entries and names the index") {
  try {
    alr(make_vec({0.1, 0.0, 0.9}));
    FAIL("expected domain_error");
  } catch (const std::domain_error& e) {
    REQUIRE(std::string(e.what()).find("1") != std::string::npos);
  }
  REQUIRE_THROWS_AS(alr(make_vec({-0.1, 0.2, 0.9})), std::domain_error);
}

TEST_CASE("alr_inv at the origin gives the uniform composition") {
  const VectorXd p = alr_inv(VectorXd::Zero(3));
  for (int k = 0; k < 4; ++k) REQUIRE(p[k] == Approx(0.25).epsilon(1e-14));
}

TEST_CASE("alr and alr_inv are mutual inverses on random compositions") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    const int kp1 = 2 + static_cast<int>(rng() % 10);
    VectorXd p(kp1);
    double total = 0;
    for (int k = 0; k < kp1; ++k) total += (p[k] = u(rng));
    p /= total;
    const VectorXd back = alr_inv(alr(p));
    REQUIRE((back - p).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("alr_inv is overflow-safe at extreme coordinates") {
  // K = 1, y = 50: reference weight collapses to exp(-50) / (1 + exp(-50)).
  const VectorXd p = alr_inv(make_vec({50.0}));
  REQUIRE(std::isfinite(p[0]));
  REQUIRE(std::isfinite(p[1]));
  REQUIRE(p.sum() == Approx(1.0).margin(1e-12));
  REQUIRE(p[1] == Approx(1.9287498479639178e-22).epsilon(1e-10));

  for (double big : {700.0, -700.0}) {
    // coordinates at the exp overflow edge stay finite, positive and
    // normalized; the dominant entry may round to exactly 1
    const VectorXd q = alr_inv(make_vec({big, 0.0, 0.0}));
    REQUIRE(q.sum() == Approx(1.0).margin(1e-12));
    for (int k = 0; k < q.size(); ++k) {
      REQUIRE(q[k] > 0.0);
      REQUIRE(q[k] <= 1.0);
    }
  }
  for (double mid : {30.0, -30.0}) {
    const VectorXd q = alr_inv(make_vec({mid, 0.0, -mid}));
    for (int k = 0; k < q.size(); ++k) {
      REQUIRE(q[k] > 0.0);
      REQUIRE(q[k] < 1.0);
    }
  }
}

TEST_CASE("replace_zeros substitutes the pseudo-count only at zeros") {
  CountMatrix counts;
  counts.w.resize(2, 3);
  counts.w << 5, 0, 3, 1, 2, 4;
  const MatrixXd r = replace_zeros(counts);
  REQUIRE(r(0, 0) == 5.0);
  REQUIRE(r(0, 1) == 0.001);
  REQUIRE(r(0, 2) == 3.0);
  REQUIRE(r.row(1) == counts.w.row(1));
  REQUIRE_THROWS_AS(replace_zeros(counts, 0.0), std::invalid_argument);
}

TEST_CASE("row scaling leaves the empirical composition fixed") {
  std::mt19937_64 rng(11);
  MatrixXd w(1, 5);
  for (int k = 0; k < 5; ++k) w(0, k) = 1.0 + static_cast<double>(rng() % 50);
  const MatrixXd p1 = to_compositions(w);
  const MatrixXd p2 = to_compositions(7.0 * w);
  REQUIRE((p1 - p2).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("count matrix validation") {
  CountMatrix counts;
  counts.w.resize(2, 3);
  counts.w << 1, 2, 3, 0, 0, 0;
  REQUIRE_THROWS_AS(counts.validate(), std::invalid_argument);
  counts.w(1, 0) = 0.5;
  REQUIRE_THROWS_AS(counts.validate(), std::invalid_argument);
  counts.w(1, 0) = 2;
  REQUIRE_NOTHROW(counts.validate());
}
