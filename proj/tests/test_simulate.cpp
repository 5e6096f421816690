#include <catch2/catch.hpp>

#include <cmath>

#include "lnmfa/simulate.hpp"
#include "oracles.hpp"

using namespace lnmfa;

TEST_CASE("builtin generator settings carry the documented parameters") {
  const auto& specs = builtin_specs();
  REQUIRE(specs.size() == 2);

  const SimSpec s1 = builtin_spec("study1");
  REQUIRE(s1.pi[0] == 0.5);
  REQUIRE(s1.pi[1] == 0.3);
  REQUIRE(s1.pi[2] == 0.2);
  REQUIRE(s1.K() == 10);
  for (const auto& c : s1.components) {
    REQUIRE(c.d.size() == 10);
    REQUIRE((c.d.array() == 0.01).all());  // shared isotropic noise
    REQUIRE((c.lambda - s1.components[0].lambda).lpNorm<Eigen::Infinity>() == 0.0);
  }
  REQUIRE(s1.components[0].lambda(0, 1) == 0.386);
  REQUIRE(s1.components[0].mu[0] == -0.17);

  const SimSpec s2 = builtin_spec("study2");
  REQUIRE(s2.components[0].d[0] == 0.03);
  REQUIRE(s2.components[0].d[1] == 0.004);
  REQUIRE(s2.components[0].d[2] == 0.028);
  REQUIRE(s2.components[1].d[0] == 0.004);
  REQUIRE(s2.components[2].mu[0] == -0.77);

  REQUIRE_THROWS_AS(builtin_spec("study3"), std::invalid_argument);
}

TEST_CASE("generation is reproducible bit for bit") {
  SimSpec spec = builtin_spec("study1");
  spec.n = 50;
  spec.seed = 99;
  spec.total_lo = 100;
  spec.total_hi = 200;
  const auto a = generate(spec);
  const auto b = generate(spec);
  REQUIRE(a.counts.w == b.counts.w);
  REQUIRE(a.true_labels == b.true_labels);
  REQUIRE(a.true_y == b.true_y);

  spec.seed = 100;
  const auto c = generate(spec);
  REQUIRE(a.counts.w != c.counts.w);
}

TEST_CASE("row totals respect the configured range") {
  SimSpec spec = builtin_spec("study2");
  spec.n = 200;
  spec.seed = 3;
  spec.total_lo = 500;
  spec.total_hi = 700;
  const auto sim = generate(spec);
  for (Eigen::Index i = 0; i < sim.counts.n(); ++i) {
    const double total = sim.counts.w.row(i).sum();
    REQUIRE(total >= 500);
    REQUIRE(total <= 700);
  }
}

TEST_CASE("near-degenerate single component concentrates on the uniform composition") {
  SimSpec spec;
  spec.name = "lln";
  spec.pi = VectorXd::Ones(1);
  ComponentParams c;
  c.mu = VectorXd::Zero(4);
  c.lambda = MatrixXd::Zero(4, 1);
  c.d = VectorXd::Constant(4, 1e-8);
  spec.components = {c};
  spec.n = 100;
  spec.seed = 12;
  spec.total_lo = 1000000;
  spec.total_hi = 1000000;
  const auto sim = generate(spec);
  const MatrixXd p = to_compositions(sim.counts.w);
  REQUIRE((p.array() - 0.2).abs().maxCoeff() < 0.01);
}

TEST_CASE("component frequencies and latent moments match the generator settings") {
  SimSpec spec = builtin_spec("study1");
  spec.n = 2000;
  spec.seed = 31;
  spec.total_lo = 50;
  spec.total_hi = 80;
  const auto sim = generate(spec);

  // binomial three-sigma band on component frequencies
  for (int g = 0; g < 3; ++g) {
    double n_g = 0;
    for (int l : sim.true_labels) n_g += (l == g + 1);
    const double expect = spec.pi[g] * spec.n;
    const double sd = std::sqrt(spec.n * spec.pi[g] * (1 - spec.pi[g]));
    REQUIRE(std::abs(n_g - expect) <= 3.0 * sd);
  }

  // within-component mean of the latent draws
  const MatrixXd sigma = spec.components[0].sigma();
  for (int g = 0; g < 3; ++g) {
    VectorXd mean = VectorXd::Zero(10);
    double n_g = 0;
    for (Eigen::Index i = 0; i < spec.n; ++i) {
      if (sim.true_labels[i] != g + 1) continue;
      mean += sim.true_y.row(i).transpose();
      n_g += 1;
    }
    mean /= n_g;
    for (Eigen::Index k = 0; k < 10; ++k) {
      const double sd = std::sqrt(sigma(k, k) / n_g);
      REQUIRE(std::abs(mean[k] - spec.components[g].mu[k]) <= 4.0 * sd);
    }
  }
}

TEST_CASE("latent sample covariance converges to the configured covariance") {
  SimSpec spec = builtin_spec("study1");
  spec.n = 200000;  // component 1 carries about half of these
  spec.seed = 41;
  spec.total_lo = 2;
  spec.total_hi = 4;  // totals are irrelevant for the latent check
  const auto sim = generate(spec);

  VectorXd mean = VectorXd::Zero(10);
  double n_g = 0;
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    if (sim.true_labels[i] != 1) continue;
    mean += sim.true_y.row(i).transpose();
    n_g += 1;
  }
  mean /= n_g;
  MatrixXd cov = MatrixXd::Zero(10, 10);
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    if (sim.true_labels[i] != 1) continue;
    const VectorXd d = sim.true_y.row(i).transpose() - mean;
    cov += d * d.transpose();
  }
  cov /= n_g;
  REQUIRE(n_g > 90000);
  REQUIRE((cov - spec.components[0].sigma()).norm() < 0.1);
}
