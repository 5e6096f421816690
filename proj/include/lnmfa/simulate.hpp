#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lnmfa/compositional.hpp"
#include "lnmfa/errors.hpp"
#include "lnmfa/kmeans.hpp"
#include "lnmfa/mixture.hpp"

namespace lnmfa {

/// Generator description: mixture parameters, sample size, the inclusive
/// range of per-sample totals and the stream seed.
struct SimSpec {
  std::string name;
  VectorXd pi;
  std::vector<ComponentParams> components;
  Eigen::Index n = 1000;
  long long total_lo = 5000;
  long long total_hi = 10000;
  std::uint64_t seed = 1;

  Eigen::Index K() const { return components.empty() ? 0 : components.front().mu.size(); }

  void validate() const {
    if (components.empty()) throw std::invalid_argument("sim spec: no components");
    if (pi.size() != static_cast<Eigen::Index>(components.size()))
      throw std::invalid_argument("sim spec: pi size mismatch");
    if (std::abs(pi.sum() - 1.0) > 1e-9)
      throw std::invalid_argument("sim spec: pi must sum to 1");
    if (total_lo < 1 || total_hi < total_lo)
      throw std::invalid_argument("sim spec: bad total range");
    if (n < 1) throw std::invalid_argument("sim spec: n must be >= 1");
  }
};

struct SimOutput {
  CountMatrix counts;
  std::vector<int> true_labels;  // 1-based
  MatrixXd true_y;               // n x K latent draws
};

namespace detail {

// Strictly-in-(0,1) uniform so Box-Muller never sees log(0).
inline double open_uniform(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

// One standard normal; two uniforms each so the stream layout is fixed.
inline double standard_normal(std::mt19937_64& rng) {
  const double u1 = open_uniform(rng);
  const double u2 = open_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace detail

/// Draw a dataset: per observation, component label, latent Gaussian vector,
/// total count, then multinomial counts on the inverse log-ratio
/// composition. The per-observation draw order is fixed, so a seed pins the
/// dataset bit-for-bit on every platform.
inline SimOutput generate(const SimSpec& spec) {
  spec.validate();
  const Eigen::Index n = spec.n;
  const Eigen::Index K = spec.K();
  const int G = static_cast<int>(spec.components.size());

  std::vector<MatrixXd> chol(G);
  for (int g = 0; g < G; ++g) {
    Eigen::LLT<MatrixXd> llt(spec.components[g].sigma());
    if (llt.info() != Eigen::Success)
      throw NumericError("generate: component " + std::to_string(g + 1) +
                         " covariance not SPD");
    chol[g] = llt.matrixL();
  }
  VectorXd pi_cdf(G);
  double acc = 0;
  for (int g = 0; g < G; ++g) pi_cdf[g] = (acc += spec.pi[g]);

  std::mt19937_64 rng(spec.seed);
  SimOutput out;
  out.true_labels.resize(n);
  out.true_y.resize(n, K);
  out.counts.w = MatrixXd::Zero(n, K + 1);
  out.counts.taxa_names.resize(K + 1);
  for (Eigen::Index k = 0; k < K; ++k) out.counts.taxa_names[k] = "taxon_" + std::to_string(k + 1);
  out.counts.taxa_names[K] = "reference";
  out.counts.sample_ids.resize(n);

  VectorXd z(K), p_cdf(K + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.counts.sample_ids[i] = "sample_" + std::to_string(i + 1);

    const double u_label = detail::unit_uniform(rng);
    int g = 0;
    while (g + 1 < G && u_label > pi_cdf[g]) ++g;
    out.true_labels[i] = g + 1;

    for (Eigen::Index k = 0; k < K; ++k) z[k] = detail::standard_normal(rng);
    const VectorXd y = spec.components[g].mu + chol[g] * z;
    out.true_y.row(i) = y.transpose();

    const long long span = spec.total_hi - spec.total_lo + 1;
    long long total = spec.total_lo +
                      static_cast<long long>(detail::unit_uniform(rng) * static_cast<double>(span));
    if (total > spec.total_hi) total = spec.total_hi;

    const VectorXd p = alr_inv(y);
    double c = 0;
    for (Eigen::Index k = 0; k <= K; ++k) p_cdf[k] = (c += p[k]);
    p_cdf[K] = 1.0;
    for (long long t = 0; t < total; ++t) {
      const double u = detail::unit_uniform(rng);
      Eigen::Index k = 0;
      while (k < K && u > p_cdf[k]) ++k;
      out.counts.w(i, k) += 1.0;
    }
  }
  return out;
}

/// The two shipped generator settings: a three-component shared-loading,
/// shared-isotropic-noise setting ("study1") and a fully unconstrained one
/// ("study2"), both ten-dimensional with mixing weights (0.5, 0.3, 0.2).
inline const std::vector<SimSpec>& builtin_specs() {
  static const std::vector<SimSpec> specs = [] {
    std::vector<SimSpec> list;

    auto mat = [](std::initializer_list<std::initializer_list<double>> rows) {
      MatrixXd m(rows.size(), rows.begin()->size());
      Eigen::Index i = 0;
      for (const auto& row : rows) {
        Eigen::Index j = 0;
        for (double x : row) m(i, j++) = x;
        ++i;
      }
      return m;
    };
    auto vec = [](std::initializer_list<double> xs) {
      VectorXd v(static_cast<Eigen::Index>(xs.size()));
      Eigen::Index i = 0;
      for (double x : xs) v[i++] = x;
      return v;
    };

    const MatrixXd lambda_a = mat({{-0.003, 0.386, -0.242},
                                   {-0.278, 0.090, 0.128},
                                   {-0.131, 0.187, 0.375},
                                   {0.424, 0.092, -0.983},
                                   {0.038, -0.796, -0.423},
                                   {0.275, 0.062, 0.242},
                                   {-0.222, 0.204, -0.574},
                                   {-0.100, 0.116, -0.265},
                                   {0.284, 0.422, -0.205},
                                   {0.030, -0.353, 0.153}});

    {
      SimSpec s;
      s.name = "study1";
      s.pi = vec({0.5, 0.3, 0.2});
      const VectorXd d = VectorXd::Constant(10, 0.01);
      ComponentParams c1{vec({-0.17, 0.03, 0.08, 0.24, 0.24, -0.06, -0.03, 0.14, -0.11, 0.14}),
                         lambda_a, d};
      ComponentParams c2{vec({0.33, 0.63, 0.44, 0.60, 0.32, 0.52, 0.39, 0.50, 0.51, 0.45}),
                         lambda_a, d};
      ComponentParams c3{vec({-0.59, -0.66, -0.55, -0.45, -0.60, -0.68, -0.53, -0.41, -0.65, -0.46}),
                         lambda_a, d};
      s.components = {c1, c2, c3};
      list.push_back(std::move(s));
    }

    {
      SimSpec s;
      s.name = "study2";
      s.pi = vec({0.5, 0.3, 0.2});
      const MatrixXd lambda_2 = mat({{-0.426, -0.289, 0.050},
                                     {-0.070, 0.267, 0.120},
                                     {0.126, -0.184, -0.140},
                                     {0.276, -0.690, 0.394},
                                     {0.085, -0.243, -0.400},
                                     {-0.137, 0.104, -0.305},
                                     {0.400, 0.491, -0.434},
                                     {0.199, 0.334, 0.054},
                                     {0.167, 0.022, -0.167},
                                     {0.299, -0.133, -0.338}});
      const MatrixXd lambda_3 = mat({{0.082, -0.167, 0.050},
                                     {0.146, 0.123, -0.033},
                                     {0.164, -0.075, -0.142},
                                     {-0.107, -0.062, 0.002},
                                     {0.086, 0.054, -0.143},
                                     {-0.078, -0.051, 0.155},
                                     {-0.074, -0.252, -0.048},
                                     {-0.059, 0.112, 0.076},
                                     {0.047, 0.054, -0.019},
                                     {0.220, -0.122, -0.026}});
      ComponentParams c1{vec({0.16, -0.13, 0.06, 0.13, 0.00, -0.06, -0.02, -0.11, 0.00, 0.03}),
                         lambda_a,
                         vec({0.03, 0.004, 0.028, 0.015, 0.005, 0.029, 0.003, 0.016, 0.014, 0.015})};
      ComponentParams c2{vec({0.79, 1.01, 0.66, 0.76, 0.86, 0.83, 0.66, 0.68, 0.85, 0.84}),
                         lambda_2,
                         vec({0.004, 0.03, 0.015, 0.003, 0.029, 0.015, 0.028, 0.03, 0.005, 0.03})};
      ComponentParams c3{vec({-0.77, -0.89, -0.88, -0.78, -0.71, -0.89, -0.86, -0.82, -0.86, -0.80}),
                         lambda_3,
                         vec({0.022, 0.006, 0.03, 0.018, 0.011, 0.002, 0.004, 0.015, 0.025, 0.005})};
      s.components = {c1, c2, c3};
      list.push_back(std::move(s));
    }
    return list;
  }();
  return specs;
}

/// Look up a builtin spec by name; throws when unknown.
inline SimSpec builtin_spec(const std::string& name) {
  for (const auto& s : builtin_specs())
    if (s.name == name) return s;
  throw std::invalid_argument("unknown builtin spec '" + name + "' (have: study1, study2)");
}

}  // namespace lnmfa
