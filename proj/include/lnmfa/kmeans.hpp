#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace lnmfa::detail {

// Uniform double in [0,1) from the raw engine stream. std::uniform_real_distribution
// is implementation-defined, so spell it out to keep runs bit-identical
// across platforms.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n)) % n;
}

/// Lloyd k-means with D^2 seeding on the rows of x. Returns 1-based labels.
/// Fully deterministic for a given seed; ties go to the lower index.
inline std::vector<int> kmeans_labels(const Eigen::MatrixXd& x, int G,
                                      std::uint64_t seed, int max_iters = 50) {
  const Eigen::Index n = x.rows();
  std::mt19937_64 rng(seed);
  std::vector<int> labels(static_cast<std::size_t>(n), 1);
  if (G <= 1) return labels;

  Eigen::MatrixXd centers(G, x.cols());
  centers.row(0) = x.row(static_cast<Eigen::Index>(uniform_index(rng, n)));
  Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int g = 1; g < G; ++g) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0) {
      double u = unit_uniform(rng) * total, acc = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= u) { pick = i; break; }
      }
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, n));
    }
    centers.row(g) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centers.row(g)).rowwise().squaredNorm());
  }

  std::vector<Eigen::Index> counts(G);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int g = 0; g < G; ++g) {
        const double d = (x.row(i) - centers.row(g)).squaredNorm();
        if (d < best_d) { best_d = d; best = g; }
      }
      if (labels[i] != best + 1) { labels[i] = best + 1; changed = true; }
    }
    std::fill(counts.begin(), counts.end(), 0);
    for (Eigen::Index i = 0; i < n; ++i) ++counts[labels[i] - 1];
    // re-seed empty clusters with the point farthest from its center
    for (int g = 0; g < G; ++g) {
      if (counts[g] > 0) continue;
      Eigen::Index far_i = 0;
      double far_d = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (counts[labels[i] - 1] <= 1) continue;
        const double d = (x.row(i) - centers.row(labels[i] - 1)).squaredNorm();
        if (d > far_d) { far_d = d; far_i = i; }
      }
      --counts[labels[far_i] - 1];
      labels[far_i] = g + 1;
      counts[g] = 1;
      changed = true;
    }
    centers.setZero();
    for (Eigen::Index i = 0; i < n; ++i) centers.row(labels[i] - 1) += x.row(i);
    for (int g = 0; g < G; ++g)
      if (counts[g] > 0) centers.row(g) /= static_cast<double>(counts[g]);
    if (!changed) break;
  }
  return labels;
}

/// Shared-covariance Gaussian-mixture EM on the rows of x, started from the
/// k-means partition, returning hard 1-based labels. Used to initialize the
/// count-model fit: plain k-means misreads the elongated clusters a factor
/// covariance produces, while per-component free covariances tend to spawn
/// near-singular micro-components; one pooled covariance avoids both.
inline std::vector<int> gmm_labels(const Eigen::MatrixXd& x, int G, std::uint64_t seed,
                                   int max_iters = 100) {
  const Eigen::Index n = x.rows();
  const Eigen::Index K = x.cols();
  std::vector<int> labels = kmeans_labels(x, G, seed);
  if (G <= 1 || n <= G) return labels;

  Eigen::VectorXd weight(G);
  Eigen::MatrixXd means(G, K);
  Eigen::MatrixXd cov(K, K);
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, G);
  for (Eigen::Index i = 0; i < n; ++i) resp(i, labels[i] - 1) = 1.0;

  auto m_step = [&]() {
    cov.setZero();
    for (int g = 0; g < G; ++g) {
      const double n_g = resp.col(g).sum();
      if (n_g < 1.0) return false;
      weight[g] = n_g / static_cast<double>(n);
      means.row(g) = (resp.col(g).transpose() * x) / n_g;
    }
    for (Eigen::Index i = 0; i < n; ++i)
      for (int g = 0; g < G; ++g) {
        const Eigen::VectorXd d = x.row(i).transpose() - means.row(g).transpose();
        cov.selfadjointView<Eigen::Lower>().rankUpdate(d, resp(i, g));
      }
    cov = Eigen::MatrixXd(cov.selfadjointView<Eigen::Lower>()) / static_cast<double>(n);
    cov.diagonal().array() += 1e-6;
    return true;
  };
  if (!m_step()) return labels;

  double prev_loglik = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters; ++iter) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) return labels;
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(K, K));
    const double log_det =
        2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    Eigen::VectorXd log_norm(G);
    for (int g = 0; g < G; ++g)
      log_norm[g] = std::log(weight[g]) - 0.5 * log_det -
                    0.5 * static_cast<double>(K) * std::log(2.0 * M_PI);
    double loglik = 0.0;
    Eigen::VectorXd lw(G);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int g = 0; g < G; ++g) {
        const Eigen::VectorXd d = x.row(i).transpose() - means.row(g).transpose();
        lw[g] = log_norm[g] - 0.5 * d.dot(inv * d);
      }
      const double mx = lw.maxCoeff();
      const Eigen::ArrayXd e = (lw.array() - mx).exp();
      const double denom = e.sum();
      resp.row(i) = (e / denom).matrix().transpose();
      loglik += mx + std::log(denom);
    }
    if (!m_step()) break;
    if (std::abs(loglik - prev_loglik) < 1e-8 * (1.0 + std::abs(loglik))) break;
    prev_loglik = loglik;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    for (int g = 1; g < G; ++g)
      if (resp(i, g) > resp(i, best)) best = g;
    labels[i] = best + 1;
  }
  return labels;
}

/// Random partition into G groups, 1-based, each group nonempty for n >= G.
inline std::vector<int> random_labels(Eigen::Index n, int G, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& l : labels) l = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(G))) + 1;
  std::vector<Eigen::Index> counts(G, 0);
  for (auto l : labels) ++counts[l - 1];
  for (int g = 0; g < G; ++g) {
    while (counts[g] == 0) {
      const auto i = uniform_index(rng, labels.size());
      if (counts[labels[i] - 1] > 1) {
        --counts[labels[i] - 1];
        labels[i] = g + 1;
        counts[g] = 1;
      }
    }
  }
  return labels;
}

}  // namespace lnmfa::detail
