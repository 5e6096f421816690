#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lnmfa/aitken.hpp"
#include "lnmfa/mixture.hpp"
#include "lnmfa/model_family.hpp"

namespace lnmfa {

/// Bayesian information criterion, larger is better. objective stands in for
/// the log-likelihood; with this model family that is the converged
/// variational surrogate, the marginal likelihood itself being intractable.
inline double bic(double objective, long long p, long long n) {
  if (n < 1) throw std::invalid_argument("bic: n must be >= 1");
  return 2.0 * objective - static_cast<double>(p) * std::log(static_cast<double>(n));
}

/// Adjusted Rand index between two labelings via the pair-counting
/// contingency formula. Invariant to label permutations; 1 for identical
/// partitions, expected value 0 under independent random labelings.
inline double ari(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("ari: labelings have different lengths (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  const std::size_t n = a.size();
  if (n == 0) throw std::invalid_argument("ari: empty labelings");

  std::map<int, int> ia, ib;
  for (int x : a) ia.emplace(x, static_cast<int>(ia.size()));
  for (int x : b) ib.emplace(x, static_cast<int>(ib.size()));
  const std::size_t ra = ia.size(), rb = ib.size();
  std::vector<long long> table(ra * rb, 0), rows(ra, 0), cols(rb, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int u = ia[a[i]], v = ib[b[i]];
    ++table[u * rb + v];
    ++rows[u];
    ++cols[v];
  }
  auto comb2 = [](long long x) { return 0.5 * static_cast<double>(x) * static_cast<double>(x - 1); };
  double sum_ij = 0, sum_a = 0, sum_b = 0;
  for (long long t : table) sum_ij += comb2(t);
  for (long long t : rows) sum_a += comb2(t);
  for (long long t : cols) sum_b += comb2(t);
  const double total = comb2(static_cast<long long>(n));
  const double expected = total > 0 ? sum_a * sum_b / total : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected)  // both partitions trivial
    return sum_ij == max_index ? 1.0 : 0.0;
  return (sum_ij - expected) / (max_index - expected);
}

/// The (G, q, model) grid and the restart seeds run inside every cell.
struct GridSpec {
  std::vector<int> G_values;
  std::vector<int> q_values;
  std::vector<ModelConstraint> models;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double bic = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  int sweeps = 0;
};

struct CellResult {
  int G = 0;
  int q = 0;
  ModelConstraint model;
  std::vector<SeedOutcome> seeds;
  int best_seed = -1;  // index into seeds, by objective among non-failed

  bool ok() const { return best_seed >= 0; }
  const SeedOutcome& best() const { return seeds[best_seed]; }
};

struct SelectionReport {
  std::vector<CellResult> cells;
  int winner_cell = -1;
  bool winner_converged = false;
  FitResult winner_fit;
};

namespace detail {

// Total order on cells: higher BIC, then fewer parameters, then lower G,
// lower q, and finally family order, so the winner is unique and independent
// of evaluation order.
inline bool cell_better(double bic_a, long long p_a, int G_a, int q_a, int m_a,
                        double bic_b, long long p_b, int G_b, int q_b, int m_b) {
  if (bic_a != bic_b) return bic_a > bic_b;
  if (p_a != p_b) return p_a < p_b;
  if (G_a != G_b) return G_a < G_b;
  if (q_a != q_b) return q_a < q_b;
  return m_a < m_b;
}

}  // namespace detail

/// Fit every (G, q, model) cell with every restart seed, keep each cell's
/// best seed by objective, and pick the winner by BIC among converged cells
/// (falling back to non-converged cells only when nothing converged).
/// cfg.workers parallelizes across cells; fits inside a cell run single
/// threaded so results do not depend on the worker count.
inline SelectionReport grid_search(const CountMatrix& counts, const GridSpec& spec,
                                   const AecmConfig& cfg = {}) {
  counts.validate();
  if (spec.G_values.empty() || spec.q_values.empty() || spec.models.empty() ||
      spec.seeds.empty())
    throw std::invalid_argument("grid_search: grid lists must be nonempty");
  const int K = static_cast<int>(counts.K());
  for (int q : spec.q_values)
    if (q < 1 || q > K)
      throw std::invalid_argument("grid_search: q=" + std::to_string(q) +
                                  " outside [1, K=" + std::to_string(K) + "]");
  for (int G : spec.G_values)
    if (G < 1 || counts.n() <= G)
      throw std::invalid_argument("grid_search: invalid G=" + std::to_string(G));

  struct CellKey {
    int G, q, model_idx;
  };
  std::vector<CellKey> keys;
  for (int G : spec.G_values)
    for (int q : spec.q_values)
      for (std::size_t m = 0; m < spec.models.size(); ++m)
        keys.push_back({G, q, static_cast<int>(m)});

  SelectionReport report;
  report.cells.resize(keys.size());

  AecmConfig inner = cfg;
  inner.workers = 1;

  // Incumbent winners, one among converged cells and one among all usable
  // cells; both updated under a critical section with a total order, so the
  // outcome does not depend on scheduling.
  int best_conv = -1, best_any = -1;
  FitResult fit_conv, fit_any;

  const auto n_cells = static_cast<Eigen::Index>(keys.size());
  const int n_workers = std::max(1, cfg.workers);
  (void)n_workers;
#pragma omp parallel for schedule(dynamic) num_threads(n_workers)
  for (Eigen::Index c = 0; c < n_cells; ++c) {
    const auto key = keys[c];
    const ModelConstraint model = spec.models[key.model_idx];
    CellResult cell;
    cell.G = key.G;
    cell.q = key.q;
    cell.model = model;
    FitResult best_fit;
    for (std::uint64_t seed : spec.seeds) {
      SeedOutcome out;
      out.seed = seed;
      try {
        FitResult fit = fit_aecm(counts, key.G, key.q, model,
                                 InitSpec{InitSpec::Method::gmm, seed, {}}, inner);
        out.objective = fit.objective;
        out.bic = fit.bic;
        out.converged = fit.converged;
        out.sweeps = fit.sweeps;
        const int idx = static_cast<int>(cell.seeds.size());
        if (cell.best_seed < 0 || out.objective > cell.best().objective) {
          cell.best_seed = idx;
          best_fit = std::move(fit);
        }
      } catch (const std::exception& e) {
        out.failed = true;
        out.error = e.what();
      }
      cell.seeds.push_back(std::move(out));
    }
    report.cells[c] = cell;
    if (cell.ok()) {
      const long long p = count_free_params(model, key.G, K, key.q);
#pragma omp critical(lnmfa_grid_winner)
      {
        auto consider = [&](int& best_idx, FitResult& best_store) {
          bool take = best_idx < 0;
          if (!take) {
            const auto& other = report.cells[best_idx];
            take = detail::cell_better(
                cell.best().bic, p, key.G, key.q, model_index(model),
                other.best().bic, count_free_params(other.model, other.G, K, other.q),
                other.G, other.q, model_index(other.model));
          }
          if (take) {
            best_idx = static_cast<int>(c);
            best_store = best_fit;
          }
        };
        consider(best_any, fit_any);
        if (cell.best().converged) consider(best_conv, fit_conv);
      }
    }
  }

  if (best_any < 0) {
    std::string msg = "grid_search: every cell failed:";
    for (const auto& cell : report.cells) {
      msg += "\n  G=" + std::to_string(cell.G) + " q=" + std::to_string(cell.q) + " " +
             cell.model.code() + ":";
      for (const auto& s : cell.seeds) msg += " [seed " + std::to_string(s.seed) + "] " + s.error;
    }
    throw NumericError(msg);
  }
  if (best_conv >= 0) {
    report.winner_cell = best_conv;
    report.winner_converged = true;
    report.winner_fit = std::move(fit_conv);
  } else {
    report.winner_cell = best_any;
    report.winner_converged = false;
    report.winner_fit = std::move(fit_any);
  }
  return report;
}

}  // namespace lnmfa
