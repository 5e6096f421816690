#include <catch2/catch.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "lnmfa/selection.hpp"
#include "lnmfa/simulate.hpp"
#include "oracles.hpp"

using namespace lnmfa;

TEST_CASE("aitken_converged") {
  SECTION("flat sequence is converged") { REQUIRE(aitken_converged(5, 5, 5)); }

  SECTION("geometric decay extrapolates to its limit") {
    // l_k = 10 - 2^-k at k = 2, 3, 4: a = 0.5 and l_inf = 10 exactly
    const double l2 = 10 - 0.25, l3 = 10 - 0.125, l4 = 10 - 0.0625;
    const double a = (l4 - l3) / (l3 - l2);
    REQUIRE(a == Approx(0.5));
    REQUIRE(l3 + (l4 - l3) / (1 - a) == Approx(10.0).margin(1e-14));
    // gap to the limit is 0.0625, so the decision flips across that scale
    REQUIRE_FALSE(aitken_converged(l2, l3, l4, 1e-2));
    REQUIRE(aitken_converged(l2, l3, l4, 0.07));
  }

  SECTION("linear growth never converges") {
    REQUIRE_FALSE(aitken_converged(1, 2, 3));
    REQUIRE_FALSE(aitken_converged(0, 10, 30));  // accelerating
  }

  SECTION("underflowing denominator with a moving numerator") {
    REQUIRE_FALSE(aitken_converged(7.0, 7.0, 9.0));
  }

  SECTION("shift invariance") {
    std::mt19937_64 rng(301);
    std::uniform_real_distribution<double> u(-5, 5);
    for (int rep = 0; rep < 50; ++rep) {
      const double a = u(rng), b = a + std::abs(u(rng)), c = b + std::abs(u(rng)) * 0.4;
      const double shift = 1000.0 * u(rng);
      REQUIRE(aitken_converged(a, b, c) ==
              aitken_converged(a + shift, b + shift, c + shift));
    }
  }

  SECTION("monitor converges on a geometric tail") {
    AitkenMonitor monitor(1e-2);
    int converged_at = -1;
    for (int k = 1; k <= 10; ++k) {
      if (monitor.push(10.0 - std::pow(2.0, -k))) {
        converged_at = k;
        break;
      }
    }
    // l_inf equals 10 exactly from the third value onward, so the fourth
    // push compares two identical extrapolations
    REQUIRE(converged_at == 4);
  }
}

TEST_CASE("count_params reproduces the family formulas") {
  SECTION("pinned examples") {
    REQUIRE(count_params(parse_model("CCC"), 3, 10, 3) == 40);
    REQUIRE(count_params(parse_model("UUU"), 3, 10, 3) == 123);
    for (const auto& m : all_models()) REQUIRE(count_params(m, 1, 1, 1) == 3);
  }

  SECTION("complete free-parameter count charges every component mean") {
    REQUIRE(count_free_params(parse_model("CCC"), 3, 10, 3) == 40 + 20);
    REQUIRE(count_free_params(parse_model("UUU"), 3, 10, 3) == 123 + 20);
    for (const auto& m : all_models())
      REQUIRE(count_free_params(m, 1, 7, 2) == count_params(m, 1, 7, 2));
  }

  SECTION("exhaustive check against independently coded formulas") {
    for (int G = 1; G <= 4; ++G)
      for (int K = 2; K <= 12; ++K)
        for (int q = 1; q <= 4 && q <= K; ++q) {
          const long long lam = static_cast<long long>(K) * q - q * (q - 1) / 2;
          const long long uuu = G * lam + K * G + G - 1 + K;
          const long long uuc = G * lam + G + G - 1 + K;
          const long long ucu = G * lam + K + G - 1 + K;
          const long long ucc = G * lam + 1 + G - 1 + K;
          const long long cuu = lam + K * G + G - 1 + K;
          const long long cuc = lam + G + G - 1 + K;
          const long long ccu = lam + K + G - 1 + K;
          const long long ccc = lam + 1 + G - 1 + K;
          REQUIRE(count_params(parse_model("UUU"), G, K, q) == uuu);
          REQUIRE(count_params(parse_model("UUC"), G, K, q) == uuc);
          REQUIRE(count_params(parse_model("UCU"), G, K, q) == ucu);
          REQUIRE(count_params(parse_model("UCC"), G, K, q) == ucc);
          REQUIRE(count_params(parse_model("CUU"), G, K, q) == cuu);
          REQUIRE(count_params(parse_model("CUC"), G, K, q) == cuc);
          REQUIRE(count_params(parse_model("CCU"), G, K, q) == ccu);
          REQUIRE(count_params(parse_model("CCC"), G, K, q) == ccc);
        }
  }
}

TEST_CASE("bic") {
  REQUIRE(bic(0, 0, 1) == 0.0);
  REQUIRE(bic(-100, 40, 1000) == Approx(-476.3102111592855).epsilon(1e-12));
  // more parameters at equal objective always score lower
  std::mt19937_64 rng(307);
  std::uniform_real_distribution<double> u(-500, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const double obj = u(rng);
    const long long p = 1 + static_cast<long long>(rng() % 50);
    REQUIRE(bic(obj, p + 1, 100) < bic(obj, p, 100));
  }
  REQUIRE_THROWS_AS(bic(0, 0, 0), std::invalid_argument);
}

TEST_CASE("ari") {
  SECTION("identical labelings give exactly one") {
    const std::vector<int> a{1, 1, 2, 3, 2, 1};
    REQUIRE(ari(a, a) == 1.0);
  }

  SECTION("bijective relabeling changes nothing") {
    const std::vector<int> a{1, 1, 2, 3, 2, 1, 3};
    std::vector<int> b(a.size());
    const int map[4] = {0, 7, 5, 9};
    for (std::size_t i = 0; i < a.size(); ++i) b[i] = map[a[i]];
    REQUIRE(ari(a, b) == 1.0);
  }

  SECTION("pinned cross pattern") {
    const std::vector<int> a{1, 1, 2, 2};
    const std::vector<int> b{1, 2, 1, 2};
    REQUIRE(ari(a, b) == Approx(oracle::brute_ari(a, b)).margin(1e-12));
    REQUIRE(ari(a, b) == Approx(-0.5).margin(1e-12));
  }

  SECTION("100 random pairs against brute-force pair counting") {
    std::mt19937_64 rng(311);
    for (int rep = 0; rep < 100; ++rep) {
      const std::size_t n = 2 + rng() % 29;
      std::vector<int> a(n), b(n);
      const int ka = 1 + static_cast<int>(rng() % 5);
      const int kb = 1 + static_cast<int>(rng() % 5);
      for (auto& x : a) x = 1 + static_cast<int>(rng() % ka);
      for (auto& x : b) x = 1 + static_cast<int>(rng() % kb);
      REQUIRE(ari(a, b) == Approx(oracle::brute_ari(a, b)).margin(1e-12));
      REQUIRE(ari(a, b) == Approx(ari(b, a)).margin(1e-15));
    }
  }

  SECTION("length mismatch") {
    REQUIRE_THROWS_AS(ari({1, 2}, {1, 2, 3}), std::invalid_argument);
  }
}

namespace {
CountMatrix selection_dataset(std::uint64_t seed) {
  SimSpec spec = builtin_spec("study1");
  spec.n = 120;
  spec.seed = seed;
  spec.total_lo = 200;
  spec.total_hi = 400;
  return generate(spec).counts;
}
}  // namespace

TEST_CASE("grid_search basics") {
  const auto counts = selection_dataset(23);

  SECTION("single cell grid returns that cell") {
    GridSpec spec;
    spec.G_values = {2};
    spec.q_values = {1};
    spec.models = {parse_model("CCC")};
    spec.seeds = {1};
    const auto report = grid_search(counts, spec);
    REQUIRE(report.cells.size() == 1);
    REQUIRE(report.winner_cell == 0);
    REQUIRE(report.cells[0].model.code() == "CCC");
    REQUIRE(report.winner_fit.G == 2);
    REQUIRE(std::isfinite(report.winner_fit.bic));
  }

  SECTION("winner is invariant to the order cells are listed and to workers") {
    GridSpec spec;
    spec.G_values = {1, 2, 3};
    spec.q_values = {1, 2};
    spec.models = {parse_model("CCC"), parse_model("UUC")};
    spec.seeds = {1, 2};
    AecmConfig cfg;
    cfg.workers = 2;
    const auto r1 = grid_search(counts, spec, cfg);

    GridSpec reversed = spec;
    std::reverse(reversed.G_values.begin(), reversed.G_values.end());
    std::reverse(reversed.q_values.begin(), reversed.q_values.end());
    std::reverse(reversed.models.begin(), reversed.models.end());
    AecmConfig serial;
    serial.workers = 1;
    const auto r2 = grid_search(counts, reversed, serial);

    const auto& w1 = r1.cells[r1.winner_cell];
    const auto& w2 = r2.cells[r2.winner_cell];
    REQUIRE(w1.G == w2.G);
    REQUIRE(w1.q == w2.q);
    REQUIRE(w1.model.code() == w2.model.code());
    REQUIRE(w1.best().bic == w2.best().bic);
    REQUIRE(r1.winner_fit.labels == r2.winner_fit.labels);
  }

  SECTION("grid validation") {
    GridSpec bad;
    bad.G_values = {2};
    bad.q_values = {99};
    bad.models = {parse_model("CCC")};
    REQUIRE_THROWS_AS(grid_search(counts, bad), std::invalid_argument);
  }

  SECTION("all cells failing raises an aggregate error") {
    SimSpec spec = builtin_spec("study1");
    spec.n = 9;
    spec.seed = 2;
    spec.total_lo = 50;
    spec.total_hi = 80;
    const auto tiny = generate(spec).counts;
    GridSpec grid;
    grid.G_values = {7, 8};
    grid.q_values = {1};
    grid.models = {parse_model("UUU")};
    grid.seeds = {1, 2};
    AecmConfig cfg;
    cfg.min_component_weight = 2.0;  // pigeonhole: some component must collapse
    cfg.retries = 1;
    try {
      grid_search(tiny, grid, cfg);
      FAIL("expected aggregate failure");
    } catch (const NumericError& e) {
      const std::string msg = e.what();
      REQUIRE(msg.find("every cell failed") != std::string::npos);
      REQUIRE(msg.find("G=7") != std::string::npos);
      REQUIRE(msg.find("G=8") != std::string::npos);
      REQUIRE(msg.find("collapsed") != std::string::npos);
    }
  }
}
