// Command-line front end: simulate, fit, select, ari, info.
//
// Exit codes: 0 success, 1 numeric or data failure, 2 usage error.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lnmfa/io.hpp"
#include "lnmfa/lnmfa.hpp"

namespace {

using lnmfa::json;

// "a..b" (inclusive), "a,b,c", or a single value.
std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const int lo = std::stoi(text.substr(0, dots));
    const int hi = std::stoi(text.substr(dots + 2));
    if (hi < lo) throw CLI::ValidationError("range '" + text + "' is empty");
    for (int v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  std::istringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  if (out.empty()) throw CLI::ValidationError("empty list '" + text + "'");
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (int v : parse_int_list(text)) {
    if (v < 0) throw CLI::ValidationError("seeds must be nonnegative");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<lnmfa::ModelConstraint> parse_model_list(const std::string& text) {
  std::vector<lnmfa::ModelConstraint> out;
  if (text == "all") {
    for (const auto& m : lnmfa::all_models()) out.push_back(m);
    return out;
  }
  std::istringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(lnmfa::parse_model(tok));
  if (out.empty()) throw CLI::ValidationError("empty model list");
  return out;
}

struct CommonOpts {
  double eps = 1e-2;
  int max_sweeps = 500;
  int newton_iters = 20;
  double newton_tol = 1e-6;
  int retries = 3;
  int workers = 1;
  double pseudo = 0.001;
  std::string reference;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--eps", o.eps, "Aitken convergence tolerance")->capture_default_str();
  cmd->add_option("--max-sweeps", o.max_sweeps, "Maximum AECM sweeps")->capture_default_str();
  cmd->add_option("--newton-iters", o.newton_iters, "Newton iterations per site per sweep")
      ->capture_default_str();
  cmd->add_option("--newton-tol", o.newton_tol, "Newton gradient tolerance")
      ->capture_default_str();
  cmd->add_option("--retries", o.retries, "Restarts after a degenerate component")
      ->capture_default_str();
  cmd->add_option("--workers", o.workers, "Worker threads")->capture_default_str();
  cmd->add_option("--pseudo", o.pseudo, "Pseudo-count replacing zeros at initialization")
      ->capture_default_str();
  cmd->add_option("--reference", o.reference,
                  "Taxon to move to the last column (log-ratio reference)");
}

lnmfa::AecmConfig to_aecm(const CommonOpts& o) {
  lnmfa::AecmConfig cfg;
  cfg.aitken_eps = o.eps;
  cfg.max_sweeps = o.max_sweeps;
  cfg.newton.max_iters = o.newton_iters;
  cfg.newton.grad_tol = o.newton_tol;
  cfg.retries = o.retries;
  cfg.workers = o.workers;
  cfg.pseudo_count = o.pseudo;
  return cfg;
}

json config_echo(const CommonOpts& o, const std::vector<std::uint64_t>& seeds,
                 const std::string& input) {
  json cfg;
  cfg["eps"] = o.eps;
  cfg["max_sweeps"] = o.max_sweeps;
  cfg["newton"] = {{"max_iters", o.newton_iters},
                   {"grad_tol", o.newton_tol},
                   {"step_halvings", lnmfa::NewtonConfig{}.step_halvings},
                   {"v_floor", lnmfa::NewtonConfig{}.v_floor}};
  cfg["retries"] = o.retries;
  cfg["workers"] = o.workers;
  cfg["pseudo_count"] = o.pseudo;
  cfg["seeds"] = seeds;
  cfg["reference"] = o.reference;
  cfg["input"] = input;
  return cfg;
}

lnmfa::CountMatrix load_counts(const std::string& input, const std::string& reference) {
  lnmfa::CountMatrix counts = lnmfa::read_counts(input);
  if (!reference.empty()) counts = lnmfa::reorder_reference(counts, reference);
  return counts;
}

int run_simulate(const std::string& builtin, long long n, std::uint64_t seed,
                 long long total_lo, long long total_hi, const std::string& out) {
  lnmfa::SimSpec spec = lnmfa::builtin_spec(builtin);
  if (n > 0) spec.n = n;
  spec.seed = seed;
  spec.total_lo = total_lo;
  spec.total_hi = total_hi;
  const auto sim = lnmfa::generate(spec);
  lnmfa::write_counts(sim.counts, out + "_counts.csv");
  lnmfa::write_labels(sim.true_labels, out + "_labels.txt");
  std::ofstream y(out + "_y.csv");
  for (Eigen::Index i = 0; i < sim.true_y.rows(); ++i) {
    for (Eigen::Index k = 0; k < sim.true_y.cols(); ++k)
      y << (k ? "," : "") << sim.true_y(i, k);
    y << '\n';
  }
  std::cout << "wrote " << sim.counts.n() << " samples x " << sim.counts.n_taxa()
            << " taxa to " << out << "_counts.csv (labels, latent coordinates alongside)\n";
  return 0;
}

int run_fit(const std::string& input, int G, int q, const std::string& model_code,
            const std::string& seeds_text, const std::string& out, const CommonOpts& opts) {
  const auto counts = load_counts(input, opts.reference);
  const auto model = lnmfa::parse_model(model_code);
  const auto seeds = parse_seed_list(seeds_text);
  const auto cfg = to_aecm(opts);

  bool have = false;
  lnmfa::FitResult best;
  for (auto seed : seeds) {
    auto fit = lnmfa::fit_aecm(counts, G, q, model,
                               {lnmfa::InitSpec::Method::gmm, seed, {}}, cfg);
    if (!have || fit.objective > best.objective) {
      best = std::move(fit);
      have = true;
    }
  }
  std::cout << "fit " << model.code() << " G=" << G << " q=" << q
            << ": objective=" << best.objective << " bic=" << best.bic
            << " sweeps=" << best.sweeps << (best.converged ? "" : " (not converged)")
            << "\n";
  if (!out.empty()) {
    json echo = config_echo(opts, seeds, input);
    echo["G"] = G;
    echo["q"] = q;
    echo["model"] = model.code();
    lnmfa::write_fit_result(best, echo, out);
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

int run_select(const std::string& input, const std::string& g_text, const std::string& q_text,
               const std::string& models_text, const std::string& seeds_text,
               const std::string& out, const CommonOpts& opts) {
  const auto counts = load_counts(input, opts.reference);
  lnmfa::GridSpec grid;
  grid.G_values = parse_int_list(g_text);
  grid.q_values = parse_int_list(q_text);
  grid.models = parse_model_list(models_text);
  grid.seeds = parse_seed_list(seeds_text);
  const auto cfg = to_aecm(opts);

  const auto report = lnmfa::grid_search(counts, grid, cfg);
  const auto& wc = report.cells[report.winner_cell];
  std::cout << "evaluated " << report.cells.size() << " cells; winner: " << wc.model.code()
            << " G=" << wc.G << " q=" << wc.q << " bic=" << wc.best().bic
            << (report.winner_converged ? "" : " (winner did not converge)") << "\n";
  if (!out.empty()) {
    json echo = config_echo(opts, grid.seeds, input);
    echo["G_values"] = grid.G_values;
    echo["q_values"] = grid.q_values;
    json codes = json::array();
    for (const auto& m : grid.models) codes.push_back(m.code());
    echo["models"] = codes;
    lnmfa::write_selection_report(report, echo, out);
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

int run_ari(const std::string& path_a, const std::string& path_b) {
  const auto a = lnmfa::read_labels(path_a);
  const auto b = lnmfa::read_labels(path_b);
  std::printf("%.10g\n", lnmfa::ari(a, b));
  return 0;
}

int run_info(const std::string& builtin) {
  const Eigen::IOFormat fmt(6, 0, " ", "\n    ", "", "", "[", "]");
  auto print_spec = [&](const lnmfa::SimSpec& s) {
    std::cout << s.name << ": G=" << s.components.size() << " K=" << s.K()
              << " totals U[" << s.total_lo << "," << s.total_hi << "]\n";
    std::cout << "  pi = " << s.pi.transpose().format(fmt) << "\n";
    for (std::size_t g = 0; g < s.components.size(); ++g) {
      const auto& c = s.components[g];
      std::cout << "  component " << g + 1 << ":\n";
      std::cout << "    mu = " << c.mu.transpose().format(fmt) << "\n";
      std::cout << "    d  = " << c.d.transpose().format(fmt) << "\n";
      std::cout << "    lambda =\n    " << c.lambda.format(fmt) << "\n";
    }
  };
  if (builtin.empty()) {
    std::cout << "builtin generator settings:\n";
    for (const auto& s : lnmfa::builtin_specs())
      std::cout << "  " << s.name << " (G=" << s.components.size() << ", K=" << s.K()
                << ")\n";
    return 0;
  }
  print_spec(lnmfa::builtin_spec(builtin));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-based clustering of compositional count data with "
               "latent-factor covariance structure"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
  std::string sim_builtin = "study1", sim_out = "sim";
  long long sim_n = 0, sim_lo = 5000, sim_hi = 10000;
  std::uint64_t sim_seed = 1;
  sim->add_option("--builtin", sim_builtin, "Builtin setting (study1, study2)")
      ->capture_default_str();
  sim->add_option("--n", sim_n, "Sample size (0 keeps the builtin default)");
  sim->add_option("--seed", sim_seed, "Stream seed")->capture_default_str();
  sim->add_option("--total-lo", sim_lo, "Smallest per-sample total")->capture_default_str();
  sim->add_option("--total-hi", sim_hi, "Largest per-sample total")->capture_default_str();
  sim->add_option("--out", sim_out, "Output prefix")->capture_default_str();

  // fit
  auto* fit = app.add_subcommand("fit", "Fit one (G, q, model) cell");
  std::string fit_input, fit_model = "UUU", fit_seeds = "1..3", fit_out;
  int fit_g = 1, fit_q = 1;
  CommonOpts fit_opts;
  fit->add_option("--input", fit_input, "Count table (csv/tsv)")->required();
  fit->add_option("--G", fit_g, "Number of components")->required();
  fit->add_option("--q", fit_q, "Number of latent factors")->required();
  fit->add_option("--model", fit_model, "Family code (e.g. UUU, CCC)")->capture_default_str();
  fit->add_option("--seeds", fit_seeds, "Restart seeds (a..b or list)")->capture_default_str();
  fit->add_option("--out", fit_out, "Result file (json)");
  add_common(fit, fit_opts);

  // select
  auto* sel = app.add_subcommand("select", "Grid search over (G, q, model)");
  std::string sel_input, sel_g = "1..3", sel_q = "1..3", sel_models = "all",
              sel_seeds = "1..3", sel_out;
  CommonOpts sel_opts;
  sel->add_option("--input", sel_input, "Count table (csv/tsv)")->required();
  sel->add_option("--G", sel_g, "Component grid (a..b or list)")->capture_default_str();
  sel->add_option("--q", sel_q, "Factor grid (a..b or list)")->capture_default_str();
  sel->add_option("--models", sel_models, "Model codes or 'all'")->capture_default_str();
  sel->add_option("--seeds", sel_seeds, "Restart seeds per cell")->capture_default_str();
  sel->add_option("--out", sel_out, "Report file (json)");
  add_common(sel, sel_opts);

  // ari
  auto* ari_cmd = app.add_subcommand("ari", "Adjusted Rand index of two label files");
  std::string ari_a, ari_b;
  ari_cmd->add_option("labels_a", ari_a, "First label file")->required();
  ari_cmd->add_option("labels_b", ari_b, "Second label file")->required();

  // info
  auto* info = app.add_subcommand("info", "Show builtin generator parameters");
  std::string info_builtin;
  info->add_option("--builtin", info_builtin, "Setting name (study1, study2)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed())
      return run_simulate(sim_builtin, sim_n, sim_seed, sim_lo, sim_hi, sim_out);
    if (fit->parsed())
      return run_fit(fit_input, fit_g, fit_q, fit_model, fit_seeds, fit_out, fit_opts);
    if (sel->parsed())
      return run_select(sel_input, sel_g, sel_q, sel_models, sel_seeds, sel_out, sel_opts);
    if (ari_cmd->parsed()) return run_ari(ari_a, ari_b);
    if (info->parsed()) return run_info(info_builtin);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
