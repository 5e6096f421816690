#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lnmfa/compositional.hpp"
#include "lnmfa/mixture.hpp"
#include "lnmfa/selection.hpp"
#include "lnmfa/simulate.hpp"
#include "lnmfa/version.hpp"

namespace lnmfa {

using json = nlohmann::json;

namespace detail {

inline std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delim)) out.push_back(strip(cell));
  if (!line.empty() && line.back() == delim) out.push_back("");
  return out;
}

inline char detect_delimiter(const std::string& header) {
  return header.find('\t') != std::string::npos ? '\t' : ',';
}

inline json vector_to_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline VectorXd vector_from_json(const json& a) {
  VectorXd v(static_cast<Eigen::Index>(a.size()));
  Eigen::Index i = 0;
  for (const auto& x : a) v[i++] = x.get<double>();
  return v;
}

inline MatrixXd matrix_from_json(const json& rows) {
  if (rows.empty()) return MatrixXd(0, 0);
  MatrixXd m(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(rows.front().size()));
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    Eigen::Index j = 0;
    for (const auto& x : row) m(i, j++) = x.get<double>();
    ++i;
  }
  return m;
}

}  // namespace detail

/// Read a delimited count table: header row of taxa names (first column is
/// the sample id), then one row per sample of nonnegative integer counts.
/// The last column is the log-ratio reference. Malformed cells are rejected
/// with 1-based (row, column) coordinates.
inline CountMatrix read_counts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_counts: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || detail::strip(line).empty())
    throw std::runtime_error("read_counts: '" + path + "' is empty");
  const char delim = detail::detect_delimiter(line);
  const auto header = detail::split(line, delim);
  if (header.size() < 3)
    throw std::runtime_error("read_counts: need a sample-id column plus at least 2 taxa");

  CountMatrix counts;
  counts.taxa_names.assign(header.begin() + 1, header.end());
  const auto n_taxa = counts.taxa_names.size();

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::strip(line).empty()) continue;
    const auto cells = detail::split(line, delim);
    if (cells.size() != n_taxa + 1)
      throw std::runtime_error("read_counts: row " + std::to_string(lineno) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(n_taxa + 1));
    counts.sample_ids.push_back(cells[0]);
    std::vector<double> row(n_taxa);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const std::string& cell = cells[c];
      bool ok = !cell.empty();
      for (char ch : cell)
        if (!std::isdigit(static_cast<unsigned char>(ch))) ok = false;
      if (!ok)
        throw std::runtime_error("read_counts: cell at row " + std::to_string(lineno) +
                                 ", column " + std::to_string(c + 1) + " ('" + cell +
                                 "') is not a nonnegative integer");
      row[c - 1] = std::stod(cell);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("read_counts: '" + path + "' has no data rows");

  counts.w.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n_taxa));
  for (Eigen::Index i = 0; i < counts.w.rows(); ++i)
    for (Eigen::Index k = 0; k < counts.w.cols(); ++k)
      counts.w(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  counts.validate();
  return counts;
}

/// Write a count table in the format read_counts expects. The delimiter
/// follows the extension: tab for .tsv, comma otherwise.
inline void write_counts(const CountMatrix& counts, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_counts: cannot open '" + path + "'");
  const char delim = path.size() > 4 && path.substr(path.size() - 4) == ".tsv" ? '\t' : ',';
  out << "sample_id";
  for (const auto& name : counts.taxa_names) out << delim << name;
  out << '\n';
  for (Eigen::Index i = 0; i < counts.w.rows(); ++i) {
    out << (counts.sample_ids.empty() ? "sample_" + std::to_string(i + 1)
                                      : counts.sample_ids[static_cast<std::size_t>(i)]);
    for (Eigen::Index k = 0; k < counts.w.cols(); ++k)
      out << delim << static_cast<long long>(counts.w(i, k));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write_counts: failed writing '" + path + "'");
}

/// Move the named taxon to the last column so it becomes the log-ratio
/// reference; relative order of the other taxa is preserved.
inline CountMatrix reorder_reference(const CountMatrix& counts, const std::string& taxon) {
  auto it = std::find(counts.taxa_names.begin(), counts.taxa_names.end(), taxon);
  if (it == counts.taxa_names.end())
    throw std::invalid_argument("reference taxon '" + taxon + "' not found");
  const Eigen::Index ref = it - counts.taxa_names.begin();
  CountMatrix out = counts;
  if (ref == counts.w.cols() - 1) return out;
  for (Eigen::Index k = ref; k + 1 < counts.w.cols(); ++k) {
    out.w.col(k) = counts.w.col(k + 1);
    out.taxa_names[static_cast<std::size_t>(k)] =
        counts.taxa_names[static_cast<std::size_t>(k + 1)];
  }
  out.w.col(counts.w.cols() - 1) = counts.w.col(ref);
  out.taxa_names.back() = taxon;
  return out;
}

inline void write_labels(const std::vector<int>& labels, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_labels: cannot open '" + path + "'");
  for (int l : labels) out << l << '\n';
}

inline std::vector<int> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_labels: cannot open '" + path + "'");
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    line = detail::strip(line);
    if (line.empty()) continue;
    try {
      labels.push_back(std::stoi(line));
    } catch (const std::exception&) {
      throw std::runtime_error("read_labels: bad label '" + line + "' at line " +
                               std::to_string(labels.size() + 1));
    }
  }
  if (labels.empty()) throw std::runtime_error("read_labels: '" + path + "' has no labels");
  return labels;
}

inline json fit_to_json(const FitResult& fit) {
  json doc;
  doc["model"] = fit.model.code();
  doc["G"] = fit.G;
  doc["q"] = fit.q;
  doc["n"] = fit.n;
  doc["K"] = fit.K;
  doc["seed"] = fit.seed;
  doc["restarts"] = fit.restarts;
  doc["converged"] = fit.converged;
  doc["sweeps"] = fit.sweeps;
  doc["objective"] = fit.objective;
  doc["bic"] = fit.bic;
  doc["free_params"] = count_free_params(fit.model, fit.G, static_cast<int>(fit.K), fit.q);
  doc["objective_trace"] = fit.objective_trace;
  doc["pi"] = detail::vector_to_json(fit.state.pi);
  json comps = json::array();
  for (const auto& c : fit.state.components) {
    json cj;
    cj["mu"] = detail::vector_to_json(c.mu);
    cj["lambda"] = detail::matrix_to_json(c.lambda);
    cj["d"] = detail::vector_to_json(c.d);
    cj["sigma"] = detail::matrix_to_json(c.sigma());
    comps.push_back(std::move(cj));
  }
  doc["components"] = std::move(comps);
  doc["labels"] = fit.labels;
  doc["responsibilities"] = detail::matrix_to_json(fit.state.resp);
  return doc;
}

inline FitResult fit_from_json(const json& doc) {
  FitResult fit;
  fit.model = parse_model(doc.at("model").get<std::string>());
  fit.G = doc.at("G").get<int>();
  fit.q = doc.at("q").get<int>();
  fit.n = doc.at("n").get<Eigen::Index>();
  fit.K = doc.at("K").get<Eigen::Index>();
  fit.seed = doc.at("seed").get<std::uint64_t>();
  fit.restarts = doc.at("restarts").get<int>();
  fit.converged = doc.at("converged").get<bool>();
  fit.sweeps = doc.at("sweeps").get<int>();
  fit.objective = doc.at("objective").get<double>();
  fit.bic = doc.at("bic").get<double>();
  fit.objective_trace = doc.at("objective_trace").get<std::vector<double>>();
  fit.state.pi = detail::vector_from_json(doc.at("pi"));
  for (const auto& cj : doc.at("components")) {
    ComponentParams c;
    c.mu = detail::vector_from_json(cj.at("mu"));
    c.lambda = detail::matrix_from_json(cj.at("lambda"));
    c.d = detail::vector_from_json(cj.at("d"));
    fit.state.components.push_back(std::move(c));
  }
  fit.labels = doc.at("labels").get<std::vector<int>>();
  fit.state.resp = detail::matrix_from_json(doc.at("responsibilities"));
  fit.state.n = fit.n;
  fit.state.G = fit.G;
  fit.state.q = fit.q;
  return fit;
}

inline json report_to_json(const SelectionReport& report) {
  json doc;
  json cells = json::array();
  for (const auto& cell : report.cells) {
    json cj;
    cj["G"] = cell.G;
    cj["q"] = cell.q;
    cj["model"] = cell.model.code();
    cj["ok"] = cell.ok();
    json seeds = json::array();
    for (const auto& s : cell.seeds) {
      json sj;
      sj["seed"] = s.seed;
      sj["failed"] = s.failed;
      if (s.failed) {
        sj["error"] = s.error;
      } else {
        sj["objective"] = s.objective;
        sj["bic"] = s.bic;
        sj["converged"] = s.converged;
        sj["sweeps"] = s.sweeps;
      }
      seeds.push_back(std::move(sj));
    }
    cj["seeds"] = std::move(seeds);
    if (cell.ok()) {
      cj["best_seed"] = cell.best().seed;
      cj["bic"] = cell.best().bic;
      cj["objective"] = cell.best().objective;
      cj["converged"] = cell.best().converged;
      cj["sweeps"] = cell.best().sweeps;
    }
    cells.push_back(std::move(cj));
  }
  doc["cells"] = std::move(cells);
  json winner;
  const auto& wc = report.cells[report.winner_cell];
  winner["G"] = wc.G;
  winner["q"] = wc.q;
  winner["model"] = wc.model.code();
  winner["bic"] = wc.best().bic;
  winner["converged"] = report.winner_converged;
  doc["winner"] = std::move(winner);
  doc["winner_fit"] = fit_to_json(report.winner_fit);
  return doc;
}

/// Persist a fit document: full parameters plus the configuration echo, the
/// library version and the seed, so runs are reconstructible from the file.
inline void write_fit_result(const FitResult& fit, const json& config_echo,
                             const std::string& path) {
  json doc = fit_to_json(fit);
  doc["kind"] = "fit";
  doc["library"] = {{"name", "lnmfa"}, {"version", version}};
  doc["config"] = config_echo;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_fit_result: cannot open '" + path + "'");
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("write_fit_result: failed writing '" + path + "'");
}

inline FitResult read_fit_result(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_fit_result: cannot open '" + path + "'");
  json doc = json::parse(in);
  return fit_from_json(doc);
}

inline void write_selection_report(const SelectionReport& report, const json& config_echo,
                                   const std::string& path) {
  json doc = report_to_json(report);
  doc["kind"] = "selection";
  doc["library"] = {{"name", "lnmfa"}, {"version", version}};
  doc["config"] = config_echo;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_selection_report: cannot open '" + path + "'");
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("write_selection_report: failed writing '" + path + "'");
}

}  // namespace lnmfa
