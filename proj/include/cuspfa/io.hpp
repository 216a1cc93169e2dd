#pragma once

#include <Eigen/Core>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "cuspfa/errors.hpp"
#include "cuspfa/factor_model.hpp"
#include "cuspfa/mcmc.hpp"
#include "cuspfa/postprocess.hpp"

namespace cuspfa::io {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Low-level CSV helpers (shortest round-trip number formatting)
// ---------------------------------------------------------------------------

namespace detail {

inline void append_number(std::string& s, double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  s.append(buf, res.ptr);
}

inline double parse_number(std::string_view tok) {
  double v = 0.0;
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc()) throw io_error("csv: cannot parse number '" + std::string(tok) + "'");
  return v;
}

inline bool looks_numeric(std::string_view tok) {
  double v = 0.0;
  const char* begin = tok.data();
  while (begin != tok.data() + tok.size() && (*begin == ' ' || *begin == '\t')) ++begin;
  return std::from_chars(begin, tok.data() + tok.size(), v).ec == std::errc();
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') {
    out.back() = out.back().substr(0, out.back().size() - 1);
  }
  return out;
}

inline std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for writing: " + path.string());
  return f;
}

inline std::ifstream open_in(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for reading: " + path.string());
  return f;
}

}  // namespace detail

inline void write_matrix_csv(const fs::path& path, const Eigen::Ref<const Eigen::MatrixXd>& m,
                             const std::vector<std::string>& header = {}) {
  auto f = detail::open_out(path);
  std::string line;
  if (!header.empty()) {
    if (static_cast<Eigen::Index>(header.size()) != m.cols())
      throw io_error("write_matrix_csv: header width mismatch");
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j) line += ',';
      line += header[j];
    }
    line += '\n';
    f << line;
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    line.clear();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) line += ',';
      detail::append_number(line, m(i, j));
    }
    line += '\n';
    f << line;
  }
  if (!f) throw io_error("write failed: " + path.string());
}

/// Reads a numeric CSV matrix; a non-numeric first row is treated as a header.
inline Eigen::MatrixXd read_matrix_csv(const fs::path& path) {
  auto f = detail::open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (line.empty() || line == "\r") continue;
    const auto toks = detail::split_csv(line);
    if (first) {
      first = false;
      bool numeric = true;
      for (auto t : toks) {
        if (!detail::looks_numeric(t)) {
          numeric = false;
          break;
        }
      }
      if (!numeric) continue;  // header row
    }
    std::vector<double> row;
    row.reserve(toks.size());
    for (auto t : toks) row.push_back(detail::parse_number(t));
    if (!rows.empty() && row.size() != rows.front().size()) throw io_error("csv: ragged rows in " + path.string());
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw io_error("csv: no data rows in " + path.string());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

inline void write_json(const fs::path& path, const json& j) {
  auto f = detail::open_out(path);
  f << j.dump(2) << '\n';
  if (!f) throw io_error("write failed: " + path.string());
}

inline json read_json(const fs::path& path) {
  auto f = detail::open_in(path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw io_error("json parse error in " + path.string() + ": " + e.what());
  }
  return j;
}

// ---------------------------------------------------------------------------
// Datasets: data.csv (n x m, header y1..ym) plus truth.json sidecar
// ---------------------------------------------------------------------------

inline void write_dataset(const fs::path& dir, const Dataset& ds, const json& extra_meta = json::object()) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::vector<std::string> header;
  header.reserve(static_cast<std::size_t>(ds.m()));
  for (Eigen::Index j = 0; j < ds.m(); ++j) header.push_back("y" + std::to_string(j + 1));
  write_matrix_csv(dir / "data.csv", ds.y, header);
  if (ds.truth) {
    json t = extra_meta;
    t["m"] = ds.m();
    t["n"] = ds.n();
    t["h0"] = ds.truth->h0;
    json b0 = json::array();
    for (Eigen::Index i = 0; i < ds.truth->beta0.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index h = 0; h < ds.truth->beta0.cols(); ++h) row.push_back(ds.truth->beta0(i, h));
      b0.push_back(std::move(row));
    }
    t["beta0"] = std::move(b0);
    t["sigma0"] = std::vector<double>(ds.truth->sigma0.data(), ds.truth->sigma0.data() + ds.truth->sigma0.size());
    write_json(dir / "truth.json", t);
  }
}

/// Accepts either a dataset directory (data.csv [+ truth.json]) or a CSV file
/// path (with an optional truth.json next to it).
inline Dataset read_dataset(const fs::path& path) {
  fs::path csv = path, truth_path;
  if (fs::is_directory(path)) {
    csv = path / "data.csv";
    truth_path = path / "truth.json";
  } else {
    truth_path = path.parent_path() / "truth.json";
  }
  if (!fs::exists(csv)) throw io_error("dataset not found: " + csv.string());
  Dataset ds;
  ds.y = read_matrix_csv(csv);
  if (fs::exists(truth_path)) {
    const json t = read_json(truth_path);
    DatasetTruth truth;
    truth.h0 = t.at("h0").get<int>();
    const auto& b0 = t.at("beta0");
    const auto rows = static_cast<Eigen::Index>(b0.size());
    truth.beta0.resize(rows, truth.h0);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index h = 0; h < truth.beta0.cols(); ++h)
        truth.beta0(i, h) = b0[static_cast<std::size_t>(i)][static_cast<std::size_t>(h)].get<double>();
    const auto s0 = t.at("sigma0").get<std::vector<double>>();
    truth.sigma0 = Eigen::Map<const Eigen::VectorXd>(s0.data(), static_cast<Eigen::Index>(s0.size()));
    ds.truth = std::move(truth);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Chains: draws.csv, S.csv, tau.csv, theta.csv, beta.csv, sigma2.csv, meta.json
// ---------------------------------------------------------------------------

inline std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::Algo1F: return "algo1";
    case Algorithm::Algo2T: return "algo2";
    case Algorithm::CuspZ: return "cusp-z";
  }
  return "algo1";
}

inline Algorithm algorithm_from_name(const std::string& s) {
  if (s == "algo1") return Algorithm::Algo1F;
  if (s == "algo2") return Algorithm::Algo2T;
  if (s == "cusp-z") return Algorithm::CuspZ;
  throw io_error("unknown algorithm name: " + s);
}

inline void write_chain(const fs::path& dir, const ChainOutput& chain, const json& extra_meta = json::object()) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  const int kept = chain.kept();
  Eigen::MatrixXd draws(kept, 7);
  for (int k = 0; k < kept; ++k) {
    draws(k, 0) = k;
    draws(k, 1) = chain.hstar[static_cast<std::size_t>(k)];
    draws(k, 2) = chain.alpha[static_cast<std::size_t>(k)];
    draws(k, 3) = chain.nu0[static_cast<std::size_t>(k)];
    draws(k, 4) = chain.kappa[static_cast<std::size_t>(k)];
    draws(k, 5) = chain.logdet_omega[static_cast<std::size_t>(k)];
    draws(k, 6) = chain.fro_inv_omega[static_cast<std::size_t>(k)];
  }
  write_matrix_csv(dir / "draws.csv", draws,
                   {"iter", "hstar", "alpha", "nu0", "kappa", "logdet_omega", "fro_inv_omega"});

  const auto column_header = [&](const char* stem) {
    std::vector<std::string> h;
    h.reserve(static_cast<std::size_t>(chain.h));
    for (int j = 1; j <= chain.h; ++j) h.push_back(stem + std::to_string(j));
    return h;
  };
  write_matrix_csv(dir / "S.csv", chain.s.cast<double>(), column_header("s"));
  write_matrix_csv(dir / "tau.csv", chain.tau, column_header("tau"));
  write_matrix_csv(dir / "theta.csv", chain.theta, column_header("theta"));

  if (!chain.beta_draws.empty()) {
    Eigen::MatrixXd beta_flat(static_cast<Eigen::Index>(chain.beta_draws.size()),
                              static_cast<Eigen::Index>(chain.m) * chain.h);
    Eigen::MatrixXd sig(static_cast<Eigen::Index>(chain.sigma2_draws.size()), chain.m);
    for (std::size_t d = 0; d < chain.beta_draws.size(); ++d) {
      for (int i = 0; i < chain.m; ++i)
        for (int j = 0; j < chain.h; ++j)
          beta_flat(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i) * chain.h + j) =
              chain.beta_draws[d](i, j);
      sig.row(static_cast<Eigen::Index>(d)) = chain.sigma2_draws[d];
    }
    write_matrix_csv(dir / "beta.csv", beta_flat);
    write_matrix_csv(dir / "sigma2.csv", sig);
  }

  json meta = extra_meta;
  meta["algorithm"] = algorithm_name(chain.algorithm);
  meta["h"] = chain.h;
  meta["m"] = chain.m;
  meta["n"] = chain.n;
  meta["kept"] = kept;
  meta["loading_thin"] = chain.loading_thin;
  meta["accept_alpha"] = chain.accept_alpha;
  meta["accept_nu0"] = chain.accept_nu0;
  meta["step_alpha"] = chain.step_alpha;
  meta["step_nu0"] = chain.step_nu0;
  meta["wall_seconds"] = chain.wall_seconds;
  write_json(dir / "meta.json", meta);
}

inline ChainOutput read_chain(const fs::path& dir, json* meta_out = nullptr) {
  const json meta = read_json(dir / "meta.json");
  if (meta_out) *meta_out = meta;
  ChainOutput chain;
  chain.algorithm = algorithm_from_name(meta.at("algorithm").get<std::string>());
  chain.h = meta.at("h").get<int>();
  chain.m = meta.at("m").get<int>();
  chain.n = meta.at("n").get<int>();
  chain.loading_thin = meta.at("loading_thin").get<int>();
  chain.accept_alpha = meta.at("accept_alpha").get<double>();
  chain.accept_nu0 = meta.at("accept_nu0").get<double>();
  chain.step_alpha = meta.at("step_alpha").get<double>();
  chain.step_nu0 = meta.at("step_nu0").get<double>();
  chain.wall_seconds = meta.at("wall_seconds").get<double>();

  const Eigen::MatrixXd draws = read_matrix_csv(dir / "draws.csv");
  if (draws.cols() != 7) throw io_error("draws.csv: expected 7 columns");
  const int kept = static_cast<int>(draws.rows());
  chain.hstar.resize(static_cast<std::size_t>(kept));
  chain.alpha.resize(static_cast<std::size_t>(kept));
  chain.nu0.resize(static_cast<std::size_t>(kept));
  chain.kappa.resize(static_cast<std::size_t>(kept));
  chain.logdet_omega.resize(static_cast<std::size_t>(kept));
  chain.fro_inv_omega.resize(static_cast<std::size_t>(kept));
  for (int k = 0; k < kept; ++k) {
    chain.hstar[static_cast<std::size_t>(k)] = static_cast<int>(draws(k, 1));
    chain.alpha[static_cast<std::size_t>(k)] = draws(k, 2);
    chain.nu0[static_cast<std::size_t>(k)] = draws(k, 3);
    chain.kappa[static_cast<std::size_t>(k)] = draws(k, 4);
    chain.logdet_omega[static_cast<std::size_t>(k)] = draws(k, 5);
    chain.fro_inv_omega[static_cast<std::size_t>(k)] = draws(k, 6);
  }
  chain.s = read_matrix_csv(dir / "S.csv").cast<int>();
  chain.tau = read_matrix_csv(dir / "tau.csv");
  chain.theta = read_matrix_csv(dir / "theta.csv");
  if (fs::exists(dir / "beta.csv")) {
    const Eigen::MatrixXd beta_flat = read_matrix_csv(dir / "beta.csv");
    const Eigen::MatrixXd sig = read_matrix_csv(dir / "sigma2.csv");
    if (beta_flat.cols() != static_cast<Eigen::Index>(chain.m) * chain.h)
      throw io_error("beta.csv: width mismatch");
    for (Eigen::Index d = 0; d < beta_flat.rows(); ++d) {
      Eigen::MatrixXd b(chain.m, chain.h);
      for (int i = 0; i < chain.m; ++i)
        for (int j = 0; j < chain.h; ++j) b(i, j) = beta_flat(d, static_cast<Eigen::Index>(i) * chain.h + j);
      chain.beta_draws.push_back(std::move(b));
      chain.sigma2_draws.push_back(sig.row(d).transpose());
    }
  }
  return chain;
}

// ---------------------------------------------------------------------------
// Summaries and figure data
// ---------------------------------------------------------------------------

/// fig_hstar_trace.csv, fig_cusp_box.csv, fig_alpha_trace.csv next to the
/// summary, mirroring the plotted quantities.
inline void write_figure_data(const fs::path& dir, const ChainOutput& chain) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  const int kept = chain.kept();
  Eigen::MatrixXd trace(kept, 2), atrace(kept, 2);
  for (int k = 0; k < kept; ++k) {
    trace(k, 0) = k;
    trace(k, 1) = chain.hstar[static_cast<std::size_t>(k)];
    atrace(k, 0) = k;
    atrace(k, 1) = chain.alpha[static_cast<std::size_t>(k)];
  }
  write_matrix_csv(dir / "fig_hstar_trace.csv", trace, {"iteration", "hstar"});
  write_matrix_csv(dir / "fig_alpha_trace.csv", atrace, {"iteration", "alpha"});

  const CuspReordered rep = cusp_reorder(chain);
  const auto pi_stats = column_box_stats((1.0 - rep.tau_sorted.array()).matrix());
  const auto theta_stats = column_box_stats(rep.theta_sorted);
  Eigen::MatrixXd box(chain.h, 11);
  for (int j = 0; j < chain.h; ++j) {
    const auto& p = pi_stats[static_cast<std::size_t>(j)];
    const auto& t = theta_stats[static_cast<std::size_t>(j)];
    box.row(j) << j + 1, p.q05, p.q25, p.q50, p.q75, p.q95, t.q05, t.q25, t.q50, t.q75, t.q95;
  }
  write_matrix_csv(dir / "fig_cusp_box.csv", box,
                   {"h", "pi_q05", "pi_q25", "pi_q50", "pi_q75", "pi_q95", "theta_q05", "theta_q25",
                    "theta_q50", "theta_q75", "theta_q95"});
}

struct ChainSummary {
  HStarSummary hstar;
  std::optional<double> mse;
  double ess_logdet = 0.0;
  double ess_fro = 0.0;
};

inline ChainSummary summarize_chain(const ChainOutput& chain, const std::optional<DatasetTruth>& truth) {
  ChainSummary s;
  s.hstar = summarize_hstar(chain, truth ? std::optional<int>(truth->h0) : std::nullopt);
  if (truth && !chain.beta_draws.empty()) s.mse = mse_omega(chain, truth->omega0());
  s.ess_logdet = ess(chain.logdet_omega);
  s.ess_fro = ess(chain.fro_inv_omega);
  return s;
}

inline json summary_to_json(const ChainOutput& chain, const ChainSummary& s) {
  json j;
  j["hstar_mode"] = s.hstar.mode;
  j["hstar_mode_tie"] = s.hstar.mode_tie;
  j["hstar_pmf"] = s.hstar.pmf;
  if (s.hstar.ordinate) j["ordinate"] = *s.hstar.ordinate;
  if (s.mse) j["mse_omega"] = *s.mse;
  j["ess_logdet"] = s.ess_logdet;
  j["ess_fro_inv"] = s.ess_fro;
  j["ess_rate_logdet"] = s.ess_logdet / chain.kept();
  j["ess_rate_fro_inv"] = s.ess_fro / chain.kept();
  j["kept"] = chain.kept();
  j["accept_alpha"] = chain.accept_alpha;
  j["accept_nu0"] = chain.accept_nu0;
  j["wall_seconds"] = chain.wall_seconds;
  return j;
}

}  // namespace cuspfa::io
