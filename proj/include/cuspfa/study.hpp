#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cuspfa/io.hpp"
#include "cuspfa/mcmc.hpp"
#include "cuspfa/postprocess.hpp"

namespace cuspfa {

struct PriorVariant {
  std::string tag;  // "F", "L" or "H"
  double a_theta = 2.5;
  double c_theta = 2.5;
};

inline PriorVariant prior_from_tag(const std::string& tag) {
  if (tag == "F") return {"F", 2.5, 2.5};
  if (tag == "L") return {"L", 1.0, 2.5};
  if (tag == "H") return {"H", 0.5, 2.5};
  throw std::invalid_argument("unknown prior tag (expected F, L or H): " + tag);
}

struct StudyConfig {
  std::uint64_t master_seed = 20240801;
  int replicates = 5;
  int n = 100;
  int iterations = 10000;
  int burn_in = 5000;
  std::vector<ScenarioSpec> scenarios;
  std::vector<std::string> priors = {"F", "L", "H"};
  std::string esp = "1pb";  // 1pb | uniform | 2pb
  double esp_beta = 1.0;
  std::string algorithm = "algo1";
  int h_cap = 30;
  int jobs = 0;  // 0: hardware concurrency

  /// (20,5) and (50,10), dense and sparse; --full adds (100,15).
  static StudyConfig desk_defaults(bool full = false) {
    StudyConfig c;
    const std::vector<std::pair<int, int>> dims =
        full ? std::vector<std::pair<int, int>>{{20, 5}, {50, 10}, {100, 15}}
             : std::vector<std::pair<int, int>>{{20, 5}, {50, 10}};
    for (auto [m, h0] : dims) {
      for (LoadingDensity d : {LoadingDensity::Dense, LoadingDensity::Sparse}) {
        ScenarioSpec s;
        s.m = m;
        s.h0 = h0;
        s.n = c.n;
        s.density = d;
        c.scenarios.push_back(s);
      }
    }
    return c;
  }
};

inline std::string density_name(LoadingDensity d) { return d == LoadingDensity::Dense ? "dense" : "sparse"; }
inline LoadingDensity density_from_name(const std::string& s) {
  if (s == "dense") return LoadingDensity::Dense;
  if (s == "sparse") return LoadingDensity::Sparse;
  throw std::invalid_argument("unknown density (expected dense or sparse): " + s);
}

inline nlohmann::json study_config_to_json(const StudyConfig& c) {
  nlohmann::json j;
  j["master_seed"] = c.master_seed;
  j["replicates"] = c.replicates;
  j["n"] = c.n;
  j["iterations"] = c.iterations;
  j["burn_in"] = c.burn_in;
  j["priors"] = c.priors;
  j["esp"] = c.esp;
  j["esp_beta"] = c.esp_beta;
  j["algorithm"] = c.algorithm;
  j["h_cap"] = c.h_cap;
  j["jobs"] = c.jobs;
  nlohmann::json scen = nlohmann::json::array();
  for (const auto& s : c.scenarios) {
    scen.push_back({{"m", s.m}, {"h0", s.h0}, {"n", s.n}, {"density", density_name(s.density)},
                    {"zero_fraction", s.zero_fraction}});
  }
  j["scenarios"] = std::move(scen);
  return j;
}

inline StudyConfig study_config_from_json(const nlohmann::json& j) {
  StudyConfig c = StudyConfig{};
  c.scenarios.clear();
  if (j.contains("master_seed")) c.master_seed = j["master_seed"].get<std::uint64_t>();
  if (j.contains("replicates")) c.replicates = j["replicates"].get<int>();
  if (j.contains("n")) c.n = j["n"].get<int>();
  if (j.contains("iterations")) c.iterations = j["iterations"].get<int>();
  if (j.contains("burn_in")) c.burn_in = j["burn_in"].get<int>();
  if (j.contains("priors")) c.priors = j["priors"].get<std::vector<std::string>>();
  if (j.contains("esp")) c.esp = j["esp"].get<std::string>();
  if (j.contains("esp_beta")) c.esp_beta = j["esp_beta"].get<double>();
  if (j.contains("algorithm")) c.algorithm = j["algorithm"].get<std::string>();
  if (j.contains("h_cap")) c.h_cap = j["h_cap"].get<int>();
  if (j.contains("jobs")) c.jobs = j["jobs"].get<int>();
  if (j.contains("scenarios")) {
    for (const auto& s : j["scenarios"]) {
      ScenarioSpec spec;
      spec.m = s.at("m").get<int>();
      spec.h0 = s.at("h0").get<int>();
      spec.n = s.contains("n") ? s["n"].get<int>() : c.n;
      spec.density = density_from_name(s.at("density").get<std::string>());
      if (s.contains("zero_fraction")) spec.zero_fraction = s["zero_fraction"].get<double>();
      c.scenarios.push_back(spec);
    }
  } else {
    c.scenarios = StudyConfig::desk_defaults().scenarios;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Seed derivation: stable under scheduling, parallelism and list reordering
// ---------------------------------------------------------------------------

namespace detail {
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}
inline constexpr std::uint64_t kDatasetTag = 0xDA7A5E7Dull;
inline constexpr std::uint64_t kChainTag = 0xC4A1235Eull;
}  // namespace detail

inline Rng dataset_rng(std::uint64_t master_seed, int scenario_index, int replicate) {
  return Rng(master_seed, stable_mix({detail::kDatasetTag, static_cast<std::uint64_t>(scenario_index),
                                      static_cast<std::uint64_t>(replicate)}));
}

inline Rng chain_rng(std::uint64_t master_seed, int scenario_index, const std::string& prior_tag,
                     const std::string& esp_tag, int replicate) {
  return Rng(master_seed,
             stable_mix({detail::kChainTag, static_cast<std::uint64_t>(scenario_index),
                         detail::fnv1a(prior_tag), detail::fnv1a(esp_tag),
                         static_cast<std::uint64_t>(replicate)}));
}

inline EspSpec esp_from_name(const std::string& name, double esp_beta) {
  if (name == "1pb") return EspSpec::one_pb(2, GammaParams{6.0, 2.0});
  if (name == "uniform") return EspSpec::uniform(2);
  if (name == "2pb") return EspSpec::two_pb(2, esp_beta, GammaParams{6.0, 2.0});
  throw std::invalid_argument("unknown esp family (expected 1pb, uniform or 2pb): " + name);
}

inline SamplerConfig sampler_config_for(const StudyConfig& sc, const PriorVariant& prior) {
  SamplerConfig cfg;
  cfg.algorithm = io::algorithm_from_name(sc.algorithm);
  cfg.iterations = sc.iterations;
  cfg.burn_in = sc.burn_in;
  cfg.a_theta = prior.a_theta;
  cfg.c_theta = prior.c_theta;
  cfg.esp = esp_from_name(sc.esp, sc.esp_beta);
  cfg.h_cap = sc.h_cap;
  return cfg;
}

// ---------------------------------------------------------------------------
// Grid execution
// ---------------------------------------------------------------------------

struct StudyRow {
  int scenario_index = 0;
  int m = 0, h0 = 0;
  std::string density;
  std::string prior;
  int replicate = 0;
  int mode = 0;
  double ordinate = 0.0;
  double mse = 0.0;
  double runtime = 0.0;
  std::string status = "ok";
};

struct StudyCell {
  int m = 0, h0 = 0;
  std::string density;
  std::string prior;
  int completed = 0, failed = 0;
  double mode_median = 0, mode_q05 = 0, mode_q95 = 0;
  double ord_median = 0, ord_q05 = 0, ord_q95 = 0;
  double mse_median = 0, mse_q05 = 0, mse_q95 = 0;
  double runtime_median = 0;
};

struct StudyResult {
  std::vector<StudyRow> rows;
  std::vector<StudyCell> cells;
};

inline StudyRow run_study_unit(const StudyConfig& sc, int scenario_index, int prior_index, int replicate) {
  const ScenarioSpec& scen = sc.scenarios[static_cast<std::size_t>(scenario_index)];
  StudyRow row;
  row.scenario_index = scenario_index;
  row.m = scen.m;
  row.h0 = scen.h0;
  row.density = density_name(scen.density);
  row.prior = sc.priors[static_cast<std::size_t>(prior_index)];
  row.replicate = replicate;
  try {
    const PriorVariant prior = prior_from_tag(row.prior);
    Rng drng = dataset_rng(sc.master_seed, scenario_index, replicate);
    const Dataset ds = simulate_dataset(drng, scen);
    Rng crng = chain_rng(sc.master_seed, scenario_index, prior.tag, sc.esp, replicate);
    const ChainOutput chain = run_chain(crng, ds, sampler_config_for(sc, prior));
    const HStarSummary hs = summarize_hstar(chain, scen.h0);
    row.mode = hs.mode;
    row.ordinate = hs.ordinate.value_or(0.0);
    row.mse = mse_omega(chain, ds.truth->omega0());
    row.runtime = chain.wall_seconds;
  } catch (const std::exception& e) {
    row.status = e.what();
  }
  return row;
}

/// Work pool over (scenario, prior, replicate); results are written into a
/// pre-sized vector, so ordering is independent of scheduling.
inline StudyResult run_study(const StudyConfig& sc) {
  detail::require(sc.replicates >= 1, "study: replicates >= 1");
  for (const auto& scen : sc.scenarios) scen.validate();
  struct Unit {
    int scenario, prior, replicate;
  };
  std::vector<Unit> units;
  for (int s = 0; s < static_cast<int>(sc.scenarios.size()); ++s)
    for (int p = 0; p < static_cast<int>(sc.priors.size()); ++p)
      for (int r = 0; r < sc.replicates; ++r) units.push_back({s, p, r});

  StudyResult result;
  result.rows.resize(units.size());
  std::atomic<std::size_t> next{0};
  const unsigned jobs = sc.jobs > 0 ? static_cast<unsigned>(sc.jobs)
                                    : std::max(1u, std::thread::hardware_concurrency());
  const auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= units.size()) return;
      result.rows[i] = run_study_unit(sc, units[i].scenario, units[i].prior, units[i].replicate);
    }
  };
  if (jobs <= 1 || units.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < std::min<std::size_t>(jobs, units.size()); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Aggregate per (scenario, prior) over completed replicates.
  for (int s = 0; s < static_cast<int>(sc.scenarios.size()); ++s) {
    for (const auto& ptag : sc.priors) {
      StudyCell cell;
      cell.m = sc.scenarios[static_cast<std::size_t>(s)].m;
      cell.h0 = sc.scenarios[static_cast<std::size_t>(s)].h0;
      cell.density = density_name(sc.scenarios[static_cast<std::size_t>(s)].density);
      cell.prior = ptag;
      std::vector<double> modes, ords, mses, times;
      for (const auto& row : result.rows) {
        if (row.scenario_index != s || row.prior != ptag) continue;
        if (row.status != "ok") {
          ++cell.failed;
          continue;
        }
        ++cell.completed;
        modes.push_back(row.mode);
        ords.push_back(row.ordinate);
        mses.push_back(row.mse);
        times.push_back(row.runtime);
      }
      if (cell.completed > 0) {
        cell.mode_median = quantile(modes, 0.5);
        cell.mode_q05 = quantile(modes, 0.05);
        cell.mode_q95 = quantile(modes, 0.95);
        cell.ord_median = quantile(ords, 0.5);
        cell.ord_q05 = quantile(ords, 0.05);
        cell.ord_q95 = quantile(ords, 0.95);
        cell.mse_median = quantile(mses, 0.5);
        cell.mse_q05 = quantile(mses, 0.05);
        cell.mse_q95 = quantile(mses, 0.95);
        cell.runtime_median = quantile(times, 0.5);
      }
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

inline void write_study(const std::filesystem::path& dir, const StudyConfig& sc, const StudyResult& res) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  io::write_json(dir / "config.json", study_config_to_json(sc));
  {
    auto f = io::detail::open_out(dir / "results.csv");
    f << "m,h0,density,prior,replicate,mode,ordinate,mse_omega,runtime_s,status\n";
    for (const auto& r : res.rows) {
      std::string line;
      line += std::to_string(r.m) + ',' + std::to_string(r.h0) + ',' + r.density + ',' + r.prior + ',' +
              std::to_string(r.replicate) + ',';
      line += std::to_string(r.mode) + ',';
      io::detail::append_number(line, r.ordinate);
      line += ',';
      io::detail::append_number(line, r.mse);
      line += ',';
      io::detail::append_number(line, r.runtime);
      line += ',';
      line += r.status == "ok" ? "ok" : "failed";
      line += '\n';
      f << line;
    }
  }
  {
    auto f = io::detail::open_out(dir / "table.csv");
    f << "m,h0,density,prior,mode_M,mode_Q05,mode_Q95,ordinate_M,ordinate_Q05,ordinate_Q95,"
         "mse_M,mse_Q05,mse_Q95,runtime_M,completed,failed\n";
    for (const auto& c : res.cells) {
      std::string line = std::to_string(c.m) + ',' + std::to_string(c.h0) + ',' + c.density + ',' + c.prior;
      for (double v : {c.mode_median, c.mode_q05, c.mode_q95, c.ord_median, c.ord_q05, c.ord_q95,
                       c.mse_median, c.mse_q05, c.mse_q95, c.runtime_median}) {
        line += ',';
        io::detail::append_number(line, v);
      }
      line += ',' + std::to_string(c.completed) + ',' + std::to_string(c.failed) + '\n';
      f << line;
    }
  }
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : res.cells) {
    cells.push_back({{"m", c.m},
                     {"h0", c.h0},
                     {"density", c.density},
                     {"prior", c.prior},
                     {"completed", c.completed},
                     {"failed", c.failed},
                     {"mode", {{"median", c.mode_median}, {"q05", c.mode_q05}, {"q95", c.mode_q95}}},
                     {"ordinate", {{"median", c.ord_median}, {"q05", c.ord_q05}, {"q95", c.ord_q95}}},
                     {"mse_omega", {{"median", c.mse_median}, {"q05", c.mse_q05}, {"q95", c.mse_q95}}},
                     {"runtime_median_s", c.runtime_median}});
  }
  io::write_json(dir / "table.json", cells);
}

}  // namespace cuspfa
