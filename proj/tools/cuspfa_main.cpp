// Command-line front end: dataset simulation, chain fitting, prior
// simulation reports, study-table reproduction and chain summaries.

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cuspfa/cuspfa.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SimulateArgs {
  std::string out;
  std::string config;
  std::uint64_t seed = 20240801;
  int replicates = 5;
  int m = 0, h0 = 0, n = 100;
  std::string density = "dense";
};

std::string scenario_dir_name(const cuspfa::ScenarioSpec& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "m%03d_h%02d_%s", s.m, s.h0, cuspfa::density_name(s.density).c_str());
  return buf;
}

int run_simulate(const SimulateArgs& args) {
  cuspfa::StudyConfig sc = cuspfa::StudyConfig::desk_defaults();
  if (!args.config.empty()) sc = cuspfa::study_config_from_json(cuspfa::io::read_json(args.config));
  sc.master_seed = args.seed;
  sc.replicates = args.replicates;
  if (args.m > 0) {
    cuspfa::ScenarioSpec s;
    s.m = args.m;
    s.h0 = args.h0;
    s.n = args.n;
    s.density = cuspfa::density_from_name(args.density);
    sc.scenarios = {s};
  }
  for (int si = 0; si < static_cast<int>(sc.scenarios.size()); ++si) {
    const auto& scen = sc.scenarios[static_cast<std::size_t>(si)];
    scen.validate();
    for (int r = 0; r < sc.replicates; ++r) {
      cuspfa::Rng rng = cuspfa::dataset_rng(sc.master_seed, si, r);
      const cuspfa::Dataset ds = cuspfa::simulate_dataset(rng, scen);
      char rep[16];
      std::snprintf(rep, sizeof(rep), "rep%03d", r);
      json meta;
      meta["density"] = cuspfa::density_name(scen.density);
      meta["master_seed"] = sc.master_seed;
      meta["scenario_index"] = si;
      meta["replicate"] = r;
      cuspfa::io::write_dataset(fs::path(args.out) / scenario_dir_name(scen) / rep, ds, meta);
    }
  }
  std::cout << "wrote " << sc.scenarios.size() * static_cast<std::size_t>(sc.replicates) << " dataset(s) under "
            << args.out << "\n";
  return 0;
}

struct FitArgs {
  std::string data;
  std::string out;
  std::string algorithm = "algo1";
  std::string prior = "F";
  std::string esp = "1pb";
  double esp_beta = 1.0;
  int iters = 10000;
  int burnin = 5000;
  std::uint64_t seed = 20240801;
  std::uint64_t stream = 0;
  int h_cap = 30;
  int thin = 10;
  int init_active = 3;
  bool standardize = false;
  bool no_boost = false;
  double cusp_alpha = 5.0;
  bool cusp_learn_alpha = false;
};

int run_fit(const FitArgs& args) {
  cuspfa::Dataset ds = cuspfa::io::read_dataset(args.data);
  bool standardized = false;
  if (args.standardize) {
    for (Eigen::Index j = 0; j < ds.y.cols(); ++j) {
      const double mean = ds.y.col(j).mean();
      const double sd = std::sqrt((ds.y.col(j).array() - mean).square().sum() /
                                  std::max<double>(1.0, static_cast<double>(ds.y.rows()) - 1.0));
      ds.y.col(j) = (ds.y.col(j).array() - mean) / (sd > 0 ? sd : 1.0);
    }
    standardized = true;
  }

  const cuspfa::PriorVariant prior = cuspfa::prior_from_tag(args.prior);
  cuspfa::SamplerConfig cfg;
  cfg.algorithm = cuspfa::io::algorithm_from_name(args.algorithm);
  cfg.iterations = args.iters;
  cfg.burn_in = args.burnin;
  cfg.a_theta = prior.a_theta;
  cfg.c_theta = prior.c_theta;
  cfg.esp = cuspfa::esp_from_name(args.esp, args.esp_beta);
  cfg.h_cap = args.h_cap;
  cfg.loading_thin = args.thin;
  cfg.init_active = args.init_active;
  cfg.boosting = !args.no_boost;
  if (cfg.algorithm == cuspfa::Algorithm::CuspZ) {
    cfg.cusp_sticks = cuspfa::StickBreakingSpec::legnaro_cusp(args.cusp_alpha, 2, true);
    cfg.cusp_learn_alpha = args.cusp_learn_alpha;
    cfg.alpha_fixed = args.cusp_alpha;
  }

  cuspfa::Rng rng(args.seed, args.stream);
  const cuspfa::ChainOutput chain = cuspfa::run_chain(rng, ds, cfg);

  json meta;
  meta["dataset"] = args.data;
  meta["seed"] = args.seed;
  meta["stream"] = args.stream;
  meta["prior"] = prior.tag;
  meta["a_theta"] = prior.a_theta;
  meta["c_theta"] = prior.c_theta;
  meta["esp"] = args.esp;
  meta["esp_beta"] = args.esp_beta;
  meta["iterations"] = args.iters;
  meta["burn_in"] = args.burnin;
  meta["standardized"] = standardized;
  meta["boosting"] = cfg.boosting;
  if (ds.truth) meta["truth_h0"] = ds.truth->h0;
  cuspfa::io::write_chain(args.out, chain, meta);
  std::cout << "chain written to " << args.out << " (" << chain.kept() << " kept draws, "
            << chain.wall_seconds << " s)\n";
  return 0;
}

struct PriorSimArgs {
  std::string out;
  std::string family;  // stick catalogue; empty means use --esp
  std::string esp = "1pb";
  double alpha = 5.0;
  double beta = 1.0;
  double kappa_ok = 0.0;
  double sigma_d = 0.5;
  int h = 10;
  int draws = 100000;
  double nu0 = 0.01;
  double a_theta = 2.5;
  double c_theta = 2.5;
  std::string spike = "f";
  double theta_inf = 0.01;
  std::uint64_t seed = 20240801;
};

int run_prior_sim(const PriorSimArgs& args) {
  fs::create_directories(args.out);
  cuspfa::Rng rng(args.seed, cuspfa::stable_mix({0x9121052ull}));
  const std::vector<double> eps_grid = {0.05, 0.1, 0.5};

  cuspfa::SpikeSlabSpec ss = cuspfa::SpikeSlabSpec::triple_gamma(args.a_theta, args.c_theta, args.nu0);
  if (args.spike == "dirac") ss.spike = cuspfa::SpikeSlabComponent::point_mass(args.theta_inf);

  cuspfa::ShrinkageReport report;
  json report_json;
  if (!args.family.empty()) {
    cuspfa::StickBreakingSpec spec = cuspfa::StickBreakingSpec::legnaro_cusp(args.alpha, args.h);
    if (args.family == "legnaro") {
      spec = cuspfa::StickBreakingSpec::legnaro_cusp(args.alpha, args.h);
    } else if (args.family == "ibp2") {
      spec = cuspfa::StickBreakingSpec::two_param_ibp(args.alpha, args.beta, args.h);
    } else if (args.family == "ohnkim") {
      spec = cuspfa::StickBreakingSpec::ohn_kim(args.alpha, args.kappa_ok, args.h);
    } else if (args.family == "py-pos") {
      spec = cuspfa::StickBreakingSpec::py_positive(args.alpha, args.sigma_d, args.h);
    } else if (args.family == "py-neg") {
      spec = cuspfa::StickBreakingSpec::py_negative_finite(-std::fabs(args.sigma_d), args.h);
    } else if (args.family == "1pb-rep") {
      spec = cuspfa::StickBreakingSpec::finite_esp_derived(args.alpha, args.h);
    } else {
      throw std::invalid_argument("unknown stick family: " + args.family);
    }
    report = cuspfa::verify_increasing_shrinkage(rng, spec, ss, eps_grid, args.draws);
    report_json["family"] = args.family;
  } else {
    const cuspfa::EspSpec spec = [&] {
      auto s = cuspfa::esp_from_name(args.esp, args.beta);
      s.truncation = args.h;
      return s;
    }();
    report = cuspfa::verify_increasing_shrinkage(rng, spec, args.alpha, ss, eps_grid, args.draws);
    report_json["esp"] = args.esp;

    // Prior moments of Hstar: Monte Carlo against the closed form.
    const int n_draws = args.draws;
    double mean = 0.0, m2 = 0.0;
    for (int d = 0; d < n_draws; ++d) {
      const Eigen::VectorXd tau = cuspfa::sample_esp(rng, spec, args.alpha);
      int hstar = 0;
      for (Eigen::Index j = 0; j < tau.size(); ++j) hstar += rng.uniform() < tau[j] ? 1 : 0;
      mean += hstar;
      m2 += static_cast<double>(hstar) * hstar;
    }
    mean /= n_draws;
    m2 /= n_draws;
    const double var = m2 - mean * mean;
    {
      auto f = cuspfa::io::detail::open_out(fs::path(args.out) / "hstar.csv");
      f << "alpha,H,mc_mean,mc_var,closed_mean,closed_var\n";
      std::string line;
      cuspfa::io::detail::append_number(line, args.alpha);
      line += ',' + std::to_string(args.h) + ',';
      cuspfa::io::detail::append_number(line, mean);
      line += ',';
      cuspfa::io::detail::append_number(line, var);
      const auto closed = cuspfa::hstar_prior_moments(spec, args.alpha);
      line += ',';
      cuspfa::io::detail::append_number(line, closed ? closed->first : std::nan(""));
      line += ',';
      cuspfa::io::detail::append_number(line, closed ? closed->second : std::nan(""));
      line += '\n';
      f << line;
      if (closed) {
        report_json["hstar"] = {{"mc_mean", mean},
                                {"mc_var", var},
                                {"closed_mean", closed->first},
                                {"closed_var", closed->second}};
      }
    }

    // Order-statistics law of the CUSP representation (1PB only).
    if (spec.family == cuspfa::EspFamily::OnePB || spec.family == cuspfa::EspFamily::Uniform) {
      const double alpha_eff =
          spec.family == cuspfa::EspFamily::Uniform ? static_cast<double>(args.h) : args.alpha;
      Eigen::VectorXd s1 = Eigen::VectorXd::Zero(args.h), s2 = Eigen::VectorXd::Zero(args.h);
      for (int d = 0; d < n_draws; ++d) {
        const Eigen::VectorXd tau = cuspfa::sample_esp(rng, spec, alpha_eff);
        const auto rep = cuspfa::esp_to_cusp(tau);
        for (int j = 0; j < args.h; ++j) {
          const double nu_star = 1.0 - rep.cusp.sticks[j];
          s1[j] += nu_star;
          s2[j] += nu_star * nu_star;
        }
      }
      auto f = cuspfa::io::detail::open_out(fs::path(args.out) / "orderstat.csv");
      f << "h,mean_mc,mean_exact,m2_mc,m2_exact\n";
      const auto laws = cuspfa::onepb_stick_law(alpha_eff, args.h);
      for (int j = 0; j < args.h; ++j) {
        const double b = laws[static_cast<std::size_t>(j)].b;  // nu*_h ~ Beta(b, 1)
        std::string line = std::to_string(j + 1) + ',';
        cuspfa::io::detail::append_number(line, s1[j] / n_draws);
        line += ',';
        cuspfa::io::detail::append_number(line, b / (b + 1.0));
        line += ',';
        cuspfa::io::detail::append_number(line, s2[j] / n_draws);
        line += ',';
        cuspfa::io::detail::append_number(line, b / (b + 2.0));
        line += '\n';
        f << line;
      }
    }
  }

  {
    auto f = cuspfa::io::detail::open_out(fs::path(args.out) / "shrinkage.csv");
    f << "epsilon,h,estimate,std_error\n";
    for (const auto& curve : report.curves) {
      for (std::size_t j = 0; j < curve.prob.size(); ++j) {
        std::string line;
        cuspfa::io::detail::append_number(line, curve.epsilon);
        line += ',' + std::to_string(j + 1) + ',';
        cuspfa::io::detail::append_number(line, curve.prob[j]);
        line += ',';
        cuspfa::io::detail::append_number(line, curve.std_error[j]);
        line += '\n';
        f << line;
      }
    }
  }
  int violations = 0;
  for (const auto& c : report.curves) violations += static_cast<int>(c.violations.size());
  report_json["draws"] = report.draws;
  report_json["monotonicity_violations"] = violations;
  cuspfa::io::write_json(fs::path(args.out) / "report.json", report_json);
  std::cout << "prior-sim reports written to " << args.out << " (" << violations
            << " monotonicity violation(s) beyond 3 SE)\n";
  return 0;
}

struct TableArgs {
  std::string out;
  std::string config;
  std::uint64_t seed = 20240801;
  int jobs = 0;
  bool full = false;
  int replicates = 0;
  int iters = 0;
  int burnin = -1;
};

int run_reproduce_table(const TableArgs& args) {
  cuspfa::StudyConfig sc = cuspfa::StudyConfig::desk_defaults(args.full);
  if (!args.config.empty()) sc = cuspfa::study_config_from_json(cuspfa::io::read_json(args.config));
  sc.master_seed = args.seed;
  if (args.jobs > 0) sc.jobs = args.jobs;
  if (args.replicates > 0) sc.replicates = args.replicates;
  if (args.iters > 0) sc.iterations = args.iters;
  if (args.burnin >= 0) sc.burn_in = args.burnin;
  const cuspfa::StudyResult res = cuspfa::run_study(sc);
  cuspfa::write_study(args.out, sc, res);
  int failed = 0;
  for (const auto& r : res.rows) failed += r.status == "ok" ? 0 : 1;
  if (failed > 0)
    std::cerr << "warning: " << failed << " replicate(s) failed; aggregates cover completed runs only\n";
  std::cout << "study table written to " << args.out << " (" << res.rows.size() - failed << "/"
            << res.rows.size() << " units completed)\n";
  return 0;
}

struct SummarizeArgs {
  std::string chain;
  std::string out;
  std::string data;
};

int run_summarize(const SummarizeArgs& args) {
  json meta;
  const cuspfa::ChainOutput chain = cuspfa::io::read_chain(args.chain, &meta);
  std::optional<cuspfa::DatasetTruth> truth;
  std::string data_path = args.data;
  if (data_path.empty() && meta.contains("dataset")) data_path = meta["dataset"].get<std::string>();
  if (!data_path.empty() && fs::exists(data_path)) {
    const cuspfa::Dataset ds = cuspfa::io::read_dataset(data_path);
    truth = ds.truth;
  }
  const fs::path out = args.out.empty() ? fs::path(args.chain) : fs::path(args.out);
  const cuspfa::io::ChainSummary summary = cuspfa::io::summarize_chain(chain, truth);
  fs::create_directories(out);
  cuspfa::io::write_json(out / "summary.json", cuspfa::io::summary_to_json(chain, summary));
  cuspfa::io::write_figure_data(out, chain);
  std::cout << "summary written to " << out << " (mode " << summary.hstar.mode;
  if (summary.hstar.ordinate) std::cout << ", ordinate " << *summary.hstar.ordinate;
  std::cout << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shrinkage-process priors for sparse Bayesian factor analysis"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate synthetic factor-model datasets");
  c_sim->add_option("--out", sim.out, "Output directory")->required();
  c_sim->add_option("--config", sim.config, "Study config JSON");
  c_sim->add_option("--seed", sim.seed, "Master seed");
  c_sim->add_option("--replicates", sim.replicates, "Replicates per scenario");
  c_sim->add_option("--m", sim.m, "Variables (overrides config scenarios)");
  c_sim->add_option("--h0", sim.h0, "True factors");
  c_sim->add_option("--n", sim.n, "Observations");
  c_sim->add_option("--density", sim.density, "dense|sparse");

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "Run an MCMC chain on a dataset");
  c_fit->add_option("data", fit.data, "Dataset directory or CSV file")->required();
  c_fit->add_option("--out", fit.out, "Chain output directory")->required();
  c_fit->add_option("--algorithm", fit.algorithm, "algo1|algo2|cusp-z");
  c_fit->add_option("--prior", fit.prior, "F|L|H (a_theta = 2.5/1/0.5)");
  c_fit->add_option("--esp", fit.esp, "1pb|uniform|2pb");
  c_fit->add_option("--esp-beta", fit.esp_beta, "2PB beta parameter");
  c_fit->add_option("--iters", fit.iters, "Kept iterations");
  c_fit->add_option("--burnin", fit.burnin, "Burn-in sweeps");
  c_fit->add_option("--seed", fit.seed, "Seed");
  c_fit->add_option("--stream", fit.stream, "Stream id");
  c_fit->add_option("--h-cap", fit.h_cap, "Truncation cap (default 30)");
  c_fit->add_option("--thin", fit.thin, "Loading-draw storage stride (0 disables)");
  c_fit->add_option("--init-active", fit.init_active, "Active columns at start");
  c_fit->add_flag("--standardize", fit.standardize, "Center and scale columns");
  c_fit->add_flag("--no-boost", fit.no_boost, "Disable the boosting step");
  c_fit->add_option("--cusp-alpha", fit.cusp_alpha, "CUSP strength (cusp-z)");
  c_fit->add_flag("--cusp-learn-alpha", fit.cusp_learn_alpha, "Learn CUSP strength (cusp-z)");

  PriorSimArgs ps;
  auto* c_ps = app.add_subcommand("prior-sim", "Prior-predictive shrinkage reports");
  c_ps->add_option("--out", ps.out, "Output directory")->required();
  c_ps->add_option("--family", ps.family, "Stick family: legnaro|ibp2|ohnkim|py-pos|py-neg|1pb-rep");
  c_ps->add_option("--esp", ps.esp, "ESP family: 1pb|uniform|2pb (used when --family absent)");
  c_ps->add_option("--alpha", ps.alpha, "Strength parameter");
  c_ps->add_option("--beta", ps.beta, "Second beta/IBP parameter");
  c_ps->add_option("--kappa-ok", ps.kappa_ok, "Ohn-Kim kappa");
  c_ps->add_option("--sigma-d", ps.sigma_d, "PYP discount magnitude");
  c_ps->add_option("--H", ps.h, "Truncation level");
  c_ps->add_option("--draws", ps.draws, "Monte Carlo draws");
  c_ps->add_option("--nu0", ps.nu0, "Spike deflator");
  c_ps->add_option("--a-theta", ps.a_theta, "F-mixture a");
  c_ps->add_option("--c-theta", ps.c_theta, "F-mixture c");
  c_ps->add_option("--spike", ps.spike, "f|dirac");
  c_ps->add_option("--theta-inf", ps.theta_inf, "Dirac spike location");
  c_ps->add_option("--seed", ps.seed, "Seed");

  TableArgs tab;
  auto* c_tab = app.add_subcommand("reproduce-table", "Run the simulation-study grid");
  c_tab->add_option("--out", tab.out, "Output directory")->required();
  c_tab->add_option("--config", tab.config, "Study config JSON");
  c_tab->add_option("--seed", tab.seed, "Master seed");
  c_tab->add_option("--jobs", tab.jobs, "Parallel workers");
  c_tab->add_flag("--full", tab.full, "Include the (100,15) scenarios");
  c_tab->add_option("--replicates", tab.replicates, "Override replicate count");
  c_tab->add_option("--iters", tab.iters, "Override kept iterations");
  c_tab->add_option("--burnin", tab.burnin, "Override burn-in");

  SummarizeArgs sum;
  auto* c_sum = app.add_subcommand("summarize", "Summarize a chain directory");
  c_sum->add_option("chain", sum.chain, "Chain directory")->required();
  c_sum->add_option("--out", sum.out, "Output directory (default: chain dir)");
  c_sum->add_option("--data", sum.data, "Dataset path for truth-dependent metrics");

  try {
    app.parse(argc, argv);
    if (*c_sim) return run_simulate(sim);
    if (*c_fit) return run_fit(fit);
    if (*c_ps) return run_prior_sim(ps);
    if (*c_tab) return run_reproduce_table(tab);
    if (*c_sum) return run_summarize(sum);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const cuspfa::io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const cuspfa::numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
