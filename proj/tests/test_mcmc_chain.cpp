#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/LU>

#include "cuspfa/mcmc.hpp"
#include "cuspfa/postprocess.hpp"
#include "oracles.hpp"

using namespace cuspfa;

namespace {

Dataset tiny_dataset(std::uint64_t seed, int m = 8, int h0 = 2, int n = 30) {
  Rng rng(seed, 999);
  ScenarioSpec scen;
  scen.m = m;
  scen.h0 = h0;
  scen.n = n;
  return simulate_dataset(rng, scen);
}

SamplerConfig tiny_config(int iters, int burn, Algorithm algo = Algorithm::Algo1F) {
  SamplerConfig cfg;
  cfg.algorithm = algo;
  cfg.iterations = iters;
  cfg.burn_in = burn;
  cfg.loading_thin = 5;
  cfg.init_active = 1;  // tiny models truncate at H = 3
  return cfg;
}

}  // namespace

TEST_CASE("run_chain is deterministic under the seed", "[mcmc_chain]") {
  const Dataset ds = tiny_dataset(601);
  const SamplerConfig cfg = tiny_config(200, 50);
  Rng r1(42, 1), r2(42, 1), r3(42, 2);
  const ChainOutput a = run_chain(r1, ds, cfg);
  const ChainOutput b = run_chain(r2, ds, cfg);
  const ChainOutput c = run_chain(r3, ds, cfg);
  REQUIRE(a.hstar == b.hstar);
  REQUIRE(a.tau == b.tau);
  REQUIRE(a.theta == b.theta);
  REQUIRE(a.logdet_omega == b.logdet_omega);
  REQUIRE(a.hstar != c.hstar);  // different stream moves the chain
}

TEST_CASE("recorded hstar equals the indicator sum every iteration", "[mcmc_chain]") {
  const Dataset ds = tiny_dataset(602);
  for (Algorithm algo : {Algorithm::Algo1F, Algorithm::Algo2T, Algorithm::CuspZ}) {
    Rng rng(7, 4);
    const ChainOutput out = run_chain(rng, ds, tiny_config(120, 20, algo));
    for (int k = 0; k < out.kept(); ++k) {
      REQUIRE(out.hstar[static_cast<std::size_t>(k)] == out.s.row(k).sum());
    }
    if (algo == Algorithm::CuspZ) {
      for (int v : out.hstar) REQUIRE(v <= out.h - 1);  // terminal column is always spike
    }
  }
}

TEST_CASE("no-data chain reproduces the prior marginals", "[mcmc_chain]") {
  Dataset empty;
  empty.y.resize(0, 6);
  SamplerConfig cfg = tiny_config(6000, 500);
  cfg.init_active = 1;  // H = 2 when m = 6
  Rng rng(603, 1);
  const ChainOutput out = run_chain(rng, empty, cfg);

  // Independent prior simulator.
  Rng prior_rng(604, 2);
  const int n = 60000;
  std::vector<double> p_alpha, p_nu0, p_kappa, p_theta, p_tau;
  for (int i = 0; i < n; ++i) {
    const double alpha = sample_gamma(prior_rng, {6.0, 2.0});
    double nu0;
    do {
      nu0 = sample_gamma(prior_rng, cfg.nu0_prior);
    } while (nu0 >= 1.0);
    const double kappa = sample_inverse_gamma(prior_rng, cfg.kappa_prior);
    const double tau = sample_beta(prior_rng, {alpha / 2.0, 1.0});
    const int s = prior_rng.uniform() < tau ? 1 : 0;
    const double theta = sample_f_mixture(prior_rng, {2.5, 2.5, s == 1 ? 1.0 : nu0}).first;
    p_alpha.push_back(alpha);
    p_nu0.push_back(nu0);
    p_kappa.push_back(kappa);
    p_theta.push_back(theta);
    p_tau.push_back(tau);
  }

  const auto check = [&](std::vector<double> chain_draws, const std::vector<double>& prior_draws,
                         const char* label) {
    const auto mc = oracle::moments(chain_draws);
    const auto mp = oracle::moments(prior_draws);
    const double se = std::hypot(oracle::chain_se(mc, ess(chain_draws)), mp.se_mean);
    INFO(label << ": chain " << mc.mean << " prior " << mp.mean << " se " << se);
    REQUIRE(oracle::zscore(mc.mean, mp.mean, se) < 4.0);
  };
  check(out.alpha, p_alpha, "alpha");
  check(out.nu0, p_nu0, "nu0");
  check(out.kappa, p_kappa, "kappa");
  std::vector<double> theta_draws, tau_draws;
  for (int k = 0; k < out.kept(); ++k) {
    for (int j = 0; j < out.h; ++j) {
      theta_draws.push_back(out.theta(k, j));
      tau_draws.push_back(out.tau(k, j));
    }
  }
  // Pooled columns: use the first-column chain for the ESS deflation.
  std::vector<double> theta0(out.kept()), tau0(out.kept());
  for (int k = 0; k < out.kept(); ++k) {
    theta0[static_cast<std::size_t>(k)] = out.theta(k, 0);
    tau0[static_cast<std::size_t>(k)] = out.tau(k, 0);
  }
  {
    const auto mc = oracle::moments(theta_draws);
    const auto mp = oracle::moments(p_theta);
    const double se = std::hypot(oracle::chain_se(oracle::moments(theta0), ess(theta0)), mp.se_mean);
    REQUIRE(oracle::zscore(mc.mean, mp.mean, se) < 4.0);
  }
  {
    const auto mc = oracle::moments(tau_draws);
    const auto mp = oracle::moments(p_tau);
    const double se = std::hypot(oracle::chain_se(oracle::moments(tau0), ess(tau0)), mp.se_mean);
    REQUIRE(oracle::zscore(mc.mean, mp.mean, se) < 4.0);
  }
}

TEST_CASE("column permutation of the initial state leaves functionals invariant", "[mcmc_chain]") {
  const Dataset ds = tiny_dataset(605);
  SamplerConfig cfg = tiny_config(4000, 500);
  const SamplerConfig resolved = resolve_config(cfg, static_cast<int>(ds.m()));

  Rng init_rng(9, 9);
  ModelState base = init_state_resolved(init_rng, ds, resolved);
  ModelState permuted = base;
  const int h = resolved.esp.truncation;
  std::vector<int> perm(static_cast<std::size_t>(h));
  std::iota(perm.begin(), perm.end(), 0);
  std::rotate(perm.begin(), perm.begin() + 1, perm.end());
  for (int j = 0; j < h; ++j) {
    const int src = perm[static_cast<std::size_t>(j)];
    permuted.beta.col(j) = base.beta.col(src);
    permuted.factors.col(j) = base.factors.col(src);
    permuted.theta[j] = base.theta[src];
    permuted.b_theta[j] = base.b_theta[src];
    permuted.s[j] = base.s[src];
    permuted.tau[j] = base.tau[src];
  }

  const auto drive = [&](ModelState st, std::uint64_t stream) {
    Rng rng(700, stream);
    SweepState sw{detail::MhAdapter(resolved.alpha_mh), detail::MhAdapter(resolved.nu0_mh)};
    std::vector<double> hstar, logdet;
    for (int it = 0; it < resolved.burn_in + resolved.iterations; ++it) {
      mcmc_sweep(rng, st, ds.y, resolved, sw, it < resolved.burn_in);
      if (it >= resolved.burn_in) {
        hstar.push_back(st.s.sum());
        const Eigen::MatrixXd omega = implied_covariance(st.beta, st.sigma2);
        logdet.push_back(std::log(omega.determinant()));
      }
    }
    return std::make_pair(hstar, logdet);
  };
  const auto [h1, l1] = drive(base, 1);
  const auto [h2, l2] = drive(permuted, 2);
  const auto mh1 = oracle::moments(h1), mh2 = oracle::moments(h2);
  const double se_h = std::hypot(oracle::chain_se(mh1, ess(h1)), oracle::chain_se(mh2, ess(h2)));
  REQUIRE(oracle::zscore(mh1.mean, mh2.mean, se_h) < 4.0);
  const auto ml1 = oracle::moments(l1), ml2 = oracle::moments(l2);
  const double se_l = std::hypot(oracle::chain_se(ml1, ess(l1)), oracle::chain_se(ml2, ess(l2)));
  REQUIRE(oracle::zscore(ml1.mean, ml2.mean, se_l) < 4.0);
}

TEST_CASE("boosting changes mixing but not the posterior", "[mcmc_chain]") {
  const Dataset ds = tiny_dataset(606);
  SamplerConfig with = tiny_config(6000, 1000);
  SamplerConfig without = with;
  without.boosting = false;
  Rng r1(71, 1), r2(71, 2);
  const ChainOutput a = run_chain(r1, ds, with);
  const ChainOutput b = run_chain(r2, ds, without);
  const auto compare = [&](const std::vector<double>& x, const std::vector<double>& y, const char* label) {
    const auto mx = oracle::moments(x), my = oracle::moments(y);
    const double se = std::hypot(oracle::chain_se(mx, ess(x)), oracle::chain_se(my, ess(y)));
    INFO(label << ": boosted " << mx.mean << " plain " << my.mean << " se " << se);
    REQUIRE(oracle::zscore(mx.mean, my.mean, se) < 4.5);
  };
  compare(a.logdet_omega, b.logdet_omega, "logdet omega");
  compare(a.kappa, b.kappa, "kappa");
  compare(a.fro_inv_omega, b.fro_inv_omega, "frobenius of omega inverse");
}

TEST_CASE("algorithms 1 and 2 target the same posterior", "[mcmc_chain]") {
  const Dataset ds = tiny_dataset(607);
  Rng r1(81, 1), r2(81, 2);
  const ChainOutput a = run_chain(r1, ds, tiny_config(6000, 1000, Algorithm::Algo1F));
  const ChainOutput b = run_chain(r2, ds, tiny_config(6000, 1000, Algorithm::Algo2T));
  const auto compare = [&](const std::vector<double>& x, const std::vector<double>& y, const char* label,
                           double tol) {
    const auto mx = oracle::moments(x), my = oracle::moments(y);
    const double se = std::hypot(oracle::chain_se(mx, ess(x)), oracle::chain_se(my, ess(y)));
    INFO(label << ": algo1 " << mx.mean << " algo2 " << my.mean << " se " << se);
    REQUIRE(oracle::zscore(mx.mean, my.mean, se) < tol);
  };
  std::vector<double> ha(a.hstar.begin(), a.hstar.end()), hb(b.hstar.begin(), b.hstar.end());
  compare(ha, hb, "hstar", 5.0);
  compare(a.logdet_omega, b.logdet_omega, "logdet", 5.0);
  compare(a.nu0, b.nu0, "nu0", 5.0);
  compare(a.kappa, b.kappa, "kappa", 5.0);
}

TEST_CASE("MH acceptance rates are reported", "[mcmc_chain]") {
  const Dataset ds = tiny_dataset(608);
  Rng rng(91, 1);
  const ChainOutput out = run_chain(rng, ds, tiny_config(3000, 1500));
  INFO("acceptance alpha " << out.accept_alpha << " nu0 " << out.accept_nu0 << " steps " << out.step_alpha
                           << " / " << out.step_nu0);
  // Diagnostic band; adaptation should land the rates inside a wide window.
  CHECK(out.accept_alpha > 0.05);
  CHECK(out.accept_alpha < 0.9);
  CHECK(out.accept_nu0 > 0.05);
  CHECK(out.accept_nu0 < 0.9);
}

TEST_CASE("config validation", "[mcmc_chain]") {
  const Dataset ds = tiny_dataset(609);
  SamplerConfig cfg = tiny_config(10, 0);
  cfg.iterations = 0;
  Rng rng(1);
  REQUIRE_THROWS_AS(run_chain(rng, ds, cfg), std::invalid_argument);
  cfg = tiny_config(10, 0);
  cfg.a_theta = -1;
  REQUIRE_THROWS_AS(run_chain(rng, ds, cfg), std::invalid_argument);
}
