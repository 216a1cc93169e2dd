#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "cuspfa/distributions.hpp"
#include "cuspfa/errors.hpp"
#include "cuspfa/factor_model.hpp"
#include "cuspfa/rng.hpp"
#include "cuspfa/shrinkage.hpp"

namespace cuspfa {

enum class Algorithm { Algo1F, Algo2T, CuspZ };

struct MhConfig {
  double step = 0.3;
  bool adapt = true;
};

struct SamplerConfig {
  Algorithm algorithm = Algorithm::Algo1F;
  int iterations = 10000;  // kept draws; total sweeps = burn_in + iterations
  int burn_in = 5000;
  double a_theta = 2.5;
  double c_theta = 2.5;
  EspSpec esp = EspSpec::one_pb(1, GammaParams{6.0, 2.0});  // truncation resolved from the data
  double alpha_fixed = 5.0;                                 // used when esp.alpha_prior is absent
  GammaParams nu0_prior{10.0, 1000.0};                      // Gamma(c_nu, c_nu/E_nu), truncated to (0,1)
  InvGammaParams kappa_prior{5.0, 5.0};
  InvGammaParams sigma2_prior{2.5, 1.5};
  MhConfig alpha_mh{0.3, true};
  MhConfig nu0_mh{0.5, true};
  int init_active = 3;
  bool boosting = true;
  int h_cap = 30;
  int loading_thin = 10;  // stride for stored beta/sigma2 draws; 0 disables
  // CuspZ: catalogue stick law (truncation resolved from the data).
  StickBreakingSpec cusp_sticks = StickBreakingSpec::legnaro_cusp(5.0, 2, true);
  bool cusp_learn_alpha = false;

  void validate() const {
    detail::require(iterations > 0 && burn_in >= 0, "sampler: iterations > 0, burn_in >= 0");
    detail::require(a_theta > 0 && c_theta > 0, "sampler: a_theta, c_theta > 0");
    detail::require(init_active >= 0, "sampler: init_active >= 0");
    detail::require(h_cap >= 1 && loading_thin >= 0, "sampler: h_cap >= 1, loading_thin >= 0");
    cuspfa::validate(nu0_prior);
    cuspfa::validate(kappa_prior);
    cuspfa::validate(sigma2_prior);
    if (esp.alpha_prior) cuspfa::validate(*esp.alpha_prior);
    detail::require(esp.alpha_prior.has_value() || alpha_fixed > 0, "sampler: fixed alpha must be positive");
  }
};

struct ModelState {
  Eigen::MatrixXd beta;     // m x H
  Eigen::MatrixXd factors;  // n x H
  Eigen::VectorXd sigma2;   // m
  double kappa = 1.0;
  Eigen::VectorXd theta;    // H
  Eigen::VectorXd b_theta;  // H
  Eigen::VectorXi s;        // H, 0/1 slab indicators
  Eigen::VectorXd tau;      // H slab probabilities (pi* for CuspZ)
  double alpha = 1.0;
  double nu0 = 0.01;
  // CuspZ augmentation
  CuspDraw cusp;
  Eigen::VectorXi z;
};

struct ChainOutput {
  int h = 0, m = 0, n = 0;
  Algorithm algorithm = Algorithm::Algo1F;
  std::vector<int> hstar;
  std::vector<double> alpha, nu0, kappa, logdet_omega, fro_inv_omega;
  Eigen::MatrixXi s;           // kept x H
  Eigen::MatrixXd tau, theta;  // kept x H
  std::vector<Eigen::MatrixXd> beta_draws;
  std::vector<Eigen::VectorXd> sigma2_draws;
  int loading_thin = 0;
  double accept_alpha = 0.0, accept_nu0 = 0.0;
  double step_alpha = 0.0, step_nu0 = 0.0;
  double wall_seconds = 0.0;

  int kept() const { return static_cast<int>(hstar.size()); }
};

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

inline double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  if (!std::isfinite(m)) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// P(S_h = 1 | theta_h): two-point posterior with weights
/// (1-q_a) p_spike(theta|nu0) vs q_a p_slab(theta).
inline double classify_f_prob_active(double theta, double q_a, double nu0, double a_theta, double c_theta) {
  const double lw0 = std::log1p(-q_a) + f_logdensity(theta, FParams{a_theta, c_theta, nu0});
  const double lw1 = std::log(q_a) + f_logdensity(theta, FParams{a_theta, c_theta, 1.0});
  return std::exp(lw1 - log_sum_exp(lw0, lw1));
}

inline Eigen::VectorXi step_classify_f(Rng& rng, const Eigen::Ref<const Eigen::VectorXd>& theta, double q_a,
                                       double nu0, double a_theta, double c_theta) {
  Eigen::VectorXi s(theta.size());
  for (Eigen::Index h = 0; h < theta.size(); ++h) {
    const double lw[2] = {std::log1p(-q_a) + f_logdensity(theta[h], FParams{a_theta, c_theta, nu0}),
                          std::log(q_a) + f_logdensity(theta[h], FParams{a_theta, c_theta, 1.0})};
    s[h] = gumbel_max_index(rng, lw);
  }
  return s;
}

/// P(S_h = 1 | beta_h, b_theta_h): theta_h marginalized out, leaving the
/// t_{2c}(0, nu0^{1-S} kappa b_theta_h / c * Sigma) spike/slab pair.
inline double classify_t_prob_active(const Eigen::Ref<const Eigen::VectorXd>& beta_col, double b_theta_h,
                                     double kappa, const Eigen::Ref<const Eigen::VectorXd>& sigma2, double nu0,
                                     double q_a, double c_theta) {
  const double dof = 2.0 * c_theta;
  const double slab_scale = kappa * b_theta_h / c_theta;
  const double lw0 = std::log1p(-q_a) + mvt_logdensity(beta_col, dof, sigma2, nu0 * slab_scale);
  const double lw1 = std::log(q_a) + mvt_logdensity(beta_col, dof, sigma2, slab_scale);
  return std::exp(lw1 - log_sum_exp(lw0, lw1));
}

inline Eigen::VectorXi step_classify_t(Rng& rng, const Eigen::Ref<const Eigen::MatrixXd>& beta,
                                       const Eigen::Ref<const Eigen::VectorXd>& b_theta, double kappa,
                                       const Eigen::Ref<const Eigen::VectorXd>& sigma2, double nu0, double q_a,
                                       double c_theta) {
  const double dof = 2.0 * c_theta;
  Eigen::VectorXi s(beta.cols());
  for (Eigen::Index h = 0; h < beta.cols(); ++h) {
    const double slab_scale = kappa * b_theta[h] / c_theta;
    const double lw[2] = {std::log1p(-q_a) + mvt_logdensity(beta.col(h), dof, sigma2, nu0 * slab_scale),
                          std::log(q_a) + mvt_logdensity(beta.col(h), dof, sigma2, slab_scale)};
    s[h] = gumbel_max_index(rng, lw);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Conjugate updates
// ---------------------------------------------------------------------------

/// tau_h | S_h ~ Beta(a0 + S_h, b0 + 1 - S_h).
inline Eigen::VectorXd step_sample_tau(Rng& rng, const Eigen::Ref<const Eigen::VectorXi>& s,
                                       const BetaParams& base) {
  validate(base);
  Eigen::VectorXd tau(s.size());
  for (Eigen::Index h = 0; h < s.size(); ++h) {
    detail::require(s[h] == 0 || s[h] == 1, "tau update: indicators must be binary");
    tau[h] = sample_beta(rng, BetaParams{base.a + s[h], base.b + 1.0 - s[h]});
  }
  return tau;
}

inline double step_sample_b_theta_h(Rng& rng, double theta_h, double nu0_pow, double a_theta, double c_theta) {
  return sample_gamma(rng, GammaParams{a_theta + c_theta, a_theta / c_theta + nu0_pow / theta_h});
}

inline double step_sample_theta_h(Rng& rng, const Eigen::Ref<const Eigen::VectorXd>& beta_col,
                                  const Eigen::Ref<const Eigen::VectorXd>& sigma2, double kappa, double nu0_pow,
                                  double b_theta_h, double c_theta) {
  const double quad = (beta_col.array().square() / sigma2.array()).sum();
  const double shape = c_theta + 0.5 * static_cast<double>(beta_col.size());
  return sample_inverse_gamma(rng, InvGammaParams{shape, nu0_pow * b_theta_h + 0.5 * quad / kappa});
}

/// Joint (b_theta_h, theta_h) refresh. Algorithm 1 draws b then theta;
/// Algorithm 2 (theta marginalized in classification) reverses the order.
inline void step_sample_theta_b(Rng& rng, const Eigen::Ref<const Eigen::MatrixXd>& beta,
                                const Eigen::Ref<const Eigen::VectorXd>& sigma2, double kappa, double nu0,
                                const Eigen::Ref<const Eigen::VectorXi>& s, double a_theta, double c_theta,
                                bool theta_first, Eigen::VectorXd& theta, Eigen::VectorXd& b_theta) {
  for (Eigen::Index h = 0; h < theta.size(); ++h) {
    const double nu0_pow = s[h] == 1 ? 1.0 : nu0;
    if (theta_first) {
      theta[h] = step_sample_theta_h(rng, beta.col(h), sigma2, kappa, nu0_pow, b_theta[h], c_theta);
      b_theta[h] = step_sample_b_theta_h(rng, theta[h], nu0_pow, a_theta, c_theta);
    } else {
      b_theta[h] = step_sample_b_theta_h(rng, theta[h], nu0_pow, a_theta, c_theta);
      theta[h] = step_sample_theta_h(rng, beta.col(h), sigma2, kappa, nu0_pow, b_theta[h], c_theta);
    }
  }
}

/// kappa | . ~ InvGamma(c_k + mH/2, b_k + S_beta/2) with
/// S_beta = sum_h theta_h^{-1} sum_i beta_ih^2 / sigma2_i.
inline double step_sample_kappa(Rng& rng, const Eigen::Ref<const Eigen::MatrixXd>& beta,
                                const Eigen::Ref<const Eigen::VectorXd>& theta,
                                const Eigen::Ref<const Eigen::VectorXd>& sigma2, const InvGammaParams& prior) {
  validate(prior);
  double s_beta = 0.0;
  for (Eigen::Index h = 0; h < beta.cols(); ++h)
    s_beta += (beta.col(h).array().square() / sigma2.array()).sum() / theta[h];
  const double shape = prior.shape + 0.5 * static_cast<double>(beta.size());
  return sample_inverse_gamma(rng, InvGammaParams{shape, prior.scale + 0.5 * s_beta});
}

/// Marginal-augmentation boost: holds every product psi_h = kappa theta_h
/// fixed, redraws kappa from its exact conditional given {psi_h} (a GIG),
/// and maps theta back. Only mixing changes; the posterior of (beta, sigma2,
/// psi) is untouched.
inline void step_boost(Rng& rng, Eigen::VectorXd& theta, double& kappa,
                       const Eigen::Ref<const Eigen::VectorXd>& b_theta,
                       const Eigen::Ref<const Eigen::VectorXi>& s, double nu0, double c_theta,
                       const InvGammaParams& kappa_prior) {
  const Eigen::Index h = theta.size();
  const Eigen::VectorXd psi = kappa * theta;
  double rate_sum = 0.0;
  for (Eigen::Index j = 0; j < h; ++j) {
    const double nu0_pow = s[j] == 1 ? 1.0 : nu0;
    rate_sum += nu0_pow * b_theta[j] / psi[j];
  }
  const double p = static_cast<double>(h) * c_theta - kappa_prior.shape;
  kappa = sample_gig(rng, p, 2.0 * rate_sum, 2.0 * kappa_prior.scale);
  theta = psi / kappa;
}

// ---------------------------------------------------------------------------
// Metropolis-Hastings pieces
// ---------------------------------------------------------------------------

/// log p(alpha | Hstar) up to a constant:
/// (Hstar + a - 1) log(alpha) - H log(alpha + H) - b alpha.
inline double alpha_log_posterior(double alpha, int hstar, int h, const GammaParams& prior) {
  detail::require(hstar >= 0 && hstar <= h, "alpha posterior: Hstar out of range");
  return (hstar + prior.shape - 1.0) * std::log(alpha) - h * std::log(alpha + h) - prior.rate * alpha;
}

/// Mixture likelihood of nu0 given theta and tau (F-form):
/// log p(nu0) + sum_h log[(1-tau_h) p_spike(theta_h|nu0) + tau_h p_slab(theta_h)].
inline double nu0_log_posterior_f(double nu0, const Eigen::Ref<const Eigen::VectorXd>& theta,
                                  const Eigen::Ref<const Eigen::VectorXd>& tau, double a_theta, double c_theta,
                                  const GammaParams& prior) {
  double lp = (prior.shape - 1.0) * std::log(nu0) - prior.rate * nu0;
  for (Eigen::Index h = 0; h < theta.size(); ++h) {
    const double lspike = f_logdensity(theta[h], FParams{a_theta, c_theta, nu0});
    const double lslab = f_logdensity(theta[h], FParams{a_theta, c_theta, 1.0});
    lp += log_sum_exp(std::log1p(-tau[h]) + lspike, std::log(tau[h]) + lslab);
  }
  return lp;
}

/// t-form counterpart (theta marginalized given b_theta); used by Algorithm 2.
inline double nu0_log_posterior_t(double nu0, const Eigen::Ref<const Eigen::MatrixXd>& beta,
                                  const Eigen::Ref<const Eigen::VectorXd>& b_theta,
                                  const Eigen::Ref<const Eigen::VectorXd>& tau, double kappa,
                                  const Eigen::Ref<const Eigen::VectorXd>& sigma2, double c_theta,
                                  const GammaParams& prior) {
  const double dof = 2.0 * c_theta;
  double lp = (prior.shape - 1.0) * std::log(nu0) - prior.rate * nu0;
  for (Eigen::Index h = 0; h < beta.cols(); ++h) {
    const double slab_scale = kappa * b_theta[h] / c_theta;
    const double lspike = mvt_logdensity(beta.col(h), dof, sigma2, nu0 * slab_scale);
    const double lslab = mvt_logdensity(beta.col(h), dof, sigma2, slab_scale);
    lp += log_sum_exp(std::log1p(-tau[h]) + lspike, std::log(tau[h]) + lslab);
  }
  return lp;
}

/// Hard-assignment form used by the CuspZ sampler: only spike-assigned
/// columns carry nu0.
inline double nu0_log_posterior_assigned(double nu0, const Eigen::Ref<const Eigen::VectorXd>& theta,
                                         const Eigen::Ref<const Eigen::VectorXi>& s, double a_theta,
                                         double c_theta, const GammaParams& prior) {
  double lp = (prior.shape - 1.0) * std::log(nu0) - prior.rate * nu0;
  for (Eigen::Index h = 0; h < theta.size(); ++h) {
    if (s[h] == 0) lp += f_logdensity(theta[h], FParams{a_theta, c_theta, nu0});
  }
  return lp;
}

/// One random-walk MH move on log x with the log-scale Jacobian; proposals at
/// or above `upper` are rejected outright (truncated support).
/// Returns (new value, accepted).
template <typename LogTarget>
std::pair<double, bool> mh_log_scale(Rng& rng, double current, double step, LogTarget&& log_target,
                                     double upper = std::numeric_limits<double>::infinity()) {
  const double proposal = current * std::exp(step * rng.normal());
  if (!(proposal > 0.0) || proposal >= upper) return {current, false};
  const double log_accept =
      log_target(proposal) + std::log(proposal) - log_target(current) - std::log(current);
  if (std::log(rng.uniform()) < log_accept) return {proposal, true};
  return {current, false};
}

inline std::pair<double, bool> step_sample_alpha(Rng& rng, double alpha, int hstar, int h,
                                                 const GammaParams& prior, double step) {
  return mh_log_scale(rng, alpha, step,
                      [&](double a) { return alpha_log_posterior(a, hstar, h, prior); });
}

/// One MH move for the deflator under the theta-mixture posterior; proposals
/// at or above 1 are rejected (the prior is truncated to (0,1)).
inline std::pair<double, bool> step_sample_nu0(Rng& rng, double nu0,
                                               const Eigen::Ref<const Eigen::VectorXd>& theta,
                                               const Eigen::Ref<const Eigen::VectorXd>& tau, double a_theta,
                                               double c_theta, const GammaParams& prior, double step) {
  return mh_log_scale(
      rng, nu0, step,
      [&](double v) { return nu0_log_posterior_f(v, theta, tau, a_theta, c_theta, prior); }, 1.0);
}

/// The marginal counterpart driven by the loading columns (theta integrated
/// out given b_theta).
inline std::pair<double, bool> step_sample_nu0_marginal(Rng& rng, double nu0,
                                                        const Eigen::Ref<const Eigen::MatrixXd>& beta,
                                                        const Eigen::Ref<const Eigen::VectorXd>& b_theta,
                                                        const Eigen::Ref<const Eigen::VectorXd>& tau,
                                                        double kappa,
                                                        const Eigen::Ref<const Eigen::VectorXd>& sigma2,
                                                        double c_theta, const GammaParams& prior, double step) {
  return mh_log_scale(
      rng, nu0, step,
      [&](double v) { return nu0_log_posterior_t(v, beta, b_theta, tau, kappa, sigma2, c_theta, prior); },
      1.0);
}

// ---------------------------------------------------------------------------
// CUSP categorical augmentation
// ---------------------------------------------------------------------------

/// Posterior stick laws given indicators: Beta(a_l + #{z_h = l}, b_l + #{z_h > l}).
inline std::vector<BetaParams> cusp_stick_posteriors(const Eigen::Ref<const Eigen::VectorXi>& z,
                                                     const StickBreakingSpec& spec) {
  std::vector<BetaParams> post;
  post.reserve(static_cast<std::size_t>(spec.law_count()));
  for (int l = 0; l < spec.law_count(); ++l) {
    int hits = 0, above = 0;
    for (Eigen::Index h = 0; h < z.size(); ++h) {
      if (z[h] == l) ++hits;
      if (z[h] > l) ++above;
    }
    const BetaParams base = spec.law(l);
    post.push_back({base.a + hits, base.b + above});
  }
  return post;
}

/// z_h over the H x H grid with weights omega_l * p_spike(beta_h) for l <= h
/// and omega_l * p_slab(beta_h) for l > h (column densities are the
/// b_theta-conditional t forms); then refresh sticks, weights and spike
/// probabilities. Indicators and indices are 0-based: spike means z_h <= h.
inline Eigen::VectorXi step_cusp_z(Rng& rng, const Eigen::Ref<const Eigen::MatrixXd>& beta,
                                   const Eigen::Ref<const Eigen::VectorXd>& b_theta, double kappa,
                                   const Eigen::Ref<const Eigen::VectorXd>& sigma2, double nu0, double c_theta,
                                   const StickBreakingSpec& spec, CuspDraw& cusp) {
  const Eigen::Index h_total = beta.cols();
  detail::require(spec.truncation == h_total, "cusp_z: spec truncation mismatch");
  const double dof = 2.0 * c_theta;
  Eigen::VectorXi z(h_total);
  std::vector<double> logw(static_cast<std::size_t>(h_total));
  for (Eigen::Index h = 0; h < h_total; ++h) {
    const double slab_scale = kappa * b_theta[h] / c_theta;
    const double lspike = mvt_logdensity(beta.col(h), dof, sigma2, nu0 * slab_scale);
    const double lslab = mvt_logdensity(beta.col(h), dof, sigma2, slab_scale);
    for (Eigen::Index l = 0; l < h_total; ++l) {
      const double lw = std::log(std::max(cusp.weights[l], kProbFloor));
      logw[static_cast<std::size_t>(l)] = lw + (l <= h ? lspike : lslab);
    }
    z[h] = gumbel_max_index(rng, logw);
  }
  const auto post = cusp_stick_posteriors(z, spec);
  Eigen::VectorXd sticks(h_total);
  for (int l = 0; l < spec.law_count(); ++l) sticks[l] = sample_beta(rng, post[static_cast<std::size_t>(l)]);
  if (spec.terminal_stick_is_one) sticks[h_total - 1] = 1.0;
  cusp = sticks_to_cusp(sticks);
  return z;
}

// ---------------------------------------------------------------------------
// Full chain
// ---------------------------------------------------------------------------

namespace detail {

struct MhAdapter {
  double step = 0.3;
  bool adapt = true;
  int batch_accepts = 0;
  int batch_count = 0;
  int batch_index = 0;
  long post_accepts = 0;
  long post_proposals = 0;
  static constexpr int kBatch = 50;
  static constexpr double kTargetRate = 0.44;

  explicit MhAdapter(const MhConfig& cfg = {}) : step(cfg.step), adapt(cfg.adapt) {}

  void observe(bool accepted, bool in_burn_in) {
    if (in_burn_in) {
      if (!adapt) return;
      batch_accepts += accepted ? 1 : 0;
      if (++batch_count == kBatch) {
        ++batch_index;
        const double rate = static_cast<double>(batch_accepts) / kBatch;
        step = std::clamp(step * std::exp((rate - kTargetRate) / std::sqrt(static_cast<double>(batch_index))),
                          1e-3, 10.0);
        batch_accepts = 0;
        batch_count = 0;
      }
    } else {
      post_accepts += accepted ? 1 : 0;
      ++post_proposals;
    }
  }
  double rate() const {
    return post_proposals > 0 ? static_cast<double>(post_accepts) / post_proposals : 0.0;
  }
};

}  // namespace detail

struct SweepState {
  detail::MhAdapter alpha_mh;
  detail::MhAdapter nu0_mh;
};

/// Fill truncations and the fixed-alpha convention from the data dimension.
inline SamplerConfig resolve_config(SamplerConfig cfg, int m) {
  cfg.validate();
  const int h = max_factors(m, cfg.h_cap);
  cfg.esp.truncation = h;
  cfg.cusp_sticks.truncation = h;
  if (cfg.esp.family == EspFamily::Uniform) {
    cfg.esp.alpha_prior.reset();
    cfg.alpha_fixed = static_cast<double>(h);
  }
  detail::require(cfg.init_active <= (cfg.algorithm == Algorithm::CuspZ ? h - 1 : h),
                  "sampler: init_active exceeds the number of columns");
  return cfg;
}

/// Draw the initial state: exactly init_active randomly-placed slab columns,
/// everything else from the priors.
inline ModelState init_state_resolved(Rng& rng, const Dataset& ds, const SamplerConfig& cfg) {
  const int m = static_cast<int>(ds.m());
  const int n = static_cast<int>(ds.n());
  const int h = cfg.esp.truncation;
  ModelState st;
  st.alpha = cfg.esp.alpha_prior ? sample_gamma(rng, *cfg.esp.alpha_prior) : cfg.alpha_fixed;
  do {
    st.nu0 = sample_gamma(rng, cfg.nu0_prior);
  } while (st.nu0 >= 1.0);
  st.kappa = sample_inverse_gamma(rng, cfg.kappa_prior);
  st.sigma2.resize(m);
  for (int i = 0; i < m; ++i) st.sigma2[i] = sample_inverse_gamma(rng, cfg.sigma2_prior);

  st.s = Eigen::VectorXi::Zero(h);
  const int selectable = cfg.algorithm == Algorithm::CuspZ ? h - 1 : h;
  std::vector<int> pos(static_cast<std::size_t>(selectable));
  std::iota(pos.begin(), pos.end(), 0);
  for (int k = 0; k < cfg.init_active; ++k) {
    const int j = k + static_cast<int>(rng.uniform() * (selectable - k));
    std::swap(pos[static_cast<std::size_t>(k)], pos[static_cast<std::size_t>(std::min(j, selectable - 1))]);
    st.s[pos[static_cast<std::size_t>(k)]] = 1;
  }

  st.theta.resize(h);
  st.b_theta.resize(h);
  for (int j = 0; j < h; ++j) {
    const double scale = st.s[j] == 1 ? 1.0 : st.nu0;
    const auto [theta, b] = sample_f_mixture(rng, FParams{cfg.a_theta, cfg.c_theta, scale});
    st.theta[j] = theta;
    st.b_theta[j] = b;
  }

  if (cfg.algorithm == Algorithm::CuspZ) {
    st.cusp = sticks_to_cusp(sample_sticks(rng, cfg.cusp_sticks));
    st.z.resize(h);
    std::vector<double> logw;
    for (int j = 0; j < h; ++j) {
      const bool active = st.s[j] == 1;
      const int lo = active ? j + 1 : 0;
      const int hi = active ? h : j + 1;  // prior weights restricted to the assigned side
      logw.assign(static_cast<std::size_t>(hi - lo), 0.0);
      for (int l = lo; l < hi; ++l)
        logw[static_cast<std::size_t>(l - lo)] = std::log(std::max(st.cusp.weights[l], kProbFloor));
      st.z[j] = lo + gumbel_max_index(rng, logw);
    }
    st.tau = st.cusp.slab_probs;
  } else {
    st.tau = step_sample_tau(rng, st.s, cfg.esp.slab_law(st.alpha));
  }

  st.beta.resize(m, h);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < h; ++j)
      st.beta(i, j) = rng.normal() * std::sqrt(st.kappa * st.theta[j] * st.sigma2[i]);
  st.factors.resize(n, h);
  for (int t = 0; t < n; ++t)
    for (int j = 0; j < h; ++j) st.factors(t, j) = rng.normal();
  return st;
}

inline ModelState init_state(Rng& rng, const Dataset& ds, const SamplerConfig& cfg) {
  return init_state_resolved(rng, ds, resolve_config(cfg, static_cast<int>(ds.m())));
}

/// One full MCMC cycle. `cfg` must be resolved; `in_burn_in` gates step-size
/// adaptation and acceptance accounting.
inline void mcmc_sweep(Rng& rng, ModelState& st, const Eigen::Ref<const Eigen::MatrixXd>& y,
                       const SamplerConfig& cfg, SweepState& sw, bool in_burn_in) {
  const int h = cfg.esp.truncation;
  // (1) standard factor-model block
  st.beta = sample_loadings(rng, y, st.factors, st.sigma2, st.kappa, st.theta);
  st.sigma2 = sample_idiosyncratic(rng, y, st.factors, st.beta, st.kappa, st.theta, cfg.sigma2_prior.shape,
                                   cfg.sigma2_prior.scale);
  st.factors = sample_factors(rng, y, st.beta, st.sigma2);

  // (2) shrinkage block
  switch (cfg.algorithm) {
    case Algorithm::Algo1F: {
      auto [nu0, acc] =
          step_sample_nu0(rng, st.nu0, st.theta, st.tau, cfg.a_theta, cfg.c_theta, cfg.nu0_prior,
                          sw.nu0_mh.step);
      st.nu0 = nu0;
      sw.nu0_mh.observe(acc, in_burn_in);

      const double q_a = cfg.esp.slab_mean(st.alpha);
      st.s = step_classify_f(rng, st.theta, q_a, st.nu0, cfg.a_theta, cfg.c_theta);
      if (cfg.esp.alpha_prior) {
        auto [alpha, acc_a] =
            step_sample_alpha(rng, st.alpha, st.s.sum(), h, *cfg.esp.alpha_prior, sw.alpha_mh.step);
        st.alpha = alpha;
        sw.alpha_mh.observe(acc_a, in_burn_in);
      }
      st.tau = step_sample_tau(rng, st.s, cfg.esp.slab_law(st.alpha));
      step_sample_theta_b(rng, st.beta, st.sigma2, st.kappa, st.nu0, st.s, cfg.a_theta, cfg.c_theta,
                          /*theta_first=*/false, st.theta, st.b_theta);
      break;
    }
    case Algorithm::Algo2T: {
      auto [nu0, acc] = step_sample_nu0_marginal(rng, st.nu0, st.beta, st.b_theta, st.tau, st.kappa,
                                                 st.sigma2, cfg.c_theta, cfg.nu0_prior, sw.nu0_mh.step);
      st.nu0 = nu0;
      sw.nu0_mh.observe(acc, in_burn_in);

      const double q_a = cfg.esp.slab_mean(st.alpha);
      st.s = step_classify_t(rng, st.beta, st.b_theta, st.kappa, st.sigma2, st.nu0, q_a, cfg.c_theta);
      if (cfg.esp.alpha_prior) {
        auto [alpha, acc_a] =
            step_sample_alpha(rng, st.alpha, st.s.sum(), h, *cfg.esp.alpha_prior, sw.alpha_mh.step);
        st.alpha = alpha;
        sw.alpha_mh.observe(acc_a, in_burn_in);
      }
      st.tau = step_sample_tau(rng, st.s, cfg.esp.slab_law(st.alpha));
      step_sample_theta_b(rng, st.beta, st.sigma2, st.kappa, st.nu0, st.s, cfg.a_theta, cfg.c_theta,
                          /*theta_first=*/true, st.theta, st.b_theta);
      break;
    }
    case Algorithm::CuspZ: {
      auto [nu0, acc] = mh_log_scale(
          rng, st.nu0, sw.nu0_mh.step,
          [&](double v) {
            return nu0_log_posterior_assigned(v, st.theta, st.s, cfg.a_theta, cfg.c_theta, cfg.nu0_prior);
          },
          1.0);
      st.nu0 = nu0;
      sw.nu0_mh.observe(acc, in_burn_in);

      st.z = step_cusp_z(rng, st.beta, st.b_theta, st.kappa, st.sigma2, st.nu0, cfg.c_theta, cfg.cusp_sticks,
                         st.cusp);
      for (int j = 0; j < h; ++j) st.s[j] = st.z[j] > j ? 1 : 0;
      if (cfg.cusp_learn_alpha && cfg.cusp_sticks.family == StickFamily::LegnaroCusp) {
        // Conjugate given the sticks: Gamma(a + H-1, b - sum log(1 - nu_l)).
        double log_terms = 0.0;
        for (int l = 0; l < h - 1; ++l)
          log_terms += std::log(std::max(1.0 - st.cusp.sticks[l], kProbFloor));
        const GammaParams prior = cfg.esp.alpha_prior.value_or(GammaParams{6.0, 2.0});
        st.alpha = sample_gamma(rng, GammaParams{prior.shape + h - 1, prior.rate - log_terms});
      }
      st.tau = st.cusp.slab_probs;
      step_sample_theta_b(rng, st.beta, st.sigma2, st.kappa, st.nu0, st.s, cfg.a_theta, cfg.c_theta,
                          /*theta_first=*/true, st.theta, st.b_theta);
      break;
    }
  }
  st.kappa = step_sample_kappa(rng, st.beta, st.theta, st.sigma2, cfg.kappa_prior);
  if (cfg.boosting) step_boost(rng, st.theta, st.kappa, st.b_theta, st.s, st.nu0, cfg.c_theta, cfg.kappa_prior);
}

namespace detail {

inline std::pair<double, double> omega_functionals(const Eigen::MatrixXd& beta, const Eigen::VectorXd& sigma2) {
  const Eigen::MatrixXd omega = implied_covariance(beta, sigma2);
  Eigen::LLT<Eigen::MatrixXd> llt(omega);
  if (llt.info() != Eigen::Success) throw numerical_error("omega functionals: covariance not positive definite");
  const double logdet = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(omega.rows(), omega.cols()));
  return {logdet, inv.norm()};
}

}  // namespace detail

inline ChainOutput run_chain(Rng& rng, const Dataset& ds, const SamplerConfig& raw_cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const SamplerConfig cfg = resolve_config(raw_cfg, static_cast<int>(ds.m()));
  const int h = cfg.esp.truncation;
  ModelState st = init_state_resolved(rng, ds, cfg);
  SweepState sw{detail::MhAdapter(cfg.alpha_mh), detail::MhAdapter(cfg.nu0_mh)};

  ChainOutput out;
  out.h = h;
  out.m = static_cast<int>(ds.m());
  out.n = static_cast<int>(ds.n());
  out.algorithm = cfg.algorithm;
  out.loading_thin = cfg.loading_thin;
  out.hstar.reserve(static_cast<std::size_t>(cfg.iterations));
  out.alpha.reserve(static_cast<std::size_t>(cfg.iterations));
  out.s.resize(cfg.iterations, h);
  out.tau.resize(cfg.iterations, h);
  out.theta.resize(cfg.iterations, h);

  const int total = cfg.burn_in + cfg.iterations;
  for (int it = 0; it < total; ++it) {
    const bool in_burn_in = it < cfg.burn_in;
    try {
      mcmc_sweep(rng, st, ds.y, cfg, sw, in_burn_in);
      if (!in_burn_in) {
        const int k = it - cfg.burn_in;
        out.hstar.push_back(st.s.sum());
        out.alpha.push_back(st.alpha);
        out.nu0.push_back(st.nu0);
        out.kappa.push_back(st.kappa);
        out.s.row(k) = st.s;
        out.tau.row(k) = st.tau;
        out.theta.row(k) = st.theta;
        const auto [logdet, fro] = detail::omega_functionals(st.beta, st.sigma2);
        out.logdet_omega.push_back(logdet);
        out.fro_inv_omega.push_back(fro);
        if (cfg.loading_thin > 0 && k % cfg.loading_thin == 0) {
          out.beta_draws.push_back(st.beta);
          out.sigma2_draws.push_back(st.sigma2);
        }
      }
    } catch (const numerical_error& err) {
      throw numerical_error("iteration " + std::to_string(it) + ": " + err.what());
    }
  }
  out.accept_alpha = sw.alpha_mh.rate();
  out.accept_nu0 = sw.nu0_mh.rate();
  out.step_alpha = sw.alpha_mh.step;
  out.step_nu0 = sw.nu0_mh.step;
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace cuspfa
