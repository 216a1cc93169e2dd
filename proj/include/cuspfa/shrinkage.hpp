#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cuspfa/distributions.hpp"
#include "cuspfa/rng.hpp"

namespace cuspfa {

// ---------------------------------------------------------------------------
// Stick-breaking constructions
// ---------------------------------------------------------------------------

enum class StickFamily {
  LegnaroCusp,       // nu_h ~ Beta(1, alpha)
  TwoParamIbp,       // nu_h ~ Beta(beta, beta*alpha)
  OhnKim,            // nu_h ~ Beta(1+kappa, alpha)
  PyPositive,        // nu_h ~ Beta(1-sigma, alpha + h*sigma), sigma in [0,1)
  PyNegativeFinite,  // nu_h ~ Beta(1-sigma, (H-h)|sigma|), sigma < 0, nu_H = 1
  CustomBeta,
  FiniteEspDerived,  // nu_h ~ Beta(1, alpha*(H-h+1)/H), the finite 1PB representation
};

struct StickBreakingSpec {
  StickFamily family = StickFamily::LegnaroCusp;
  int truncation = 1;  // H
  bool terminal_stick_is_one = true;
  double alpha = 1.0;
  double beta = 1.0;
  double kappa = 0.0;
  double sigma = 0.0;
  std::vector<BetaParams> custom;

  static StickBreakingSpec legnaro_cusp(double alpha, int h, bool terminal_one = true) {
    detail::require(alpha > 0 && h >= 1, "legnaro cusp: alpha > 0, H >= 1");
    StickBreakingSpec s;
    s.family = StickFamily::LegnaroCusp;
    s.alpha = alpha;
    s.truncation = h;
    s.terminal_stick_is_one = terminal_one;
    return s;
  }
  static StickBreakingSpec two_param_ibp(double alpha, double beta, int h, bool terminal_one = true) {
    detail::require(alpha > 0 && beta > 0 && h >= 1, "two-param IBP: alpha, beta > 0");
    StickBreakingSpec s;
    s.family = StickFamily::TwoParamIbp;
    s.alpha = alpha;
    s.beta = beta;
    s.truncation = h;
    s.terminal_stick_is_one = terminal_one;
    return s;
  }
  static StickBreakingSpec ohn_kim(double alpha, double kappa, int h, bool terminal_one = true) {
    detail::require(alpha > 0 && kappa >= 0 && h >= 1, "ohn-kim: alpha > 0, kappa >= 0");
    StickBreakingSpec s;
    s.family = StickFamily::OhnKim;
    s.alpha = alpha;
    s.kappa = kappa;
    s.truncation = h;
    s.terminal_stick_is_one = terminal_one;
    return s;
  }
  static StickBreakingSpec py_positive(double alpha, double sigma, int h, bool terminal_one = true) {
    detail::require(sigma >= 0 && sigma < 1 && alpha > sigma, "pyp: sigma in [0,1), alpha > sigma");
    StickBreakingSpec s;
    s.family = StickFamily::PyPositive;
    s.alpha = alpha;
    s.sigma = sigma;
    s.truncation = h;
    s.terminal_stick_is_one = terminal_one;
    return s;
  }
  static StickBreakingSpec py_negative_finite(double sigma, int h) {
    detail::require(sigma < 0 && h >= 1, "pyp finite: sigma < 0");
    StickBreakingSpec s;
    s.family = StickFamily::PyNegativeFinite;
    s.sigma = sigma;
    s.truncation = h;
    s.terminal_stick_is_one = true;  // b_H would be zero otherwise
    return s;
  }
  static StickBreakingSpec custom_beta(std::vector<BetaParams> laws, bool terminal_one = false) {
    detail::require(!laws.empty() || terminal_one, "custom beta: empty law sequence");
    StickBreakingSpec s;
    s.family = StickFamily::CustomBeta;
    s.truncation = static_cast<int>(laws.size()) + (terminal_one ? 1 : 0);
    s.terminal_stick_is_one = terminal_one;
    s.custom = std::move(laws);
    return s;
  }
  static StickBreakingSpec finite_esp_derived(double alpha, int h) {
    detail::require(alpha > 0 && h >= 1, "finite esp: alpha > 0");
    StickBreakingSpec s;
    s.family = StickFamily::FiniteEspDerived;
    s.alpha = alpha;
    s.truncation = h;
    s.terminal_stick_is_one = false;
    return s;
  }

  int law_count() const { return terminal_stick_is_one ? truncation - 1 : truncation; }

  /// Resolved Beta(a_h, b_h) for the random sticks; h is 0-based and runs
  /// over [0, law_count()). A forced terminal stick has no law.
  BetaParams law(int h) const {
    detail::require(h >= 0 && h < law_count(), "stick law index out of range");
    const double h1 = static_cast<double>(h + 1);  // 1-based index in the formulas
    switch (family) {
      case StickFamily::LegnaroCusp:
        return {1.0, alpha};
      case StickFamily::TwoParamIbp:
        return {beta, beta * alpha};
      case StickFamily::OhnKim:
        return {1.0 + kappa, alpha};
      case StickFamily::PyPositive:
        return {1.0 - sigma, alpha + h1 * sigma};
      case StickFamily::PyNegativeFinite:
        return {1.0 - sigma, (truncation - h1) * std::fabs(sigma)};
      case StickFamily::CustomBeta:
        return custom[static_cast<std::size_t>(h)];
      case StickFamily::FiniteEspDerived:
        return {1.0, alpha * (truncation - h1 + 1.0) / truncation};
    }
    throw std::invalid_argument("unknown stick family");
  }

  std::vector<BetaParams> resolved_laws() const {
    std::vector<BetaParams> out;
    out.reserve(static_cast<std::size_t>(law_count()));
    for (int h = 0; h < law_count(); ++h) {
      BetaParams p = law(h);
      validate(p);
      out.push_back(p);
    }
    return out;
  }
};

struct CuspDraw {
  Eigen::VectorXd sticks;       // nu
  Eigen::VectorXd weights;      // omega
  Eigen::VectorXd spike_probs;  // pi, cumulative sums of omega
  Eigen::VectorXd slab_probs;   // pi*, products of (1 - nu), kept as the independent route
};

inline Eigen::VectorXd sample_sticks(Rng& rng, const StickBreakingSpec& spec) {
  Eigen::VectorXd nu(spec.truncation);
  for (int h = 0; h < spec.law_count(); ++h) nu[h] = sample_beta(rng, spec.law(h));
  if (spec.terminal_stick_is_one) nu[spec.truncation - 1] = 1.0;
  return nu;
}

/// pi by cumulative sums, pi* by the product identity; both retained so the
/// pi_h + pi*_h = 1 identity can be cross-checked rather than enforced.
inline CuspDraw sticks_to_cusp(const Eigen::Ref<const Eigen::VectorXd>& sticks) {
  const Eigen::Index h = sticks.size();
  detail::require(h > 0, "sticks_to_cusp: empty stick vector");
  for (Eigen::Index i = 0; i < h; ++i)
    detail::require(sticks[i] >= 0.0 && sticks[i] <= 1.0, "sticks_to_cusp: stick outside [0,1]");
  CuspDraw d;
  d.sticks = sticks;
  d.weights.resize(h);
  d.spike_probs.resize(h);
  d.slab_probs.resize(h);
  double remaining = 1.0;  // prod_{j<l} (1 - nu_j)
  double cum = 0.0;
  double prod = 1.0;
  for (Eigen::Index i = 0; i < h; ++i) {
    d.weights[i] = sticks[i] * remaining;
    remaining *= 1.0 - sticks[i];
    cum += d.weights[i];
    d.spike_probs[i] = cum;
    prod *= 1.0 - sticks[i];
    d.slab_probs[i] = prod;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Exchangeable shrinkage processes
// ---------------------------------------------------------------------------

enum class EspFamily { OnePB, TwoPB, Uniform, GeneralBeta };

struct EspSpec {
  EspFamily family = EspFamily::OnePB;
  int truncation = 1;  // H
  double beta = 1.0;   // TwoPB second parameter
  BetaParams general{1.0, 1.0};
  std::optional<GammaParams> alpha_prior;  // nullopt: alpha fixed

  static EspSpec one_pb(int h, std::optional<GammaParams> alpha_prior = std::nullopt) {
    detail::require(h >= 1, "esp: H >= 1");
    EspSpec s;
    s.family = EspFamily::OnePB;
    s.truncation = h;
    s.alpha_prior = alpha_prior;
    return s;
  }
  static EspSpec two_pb(int h, double beta, std::optional<GammaParams> alpha_prior = std::nullopt) {
    detail::require(h >= 1 && beta > 0, "esp 2pb: H >= 1, beta > 0");
    EspSpec s;
    s.family = EspFamily::TwoPB;
    s.truncation = h;
    s.beta = beta;
    s.alpha_prior = alpha_prior;
    return s;
  }
  static EspSpec uniform(int h) {
    detail::require(h >= 1, "esp: H >= 1");
    EspSpec s;
    s.family = EspFamily::Uniform;
    s.truncation = h;
    return s;
  }
  static EspSpec general_beta(int h, BetaParams p) {
    validate(p);
    EspSpec s;
    s.family = EspFamily::GeneralBeta;
    s.truncation = h;
    s.general = p;
    return s;
  }

  /// Beta(a0, b0) law of each slab probability tau_h given alpha.
  BetaParams slab_law(double alpha) const {
    switch (family) {
      case EspFamily::OnePB:
        detail::require(alpha > 0, "esp: alpha > 0");
        return {alpha / truncation, 1.0};
      case EspFamily::TwoPB:
        detail::require(alpha > 0, "esp: alpha > 0");
        return {(alpha / truncation) * beta, beta};
      case EspFamily::Uniform:
        return {1.0, 1.0};
      case EspFamily::GeneralBeta:
        return general;
    }
    throw std::invalid_argument("unknown esp family");
  }

  /// Prior slab weight q_A = E[tau_h] = a0/(a0+b0).
  double slab_mean(double alpha) const {
    const BetaParams p = slab_law(alpha);
    return p.a / (p.a + p.b);
  }
};

inline Eigen::VectorXd sample_esp(Rng& rng, const EspSpec& spec, double alpha) {
  const BetaParams law = spec.slab_law(alpha);
  validate(law);
  Eigen::VectorXd tau(spec.truncation);
  for (int h = 0; h < spec.truncation; ++h) tau[h] = sample_beta(rng, law);
  return tau;
}

struct EspCuspRepresentation {
  CuspDraw cusp;
  std::vector<int> permutation;  // permutation[h] = original index of the h-th largest tau
};

/// Order-statistics representation: sort tau descending (ties broken by the
/// smaller original index), set pi_h = 1 - tau_(h), pi*_h = tau_(h) and
/// recover the sticks from the ratios tau_(h)/tau_(h-1) with tau_(0) = 1.
inline EspCuspRepresentation esp_to_cusp(const Eigen::Ref<const Eigen::VectorXd>& tau) {
  const Eigen::Index h = tau.size();
  detail::require(h > 0, "esp_to_cusp: empty tau vector");
  for (Eigen::Index i = 0; i < h; ++i) detail::require(tau[i] > 0.0 && tau[i] < 1.0, "esp_to_cusp: tau outside (0,1)");
  EspCuspRepresentation rep;
  rep.permutation.resize(static_cast<std::size_t>(h));
  std::iota(rep.permutation.begin(), rep.permutation.end(), 0);
  std::stable_sort(rep.permutation.begin(), rep.permutation.end(), [&](int i, int j) { return tau[i] > tau[j]; });
  CuspDraw& d = rep.cusp;
  d.sticks.resize(h);
  d.weights.resize(h);
  d.spike_probs.resize(h);
  d.slab_probs.resize(h);
  double prev = 1.0;
  for (Eigen::Index i = 0; i < h; ++i) {
    const double t = tau[rep.permutation[static_cast<std::size_t>(i)]];
    d.slab_probs[i] = t;
    d.spike_probs[i] = 1.0 - t;
    d.sticks[i] = 1.0 - t / prev;
    d.weights[i] = prev - t;
    prev = t;
  }
  return rep;
}

/// Stick laws of the finite CUSP representation of the one-parameter beta
/// prior: nu_h ~ Beta(1, alpha*(H-h+1)/H), h = 1..H.
inline std::vector<BetaParams> onepb_stick_law(double alpha, int h) {
  detail::require(alpha > 0 && h >= 1, "onepb_stick_law: alpha > 0, H >= 1");
  std::vector<BetaParams> laws;
  laws.reserve(static_cast<std::size_t>(h));
  for (int i = 1; i <= h; ++i) laws.push_back({1.0, alpha * (h - i + 1.0) / h});
  return laws;
}

/// Closed-form prior mean/variance of Hstar = sum_h S_h under the
/// one-parameter beta family (Uniform handled as alpha = H).
inline std::optional<std::pair<double, double>> hstar_prior_moments(const EspSpec& spec, double alpha) {
  double a = alpha;
  if (spec.family == EspFamily::Uniform) a = static_cast<double>(spec.truncation);
  else if (spec.family != EspFamily::OnePB) return std::nullopt;
  detail::require(a >= 0, "hstar moments: alpha >= 0");
  const double denom = 1.0 + a / spec.truncation;
  return std::make_pair(a / denom, a / (denom * denom));
}

// ---------------------------------------------------------------------------
// Spike-and-slab pairs
// ---------------------------------------------------------------------------

struct SpikeSlabComponent {
  enum class Kind { PointMass, ScaledF };
  Kind kind = Kind::ScaledF;
  double point = 0.0;
  FParams f{1.0, 1.0, 1.0};

  static SpikeSlabComponent point_mass(double value) {
    detail::require(value >= 0, "point mass must be nonnegative");
    SpikeSlabComponent c;
    c.kind = Kind::PointMass;
    c.point = value;
    return c;
  }
  static SpikeSlabComponent scaled_f(FParams p) {
    validate(p);
    SpikeSlabComponent c;
    c.kind = Kind::ScaledF;
    c.f = p;
    return c;
  }

  double sample(Rng& rng) const {
    if (kind == Kind::PointMass) return point;
    return sample_f_mixture(rng, f).first;
  }
  double cdf(double x) const {
    if (kind == Kind::PointMass) return x >= point ? 1.0 : 0.0;
    return f_cdf(x, f);
  }
};

struct SpikeSlabSpec {
  SpikeSlabComponent spike;
  SpikeSlabComponent slab;

  /// Triple-gamma pair: spike = nu0-deflated F, slab = the same F at scale 1.
  static SpikeSlabSpec triple_gamma(double a_theta, double c_theta, double nu0) {
    detail::require(nu0 > 0, "triple gamma: nu0 > 0");
    return {SpikeSlabComponent::scaled_f({a_theta, c_theta, nu0}),
            SpikeSlabComponent::scaled_f({a_theta, c_theta, 1.0})};
  }

  /// P_spike(theta <= eps) > P_slab(theta <= eps) on every grid point.
  bool dominance_holds(std::span<const double> eps_grid) const {
    for (double e : eps_grid) {
      if (!(spike.cdf(e) > slab.cdf(e))) return false;
    }
    return true;
  }
};

// ---------------------------------------------------------------------------
// Monte Carlo check of increasing shrinkage
// ---------------------------------------------------------------------------

struct ShrinkageCurve {
  double epsilon = 0.0;
  std::vector<double> prob;       // estimated P(theta_h <= eps), h = 0..H-1
  std::vector<double> std_error;  // binomial standard errors
  std::vector<int> violations;    // h where prob[h+1] < prob[h] - 3 se
};

struct ShrinkageReport {
  int draws = 0;
  std::vector<ShrinkageCurve> curves;
};

namespace detail {

template <typename PiSampler>
ShrinkageReport shrinkage_monte_carlo(Rng& rng, int h, const SpikeSlabSpec& ss, std::span<const double> eps_grid,
                                      int n_draws, PiSampler&& sample_pi) {
  require(n_draws > 0 && h > 0, "shrinkage check: positive draws and H");
  ShrinkageReport report;
  report.draws = n_draws;
  std::vector<std::vector<long>> counts(eps_grid.size(), std::vector<long>(static_cast<std::size_t>(h), 0));
  Eigen::VectorXd pi(h);
  for (int n = 0; n < n_draws; ++n) {
    sample_pi(rng, pi);
    for (int j = 0; j < h; ++j) {
      const double theta = (rng.uniform() < pi[j]) ? ss.spike.sample(rng) : ss.slab.sample(rng);
      for (std::size_t e = 0; e < eps_grid.size(); ++e) {
        if (theta <= eps_grid[e]) ++counts[e][static_cast<std::size_t>(j)];
      }
    }
  }
  for (std::size_t e = 0; e < eps_grid.size(); ++e) {
    ShrinkageCurve curve;
    curve.epsilon = eps_grid[e];
    curve.prob.resize(static_cast<std::size_t>(h));
    curve.std_error.resize(static_cast<std::size_t>(h));
    for (int j = 0; j < h; ++j) {
      const double p = static_cast<double>(counts[e][static_cast<std::size_t>(j)]) / n_draws;
      curve.prob[static_cast<std::size_t>(j)] = p;
      curve.std_error[static_cast<std::size_t>(j)] = std::sqrt(std::max(p * (1.0 - p), 1e-12) / n_draws);
    }
    for (int j = 0; j + 1 < h; ++j) {
      const double se = std::hypot(curve.std_error[static_cast<std::size_t>(j)],
                                   curve.std_error[static_cast<std::size_t>(j + 1)]);
      if (curve.prob[static_cast<std::size_t>(j + 1)] < curve.prob[static_cast<std::size_t>(j)] - 3.0 * se)
        curve.violations.push_back(j);
    }
    report.curves.push_back(std::move(curve));
  }
  return report;
}

}  // namespace detail

inline ShrinkageReport verify_increasing_shrinkage(Rng& rng, const StickBreakingSpec& spec, const SpikeSlabSpec& ss,
                                                   std::span<const double> eps_grid, int n_draws) {
  return detail::shrinkage_monte_carlo(rng, spec.truncation, ss, eps_grid, n_draws,
                                       [&](Rng& r, Eigen::VectorXd& pi) {
                                         const CuspDraw d = sticks_to_cusp(sample_sticks(r, spec));
                                         pi = d.spike_probs;
                                       });
}

inline ShrinkageReport verify_increasing_shrinkage(Rng& rng, const EspSpec& spec, double alpha,
                                                   const SpikeSlabSpec& ss, std::span<const double> eps_grid,
                                                   int n_draws) {
  return detail::shrinkage_monte_carlo(rng, spec.truncation, ss, eps_grid, n_draws,
                                       [&](Rng& r, Eigen::VectorXd& pi) {
                                         const Eigen::VectorXd tau = sample_esp(r, spec, alpha);
                                         pi = esp_to_cusp(tau).cusp.spike_probs;
                                       });
}

}  // namespace cuspfa
