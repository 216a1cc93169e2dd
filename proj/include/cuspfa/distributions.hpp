#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>

#include "cuspfa/errors.hpp"
#include "cuspfa/rng.hpp"

namespace cuspfa {

// Probabilities are floored before normalization; densities live in log space.
inline constexpr double kProbFloor = 1e-300;
inline constexpr double kLogProbFloor = -690.7755278982137;  // log(kProbFloor)

struct BetaParams {
  double a;
  double b;
};

/// Gamma in (shape, rate) form: mean = shape/rate.
struct GammaParams {
  double shape;
  double rate;
};

/// Inverse gamma in (shape, scale) form: mean = scale/(shape-1) for shape>1.
struct InvGammaParams {
  double shape;
  double scale;
};

/// Scaled F distribution: theta/scale ~ F(2a, 2c). scale=1 is the slab,
/// scale=nu0<1 the deflated spike.
struct FParams {
  double a;
  double c;
  double scale = 1.0;
};

namespace detail {
inline void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}
}  // namespace detail

inline void validate(const BetaParams& p) {
  detail::require(p.a > 0 && p.b > 0 && std::isfinite(p.a) && std::isfinite(p.b), "beta: a, b must be positive");
}
inline void validate(const GammaParams& p) {
  detail::require(p.shape > 0 && p.rate > 0 && std::isfinite(p.shape) && std::isfinite(p.rate),
                  "gamma: shape, rate must be positive");
}
inline void validate(const InvGammaParams& p) {
  detail::require(p.shape > 0 && p.scale > 0 && std::isfinite(p.shape) && std::isfinite(p.scale),
                  "inverse gamma: shape, scale must be positive");
}
inline void validate(const FParams& p) {
  detail::require(p.a > 0 && p.c > 0 && p.scale > 0, "f: a, c, scale must be positive");
}

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

inline double log_beta_fn(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

namespace detail {

// Continued fraction for the regularized incomplete beta (Lentz's method).
inline double beta_cont_frac(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double reg_inc_beta(double a, double b, double x) {
  detail::require(a > 0 && b > 0, "reg_inc_beta: shapes must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = a * std::log(x) + b * std::log1p(-x) - log_beta_fn(a, b);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(ln_front) * detail::beta_cont_frac(a, b, x) / a;
  return 1.0 - std::exp(ln_front) * detail::beta_cont_frac(b, a, 1.0 - x) / b;
}

// ---------------------------------------------------------------------------
// Scalar samplers
// ---------------------------------------------------------------------------

/// Marsaglia-Tsang for shape >= 1; shape < 1 boosts to shape+1 and applies
/// the u^(1/shape) correction (needed for the alpha/H << 1 stick shapes).
inline double sample_gamma(Rng& rng, const GammaParams& p) {
  validate(p);
  double shape = p.shape;
  double boost = 1.0;
  if (shape < 1.0) {
    const double draw = std::max(rng.uniform(), kProbFloor);
    boost = std::pow(draw, 1.0 / shape);
    shape += 1.0;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return boost * d * v / p.rate;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return boost * d * v / p.rate;
  }
}

inline double sample_inverse_gamma(Rng& rng, const InvGammaParams& p) {
  validate(p);
  return 1.0 / sample_gamma(rng, GammaParams{p.shape, p.scale});
}

inline double sample_beta(Rng& rng, const BetaParams& p) {
  validate(p);
  const double x = sample_gamma(rng, GammaParams{p.a, 1.0});
  const double y = sample_gamma(rng, GammaParams{p.b, 1.0});
  const double t = x / (x + y);
  return std::clamp(t, kProbFloor, 1.0 - 1e-16);
}

/// Hierarchical representation of the scaled F: b ~ Gamma(a, a/c) and
/// theta | b ~ InvGamma(c, scale*b), so that theta/scale ~ F(2a, 2c).
/// Returns (theta, b).
inline std::pair<double, double> sample_f_mixture(Rng& rng, const FParams& p) {
  validate(p);
  const double b = sample_gamma(rng, GammaParams{p.a, p.a / p.c});
  const double theta = sample_inverse_gamma(rng, InvGammaParams{p.c, p.scale * b});
  return {theta, b};
}

// ---------------------------------------------------------------------------
// Scaled-F density and cdf
// ---------------------------------------------------------------------------

inline double f_logdensity(double theta, const FParams& p) {
  validate(p);
  detail::require(theta > 0 && std::isfinite(theta), "f density: theta must be positive");
  const double z = theta / p.scale;
  const double r = p.a * z / p.c;
  return std::log(p.a) - std::log(p.c) - log_beta_fn(p.a, p.c) + (p.a - 1.0) * std::log(r) -
         (p.a + p.c) * std::log1p(r) - std::log(p.scale);
}

inline double f_density(double theta, const FParams& p) { return std::exp(f_logdensity(theta, p)); }

/// P(theta <= x) for the scaled F.
inline double f_cdf(double x, const FParams& p) {
  validate(p);
  if (x <= 0.0) return 0.0;
  const double z = x / p.scale;
  const double u = p.a * z / (p.c + p.a * z);
  return reg_inc_beta(p.a, p.c, u);
}

// ---------------------------------------------------------------------------
// Multivariate pieces
// ---------------------------------------------------------------------------

/// Zero-mean multivariate t log density with scale matrix
/// common_scale * diag(scale_diag) and dof degrees of freedom.
inline double mvt_logdensity(const Eigen::Ref<const Eigen::VectorXd>& x, double dof,
                             const Eigen::Ref<const Eigen::VectorXd>& scale_diag, double common_scale) {
  const Eigen::Index m = x.size();
  detail::require(scale_diag.size() == m, "mvt: dimension mismatch");
  detail::require(dof > 0 && common_scale > 0, "mvt: dof and common_scale must be positive");
  detail::require((scale_diag.array() > 0).all(), "mvt: scale entries must be positive");
  const double md = static_cast<double>(m);
  double quad = 0.0, logdet = md * std::log(common_scale);
  for (Eigen::Index i = 0; i < m; ++i) {
    quad += x[i] * x[i] / scale_diag[i];
    logdet += std::log(scale_diag[i]);
  }
  quad /= common_scale;
  return std::lgamma(0.5 * (dof + md)) - std::lgamma(0.5 * dof) - 0.5 * md * std::log(dof * M_PI) - 0.5 * logdet -
         0.5 * (dof + md) * std::log1p(quad / dof);
}

/// Draw N(mean, L L^T) given the lower-triangular factor L.
inline Eigen::VectorXd sample_mvn(Rng& rng, const Eigen::Ref<const Eigen::VectorXd>& mean,
                                  const Eigen::Ref<const Eigen::MatrixXd>& chol_lower) {
  const Eigen::Index m = mean.size();
  detail::require(chol_lower.rows() == m && chol_lower.cols() == m, "mvn: dimension mismatch");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(chol_lower(i, i) > 0)) throw numerical_error("mvn: Cholesky factor has nonpositive diagonal");
  }
  Eigen::VectorXd z(m);
  for (Eigen::Index i = 0; i < m; ++i) z[i] = rng.normal();
  return mean + chol_lower.triangularView<Eigen::Lower>() * z;
}

/// Categorical draw by Gumbel-max over (unnormalized) log weights.
inline int gumbel_max_index(Rng& rng, std::span<const double> log_weights) {
  detail::require(!log_weights.empty(), "gumbel_max: empty weights");
  int best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    const double lw = std::max(log_weights[i], kLogProbFloor);
    const double g = -std::log(-std::log(rng.uniform()));
    if (lw + g > best_val) {
      best_val = lw + g;
      best = static_cast<int>(i);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Generalized inverse Gaussian
// ---------------------------------------------------------------------------

/// GIG(p, a, b): density proportional to x^(p-1) exp(-(a x + b/x)/2), x > 0.
/// Rejection sampling in y = log x, where the density is always log-concave:
/// flat-top envelope over [yl, yr] (the points one log-unit below the mode)
/// with exponential tails tangent at yl, yr.
inline double sample_gig(Rng& rng, double p, double a, double b) {
  detail::require(a > 0 && b > 0 && std::isfinite(p), "gig: a, b must be positive");
  const double ym = std::log((p + std::sqrt(p * p + a * b)) / a);
  const auto psi = [&](double y) { return p * y - 0.5 * (a * std::exp(y) + b * std::exp(-y)); };
  const auto dpsi = [&](double y) { return p - 0.5 * (a * std::exp(y) - b * std::exp(-y)); };
  const double psi_m = psi(ym);

  // Find phi(y) = psi(y) - psi_m = -1 on each side: step out, then bisect.
  const auto solve_level = [&](double dir) {
    double step = 1.0;
    double lo = ym, hi = ym + dir * step;
    while (psi(hi) - psi_m > -1.0) {
      lo = hi;
      step *= 2.0;
      hi = ym + dir * step;
    }
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (psi(mid) - psi_m > -1.0)
        lo = mid;
      else
        hi = mid;
      if (std::fabs(hi - lo) < 1e-12 * (1.0 + std::fabs(mid))) break;
    }
    return 0.5 * (lo + hi);
  };
  const double yl = solve_level(-1.0);
  const double yr = solve_level(+1.0);
  const double dl = dpsi(yl);   // > 0
  const double dr = -dpsi(yr);  // > 0
  const double wl = std::exp(-1.0) / dl;
  const double wc = yr - yl;
  const double wr = std::exp(-1.0) / dr;
  const double wtot = wl + wc + wr;

  for (;;) {
    const double u = rng.uniform() * wtot;
    double y, log_env;
    if (u < wl) {
      const double e = -std::log(rng.uniform());
      y = yl - e / dl;
      log_env = -1.0 - dl * (yl - y);
    } else if (u < wl + wc) {
      y = yl + rng.uniform() * wc;
      log_env = 0.0;
    } else {
      const double e = -std::log(rng.uniform());
      y = yr + e / dr;
      log_env = -1.0 - dr * (y - yr);
    }
    if (std::log(rng.uniform()) <= (psi(y) - psi_m) - log_env) return std::exp(y);
  }
}

}  // namespace cuspfa
