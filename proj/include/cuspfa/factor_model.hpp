#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cuspfa/distributions.hpp"
#include "cuspfa/errors.hpp"
#include "cuspfa/rng.hpp"

namespace cuspfa {

/// Identification bound: H = min(floor((m-1)/2), cap).
inline int max_factors(int m, int cap) {
  detail::require(m >= 3, "factor model needs m >= 3");
  return std::min((m - 1) / 2, cap);
}

struct DatasetTruth {
  Eigen::MatrixXd beta0;       // m x h0
  Eigen::VectorXd sigma0;     // idiosyncratic variances, length m
  int h0 = 0;

  Eigen::MatrixXd omega0() const {
    Eigen::MatrixXd o = beta0 * beta0.transpose();
    o.diagonal() += sigma0;
    return o;
  }
};

struct Dataset {
  Eigen::MatrixXd y;  // n x m, observations as rows
  std::optional<DatasetTruth> truth;

  Eigen::Index n() const { return y.rows(); }
  Eigen::Index m() const { return y.cols(); }
};

enum class LoadingDensity { Dense, Sparse };

struct ScenarioSpec {
  int m = 20;
  int h0 = 5;
  int n = 100;
  LoadingDensity density = LoadingDensity::Dense;
  double zero_fraction = 0.3;

  void validate() const {
    detail::require(m >= 3 && n >= 0 && h0 >= 0, "scenario: m >= 3, n >= 0, h0 >= 0");
    detail::require(h0 < (m - 1) / 2, "scenario: h0 too large for m");
    detail::require(zero_fraction >= 0.0 && zero_fraction < 1.0, "scenario: zero_fraction in [0,1)");
  }
};

/// y_t = beta0 f_t + eps_t with f_t ~ N(0, I_{h0}), eps_t ~ N(0, I_m).
/// Dense: beta0 entries iid N(0,1). Sparse: an exact floor(zero_fraction*m*h0)
/// random subset of entries is zeroed.
inline Dataset simulate_dataset(Rng& rng, const ScenarioSpec& spec) {
  spec.validate();
  DatasetTruth truth;
  truth.h0 = spec.h0;
  truth.beta0.resize(spec.m, spec.h0);
  for (int i = 0; i < spec.m; ++i)
    for (int h = 0; h < spec.h0; ++h) truth.beta0(i, h) = rng.normal();
  if (spec.density == LoadingDensity::Sparse && spec.h0 > 0) {
    const int total = spec.m * spec.h0;
    const int zeros = static_cast<int>(std::floor(spec.zero_fraction * total));
    std::vector<int> idx(static_cast<std::size_t>(total));
    std::iota(idx.begin(), idx.end(), 0);
    for (int k = 0; k < zeros; ++k) {  // partial Fisher-Yates
      const int j = k + static_cast<int>(rng.uniform() * (total - k));
      std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(std::min(j, total - 1))]);
      truth.beta0.data()[idx[static_cast<std::size_t>(k)]] = 0.0;
    }
  }
  truth.sigma0 = Eigen::VectorXd::Ones(spec.m);

  Dataset ds;
  ds.y.resize(spec.n, spec.m);
  for (int t = 0; t < spec.n; ++t) {
    Eigen::VectorXd f(spec.h0);
    for (int h = 0; h < spec.h0; ++h) f[h] = rng.normal();
    for (int i = 0; i < spec.m; ++i) ds.y(t, i) = truth.beta0.row(i).dot(f) + rng.normal();
  }
  ds.truth = std::move(truth);
  return ds;
}

namespace detail {

/// Cholesky with a single 1e-10 jitter retry; failure signals a degenerate state.
inline Eigen::LLT<Eigen::MatrixXd> robust_llt(Eigen::MatrixXd prec, const char* context) {
  Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) {
    prec.diagonal().array() += 1e-10;
    llt.compute(prec);
    if (llt.info() != Eigen::Success) throw numerical_error(std::string(context) + ": Cholesky factorization failed");
  }
  return llt;
}

/// Draw from N(precision^{-1} rhs, precision^{-1}) given its factorization.
inline Eigen::VectorXd precision_draw(Rng& rng, const Eigen::LLT<Eigen::MatrixXd>& llt,
                                      const Eigen::VectorXd& rhs) {
  Eigen::VectorXd mean = llt.solve(rhs);
  Eigen::VectorXd z(rhs.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  llt.matrixU().solveInPlace(z);
  return mean + z;
}

}  // namespace detail

/// f_t | y_t ~ N(M beta' Sigma^{-1} y_t, M), M = (I_H + beta' Sigma^{-1} beta)^{-1};
/// one H x H Cholesky shared across all t.
inline Eigen::MatrixXd sample_factors(Rng& rng, const Eigen::Ref<const Eigen::MatrixXd>& y,
                                      const Eigen::Ref<const Eigen::MatrixXd>& beta,
                                      const Eigen::Ref<const Eigen::VectorXd>& sigma2) {
  const Eigen::Index n = y.rows(), m = y.cols(), h = beta.cols();
  detail::require(beta.rows() == m && sigma2.size() == m, "sample_factors: dimension mismatch");
  detail::require((sigma2.array() > 0).all(), "sample_factors: sigma2 must be positive");
  const Eigen::MatrixXd scaled = sigma2.cwiseInverse().asDiagonal() * beta;  // Sigma^{-1} beta
  Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(h, h);
  prec.noalias() += beta.transpose() * scaled;
  const auto llt = detail::robust_llt(std::move(prec), "sample_factors");
  Eigen::MatrixXd f(n, h);
  const Eigen::MatrixXd rhs = y * scaled;  // row t = (beta' Sigma^{-1} y_t)'
  for (Eigen::Index t = 0; t < n; ++t) f.row(t) = detail::precision_draw(rng, llt, rhs.row(t).transpose());
  return f;
}

/// Row-wise conjugate update under beta_ih ~ N(0, kappa theta_h sigma2_i).
inline Eigen::MatrixXd sample_loadings(Rng& rng, const Eigen::Ref<const Eigen::MatrixXd>& y,
                                       const Eigen::Ref<const Eigen::MatrixXd>& f,
                                       const Eigen::Ref<const Eigen::VectorXd>& sigma2, double kappa,
                                       const Eigen::Ref<const Eigen::VectorXd>& theta) {
  const Eigen::Index n = y.rows(), m = y.cols(), h = theta.size();
  detail::require(f.rows() == n && f.cols() == h && sigma2.size() == m, "sample_loadings: dimension mismatch");
  detail::require(kappa > 0 && (theta.array() > 0).all() && (sigma2.array() > 0).all(),
                  "sample_loadings: scales must be positive");
  const Eigen::MatrixXd ftf = f.transpose() * f;
  const Eigen::MatrixXd fty = f.transpose() * y;  // h x m
  Eigen::MatrixXd beta(m, h);
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::MatrixXd prec = ftf / sigma2[i];
    prec.diagonal() += (kappa * sigma2[i] * theta.array()).inverse().matrix();
    const auto llt = detail::robust_llt(std::move(prec), "sample_loadings");
    beta.row(i) = detail::precision_draw(rng, llt, fty.col(i) / sigma2[i]);
  }
  return beta;
}

/// sigma2_i ~ InvGamma(c + n/2 + H/2, b + SSR_i/2 + sum_h beta_ih^2/(kappa theta_h)/2);
/// the H/2 term comes from the sigma2_i factor in the loading prior variance.
inline Eigen::VectorXd sample_idiosyncratic(Rng& rng, const Eigen::Ref<const Eigen::MatrixXd>& y,
                                            const Eigen::Ref<const Eigen::MatrixXd>& f,
                                            const Eigen::Ref<const Eigen::MatrixXd>& beta, double kappa,
                                            const Eigen::Ref<const Eigen::VectorXd>& theta, double c_sigma,
                                            double b_sigma) {
  const Eigen::Index n = y.rows(), m = y.cols(), h = theta.size();
  detail::require(beta.rows() == m && beta.cols() == h && f.cols() == h && f.rows() == n,
                  "sample_idiosyncratic: dimension mismatch");
  detail::require(kappa > 0 && c_sigma > 0 && b_sigma > 0, "sample_idiosyncratic: parameters must be positive");
  const Eigen::MatrixXd resid = y - f * beta.transpose();
  Eigen::VectorXd sigma2(m);
  const double shape = c_sigma + 0.5 * static_cast<double>(n) + 0.5 * static_cast<double>(h);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double shrink = (beta.row(i).transpose().array().square() / (kappa * theta.array())).sum();
    const double scale = b_sigma + 0.5 * resid.col(i).squaredNorm() + 0.5 * shrink;
    sigma2[i] = sample_inverse_gamma(rng, InvGammaParams{shape, scale});
  }
  return sigma2;
}

inline Eigen::MatrixXd implied_covariance(const Eigen::Ref<const Eigen::MatrixXd>& beta,
                                          const Eigen::Ref<const Eigen::VectorXd>& sigma2) {
  detail::require(beta.rows() == sigma2.size(), "implied_covariance: dimension mismatch");
  Eigen::MatrixXd omega = beta * beta.transpose();
  omega.diagonal() += sigma2;
  return omega;
}

}  // namespace cuspfa
