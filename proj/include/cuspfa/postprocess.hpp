#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "cuspfa/factor_model.hpp"
#include "cuspfa/mcmc.hpp"

namespace cuspfa {

/// Type-7 (linear interpolation) quantile of an unsorted sample.
inline double quantile(std::vector<double> x, double p) {
  detail::require(!x.empty() && p >= 0.0 && p <= 1.0, "quantile: empty sample or p outside [0,1]");
  std::sort(x.begin(), x.end());
  const double pos = p * (static_cast<double>(x.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double w = pos - static_cast<double>(lo);
  return (1.0 - w) * x[lo] + w * x[hi];
}

struct HStarSummary {
  std::vector<double> pmf;  // over {0, ..., H}
  int mode = 0;
  bool mode_tie = false;
  std::optional<double> ordinate;  // p(Hstar = H0 | y) when the truth is known
};

inline HStarSummary summarize_hstar(const ChainOutput& chain, std::optional<int> h0 = std::nullopt) {
  detail::require(chain.kept() > 0, "summarize_hstar: empty chain");
  HStarSummary s;
  s.pmf.assign(static_cast<std::size_t>(chain.h) + 1, 0.0);
  for (int v : chain.hstar) {
    detail::require(v >= 0 && v <= chain.h, "summarize_hstar: Hstar out of range");
    s.pmf[static_cast<std::size_t>(v)] += 1.0;
  }
  for (double& p : s.pmf) p /= chain.kept();
  double best = -1.0;
  for (std::size_t v = 0; v < s.pmf.size(); ++v) {
    if (s.pmf[v] > best) {
      best = s.pmf[v];
      s.mode = static_cast<int>(v);
      s.mode_tie = false;
    } else if (s.pmf[v] == best) {
      s.mode_tie = true;  // smallest tied value already stored
    }
  }
  if (h0) {
    detail::require(*h0 >= 0 && *h0 <= chain.h, "summarize_hstar: H0 out of range");
    s.ordinate = s.pmf[static_cast<std::size_t>(*h0)];
  }
  return s;
}

struct CuspReordered {
  Eigen::MatrixXd tau_sorted;    // kept x H, decreasing within each row
  Eigen::MatrixXd theta_sorted;  // theta under the same per-row permutation
};

/// Per-iteration descending sort of tau (ties broken by column index), with
/// the matching permutation applied to theta. pi_h = 1 - tau_(h).
inline CuspReordered cusp_reorder(const ChainOutput& chain) {
  detail::require(chain.tau.rows() == chain.kept() && chain.theta.rows() == chain.kept(),
                  "cusp_reorder: missing tau or theta draws");
  const Eigen::Index kept = chain.tau.rows(), h = chain.tau.cols();
  CuspReordered out;
  out.tau_sorted.resize(kept, h);
  out.theta_sorted.resize(kept, h);
  std::vector<int> perm(static_cast<std::size_t>(h));
  for (Eigen::Index k = 0; k < kept; ++k) {
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(),
                     [&](int i, int j) { return chain.tau(k, i) > chain.tau(k, j); });
    for (Eigen::Index j = 0; j < h; ++j) {
      out.tau_sorted(k, j) = chain.tau(k, perm[static_cast<std::size_t>(j)]);
      out.theta_sorted(k, j) = chain.theta(k, perm[static_cast<std::size_t>(j)]);
    }
  }
  return out;
}

struct BoxStats {
  double q05 = 0, q25 = 0, q50 = 0, q75 = 0, q95 = 0;
};

inline std::vector<BoxStats> column_box_stats(const Eigen::Ref<const Eigen::MatrixXd>& draws) {
  std::vector<BoxStats> stats(static_cast<std::size_t>(draws.cols()));
  std::vector<double> col(static_cast<std::size_t>(draws.rows()));
  for (Eigen::Index j = 0; j < draws.cols(); ++j) {
    Eigen::VectorXd::Map(col.data(), draws.rows()) = draws.col(j);
    stats[static_cast<std::size_t>(j)] = {quantile(col, 0.05), quantile(col, 0.25), quantile(col, 0.50),
                                          quantile(col, 0.75), quantile(col, 0.95)};
  }
  return stats;
}

/// Posterior MSE of the implied covariance against the truth, averaged over
/// the lower triangle including the diagonal.
inline double mse_omega(const ChainOutput& chain, const Eigen::Ref<const Eigen::MatrixXd>& omega0) {
  detail::require(!chain.beta_draws.empty(), "mse_omega: no stored loading draws");
  detail::require(omega0.rows() == chain.m && omega0.cols() == chain.m, "mse_omega: truth dimension mismatch");
  const Eigen::Index m = omega0.rows();
  double acc = 0.0;
  for (std::size_t d = 0; d < chain.beta_draws.size(); ++d) {
    const Eigen::MatrixXd omega = implied_covariance(chain.beta_draws[d], chain.sigma2_draws[d]);
    double sq = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index l = 0; l <= i; ++l) {
        const double dlt = omega(i, l) - omega0(i, l);
        sq += dlt * dlt;
      }
    acc += sq;
  }
  const double cells = 0.5 * static_cast<double>(m) * static_cast<double>(m + 1);
  return acc / (static_cast<double>(chain.beta_draws.size()) * cells);
}

/// Effective sample size via Geyer's initial monotone positive sequence.
/// A constant sequence reports 1.
inline double ess(std::span<const double> x) {
  const std::size_t n = x.size();
  detail::require(n >= 100, "ess: need at least 100 draws");
  const double nd = static_cast<double>(n);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= nd;
  const auto gamma = [&](std::size_t k) {
    double g = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) g += (x[t] - mean) * (x[t + k] - mean);
    return g / nd;
  };
  const double g0 = gamma(0);
  if (!(g0 > 0.0)) return 1.0;
  double sig2 = -g0;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; 2 * j + 1 < n; ++j) {
    double pair = gamma(2 * j) + gamma(2 * j + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev);
    sig2 += 2.0 * pair;
    prev = pair;
  }
  if (sig2 <= 0.0) return 10.0 * nd;  // pathological antithetic case
  return std::clamp(nd * g0 / sig2, 1.0, 10.0 * nd);
}

}  // namespace cuspfa
