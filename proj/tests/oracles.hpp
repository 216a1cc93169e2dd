// Test-side oracles kept independent of the library's computation paths:
// adaptive Simpson quadrature and plain sample-moment summaries.
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace oracle {

namespace detail {

template <typename F>
double simpson_rec(const F& f, double a, double b, double fa, double fm, double fb, double whole, double tol,
                   int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

template <typename F>
double integrate(const F& f, double a, double b, double tol = 1e-10, int max_depth = 20) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

/// Integral over (0, inf), split as [0,1] plus the 1/x-reflected tail; the
/// 1e-12 endpoint insets are negligible for the decaying integrands used here.
template <typename F>
double integrate_halfline(const F& f, double tol = 1e-10) {
  const double lo = 1e-12;
  const double head = integrate(f, lo, 1.0, 0.5 * tol);
  const double tail = integrate([&](double t) { return f(1.0 / t) / (t * t); }, lo, 1.0, 0.5 * tol);
  return head + tail;
}

struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double var = 0.0;      // unbiased
  double se_mean = 0.0;  // sd/sqrt(n)
  double m2 = 0.0;       // mean of squares
  double se_m2 = 0.0;    // sd(x^2)/sqrt(n)
};

inline Moments moments(std::span<const double> x) {
  if (x.size() < 2) throw std::invalid_argument("moments: need at least 2 samples");
  Moments m;
  m.n = x.size();
  double s = 0.0, s2 = 0.0, s4 = 0.0;
  for (double v : x) {
    s += v;
    s2 += v * v;
    s4 += v * v * v * v;
  }
  const double n = static_cast<double>(m.n);
  m.mean = s / n;
  m.m2 = s2 / n;
  m.var = (s2 - n * m.mean * m.mean) / (n - 1.0);
  m.se_mean = std::sqrt(std::max(m.var, 0.0) / n);
  const double var_sq = (s4 / n) - m.m2 * m.m2;
  m.se_m2 = std::sqrt(std::max(var_sq, 0.0) / n);
  return m;
}

inline double zscore(double estimate, double target, double se) {
  return std::fabs(estimate - target) / (se > 0 ? se : 1e-300);
}

/// Standard error of a mean estimated from an autocorrelated chain,
/// deflating by the effective sample size.
inline double chain_se(const Moments& m, double ess) {
  return std::sqrt(std::max(m.var, 0.0) / std::max(ess, 1.0));
}

}  // namespace oracle
