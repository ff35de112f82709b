#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "ordikit/error.hpp"

namespace ordikit::stats {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) fail("empty_input", "mean of an empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Unbiased (n - 1) sample variance, two-pass.
inline double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) fail("too_few_values", "sample variance needs at least two values");
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail("length_mismatch", "pearson: vectors differ in length");
  if (x.size() < 2) fail("too_few_values", "pearson: need at least two points");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) fail("constant_vector", "correlation undefined for a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// 1-based ranks with ties sharing their average rank.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail("length_mismatch", "spearman: vectors differ in length");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

namespace detail {

// Continued fraction for the incomplete beta function, modified Lentz.
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 500;
  constexpr double kEpsilon = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
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
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEpsilon) return h;
  }
  throw Error(ErrorKind::internal, "no_convergence", "incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
inline double student_t_two_sided_p(double t, double df) {
  if (df <= 0.0) fail("bad_df", "degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
  double mean_difference = 0.0;
  double alpha = 0.05;
  bool significant = false;
};

/// Two-sided paired t-test on a - b.
inline TTestResult paired_ttest(std::span<const double> a, std::span<const double> b, double alpha = 0.05) {
  if (a.size() != b.size()) fail("length_mismatch", "paired t-test needs equal-length samples");
  if (a.size() < 2) fail("too_few_values", "paired t-test needs at least two pairs");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const double m = mean(diff);
  double ss = 0.0;
  for (double d : diff) ss += (d - m) * (d - m);
  const double n = static_cast<double>(diff.size());
  const double sd = std::sqrt(ss / (n - 1.0));
  // Differences that agree to rounding error count as constant.
  const double scale = std::max(1.0, std::fabs(m));
  if (sd <= 64.0 * std::numeric_limits<double>::epsilon() * scale) {
    fail("zero_variance", "paired differences have zero variance; t statistic undefined");
  }
  TTestResult r;
  r.mean_difference = m;
  r.df = n - 1.0;
  r.t = m / (sd / std::sqrt(n));
  r.p = student_t_two_sided_p(r.t, r.df);
  r.alpha = alpha;
  r.significant = r.p < alpha;
  return r;
}

}  // namespace ordikit::stats
