#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "trustlex/error.hpp"

namespace trustlex {

inline double mean(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Pearson product-moment correlation. Throws DataError on length < 2 or a
/// zero-variance argument.
inline double pearson_r(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("pearson_r: length mismatch");
  if (a.size() < 2) throw DataError("pearson_r: need at least 2 observations");
  double ma = mean(a), mb = mean(b);
  double saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double da = a[i] - ma, db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa <= 0 || sbb <= 0) throw DataError("pearson_r: zero variance input");
  double r = sab / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

/// Observed correlation corrected for the reliability of both measurements.
inline double disattenuated_r(double r_ab, double r_aa = 0.70, double r_bb = 0.70) {
  if (!(r_aa > 0 && r_aa <= 1) || !(r_bb > 0 && r_bb <= 1))
    throw DataError("disattenuated_r: reliabilities must lie in (0,1]");
  return r_ab / std::sqrt(r_aa * r_bb);
}

inline double mse(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw DataError("mse: length mismatch");
  if (y.empty()) throw DataError("mse: empty input");
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double d = y[i] - yhat[i];
    s += d * d;
  }
  return s / static_cast<double>(y.size());
}

namespace detail {

// Continued-fraction evaluation of the regularized incomplete beta function
// (modified Lentz), the standard route to Student-t tail probabilities.
inline double ibeta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
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
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw InternalError("incomplete beta continued fraction did not converge");
}

}  // namespace detail

inline double reg_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                    a * std::log(x) + b * std::log1p(-x);
  double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::ibeta_cf(a, b, x) / a;
  }
  return 1.0 - front * detail::ibeta_cf(b, a, 1.0 - x) / b;
}

/// Two-sided tail probability of a Student-t statistic with df degrees of
/// freedom: P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2).
inline double t_two_sided_p(double t, double df) {
  if (df <= 0) throw DataError("t_two_sided_p: df must be positive");
  double x = df / (df + t * t);
  double p = reg_incomplete_beta(df / 2.0, 0.5, x);
  return std::clamp(p, 0.0, 1.0);
}

/// Two-sided p-value for a Pearson correlation from n paired observations,
/// via t = r*sqrt((n-2)/(1-r^2)) with n-2 degrees of freedom.
inline double pearson_p_two_sided(double r, std::size_t n) {
  if (n < 3) throw DataError("pearson_p_two_sided: need n >= 3");
  double r2 = std::min(r * r, 1.0);
  if (r2 >= 1.0) return 0.0;
  double t = std::fabs(r) * std::sqrt((static_cast<double>(n) - 2.0) / (1.0 - r2));
  return t_two_sided_p(t, static_cast<double>(n) - 2.0);
}

struct WeightedMoments {
  double mean = 0;
  double stddev = 0;  // population style: sqrt(sum w (x-mean)^2 / sum w)
};

inline WeightedMoments weighted_moments(std::span<const double> x,
                                        std::span<const double> w) {
  if (x.size() != w.size()) throw DataError("weighted_moments: length mismatch");
  double sw = 0, swx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    swx += w[i] * x[i];
  }
  if (sw <= 0) throw DataError("weighted_moments: total weight must be positive");
  WeightedMoments m;
  m.mean = swx / sw;
  double sv = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = x[i] - m.mean;
    sv += w[i] * d * d;
  }
  m.stddev = std::sqrt(sv / sw);
  return m;
}

}  // namespace trustlex
