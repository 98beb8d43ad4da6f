#include "pvmix/special.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace pvmix {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5*log(2*pi)

// Lanczos coefficients, g = 7, 9 terms.
constexpr double kLanczos[9] = {
    0.99999999999980993,      676.5203681218851,     -1259.1392167224028,
    771.32342877765313,       -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,     9.9843695780195716e-6, 1.5056327351493116e-7};

double lanczos_series(double x) {
  double s = kLanczos[0];
  for (int i = 1; i < 9; ++i) s += kLanczos[i] / (x + i);
  return s;
}

}  // namespace

double log_gamma(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("log_gamma: x must be > 0");
  if (x < 0.5) {
    // reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
    return std::log(M_PI / std::sin(M_PI * x)) - log_gamma(1.0 - x);
  }
  double z = x - 1.0;
  double t = z + 7.5;
  return kHalfLog2Pi + (z + 0.5) * std::log(t) - t + std::log(lanczos_series(z));
}

double digamma(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("digamma: x must be > 0");
  double r = 0.0;
  while (x < 10.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  double i2 = 1.0 / (x * x);
  // asymptotic expansion with Bernoulli coefficients
  double s = std::log(x) - 0.5 / x -
             i2 * (1.0 / 12.0 -
                   i2 * (1.0 / 120.0 -
                         i2 * (1.0 / 252.0 -
                               i2 * (1.0 / 240.0 - i2 * (1.0 / 132.0)))));
  return r + s;
}

double trigamma(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("trigamma: x must be > 0");
  double r = 0.0;
  while (x < 10.0) {
    r += 1.0 / (x * x);
    x += 1.0;
  }
  double i1 = 1.0 / x;
  double i2 = i1 * i1;
  // asymptotic expansion with Bernoulli coefficients
  double s = i1 + 0.5 * i2 +
             i1 * i2 *
                 (1.0 / 6.0 -
                  i2 * (1.0 / 30.0 -
                        i2 * (1.0 / 42.0 - i2 * (1.0 / 30.0))));
  return r + s;
}

namespace {

// Stirling tail: log Gamma(z) = (z-1/2) log z - z + log(2 pi)/2 + stirling_corr(z).
double stirling_corr(double z) {
  double i2 = 1.0 / (z * z);
  return (1.0 / 12.0 -
          i2 * (1.0 / 360.0 - i2 * (1.0 / 1260.0 - i2 * (1.0 / 1680.0)))) /
         z;
}

}  // namespace

double log_beta(double a, double b) {
  if (a > b) std::swap(a, b);
  if (b < 30.0) return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
  // For large b, log Gamma(b) - log Gamma(a+b) cancels catastrophically
  // (both grow like b log b while the difference stays O(a log b)), so
  // expand the difference analytically from Stirling's series.
  double d = (b - 0.5) * std::log1p(a / b) + a * std::log(a + b) - a +
             stirling_corr(a + b) - stirling_corr(b);
  return log_gamma(a) - d;
}

namespace {

// Series expansion of P(a, x), valid for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-16)
      return sum * std::exp(-x + a * std::log(x) - log_gamma(a));
  }
  throw std::runtime_error("gamma_p: series failed to converge");
}

// Continued fraction for Q(a, x), valid for x >= a + 1.
double gamma_q_cf(double a, double x) {
  const double tiny = std::numeric_limits<double>::min() / 1e-30;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16)
      return std::exp(-x + a * std::log(x) - log_gamma(a)) * h;
  }
  throw std::runtime_error("gamma_q: continued fraction failed to converge");
}

}  // namespace

double gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw std::invalid_argument("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw std::invalid_argument("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

double chi2_sf(double x, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("chi2_sf: df must be > 0");
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * df, 0.5 * x);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

double normal_logpdf(double z) { return -0.5 * z * z - kHalfLog2Pi; }

double normal_quantile(double u) {
  if (!(u > 0.0) || !(u < 1.0))
    throw std::invalid_argument("normal_quantile: u must lie in (0, 1)");

  // rational approximation (Acklam), then one Newton correction
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (u < plow) {
    double q = std::sqrt(-2.0 * std::log(u));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (u <= 1.0 - plow) {
    double q = u - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - u));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double err = normal_cdf(x) - u;
  x -= err * std::exp(0.5 * x * x + kHalfLog2Pi);
  return x;
}

}  // namespace pvmix
