#pragma once

namespace pvmix {

// Natural log of the gamma function for x > 0.
double log_gamma(double x);

// Digamma function psi(x) = d/dx log Gamma(x), x > 0.
double digamma(double x);

// Trigamma function psi'(x), x > 0.
double trigamma(double x);

// log Beta(a, b) for a, b > 0.
double log_beta(double a, double b);

// Regularized lower incomplete gamma P(a, x) and its complement Q(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Upper tail of the chi-squared distribution with df degrees of freedom.
double chi2_sf(double x, double df);

// Standard normal CDF and its inverse.
double normal_cdf(double z);
double normal_quantile(double u);

// log of standard normal pdf at z.
double normal_logpdf(double z);

}  // namespace pvmix
