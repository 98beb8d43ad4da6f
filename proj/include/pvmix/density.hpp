#pragma once

#include <cmath>

#include "pvmix/field.hpp"

namespace pvmix {

enum class SpatialMode { Off, On };

// log b(p; alpha, beta). Throws std::invalid_argument outside the domain.
double beta_log_density(double p, double alpha, double beta);

// log of the component density at one record: beta term in p plus, when
// spatial is on, independent normal terms per coordinate axis.
double joint_log_density(double p, const double* v, int cv,
                         const ComponentParams& g, SpatialMode spatial);

// Observed-data log-likelihood of the mixture over the whole field,
// evaluated with per-record log-sum-exp.
double penalized_loglik(const PValueField& f, const MixtureParams& t,
                        SpatialMode spatial);

// Neumaier compensated accumulator.
struct Kahan {
  double s = 0.0, c = 0.0;
  void add(double x) {
    double t = s + x;
    if (std::abs(s) >= std::abs(x))
      c += (s - t) + x;
    else
      c += (x - t) + s;
    s = t;
  }
  double value() const { return s + c; }
};

}  // namespace pvmix
