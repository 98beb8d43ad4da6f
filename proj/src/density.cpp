#include "pvmix/density.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "pvmix/special.hpp"

namespace pvmix {

double beta_log_density(double p, double alpha, double beta) {
  if (!(p > 0.0) || !(p < 1.0))
    throw std::invalid_argument("beta_log_density: p must lie in (0, 1)");
  if (!(alpha > 0.0) || !(beta > 0.0))
    throw std::invalid_argument("beta_log_density: shapes must be positive");
  if (alpha == 1.0 && beta == 1.0) return 0.0;
  return (alpha - 1.0) * std::log(p) + (beta - 1.0) * std::log1p(-p) -
         log_beta(alpha, beta);
}

double joint_log_density(double p, const double* v, int cv,
                         const ComponentParams& g, SpatialMode spatial) {
  double t = beta_log_density(p, g.alpha, g.beta);
  if (spatial == SpatialMode::On) {
    for (int d = 0; d < cv; ++d) {
      double dv = v[d] - g.mu[d];
      t += -0.5 * std::log(2.0 * M_PI * g.sigma2[d]) -
           0.5 * dv * dv / g.sigma2[d];
    }
  }
  return t;
}

double penalized_loglik(const PValueField& f, const MixtureParams& t,
                        SpatialMode spatial) {
  const int K1 = t.K + 1;
  std::vector<double> lu(K1);
  Kahan total;
  for (std::size_t i = 0; i < f.n(); ++i) {
    double m = -HUGE_VAL;
    for (int k = 0; k < K1; ++k) {
      lu[k] = joint_log_density(f.p[i], f.coord_row(i), f.cv, t.comp[k], spatial);
      if (t.pi[k] > 0.0 && lu[k] > m) m = lu[k];
    }
    double s = 0.0;
    for (int k = 0; k < K1; ++k)
      if (t.pi[k] > 0.0) s += t.pi[k] * std::exp(lu[k] - m);
    total.add(m + std::log(s));
  }
  return total.value();
}

}  // namespace pvmix
