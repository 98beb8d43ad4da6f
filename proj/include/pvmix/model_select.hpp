#pragma once

#include <vector>

#include "pvmix/em.hpp"
#include "pvmix/field.hpp"

namespace pvmix {

enum class Criterion { Aic, Bic, IclBic };

// Free parameters of the full spatial model: each of the K active components
// carries (pi, alpha, beta) and every component, the uniform one included,
// carries a cv-dimensional Gaussian (mu, sigma2).
int param_count(int K, int cv);

struct CriteriaValues {
  double aic = 0.0;
  double bic = 0.0;
  double iclbic = 0.0;
};

// Information criteria at the fitted parameters. AIC = -2l + 2d,
// BIC = -2l + d ln n, ICL-BIC = BIC + 2 * classification entropy of the
// responsibilities. With the spatial factor off the Gaussian parameters do
// not enter the likelihood and d reduces to 3K.
CriteriaValues criteria(const FitResult& fit, const PValueField& f,
                        SpatialMode spatial);

struct SelectionReport {
  int K_hat = -1;
  Criterion used = Criterion::Bic;
  std::vector<FitResult> fits;       // index K = 0..K_max, invalid sweeps kept
  std::vector<CriteriaValues> crit;  // aligned with fits; NaN when invalid

  const FitResult& best() const { return fits[static_cast<std::size_t>(K_hat)]; }
};

// Fit every K in 0..K_max on its own seed stream and keep the fit that
// minimizes the chosen criterion; ties resolve toward the smaller K.
// Throws InitError when no K produces a valid fit.
SelectionReport select_K(const PValueField& f, const FitConfig& cfg, int K_max,
                         Criterion criterion);

}  // namespace pvmix
