#include "pvmix/model_select.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "pvmix/errors.hpp"
#include "pvmix/init.hpp"
#include "pvmix/rng.hpp"

namespace pvmix {

int param_count(int K, int cv) {
  if (K < 0) throw DataError("param_count: K must be >= 0");
  if (cv != 2 && cv != 3) throw DataError("param_count: cv must be 2 or 3");
  return K * (3 + 2 * cv) + 2 * cv;
}

CriteriaValues criteria(const FitResult& fit, const PValueField& f,
                        SpatialMode spatial) {
  const int K = fit.theta.K;
  const int d = spatial == SpatialMode::On ? param_count(K, f.cv) : 3 * K;
  const double n = static_cast<double>(f.n());

  double entropy = 0.0;  // sum of -w ln w, with 0 ln 0 = 0
  for (std::size_t i = 0; i < fit.resp.n; ++i)
    for (int k = 0; k <= fit.resp.K; ++k) {
      double w = fit.resp.W(i, k);
      if (w > 0.0) entropy -= w * std::log(w);
    }

  CriteriaValues out;
  out.aic = -2.0 * fit.loglik + 2.0 * d;
  out.bic = -2.0 * fit.loglik + d * std::log(n);
  out.iclbic = out.bic + 2.0 * entropy;
  return out;
}

SelectionReport select_K(const PValueField& f, const FitConfig& cfg, int K_max,
                         Criterion criterion) {
  if (K_max < 0) throw DataError("select_K: K_max must be >= 0");
  cfg.check();

  SelectionReport rep;
  rep.used = criterion;
  rep.fits.reserve(static_cast<std::size_t>(K_max) + 1);
  rep.crit.reserve(static_cast<std::size_t>(K_max) + 1);

  Rng root(cfg.seed);
  double best = std::numeric_limits<double>::infinity();
  for (int K = 0; K <= K_max; ++K) {
    FitConfig ck = cfg;
    ck.K = K;
    ck.seed = root.split(static_cast<std::uint64_t>(K)).next_u64();

    FitResult r;
    bool ok = true;
    try {
      r = fit(f, ck);
    } catch (const InitError&) {
      ok = false;
      r.theta = MixtureParams::make(K, f.cv, cfg.delta, cfg.eta);
      r.valid = false;
    }

    CriteriaValues cv;
    if (ok) {
      cv = criteria(r, f, cfg.spatial);
      r.aic = cv.aic;
      r.bic = cv.bic;
      r.iclbic = cv.iclbic;
      double score = criterion == Criterion::Aic   ? cv.aic
                     : criterion == Criterion::Bic ? cv.bic
                                                   : cv.iclbic;
      if (score < best) {
        best = score;
        rep.K_hat = K;
      }
    } else {
      double nan = std::numeric_limits<double>::quiet_NaN();
      cv = {nan, nan, nan};
    }
    rep.fits.push_back(std::move(r));
    rep.crit.push_back(cv);
  }

  if (rep.K_hat < 0)
    throw InitError("select_K: no valid fit for any K in 0.." +
                    std::to_string(K_max));
  return rep;
}

}  // namespace pvmix
