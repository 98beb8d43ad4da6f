#include "pvmix/init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pvmix/density.hpp"
#include "pvmix/errors.hpp"

namespace pvmix {

namespace {

constexpr int kMaxFitRounds = 25;

double sqdist(const std::array<double, 4>& seed, double p, const double* v,
              int cv) {
  double d = (p - seed[0]) * (p - seed[0]);
  for (int a = 0; a < cv; ++a) d += (v[a] - seed[1 + a]) * (v[a] - seed[1 + a]);
  return d;
}

// Method-of-moments beta fit projected into the feasible region, then one
// constrained ascent polish on the group statistics.
std::pair<double, double> group_beta(const PValueField& f,
                                     const std::vector<int>& grouping, int k,
                                     double eta) {
  double n = 0.0, s = 0.0, s2 = 0.0, S1 = 0.0, S2 = 0.0;
  for (std::size_t i = 0; i < f.n(); ++i) {
    if (grouping[i] != k) continue;
    n += 1.0;
    s += f.p[i];
    s2 += f.p[i] * f.p[i];
    S1 += f.logp[i];
    S2 += f.log1mp[i];
  }
  double alpha = 0.5, beta = 0.5 * (1.0 - eta) / eta;
  if (n >= 2.0) {
    double m = s / n;
    double var = std::max(s2 / n - m * m, 0.0);
    if (var > 0.0 && m > 0.0 && m < 1.0) {
      double t = m * (1.0 - m) / var - 1.0;
      if (std::isfinite(t) && t > 0.0) {
        alpha = std::clamp(m * t, 1e-3, 1.0 - 2.0 * kShapeMargin);
        beta = std::max((1.0 - m) * t, 1.0 + 2.0 * kShapeMargin);
      }
    }
    if (alpha / (alpha + beta) > eta)
      beta = alpha * (1.0 - eta) / eta * (1.0 + 1e-9);
    return constrained_beta_step(n, S1, S2, eta, alpha, beta);
  }
  return {alpha, beta};
}

}  // namespace

InitCandidate draw_candidate(const PValueField& f, int K, double eta,
                             double p_max, Rng& rng) {
  if (K < 0) throw DataError("init: K must be >= 0");
  if (f.n() < static_cast<std::size_t>(K) + 1)
    throw DataError("init: fewer records than seeds");
  const std::size_t n = f.n();
  const int cv = f.cv;

  InitCandidate cand;
  cand.centers.assign(static_cast<std::size_t>(K) + 1, {0.5, 0.5, 0.5, 0.5});

  if (K > 0) {
    // records of potential interest; widen the cut to the K-th smallest
    // p-value when too few qualify
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < n; ++i)
      if (f.p[i] < p_max) pool.push_back(i);
    if (pool.size() < static_cast<std::size_t>(K)) {
      std::vector<double> ps(f.p);
      std::nth_element(ps.begin(), ps.begin() + (K - 1), ps.end());
      double cut = ps[K - 1];
      pool.clear();
      for (std::size_t i = 0; i < n; ++i)
        if (f.p[i] <= cut) pool.push_back(i);
    }
    for (int k = 1; k <= K; ++k) {
      std::size_t j = rng.below(pool.size());
      std::size_t idx = pool[j];
      pool[j] = pool.back();
      pool.pop_back();
      cand.centers[k][0] = f.p[idx];
      for (int a = 0; a < cv; ++a) cand.centers[k][1 + a] = f.coord_row(idx)[a];
    }
  }

  // nearest-seed grouping in (p, coords); ties go to the lower index
  cand.grouping.resize(n);
  std::vector<std::size_t> counts(static_cast<std::size_t>(K) + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    double bd = sqdist(cand.centers[0], f.p[i], f.coord_row(i), cv);
    for (int k = 1; k <= K; ++k) {
      double d = sqdist(cand.centers[k], f.p[i], f.coord_row(i), cv);
      if (d < bd) {
        bd = d;
        best = k;
      }
    }
    cand.grouping[i] = best;
    ++counts[best];
  }
  cand.valid = std::all_of(counts.begin(), counts.end(),
                           [](std::size_t c) { return c >= 2; });

  // raw group shares; the caller projects them onto pi[0] >= delta and
  // fills in its own delta before validating
  MixtureParams t = MixtureParams::make(K, cv, 0.99, eta);
  for (int k = 0; k <= K; ++k)
    t.pi[k] = static_cast<double>(counts[k]) / static_cast<double>(n);
  for (int k = 0; k <= K; ++k) {
    std::array<double, 3> mu{0.5, 0.5, 0.5}, s2{1.0, 1.0, 1.0};
    if (counts[k] > 0) {
      std::array<double, 3> sum{0.0, 0.0, 0.0};
      for (std::size_t i = 0; i < n; ++i) {
        if (cand.grouping[i] != k) continue;
        for (int a = 0; a < cv; ++a) sum[a] += f.coord_row(i)[a];
      }
      for (int a = 0; a < cv; ++a) mu[a] = sum[a] / counts[k];
      std::array<double, 3> sq{0.0, 0.0, 0.0};
      for (std::size_t i = 0; i < n; ++i) {
        if (cand.grouping[i] != k) continue;
        for (int a = 0; a < cv; ++a) {
          double dv = f.coord_row(i)[a] - mu[a];
          sq[a] += dv * dv;
        }
      }
      for (int a = 0; a < cv; ++a)
        s2[a] = std::max(kSigma2Min, sq[a] / counts[k]);
    }
    t.comp[k].mu = mu;
    t.comp[k].sigma2 = s2;
    if (k >= 1) {
      auto ab = group_beta(f, cand.grouping, k, eta);
      t.comp[k].alpha = ab.first;
      t.comp[k].beta = ab.second;
    }
  }
  cand.theta0 = std::move(t);
  return cand;
}

MixtureParams best_of_m(const PValueField& f, const FitConfig& cfg,
                        std::uint64_t round) {
  cfg.check();
  const int M = cfg.init_candidates;
  Rng root(cfg.seed);

  bool have = false;
  MixtureParams best;
  double best_ll = -std::numeric_limits<double>::infinity();

  for (int idx = 0; idx < 10 * M; ++idx) {
    if (idx >= M && have) break;
    Rng stream = root.split(round * static_cast<std::uint64_t>(10 * M) +
                            static_cast<std::uint64_t>(idx));
    InitCandidate cand =
        draw_candidate(f, cfg.K, cfg.eta, cfg.p_max_init, stream);
    if (!cand.valid) continue;
    // project the raw group shares onto the constrained simplex
    std::vector<double> colsum(cand.theta0.pi);
    for (double& c : colsum) c *= static_cast<double>(f.n());
    cand.theta0.delta = cfg.delta;
    cand.theta0.pi = update_pi_from_sums(colsum, f.n(), cfg.delta);
    cand.loglik0 = penalized_loglik(f, cand.theta0, cfg.spatial);
    if (!have || cand.loglik0 > best_ll) {
      have = true;
      best_ll = cand.loglik0;
      best = std::move(cand.theta0);
    }
  }
  if (!have) throw InitError("init: no valid starting configuration found");
  best.check();
  return best;
}

FitResult fit(const PValueField& f, const FitConfig& cfg) {
  for (int round = 0; round < kMaxFitRounds; ++round) {
    MixtureParams theta0 =
        best_of_m(f, cfg, static_cast<std::uint64_t>(round));
    FitResult r = fit_mixture(f, cfg, theta0);
    if (r.valid) return r;
  }
  throw InitError("fit: no valid maximum after repeated restarts");
}

}  // namespace pvmix
