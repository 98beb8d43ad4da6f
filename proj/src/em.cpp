#include "pvmix/em.hpp"

#include <algorithm>
#include <cmath>

#include "pvmix/errors.hpp"
#include "pvmix/parallel.hpp"
#include "pvmix/rng.hpp"
#include "pvmix/special.hpp"

namespace pvmix {

namespace {

constexpr double kEmptyTol = 1e-8;    // column weight below this is "empty"
constexpr double kDecreaseSlack = -1e-8;
constexpr std::size_t kChunk = 256;   // fixed reduction granule (worker-count independent)

}  // namespace

void FitConfig::check() const {
  if (K < 0) throw DataError("config: K must be >= 0");
  if (!(delta > 0.0) || !(delta < 1.0)) throw DataError("config: delta must lie in (0,1)");
  if (!(eta > 0.0) || !(eta < 1.0)) throw DataError("config: eta must lie in (0,1)");
  if (std::isnan(epsilon) || epsilon >= 1.0)
    throw DataError("config: epsilon must be < 1 (non-positive disables the stop)");
  if (max_iter < 1) throw DataError("config: max_iter must be >= 1");
  if (workers < 1) throw DataError("config: workers must be >= 1");
  if (init_candidates < 1) throw DataError("config: init_candidates must be >= 1");
  if (!(p_max_init > 0.0) || !(p_max_init < 1.0))
    throw DataError("config: p_max_init must lie in (0,1)");
}

Responsibilities e_step(const PValueField& f, const MixtureParams& t,
                        SpatialMode spatial) {
  const int K1 = t.K + 1;
  const std::size_t n = f.n();
  Responsibilities r;
  r.n = n;
  r.K = t.K;
  r.w.resize(n * K1);
  r.logu.resize(n * K1);
  for (std::size_t i = 0; i < n; ++i) {
    double m = -HUGE_VAL;
    for (int k = 0; k < K1; ++k) {
      double lu = joint_log_density(f.p[i], f.coord_row(i), f.cv, t.comp[k], spatial);
      r.LU(i, k) = lu;
      if (lu > m) m = lu;
    }
    double s = 0.0;
    for (int k = 0; k < K1; ++k) s += t.pi[k] * std::exp(r.LU(i, k) - m);
    if (!(s > 0.0)) throw NumericalError("e_step: vanishing mixture density");
    for (int k = 0; k < K1; ++k) r.W(i, k) = t.pi[k] * std::exp(r.LU(i, k) - m) / s;
  }
  return r;
}

std::vector<double> update_pi_from_sums(const std::vector<double>& colsum,
                                        std::size_t n, double delta) {
  const std::size_t K1 = colsum.size();
  std::vector<double> pi(K1);
  for (std::size_t k = 0; k < K1; ++k) pi[k] = colsum[k] / static_cast<double>(n);
  if (K1 == 1) {
    pi[0] = 1.0;
    return pi;
  }
  if (pi[0] >= delta) return pi;
  double scale = (1.0 - delta) / (1.0 - pi[0]);
  for (std::size_t k = 1; k < K1; ++k) pi[k] *= scale;
  pi[0] = delta;
  return pi;
}

std::vector<double> update_pi_constrained(const Responsibilities& r, double delta) {
  const int K1 = r.K + 1;
  std::vector<Kahan> acc(K1);
  for (std::size_t i = 0; i < r.n; ++i)
    for (int k = 0; k < K1; ++k) acc[k].add(r.W(i, k));
  std::vector<double> colsum(K1);
  for (int k = 0; k < K1; ++k) colsum[k] = acc[k].value();
  return update_pi_from_sums(colsum, r.n, delta);
}

std::pair<std::array<double, 3>, std::array<double, 3>> update_gaussian(
    const Responsibilities& r, const PValueField& f, int k) {
  const int cv = f.cv;
  Kahan sw;
  std::array<Kahan, 3> swv{}, swvv{};
  for (std::size_t i = 0; i < f.n(); ++i) {
    double w = r.W(i, k);
    sw.add(w);
    for (int d = 0; d < cv; ++d) swv[d].add(w * f.coord_row(i)[d]);
  }
  double tot = sw.value();
  if (!(tot > 0.0)) throw NumericalError("update_gaussian: empty component");
  std::array<double, 3> mu{0.5, 0.5, 0.5}, s2{1.0, 1.0, 1.0};
  for (int d = 0; d < cv; ++d) mu[d] = swv[d].value() / tot;
  for (std::size_t i = 0; i < f.n(); ++i) {
    double w = r.W(i, k);
    for (int d = 0; d < cv; ++d) {
      double dv = f.coord_row(i)[d] - mu[d];
      swvv[d].add(w * dv * dv);
    }
  }
  for (int d = 0; d < cv; ++d) s2[d] = std::max(kSigma2Min, swvv[d].value() / tot);
  return {mu, s2};
}

double beta_objective(double S0, double S1, double S2, double alpha, double beta) {
  return (alpha - 1.0) * S1 + (beta - 1.0) * S2 - S0 * log_beta(alpha, beta);
}

namespace {

constexpr double kAlphaMin = 1e-10;
constexpr double kBetaMax = 1e8;

struct BetaPoint {
  double a, b;
};

bool feasible(const BetaPoint& p, double eta) {
  return p.a > kAlphaMin && p.a <= 1.0 - kShapeMargin &&
         p.b >= 1.0 + kShapeMargin && p.b <= kBetaMax &&
         eta * p.b - (1.0 - eta) * p.a > 0.0;
}

BetaPoint project_interior(BetaPoint p, double eta) {
  p.a = std::clamp(p.a, 2.0 * kAlphaMin, (1.0 - kShapeMargin) * (1.0 - 1e-9));
  p.b = std::clamp(p.b, (1.0 + kShapeMargin) * (1.0 + 1e-9), kBetaMax * 0.5);
  double bmin = p.a * (1.0 - eta) / eta;
  if (p.b <= bmin) p.b = std::min(kBetaMax * 0.5, bmin * (1.0 + 1e-6) + 1e-9);
  return p;
}

// Interior ascent on F + mu * (log c1 + log c2 + log c3) in (ln a, ln b)
// coordinates, where c1 = (1-margin) - a, c2 = b - (1+margin),
// c3 = eta*b - (1-eta)*a. Uses damped Newton steps with a fraction-to-boundary
// rule so the iterate path varies smoothly with the inputs; backtracking is a
// rare safeguard, not the main control. Returns the best feasible point seen,
// judged by the raw objective F.
BetaPoint barrier_ascend(double S0, double S1, double S2, double eta,
                         BetaPoint start, double mu0, int max_inner) {
  BetaPoint cur = project_interior(start, eta);
  double Fcur = beta_objective(S0, S1, S2, cur.a, cur.b);
  BetaPoint best = cur;
  double Fbest = Fcur;
  const double mu_floor = 1e-16 * std::max(1.0, std::fabs(S0));

  // Scale the barrier to the raw gradient at the start: near a stationary
  // point the barrier bias shrinks with the gradient, so repeated warm
  // starts settle onto the constrained maximum instead of a mu-sized halo.
  double dpsi0 = digamma(cur.a + cur.b);
  double g0 = std::hypot(cur.a * (S1 - S0 * (digamma(cur.a) - dpsi0)),
                         cur.b * (S2 - S0 * (digamma(cur.b) - dpsi0)));
  double mu = std::min(mu0, 0.3 * g0);

  auto barrier_value = [&](const BetaPoint& p) {
    double c1 = (1.0 - kShapeMargin) - p.a;
    double c2 = p.b - (1.0 + kShapeMargin);
    double c3 = eta * p.b - (1.0 - eta) * p.a;
    return beta_objective(S0, S1, S2, p.a, p.b) +
           mu * (std::log(c1) + std::log(c2) + std::log(c3));
  };

  for (int it = 0; it < max_inner; ++it) {
    double a = cur.a, b = cur.b;
    double c1 = (1.0 - kShapeMargin) - a;
    double c2 = b - (1.0 + kShapeMargin);
    double c3 = eta * b - (1.0 - eta) * a;
    double dpsi = digamma(a + b);
    double tpsi = trigamma(a + b);
    double Ga = S1 - S0 * (digamma(a) - dpsi) - mu / c1 - mu * (1.0 - eta) / c3;
    double Gb = S2 - S0 * (digamma(b) - dpsi) + mu / c2 + mu * eta / c3;
    double Gaa = -S0 * (trigamma(a) - tpsi) - mu / (c1 * c1) -
                 mu * (1.0 - eta) * (1.0 - eta) / (c3 * c3);
    double Gab = S0 * tpsi + mu * (1.0 - eta) * eta / (c3 * c3);
    double Gbb = -S0 * (trigamma(b) - tpsi) - mu / (c2 * c2) -
                 mu * eta * eta / (c3 * c3);
    // gradient and Hessian in (ln a, ln b)
    double gx = a * Ga;
    double gy = b * Gb;
    double Hxx = gx + a * a * Gaa;
    double Hxy = a * b * Gab;
    double Hyy = gy + b * b * Gbb;
    double gn = std::hypot(gx, gy);
    if (gn < 1e-13 * std::max(1.0, std::fabs(S0))) {
      mu *= 0.25;
      if (mu < mu_floor) break;
      continue;
    }

    // shift the Hessian to keep it safely negative definite; the shift is a
    // continuous function of the entries, so the step stays continuous too
    double tr = Hxx + Hyy;
    double disc = std::hypot(Hxx - Hyy, 2.0 * Hxy);
    double eigmax = 0.5 * (tr + disc);
    double shift = eigmax + 1e-8 * (std::fabs(tr) + disc + 1.0);
    if (shift > 0.0) {
      Hxx -= shift;
      Hyy -= shift;
    }
    double det = Hxx * Hyy - Hxy * Hxy;
    double dx = (-gx * Hyy + gy * Hxy) / det;
    double dy = (-gy * Hxx + gx * Hxy) / det;

    // fraction-to-boundary damping against every constraint
    double tmax = 1.0;
    if (dx > 0.0) tmax = std::min(tmax, 0.99 * std::log1p(c1 / a) / dx);
    if (dx < 0.0) tmax = std::min(tmax, 0.99 * std::log(a / kAlphaMin) / -dx);
    if (dy < 0.0)
      tmax = std::min(tmax, 0.99 * std::log(b / (1.0 + kShapeMargin)) / -dy);
    if (dy > 0.0) tmax = std::min(tmax, 0.99 * std::log(kBetaMax / b) / dy);
    if (dx - dy > 0.0) {
      // c3(t) = eta*b*e^(t*dy) - (1-eta)*a*e^(t*dx) hits zero where
      // e^(t*(dx-dy)) = eta*b / ((1-eta)*a)
      double lim = std::log(eta * b / ((1.0 - eta) * a)) / (dx - dy);
      tmax = std::min(tmax, 0.99 * lim);
    }
    if (!(tmax > 0.0)) {
      mu *= 0.25;
      if (mu < mu_floor) break;
      continue;
    }

    double base = barrier_value(cur);
    // float evaluation cannot resolve improvements below this; treat such
    // comparisons as ties and accept, or the iterate freezes a noise-ball
    // short of the optimum
    double noise = 4e-13 * (1.0 + std::fabs(base));
    double t = tmax;
    bool accepted = false;
    for (int half = 0; half < 30; ++half) {
      BetaPoint trial{a * std::exp(t * dx), b * std::exp(t * dy)};
      if (feasible(trial, eta)) {
        double val = barrier_value(trial);
        if (std::isfinite(val) && val >= base - noise) {
          cur = trial;
          Fcur = beta_objective(S0, S1, S2, cur.a, cur.b);
          if (Fcur > Fbest) {
            Fbest = Fcur;
            best = cur;
          }
          accepted = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (!accepted) {
      mu *= 0.25;
      if (mu < mu_floor) break;
    } else {
      mu *= 0.5;
    }
  }
  // Prefer the endpoint of the Newton path: near stationarity the float
  // evaluation of F cannot resolve genuine micro-improvements, and insisting
  // on a strictly larger F would freeze the iterate a noise-ball away from
  // the optimum. The tracked best still wins if the endpoint is worse by
  // more than evaluation noise.
  if (Fcur >= Fbest - 4e-13 * (1.0 + std::fabs(Fbest))) return cur;
  return best;
}

}  // namespace

std::pair<double, double> constrained_beta_step(double S0, double S1, double S2,
                                                double eta, double alpha,
                                                double beta, int max_inner) {
  if (!(S0 > 0.0)) return {alpha, beta};
  BetaPoint start{alpha, beta};
  BetaPoint out = barrier_ascend(S0, S1, S2, eta, start, 1e-2 * S0, max_inner);
  // never hand back a point below the incoming objective (beyond the float
  // noise of evaluating it)
  double Fin = beta_objective(S0, S1, S2, alpha, beta);
  double Fout = beta_objective(S0, S1, S2, out.a, out.b);
  if (feasible(start, eta) && Fout < Fin - 4e-13 * (1.0 + std::fabs(Fin)))
    return {alpha, beta};
  return {out.a, out.b};
}

std::pair<double, double> constrained_beta_mle(double S0, double S1, double S2,
                                               double eta,
                                               std::pair<double, double> start) {
  if (!(S0 > 0.0)) return start;
  BetaPoint cur = project_interior({start.first, start.second}, eta);
  double Fprev = beta_objective(S0, S1, S2, cur.a, cur.b);
  for (int round = 0; round < 80; ++round) {
    double mu0 = 1e-2 * S0 * std::pow(0.3, round);
    cur = barrier_ascend(S0, S1, S2, eta, cur, std::max(mu0, 1e-15 * S0), 25);
    double F = beta_objective(S0, S1, S2, cur.a, cur.b);
    if (F - Fprev < 1e-13 * (1.0 + std::fabs(F)) && round >= 6) break;
    Fprev = F;
  }
  return {cur.a, cur.b};
}

std::pair<double, double> update_beta_constrained(const Responsibilities& r,
                                                  const PValueField& f, int k,
                                                  double eta,
                                                  std::pair<double, double> current) {
  Kahan s0, s1, s2;
  for (std::size_t i = 0; i < f.n(); ++i) {
    double w = r.W(i, k);
    s0.add(w);
    s1.add(w * f.logp[i]);
    s2.add(w * f.log1mp[i]);
  }
  return constrained_beta_step(s0.value(), s1.value(), s2.value(), eta,
                               current.first, current.second);
}

std::vector<int> map_classify(const Responsibilities& r) {
  const int K1 = r.K + 1;
  std::vector<int> labels(r.n);
  for (std::size_t i = 0; i < r.n; ++i) {
    int arg = 0;
    double best = r.W(i, 0);
    for (int k = 1; k < K1; ++k) {
      if (r.W(i, k) > best) {
        best = r.W(i, k);
        arg = k;
      }
    }
    labels[i] = arg;
  }
  return labels;
}

std::vector<double> flatten_params(const MixtureParams& t) {
  std::vector<double> v;
  v.reserve((t.K + 1) * (3 + 2 * t.cv));
  for (double w : t.pi) v.push_back(w);
  for (const auto& c : t.comp) {
    v.push_back(c.alpha);
    v.push_back(c.beta);
    for (int d = 0; d < t.cv; ++d) v.push_back(c.mu[d]);
    for (int d = 0; d < t.cv; ++d) v.push_back(c.sigma2[d]);
  }
  return v;
}

namespace {

// Fixed-granule engine state. All reductions accumulate per 256-record chunk
// and combine in chunk order, so results do not depend on the worker count.
class Engine {
 public:
  Engine(const PValueField& f, const FitConfig& cfg, const MixtureParams& theta0)
      : f_(f),
        cfg_(cfg),
        th_(theta0),
        n_(f.n()),
        K1_(cfg.K + 1),
        nchunks_((f.n() + kChunk - 1) / kChunk),
        D_(std::min<std::size_t>(std::max(cfg.workers, 1), nchunks_)),
        chunks_(partition(nchunks_, static_cast<int>(D_))),
        reseed_rng_(Rng(cfg.seed).split(0x5eed5eedull)) {
    logu_.resize(n_ * K1_);
    u_.resize(n_ * K1_);
    anchor_.assign(n_, 0.0);
    srow_.assign(n_, 0.0);
    wcol_.assign(n_, 0.0);
    slot_sw_.assign(nchunks_ * K1_, 0.0);
    slot_vec_.assign(nchunks_ * std::max(f.cv, 1), 0.0);
    slot_a_.assign(nchunks_, 0.0);
    slot_b_.assign(nchunks_, 0.0);
  }

  FitResult run() {
    rebuild_all_columns();
    double lprev = loglik();
    FitResult out;
    out.trace.push_back(lprev);
    if (cfg_.trace_params) out.param_trace.push_back(flatten_params(th_));
    bool aborted = false;

    int s = 0;
    for (s = 1; s <= cfg_.max_iter; ++s) {
      bool reseeded_now = false;
      for (int c = 0; c < K1_ && !aborted; ++c) {
        CycleStats st = cycle_stats(c);
        if (st.sw[c] < kEmptyTol) {
          if (reseed_used_) {
            aborted = true;
            break;
          }
          reseed_used_ = true;
          reseeded_now = true;
          reseed_component(c);
          continue;
        }
        th_.pi = update_pi_from_sums(st.sw, n_, cfg_.delta);
        if (cfg_.spatial == SpatialMode::On) {
          for (int d = 0; d < f_.cv; ++d) st.mu[d] = st.swv[d] / st.sw[c];
          std::array<double, 3> s2 = sqdev_pass(c, st.mu);
          for (int d = 0; d < f_.cv; ++d)
            th_.comp[c].sigma2[d] = std::max(kSigma2Min, s2[d] / st.sw[c]);
          th_.comp[c].mu = st.mu;
        }
        if (c >= 1) {
          auto ab = constrained_beta_step(st.sw[c], st.slnp, st.sln1mp, cfg_.eta,
                                          th_.comp[c].alpha, th_.comp[c].beta);
          th_.comp[c].alpha = ab.first;
          th_.comp[c].beta = ab.second;
        }
        refresh_column(c);
      }
      if (aborted) break;

      double l = loglik();
      out.trace.push_back(l);
      if (cfg_.trace_params) out.param_trace.push_back(flatten_params(th_));
      if (!reseeded_now) {
        double rel = (l - lprev) / std::max(std::fabs(lprev), 1e-300);
        if (rel < kDecreaseSlack)
          throw NumericalError("fit: log-likelihood decreased");
        if (rel < cfg_.epsilon) {
          out.converged = true;
          lprev = l;
          break;
        }
      }
      lprev = l;
    }

    out.n_iter = std::min(s, cfg_.max_iter);
    out.theta = th_;
    out.loglik = out.trace.back();
    out.valid = !aborted;
    materialize(out);
    return out;
  }

 private:
  struct CycleStats {
    std::vector<double> sw;      // K+1 column sums
    std::array<double, 3> swv{}; // component-c coordinate sums
    std::array<double, 3> mu{};
    double slnp = 0.0, sln1mp = 0.0;
  };

  double logu_at(std::size_t i, int k) const { return logu_[i * K1_ + k]; }

  void compute_column(int c, std::size_t lo, std::size_t hi) {
    const ComponentParams& g = th_.comp[c];
    const double am1 = g.alpha - 1.0, bm1 = g.beta - 1.0;
    const double lnB = (g.alpha == 1.0 && g.beta == 1.0)
                           ? 0.0
                           : log_beta(g.alpha, g.beta);
    double cnorm = 0.0;
    std::array<double, 3> inv2{}, muv{};
    const bool sp = cfg_.spatial == SpatialMode::On;
    if (sp) {
      for (int d = 0; d < f_.cv; ++d) {
        cnorm += -0.5 * std::log(2.0 * M_PI * g.sigma2[d]);
        inv2[d] = 0.5 / g.sigma2[d];
        muv[d] = g.mu[d];
      }
    }
    for (std::size_t i = lo; i < hi; ++i) {
      double t = am1 * f_.logp[i] + bm1 * f_.log1mp[i] - lnB;
      if (sp) {
        const double* v = f_.coord_row(i);
        t += cnorm;
        for (int d = 0; d < f_.cv; ++d) {
          double dv = v[d] - muv[d];
          t -= dv * dv * inv2[d];
        }
      }
      logu_[i * K1_ + c] = t;
    }
  }

  void refresh_rows(std::size_t lo, std::size_t hi, int c) {
    for (std::size_t i = lo; i < hi; ++i) {
      double lu = logu_at(i, c);
      double a = anchor_[i];
      if (lu > a) {
        double fac = std::exp(a - lu);
        for (int k = 0; k < K1_; ++k) u_[i * K1_ + k] *= fac;
        anchor_[i] = lu;
        u_[i * K1_ + c] = 1.0;
      } else {
        u_[i * K1_ + c] = std::exp(lu - a);
      }
      double s = 0.0;
      for (int k = 0; k < K1_; ++k) s += th_.pi[k] * u_[i * K1_ + k];
      srow_[i] = s;
    }
  }

  void refresh_column(int c) {
    run_blocks(static_cast<int>(D_), [&](int d) {
      for (std::size_t j = chunks_.lo(d); j < chunks_.hi(d); ++j) {
        std::size_t lo = j * kChunk, hi = std::min(n_, (j + 1) * kChunk);
        compute_column(c, lo, hi);
        refresh_rows(lo, hi, c);
      }
    });
  }

  void rebuild_all_columns() {
    run_blocks(static_cast<int>(D_), [&](int d) {
      for (std::size_t j = chunks_.lo(d); j < chunks_.hi(d); ++j) {
        std::size_t lo = j * kChunk, hi = std::min(n_, (j + 1) * kChunk);
        for (int c = 0; c < K1_; ++c) compute_column(c, lo, hi);
        for (std::size_t i = lo; i < hi; ++i) {
          double m = logu_at(i, 0);
          for (int k = 1; k < K1_; ++k) m = std::max(m, logu_at(i, k));
          anchor_[i] = m;
          double s = 0.0;
          for (int k = 0; k < K1_; ++k) {
            double uu = std::exp(logu_at(i, k) - m);
            u_[i * K1_ + k] = uu;
            s += th_.pi[k] * uu;
          }
          srow_[i] = s;
        }
      }
    });
  }

  CycleStats cycle_stats(int c) {
    const int cv = f_.cv;
    run_blocks(static_cast<int>(D_), [&](int d) {
      std::vector<Kahan> asw(K1_);
      std::vector<Kahan> avec(cv);
      for (std::size_t j = chunks_.lo(d); j < chunks_.hi(d); ++j) {
        std::size_t lo = j * kChunk, hi = std::min(n_, (j + 1) * kChunk);
        for (auto& a : asw) a = Kahan{};
        for (auto& a : avec) a = Kahan{};
        Kahan alnp, aln1mp;
        for (std::size_t i = lo; i < hi; ++i) {
          double s = srow_[i];
          if (!(s > 0.0)) throw NumericalError("fit: vanishing mixture density");
          double inv = 1.0 / s;
          const double* urow = u_.data() + i * K1_;
          for (int k = 0; k < K1_; ++k) asw[k].add(th_.pi[k] * urow[k] * inv);
          double wc = th_.pi[c] * urow[c] * inv;
          wcol_[i] = wc;
          const double* v = f_.coord_row(i);
          for (int d2 = 0; d2 < cv; ++d2) avec[d2].add(wc * v[d2]);
          alnp.add(wc * f_.logp[i]);
          aln1mp.add(wc * f_.log1mp[i]);
        }
        for (int k = 0; k < K1_; ++k) slot_sw_[j * K1_ + k] = asw[k].value();
        for (int d2 = 0; d2 < cv; ++d2) slot_vec_[j * cv + d2] = avec[d2].value();
        slot_a_[j] = alnp.value();
        slot_b_[j] = aln1mp.value();
      }
    });
    CycleStats st;
    st.sw.assign(K1_, 0.0);
    for (std::size_t j = 0; j < nchunks_; ++j) {
      for (int k = 0; k < K1_; ++k) st.sw[k] += slot_sw_[j * K1_ + k];
      for (int d2 = 0; d2 < cv; ++d2) st.swv[d2] += slot_vec_[j * cv + d2];
      st.slnp += slot_a_[j];
      st.sln1mp += slot_b_[j];
    }
    return st;
  }

  std::array<double, 3> sqdev_pass(int /*c*/, const std::array<double, 3>& mu) {
    const int cv = f_.cv;
    run_blocks(static_cast<int>(D_), [&](int d) {
      std::vector<Kahan> acc(cv);
      for (std::size_t j = chunks_.lo(d); j < chunks_.hi(d); ++j) {
        std::size_t lo = j * kChunk, hi = std::min(n_, (j + 1) * kChunk);
        for (auto& a : acc) a = Kahan{};
        for (std::size_t i = lo; i < hi; ++i) {
          double wc = wcol_[i];
          const double* v = f_.coord_row(i);
          for (int d2 = 0; d2 < cv; ++d2) {
            double dv = v[d2] - mu[d2];
            acc[d2].add(wc * dv * dv);
          }
        }
        for (int d2 = 0; d2 < cv; ++d2) slot_vec_[j * cv + d2] = acc[d2].value();
      }
    });
    std::array<double, 3> out{};
    for (std::size_t j = 0; j < nchunks_; ++j)
      for (int d2 = 0; d2 < cv; ++d2) out[d2] += slot_vec_[j * cv + d2];
    return out;
  }

  double loglik() {
    run_blocks(static_cast<int>(D_), [&](int d) {
      for (std::size_t j = chunks_.lo(d); j < chunks_.hi(d); ++j) {
        std::size_t lo = j * kChunk, hi = std::min(n_, (j + 1) * kChunk);
        Kahan acc;
        for (std::size_t i = lo; i < hi; ++i) {
          if (!(srow_[i] > 0.0))
            throw NumericalError("fit: vanishing mixture density");
          acc.add(anchor_[i] + std::log(srow_[i]));
        }
        slot_a_[j] = acc.value();
      }
    });
    double l = 0.0;
    for (std::size_t j = 0; j < nchunks_; ++j) l += slot_a_[j];
    return l;
  }

  void reseed_component(int c) {
    std::size_t j = reseed_rng_.below(n_);
    ComponentParams& g = th_.comp[c];
    if (c >= 1) {
      double a = reseed_rng_.uniform(0.1, 0.9);
      double b = std::max(a * (1.0 - cfg_.eta) / cfg_.eta * (1.0 + reseed_rng_.uniform()),
                          1.0 + kShapeMargin + 0.1);
      g.alpha = a;
      g.beta = b;
    }
    if (cfg_.spatial == SpatialMode::On) {
      for (int d = 0; d < f_.cv; ++d) {
        g.mu[d] = f_.coord_row(j)[d];
        g.sigma2[d] = 0.01;
      }
    }
    // give the component observable mass again, keeping the null-weight floor
    double bump = 0.001 * (1.0 - cfg_.delta);
    if (th_.pi[c] < bump) {
      th_.pi[c] = bump;
      double tot = 0.0;
      for (double w : th_.pi) tot += w;
      for (double& w : th_.pi) w /= tot;
      if (th_.pi[0] < cfg_.delta) {
        double scale = (1.0 - cfg_.delta) / (1.0 - th_.pi[0]);
        for (std::size_t k = 1; k < th_.pi.size(); ++k) th_.pi[k] *= scale;
        th_.pi[0] = cfg_.delta;
      }
    }
    refresh_column(c);
  }

  void materialize(FitResult& out) {
    out.resp.n = n_;
    out.resp.K = cfg_.K;
    out.resp.logu = logu_;
    out.resp.w.resize(n_ * K1_);
    for (std::size_t i = 0; i < n_; ++i) {
      double inv = 1.0 / srow_[i];
      for (int k = 0; k < K1_; ++k)
        out.resp.w[i * K1_ + k] = th_.pi[k] * u_[i * K1_ + k] * inv;
    }
    out.labels = map_classify(out.resp);
    if (out.valid) {
      std::vector<std::size_t> count(K1_, 0);
      for (int l : out.labels) ++count[l];
      for (int k = 0; k < K1_; ++k)
        if (count[k] < static_cast<std::size_t>(1 + f_.cv)) out.valid = false;
    }
  }

  const PValueField& f_;
  FitConfig cfg_;
  MixtureParams th_;
  std::size_t n_;
  int K1_;
  std::size_t nchunks_;
  std::size_t D_;
  BlockPartition chunks_;
  Rng reseed_rng_;
  bool reseed_used_ = false;

  std::vector<double> logu_, u_, anchor_, srow_, wcol_;
  std::vector<double> slot_sw_, slot_vec_, slot_a_, slot_b_;
};

}  // namespace

FitResult fit_mixture(const PValueField& f, const FitConfig& cfg,
                      const MixtureParams& theta0) {
  cfg.check();
  theta0.check();
  if (theta0.K != cfg.K) throw DataError("fit: theta0.K does not match config");
  if (theta0.cv != f.cv) throw DataError("fit: theta0.cv does not match field");
  if (f.n() == 0) throw DataError("fit: empty field");
  if (f.n() < static_cast<std::size_t>(cfg.K) * (1 + f.cv) + 1)
    throw DataError("fit: too few records for requested K");
  Engine eng(f, cfg, theta0);
  return eng.run();
}

}  // namespace pvmix
