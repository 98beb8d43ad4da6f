#include "pvmix/merge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pvmix/errors.hpp"
#include "pvmix/special.hpp"

namespace pvmix {

namespace {

constexpr double kMleLo = 1e-8;
constexpr double kMleHi = 1e8;

void check_pvec(const std::vector<double>& p) {
  for (double x : p)
    if (!(x >= 0.0 && x <= 1.0))
      throw DataError("fdr: p-values must lie in [0, 1]");
}

// Step-up q-values on a given hypothesis order: q at sorted rank i is
// min over j >= i of mult * p[order[j]] / divisor[j], capped at 1.
std::vector<double> step_up_q(const std::vector<double>& p,
                              const std::vector<std::size_t>& order,
                              const std::vector<double>& divisor, double mult) {
  std::vector<double> q(p.size());
  double running = 1.0;
  for (std::size_t j = p.size(); j-- > 0;) {
    running = std::min(running, mult * p[order[j]] / divisor[j]);
    q[order[j]] = running;
  }
  return q;
}

std::vector<std::size_t> sort_by_ratio(const std::vector<double>& p,
                                       const std::vector<double>& wt) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    double ra = p[a] / wt[a], rb = p[b] / wt[b];
    if (ra != rb) return ra < rb;
    return a < b;
  });
  return order;
}

// One weighted step-up pass; wt must already be normalized to mean one.
// Rejects everything up to the largest rank whose q-value clears level.
FdrResult weighted_step_up(const std::vector<double>& p,
                           const std::vector<double>& wt, double mult,
                           double level) {
  std::vector<std::size_t> order = sort_by_ratio(p, wt);
  std::vector<double> cumw(p.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < order.size(); ++j) cumw[j] = (acc += wt[order[j]]);

  FdrResult out;
  out.q = step_up_q(p, order, cumw, mult);
  out.reject.assign(p.size(), 0);
  for (std::size_t i = 0; i < p.size(); ++i) out.reject[i] = out.q[i] <= level;
  return out;
}

std::size_t count_rejects(const FdrResult& r) {
  std::size_t c = 0;
  for (char f : r.reject) c += f != 0;
  return c;
}

FdrResult two_stage(const std::vector<double>& p, const std::vector<double>& wt,
                    double q0) {
  const double m = static_cast<double>(p.size());
  FdrResult stage1 = weighted_step_up(p, wt, m, q0 / (1.0 + q0));
  std::size_t r1 = count_rejects(stage1);

  if (r1 == 0) {  // nothing stands out, estimated signal is empty
    FdrResult out = weighted_step_up(p, wt, m, q0);
    std::fill(out.reject.begin(), out.reject.end(), 0);
    return out;
  }
  if (r1 == p.size()) {  // no nulls left to protect
    FdrResult out;
    out.q.assign(p.size(), 0.0);
    out.reject.assign(p.size(), 1);
    return out;
  }
  double m0 = m - static_cast<double>(r1);
  return weighted_step_up(p, wt, m0, q0);
}

struct GroupStats {
  double S0 = 0.0, S1 = 0.0, S2 = 0.0;
};

GroupStats stats_of(const std::vector<double>& pvals) {
  GroupStats g;
  for (double p : pvals) {
    double c = std::clamp(p, kPClamp, 1.0 - kPClamp);
    g.S0 += 1.0;
    g.S1 += std::log(c);
    g.S2 += std::log1p(-c);
  }
  return g;
}

GroupStats pool(const GroupStats& a, const GroupStats& b) {
  return {a.S0 + b.S0, a.S1 + b.S1, a.S2 + b.S2};
}

// Best F along the mean = eta boundary, b = a (1-eta)/eta. F restricted to
// this ray through the origin is unimodal in ln a, so golden section is safe.
double boundary_best(const GroupStats& g, double eta) {
  const double c = (1.0 - eta) / eta;
  auto val = [&](double x) {
    double a = std::exp(x);
    return beta_objective(g.S0, g.S1, g.S2, a, a * c);
  };
  double lo = std::log(kMleLo);
  double hi = std::log(kMleHi * eta);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = val(x1), f2 = val(x2);
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = val(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = val(x1);
    }
  }
  return std::max(f1, f2);
}

std::pair<double, double> moment_start(const std::vector<double>& pvals) {
  double n = static_cast<double>(pvals.size());
  double m = 0.0;
  for (double p : pvals) m += p;
  m /= n;
  double v = 0.0;
  for (double p : pvals) v += (p - m) * (p - m);
  v /= n;
  m = std::clamp(m, 1e-6, 1.0 - 1e-6);
  if (v < 1e-12) return {m * 50.0, (1.0 - m) * 50.0};
  double t = std::max(m * (1.0 - m) / v - 1.0, 1e-3);
  return {std::clamp(m * t, 1e-3, 1e6), std::clamp((1.0 - m) * t, 1e-3, 1e6)};
}

}  // namespace

FdrResult fdr_p1(const std::vector<double>& p, double q0) {
  check_pvec(p);
  if (p.empty()) return {};
  std::vector<double> wt(p.size(), 1.0);
  return weighted_step_up(p, wt, static_cast<double>(p.size()), q0);
}

FdrResult fdr_p2(const std::vector<double>& p, double q0) {
  check_pvec(p);
  if (p.empty()) return {};
  std::vector<double> wt(p.size(), 1.0);
  return two_stage(p, wt, q0);
}

FdrResult fdr_p3(const std::vector<double>& p, const std::vector<double>& w,
                 double q0) {
  check_pvec(p);
  if (w.size() != p.size()) throw DataError("fdr_p3: weight count mismatch");
  for (double x : w)
    if (!(x > 0.0)) throw DataError("fdr_p3: weights must be positive");
  if (p.empty()) return {};
  double sum = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<double> wt(w);
  for (double& x : wt) x *= static_cast<double>(p.size()) / sum;
  return two_stage(p, wt, q0);
}

std::pair<double, double> beta_mle(double S0, double S1, double S2,
                                   std::pair<double, double> start) {
  double a = std::clamp(start.first, kMleLo, kMleHi);
  double b = std::clamp(start.second, kMleLo, kMleHi);
  double F = beta_objective(S0, S1, S2, a, b);
  if (!std::isfinite(F)) {
    double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan};
  }
  const double gtol = 1e-10 * std::max(1.0, S0);

  for (int it = 0; it < 200; ++it) {
    double dab = digamma(a + b);
    double Ga = S1 - S0 * (digamma(a) - dab);
    double Gb = S2 - S0 * (digamma(b) - dab);
    double gx = a * Ga, gy = b * Gb;  // gradient in (ln a, ln b)
    if (std::fabs(gx) <= gtol && std::fabs(gy) <= gtol) break;

    double tab = trigamma(a + b);
    double Haa = -S0 * (trigamma(a) - tab);
    double Hab = S0 * tab;
    double Hbb = -S0 * (trigamma(b) - tab);
    double Hxx = gx + a * a * Haa;
    double Hxy = a * b * Hab;
    double Hyy = gy + b * b * Hbb;

    // shift the Hessian negative definite before solving
    double tr = Hxx + Hyy;
    double disc = std::sqrt((Hxx - Hyy) * (Hxx - Hyy) + 4.0 * Hxy * Hxy);
    double eigmax = 0.5 * (tr + disc);
    double shift = 0.0;
    if (eigmax > -1e-12 * (std::fabs(tr) + 1.0))
      shift = eigmax + 1e-8 * (std::fabs(tr) + disc + 1.0);
    double Axx = Hxx - shift, Ayy = Hyy - shift;
    double det = Axx * Ayy - Hxy * Hxy;
    double dx = -(Ayy * gx - Hxy * gy) / det;
    double dy = -(Axx * gy - Hxy * gx) / det;
    double norm = std::max(std::fabs(dx), std::fabs(dy));
    if (norm > 10.0) {
      dx *= 10.0 / norm;
      dy *= 10.0 / norm;
    }

    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h < 40; ++h, t *= 0.5) {
      double na = std::clamp(a * std::exp(t * dx), kMleLo, kMleHi);
      double nb = std::clamp(b * std::exp(t * dy), kMleLo, kMleHi);
      double nF = beta_objective(S0, S1, S2, na, nb);
      if (nF >= F + 1e-15 * (1.0 + std::fabs(F))) {
        a = na;
        b = nb;
        F = nF;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;  // at the resolution of the objective
  }
  return {a, b};
}

std::pair<double, double> lrt_component_vs_null(const std::vector<double>& pvals,
                                                double eta) {
  if (pvals.size() < 2) return {0.0, 1.0};
  GroupStats g = stats_of(pvals);

  std::pair<double, double> hat = beta_mle(g.S0, g.S1, g.S2,
                                           moment_start(pvals));
  if (!std::isfinite(hat.first) || !std::isfinite(hat.second)) return {0.0, 1.0};
  double l_hat = beta_objective(g.S0, g.S1, g.S2, hat.first, hat.second);

  double l_null;
  if (hat.first / (hat.first + hat.second) >= eta) {
    l_null = l_hat;  // unrestricted optimum already satisfies H0
  } else {
    l_null = boundary_best(g, eta);
  }
  if (!std::isfinite(l_hat) || !std::isfinite(l_null)) return {0.0, 1.0};

  double lambda = std::max(0.0, 2.0 * (l_hat - l_null));
  return {lambda, chi2_sf(lambda, 1.0)};
}

PairwiseOutcome pairwise_merge(const std::vector<std::vector<double>>& groups,
                               double q0) {
  const int G = static_cast<int>(groups.size());
  PairwiseOutcome out;
  out.cluster.resize(static_cast<std::size_t>(std::max(G, 0)));
  std::iota(out.cluster.begin(), out.cluster.end(), 0);
  if (G < 2) return out;

  std::vector<GroupStats> st(groups.size());
  std::vector<double> l_sep(groups.size());
  std::vector<bool> bad(groups.size(), false);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    st[g] = stats_of(groups[g]);
    auto mle = beta_mle(st[g].S0, st[g].S1, st[g].S2,
                        moment_start(groups[g]));
    bad[g] = !std::isfinite(mle.first);
    l_sep[g] = bad[g] ? 0.0
                      : beta_objective(st[g].S0, st[g].S1, st[g].S2, mle.first,
                                       mle.second);
  }

  auto test_pair = [&](const GroupStats& ga, const GroupStats& gb, double la,
                       double lb) -> std::pair<double, double> {
    GroupStats gp = pool(ga, gb);
    auto mle = beta_mle(gp.S0, gp.S1, gp.S2, {0.5, 20.0});
    if (!std::isfinite(mle.first)) return {0.0, 1.0};
    double lp = beta_objective(gp.S0, gp.S1, gp.S2, mle.first, mle.second);
    double lambda = std::max(0.0, 2.0 * (la + lb - lp));
    return {lambda, chi2_sf(lambda, 2.0)};
  };

  for (int k = 0; k < G; ++k)
    for (int l = k + 1; l < G; ++l) {
      PairTest t;
      t.k = k;
      t.l = l;
      if (bad[k] || bad[l]) {
        t.lambda = 0.0;
        t.p = 1.0;
      } else {
        auto [lam, p] = test_pair(st[k], st[l], l_sep[k], l_sep[l]);
        t.lambda = lam;
        t.p = p;
      }
      out.tests.push_back(t);
    }

  std::vector<double> pv(out.tests.size());
  for (std::size_t i = 0; i < out.tests.size(); ++i) pv[i] = out.tests[i].p;
  FdrResult bh = fdr_p1(pv, q0);
  for (std::size_t i = 0; i < out.tests.size(); ++i) out.tests[i].q = bh.q[i];

  // union-find over groups
  std::vector<int> parent(groups.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<char> grown(groups.size(), 0);
  std::vector<GroupStats> cur(st);
  std::vector<double> cur_l(l_sep);

  // most similar pairs first; index breaks exact ties deterministically
  std::vector<std::size_t> order(out.tests.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (out.tests[a].q != out.tests[b].q) return out.tests[a].q > out.tests[b].q;
    return a < b;
  });

  for (std::size_t idx : order) {
    PairTest& t = out.tests[idx];
    int rk = find(t.k), rl = find(t.l);
    if (rk == rl) {
      t.merge = true;  // already joined transitively
      continue;
    }
    if (t.q <= q0) continue;  // distinguishable, keep apart

    if (grown[rk] && grown[rl]) {
      // both sides changed since the test ran: verify on the grown groups
      auto [lam, p] = test_pair(cur[rk], cur[rl], cur_l[rk], cur_l[rl]);
      t.retested = true;
      t.lambda = lam;
      t.p = p;
      if (p <= q0) continue;
    }
    parent[std::max(rk, rl)] = std::min(rk, rl);
    int root = std::min(rk, rl);
    cur[root] = pool(cur[rk], cur[rl]);
    auto mle = beta_mle(cur[root].S0, cur[root].S1, cur[root].S2, {0.5, 20.0});
    cur_l[root] = std::isfinite(mle.first)
                      ? beta_objective(cur[root].S0, cur[root].S1, cur[root].S2,
                                       mle.first, mle.second)
                      : 0.0;
    grown[root] = 1;
    t.merge = true;
  }

  // compact cluster ids in order of the smallest member
  std::vector<int> id(groups.size(), -1);
  int next = 0;
  for (int g = 0; g < G; ++g) {
    int r = find(g);
    if (id[r] < 0) id[r] = next++;
    out.cluster[static_cast<std::size_t>(g)] = id[r];
  }
  return out;
}

MergeReport merge_components(const PValueField& f, const FitResult& fit,
                             FdrMethod method, double q0, double eta) {
  const int K = fit.theta.K;
  if (fit.labels.size() != f.n())
    throw DataError("merge: fit labels do not match the field");
  if (!(q0 > 0.0 && q0 < 1.0)) throw DataError("merge: q0 must be in (0, 1)");

  MergeReport rep;
  std::vector<std::vector<double>> members(static_cast<std::size_t>(K) + 1);
  for (std::size_t i = 0; i < f.n(); ++i)
    members[static_cast<std::size_t>(fit.labels[i])].push_back(f.p[i]);

  std::vector<double> pv;
  std::vector<double> weights;
  for (int k = 1; k <= K; ++k) {
    ComponentTest t;
    t.k = k;
    t.n_k = members[static_cast<std::size_t>(k)].size();
    auto [lam, p] = lrt_component_vs_null(members[static_cast<std::size_t>(k)],
                                          eta);
    t.lambda = lam;
    t.p = p;
    rep.stage1.push_back(t);
    pv.push_back(p);
    weights.push_back(std::max<double>(1.0, static_cast<double>(t.n_k)));
  }

  if (K > 0) {
    FdrResult fr = method == FdrMethod::P1   ? fdr_p1(pv, q0)
                   : method == FdrMethod::P2 ? fdr_p2(pv, q0)
                                             : fdr_p3(pv, weights, q0);
    for (int k = 0; k < K; ++k) {
      rep.stage1[static_cast<std::size_t>(k)].q = fr.q[static_cast<std::size_t>(k)];
      rep.stage1[static_cast<std::size_t>(k)].keep =
          fr.reject[static_cast<std::size_t>(k)] != 0;
    }
  }

  std::vector<int> survivors;
  for (const ComponentTest& t : rep.stage1)
    if (t.keep) survivors.push_back(t.k);

  std::vector<int> cluster_of(survivors.size());
  std::iota(cluster_of.begin(), cluster_of.end(), 0);
  if (survivors.size() >= 2) {
    std::vector<std::vector<double>> groups;
    for (int k : survivors) groups.push_back(members[static_cast<std::size_t>(k)]);
    PairwiseOutcome pw = pairwise_merge(groups, q0);
    for (PairTest t : pw.tests) {
      t.k = survivors[static_cast<std::size_t>(t.k)];
      t.l = survivors[static_cast<std::size_t>(t.l)];
      rep.stage2.push_back(t);
    }
    cluster_of = pw.cluster;
  }

  int K_final = 0;
  for (int c : cluster_of) K_final = std::max(K_final, c + 1);

  rep.relabel.assign(static_cast<std::size_t>(K) + 1, 0);
  for (std::size_t s = 0; s < survivors.size(); ++s)
    rep.relabel[static_cast<std::size_t>(survivors[s])] = cluster_of[s] + 1;

  rep.K_final = K_final;
  rep.theta = MixtureParams::make(K_final, f.cv, fit.theta.delta, fit.theta.eta);
  rep.theta.comp[0] = fit.theta.comp[0];
  rep.theta.pi[0] = fit.theta.pi[0];
  for (int k = 1; k <= K; ++k)
    if (rep.relabel[static_cast<std::size_t>(k)] == 0)
      rep.theta.pi[0] += fit.theta.pi[static_cast<std::size_t>(k)];

  for (int c = 0; c < K_final; ++c) {
    std::vector<int> group;  // original component ids in cluster c
    for (std::size_t s = 0; s < survivors.size(); ++s)
      if (cluster_of[s] == c) group.push_back(survivors[s]);

    double pi = 0.0;
    for (int k : group) pi += fit.theta.pi[static_cast<std::size_t>(k)];
    rep.theta.pi[static_cast<std::size_t>(c) + 1] = pi;

    if (group.size() == 1) {
      rep.theta.comp[static_cast<std::size_t>(c) + 1] =
          fit.theta.comp[static_cast<std::size_t>(group[0])];
      continue;
    }

    // pooled members: one beta refit plus hard-assignment spatial moments
    GroupStats gs;
    std::array<double, 3> mu{0.5, 0.5, 0.5}, s2{0.0, 0.0, 0.0};
    std::size_t n = 0;
    for (int k : group) {
      gs = pool(gs, stats_of(members[static_cast<std::size_t>(k)]));
      n += members[static_cast<std::size_t>(k)].size();
    }
    std::vector<char> in(static_cast<std::size_t>(K) + 1, 0);
    for (int k : group) in[static_cast<std::size_t>(k)] = 1;
    for (int d = 0; d < f.cv; ++d) mu[static_cast<std::size_t>(d)] = 0.0;
    for (std::size_t i = 0; i < f.n(); ++i)
      if (in[static_cast<std::size_t>(fit.labels[i])])
        for (int d = 0; d < f.cv; ++d)
          mu[static_cast<std::size_t>(d)] += f.coord_row(i)[d];
    for (int d = 0; d < f.cv; ++d)
      mu[static_cast<std::size_t>(d)] /= static_cast<double>(n);
    for (std::size_t i = 0; i < f.n(); ++i)
      if (in[static_cast<std::size_t>(fit.labels[i])])
        for (int d = 0; d < f.cv; ++d) {
          double dev = f.coord_row(i)[d] - mu[static_cast<std::size_t>(d)];
          s2[static_cast<std::size_t>(d)] += dev * dev;
        }
    ComponentParams cp;
    auto ab = constrained_beta_mle(gs.S0, gs.S1, gs.S2, fit.theta.eta);
    cp.alpha = ab.first;
    cp.beta = ab.second;
    cp.mu = mu;
    cp.sigma2 = {1.0, 1.0, 1.0};
    for (int d = 0; d < f.cv; ++d)
      cp.sigma2[static_cast<std::size_t>(d)] =
          std::max(kSigma2Min, s2[static_cast<std::size_t>(d)] /
                                   static_cast<double>(n));
    rep.theta.comp[static_cast<std::size_t>(c) + 1] = cp;
  }

  rep.labels.resize(f.n());
  for (std::size_t i = 0; i < f.n(); ++i)
    rep.labels[i] = rep.relabel[static_cast<std::size_t>(fit.labels[i])];
  return rep;
}

}  // namespace pvmix
