#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "pvmix/errors.hpp"
#include "pvmix/init.hpp"
#include "pvmix/model_select.hpp"

using namespace pvmix;

TEST_CASE("param_count formula") {
  CHECK(param_count(0, 2) == 4);
  CHECK(param_count(2, 2) == 18);
  CHECK(param_count(5, 3) == 51);
  CHECK(param_count(1, 3) == 15);
  for (int K = 0; K < 8; ++K) {
    CHECK(param_count(K + 1, 2) > param_count(K, 2));  // penalty monotone in K
    CHECK(param_count(K + 1, 3) > param_count(K, 3));
  }
  CHECK_THROWS_AS(param_count(-1, 2), DataError);
  CHECK_THROWS_AS(param_count(1, 4), DataError);
}

namespace {

FitResult synthetic_fit(int K, std::size_t n, double loglik, Rng& rng,
                        bool one_hot) {
  FitResult r;
  r.theta = MixtureParams::make(K, 2);
  r.loglik = loglik;
  r.resp.n = n;
  r.resp.K = K;
  r.resp.w.assign(n * (K + 1), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (one_hot) {
      r.resp.W(i, static_cast<int>(rng.below(K + 1))) = 1.0;
    } else {
      double s = 0.0;
      for (int k = 0; k <= K; ++k) s += (r.resp.W(i, k) = rng.uniform());
      for (int k = 0; k <= K; ++k) r.resp.W(i, k) /= s;
    }
  }
  return r;
}

}  // namespace

TEST_CASE("criteria match the closed formulas") {
  std::vector<int> raw;
  std::vector<double> p;
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    raw.push_back(i % 10);
    raw.push_back(i / 10);
    p.push_back(rng.uniform());
  }
  PValueField f = make_field(raw, {10, 10}, p);

  SUBCASE("zero loglik isolates the penalty term") {
    FitResult r = synthetic_fit(0, f.n(), 0.0, rng, true);
    CriteriaValues c = criteria(r, f, SpatialMode::On);
    CHECK(c.aic == doctest::Approx(8.0).epsilon(1e-15));
    CHECK(c.bic == doctest::Approx(4.0 * std::log(50.0)).epsilon(1e-15));
  }

  SUBCASE("one-hot responsibilities carry no entropy") {
    FitResult r = synthetic_fit(2, f.n(), -31.25, rng, true);
    CriteriaValues c = criteria(r, f, SpatialMode::On);
    CHECK(c.iclbic == c.bic);
  }

  SUBCASE("random fit against a direct recomputation") {
    for (int K : {1, 2, 3}) {
      FitResult r = synthetic_fit(K, f.n(), -250.0 * rng.uniform(), rng, false);
      CriteriaValues c = criteria(r, f, SpatialMode::On);
      int d = K * 7 + 4;
      long double ent = 0.0L;
      for (std::size_t i = 0; i < r.resp.n; ++i)
        for (int k = 0; k <= K; ++k) {
          long double w = r.resp.W(i, k);
          if (w > 0) ent -= w * std::log(static_cast<double>(w));
        }
      CHECK(c.aic == doctest::Approx(-2 * r.loglik + 2 * d).epsilon(1e-14));
      CHECK(c.bic ==
            doctest::Approx(-2 * r.loglik + d * std::log(50.0)).epsilon(1e-14));
      CHECK(c.iclbic ==
            doctest::Approx(c.bic + 2 * static_cast<double>(ent)).epsilon(1e-14));
      CHECK(c.iclbic >= c.bic);  // soft assignments only add entropy

      // spatial factor off: only the 3K mixture parameters remain
      CriteriaValues coff = criteria(r, f, SpatialMode::Off);
      CHECK(coff.aic == doctest::Approx(-2 * r.loglik + 6.0 * K).epsilon(1e-14));
    }
  }
}

TEST_CASE("select_K keeps small models on uniform noise") {
  int small = 0;
  const int runs = 10;
  for (int s = 0; s < runs; ++s) {
    oracle::SyntheticField sf = oracle::planted_field(320, 0, 100 + s);
    FitConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(900 + s);
    cfg.init_candidates = 5;
    cfg.max_iter = 200;
    SelectionReport rep = select_K(sf.field, cfg, 2, Criterion::Bic);
    REQUIRE(rep.fits.size() == 3);
    REQUIRE(rep.crit.size() == 3);
    if (rep.K_hat <= 1) ++small;
  }
  CHECK(small >= 9);
}

TEST_CASE("select_K recovers planted structure and records every sweep") {
  oracle::SyntheticField sf = oracle::planted_field(2200, 2, 5);
  FitConfig cfg;
  cfg.seed = 31;
  cfg.init_candidates = 8;
  cfg.max_iter = 300;
  SelectionReport rep = select_K(sf.field, cfg, 3, Criterion::Bic);
  CHECK(rep.K_hat == 2);
  CHECK(rep.best().valid);
  CHECK(rep.best().theta.K == 2);
  REQUIRE(rep.crit.size() == 4);
  for (std::size_t K = 0; K < rep.fits.size(); ++K) {
    if (rep.fits[K].valid) {
      CHECK(std::isfinite(rep.crit[K].bic));
      CHECK(rep.fits[K].bic == rep.crit[K].bic);
      CHECK(rep.crit[K].iclbic >= rep.crit[K].bic - 1e-9);
    }
  }
  // the winner minimizes the recorded criterion over valid sweeps
  for (std::size_t K = 0; K < rep.fits.size(); ++K)
    if (rep.fits[K].valid) CHECK(rep.crit[K].bic >= rep.crit[rep.K_hat].bic);
}

TEST_CASE("select_K rejects bad K_max and reports all-invalid sweeps") {
  std::vector<int> raw{0, 0, 1, 0, 0, 1};
  std::vector<double> p{0.01, 0.02, 0.03};
  PValueField f = make_field(raw, {2, 2}, p);
  FitConfig cfg;
  CHECK_THROWS_AS(select_K(f, cfg, -1, Criterion::Bic), DataError);
  // three records cannot seat two members in every group at any K >= 1,
  // and K = 0 needs no seating, so force failure with a K floor of 1
  FitConfig c2;
  c2.init_candidates = 2;
  SelectionReport rep = select_K(f, c2, 1, Criterion::Bic);
  CHECK(rep.K_hat == 0);
  CHECK_FALSE(rep.fits[1].valid);
  CHECK(std::isnan(rep.crit[1].bic));
}
