#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "oracles.hpp"
#include "pvmix/baselines.hpp"
#include "pvmix/errors.hpp"
#include "pvmix/field.hpp"
#include "pvmix/rng.hpp"

using namespace pvmix;

namespace {

std::vector<double> random_pvec(Rng& rng, std::size_t n, double signal_share) {
  std::vector<double> p(n);
  for (double& v : p) {
    if (rng.uniform() < signal_share) {
      v = rng.uniform() * 2e-3;  // occasional small p-values
    } else {
      v = rng.uniform();
    }
  }
  return p;
}

std::size_t count_on(const std::vector<char>& mask) {
  std::size_t c = 0;
  for (char v : mask) c += v != 0;
  return c;
}

// True when every record active in `inner` is also active in `outer`.
bool subset_of(const std::vector<char>& inner, const std::vector<char>& outer) {
  for (std::size_t i = 0; i < inner.size(); ++i)
    if (inner[i] && !outer[i]) return false;
  return true;
}

// Full 2-D grid field with the given p-values in row-major order.
PValueField grid_field(std::size_t w, std::size_t h, std::vector<double> pv) {
  std::vector<int> raw;
  raw.reserve(w * h * 2);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      raw.push_back(static_cast<int>(x));
      raw.push_back(static_cast<int>(y));
    }
  return make_field(std::move(raw), {w, h}, std::move(pv));
}

// Independent flood fill over a dense row-major mark grid; returns the
// largest 4- or 8-connected component size.
std::size_t oracle_max_cluster(const std::vector<char>& marks, std::size_t w,
                               std::size_t h, bool eight) {
  std::vector<char> seen(w * h, 0);
  std::size_t best = 0;
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < w * h; ++s) {
    if (!marks[s] || seen[s]) continue;
    std::size_t size = 0;
    stack.assign(1, s);
    seen[s] = 1;
    while (!stack.empty()) {
      std::size_t cur = stack.back();
      stack.pop_back();
      ++size;
      const std::int64_t cx = static_cast<std::int64_t>(cur % w);
      const std::int64_t cy = static_cast<std::int64_t>(cur / w);
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (!eight && dx != 0 && dy != 0) continue;
          const std::int64_t nx = cx + dx, ny = cy + dy;
          if (nx < 0 || ny < 0 || nx >= static_cast<std::int64_t>(w) ||
              ny >= static_cast<std::int64_t>(h))
            continue;
          const std::size_t ni = static_cast<std::size_t>(ny) * w +
                                 static_cast<std::size_t>(nx);
          if (!marks[ni] || seen[ni]) continue;
          seen[ni] = 1;
          stack.push_back(ni);
        }
    }
    best = std::max(best, size);
  }
  return best;
}

}  // namespace

TEST_CASE("bonferroni applies the per-comparison cut exactly") {
  std::vector<double> p(100, 0.5);
  p[7] = 0.0004;  // below 0.05 / 100
  std::vector<char> mask = bonferroni(p);
  CHECK(count_on(mask) == 1);
  CHECK(mask[7] == 1);

  p[7] = 0.0006;  // above 0.05 / 100
  mask = bonferroni(p);
  CHECK(count_on(mask) == 0);

  p[7] = 0.0005;  // exactly at the cut: rejected (<=)
  CHECK(count_on(bonferroni(p)) == 1);

  Rng rng(901);
  for (int rep = 0; rep < 50; ++rep) {
    std::size_t n = 1 + rng.below(400);
    std::vector<double> pv = random_pvec(rng, n, 0.05);
    double alpha = 0.01 + 0.2 * rng.uniform();
    std::vector<char> got = bonferroni(pv, alpha);
    for (std::size_t i = 0; i < n; ++i) {
      bool expect = static_cast<long double>(pv[i]) <=
                    static_cast<long double>(alpha) / static_cast<long double>(n);
      CHECK(static_cast<bool>(got[i]) == expect);
    }
  }

  CHECK(bonferroni({}).empty());
  CHECK_THROWS_AS((void)bonferroni({0.5}, 0.0), DataError);
  CHECK_THROWS_AS((void)bonferroni({0.5}, 1.0), DataError);
  CHECK_THROWS_AS((void)bonferroni({1.5}), DataError);
}

TEST_CASE("BH mask matches the step-up definition") {
  Rng rng(902);
  for (int rep = 0; rep < 40; ++rep) {
    std::size_t n = 1 + rng.below(300);
    std::vector<double> pv = random_pvec(rng, n, 0.1);
    double q = 0.01 + 0.2 * rng.uniform();

    // Direct step-up: largest i with p_(i) <= i * q / n, reject that prefix.
    std::vector<std::size_t> ord(n);
    for (std::size_t i = 0; i < n; ++i) ord[i] = i;
    std::sort(ord.begin(), ord.end(),
              [&](std::size_t a, std::size_t b) { return pv[a] < pv[b]; });
    std::size_t cut = 0;
    for (std::size_t i = n; i >= 1; --i) {
      if (static_cast<long double>(pv[ord[i - 1]]) <=
          static_cast<long double>(i) * q / static_cast<long double>(n)) {
        cut = i;
        break;
      }
    }
    std::vector<char> expect(n, 0);
    for (std::size_t i = 0; i < cut; ++i) expect[ord[i]] = 1;

    CHECK(bh_threshold(pv, q) == expect);
  }
  CHECK(bh_threshold({}).empty());
}

TEST_CASE("BH keeps the empirical false discovery rate near its level") {
  // All-null fields: the false discovery proportion is 1 whenever anything is
  // rejected, so the empirical FDR is the rejection frequency.
  Rng rng(903);
  const int reps = 1500;
  const std::size_t n = 100;
  int any = 0;
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<double> pv(n);
    for (double& v : pv) v = rng.uniform();
    if (count_on(bh_threshold(pv, 0.05)) > 0) ++any;
  }
  double fdr = static_cast<double>(any) / reps;
  CHECK(fdr <= 0.07);
  CHECK(fdr >= 0.02);  // the procedure is not vacuously conservative
}

TEST_CASE("BY applies the harmonic-sum correction") {
  // n = 2: H_2 = 1.5, thresholds q*i/(n*H_n) = {0.05/3, 0.10/3}.
  std::vector<char> mask = by_threshold({0.01, 0.5}, 0.05);
  CHECK(mask == std::vector<char>{1, 0});
  mask = by_threshold({0.01, 0.03}, 0.05);  // 0.03 <= 0.033333 -> both
  CHECK(mask == std::vector<char>{1, 1});
  mask = by_threshold({0.02, 0.5}, 0.05);  // 0.02 > 0.016667 -> none
  CHECK(mask == std::vector<char>{0, 0});

  // n = 1: H_1 = 1, identical to BH.
  CHECK(by_threshold({0.04}, 0.05) == bh_threshold({0.04}, 0.05));
  CHECK(by_threshold({0.06}, 0.05) == bh_threshold({0.06}, 0.05));

  Rng rng(904);
  for (int rep = 0; rep < 40; ++rep) {
    std::size_t n = 1 + rng.below(250);
    std::vector<double> pv = random_pvec(rng, n, 0.1);
    double q = 0.01 + 0.2 * rng.uniform();

    long double hn = 0.0L;
    for (std::size_t i = n; i >= 1; --i) hn += 1.0L / static_cast<long double>(i);
    std::vector<std::size_t> ord(n);
    for (std::size_t i = 0; i < n; ++i) ord[i] = i;
    std::sort(ord.begin(), ord.end(),
              [&](std::size_t a, std::size_t b) { return pv[a] < pv[b]; });
    std::size_t cut = 0;
    for (std::size_t i = n; i >= 1; --i) {
      if (static_cast<long double>(pv[ord[i - 1]]) <=
          static_cast<long double>(i) * q / (static_cast<long double>(n) * hn)) {
        cut = i;
        break;
      }
    }
    std::vector<char> expect(n, 0);
    for (std::size_t i = 0; i < cut; ++i) expect[ord[i]] = 1;

    CHECK(by_threshold(pv, q) == expect);
  }
}

TEST_CASE("step-up family dominance on common inputs") {
  Rng rng(905);
  for (int rep = 0; rep < 60; ++rep) {
    std::size_t n = 1 + rng.below(300);
    std::vector<double> pv = random_pvec(rng, n, 0.08);
    double q = 0.01 + 0.15 * rng.uniform();
    std::vector<char> bonf = bonferroni(pv, q);
    std::vector<char> by = by_threshold(pv, q);
    std::vector<char> bh = bh_threshold(pv, q);
    CHECK(subset_of(by, bh));    // BY runs BH at the smaller level q/H_n
    CHECK(subset_of(bonf, bh));  // p <= q/n implies p_(i) <= i*q/n at i = rank
  }

  // Bonferroni and BY are not nested: the single-comparison Bonferroni cut
  // q/n exceeds BY's lowest step q/(n*H_n), so a lone moderately small
  // p-value can pass Bonferroni while the harmonic step-up rejects nothing.
  std::vector<double> pv{0.02, 0.9};
  CHECK(count_on(bonferroni(pv, 0.05)) == 1);
  CHECK(count_on(by_threshold(pv, 0.05)) == 0);
}

TEST_CASE("cluster threshold rejects bad inputs and empty marks") {
  PValueField empty = make_field({}, {4, 4}, {});
  CHECK_THROWS_AS((void)cluster_threshold(empty), DataError);

  PValueField tiny3d = make_field({0, 0, 0, 1, 1, 1}, {2, 2, 2}, {0.3, 0.6});
  CHECK_THROWS_AS((void)cluster_threshold(tiny3d), DataError);

  PValueField flat = grid_field(16, 16, std::vector<double>(256, 0.5));
  CHECK_THROWS_AS((void)calibrate_cluster_threshold(flat, 0.0), DataError);
  CHECK_THROWS_AS((void)calibrate_cluster_threshold(flat, 1e-3,
                                                    Neighborhood::FirstOrder, 0),
                  DataError);
  CHECK_THROWS_AS(
      (void)calibrate_cluster_threshold(flat, 1e-3, Neighborhood::FirstOrder,
                                        100, 1.0),
      DataError);

  // No cell at or below p0: the activation mask is empty.
  std::vector<char> mask = cluster_threshold(flat, 1e-3,
                                             Neighborhood::FirstOrder, 50);
  CHECK(count_on(mask) == 0);

  // A calibration from one mask cannot be applied to another.
  ClusterCalibration cal =
      calibrate_cluster_threshold(flat, 1e-3, Neighborhood::FirstOrder, 50);
  PValueField other = grid_field(8, 8, std::vector<double>(64, 0.5));
  CHECK_THROWS_AS((void)cluster_threshold_with(other, cal), DataError);

  // Duplicate grid cells are rejected.
  PValueField dup = make_field({3, 3, 3, 3}, {8, 8}, {0.2, 0.4});
  CHECK_THROWS_AS((void)cluster_threshold(dup), DataError);
}

TEST_CASE("a solid low-p block is detected whole on a null background") {
  Rng rng(906);
  const std::size_t w = 128, h = 128;
  std::vector<double> pv(w * h);
  for (double& v : pv) v = 0.2 + 0.799 * rng.uniform();  // background above p0
  std::vector<char> truth(w * h, 0);
  for (std::size_t y = 40; y < 50; ++y)
    for (std::size_t x = 60; x < 70; ++x) {
      pv[y * w + x] = 1e-6;
      truth[y * w + x] = 1;
    }
  PValueField f = grid_field(w, h, pv);

  ClusterCalibration cal = calibrate_cluster_threshold(
      f, 1e-3, Neighborhood::FirstOrder, 400, 0.05, 77);
  // Sparse independent marks at density 1e-3 produce only tiny null
  // clusters, so a 100-cell block clears the size cut by a wide margin.
  CHECK(cal.s_min >= 1);
  CHECK(cal.s_min <= 5);

  std::vector<char> mask = cluster_threshold_with(f, cal);
  CHECK(mask == truth);

  // Oracle for the calibration itself: replay the same per-replicate
  // uniform draws and recount maxima with an independent flood fill.
  Rng root(77);
  std::vector<std::size_t> maxima(400);
  for (int rep = 0; rep < 400; ++rep) {
    Rng stream = root.split(static_cast<std::uint64_t>(rep));
    std::vector<char> marks(w * h, 0);
    for (std::size_t i = 0; i < w * h; ++i)
      marks[i] = stream.uniform() <= 1e-3 ? 1 : 0;
    maxima[static_cast<std::size_t>(rep)] = oracle_max_cluster(marks, w, h, false);
  }
  std::sort(maxima.begin(), maxima.end());
  CHECK(cal.null_max == maxima);
  std::size_t rank = static_cast<std::size_t>(std::ceil(0.95 * 400.0));
  CHECK(cal.s_min == maxima[rank - 1]);
}

TEST_CASE("first-order adjacency splits a diagonal chain, second-order joins it") {
  const std::size_t w = 32, h = 32;
  std::vector<double> pv(w * h, 0.5);
  std::vector<char> diag(w * h, 0);
  for (std::size_t i = 5; i < 15; ++i) {
    pv[i * w + i] = 1e-6;
    diag[i * w + i] = 1;
  }
  PValueField f = grid_field(w, h, pv);

  std::vector<char> marked(f.n());
  for (std::size_t i = 0; i < f.n(); ++i) marked[i] = f.p[i] <= 1e-3 ? 1 : 0;

  std::vector<std::size_t> sizes;
  std::vector<int> comp = grid_components(f, marked, Neighborhood::FirstOrder, sizes);
  CHECK(sizes.size() == 10);
  for (std::size_t s : sizes) CHECK(s == 1);

  comp = grid_components(f, marked, Neighborhood::SecondOrder, sizes);
  CHECK(sizes.size() == 1);
  CHECK(sizes[0] == 10);
  for (std::size_t i = 0; i < f.n(); ++i)
    CHECK((comp[i] == 0) == (diag[i] != 0));

  // With a mark density that makes isolated null cells common, the size cut
  // removes the split singletons but keeps the joined chain.
  ClusterCalibration cal1 = calibrate_cluster_threshold(
      f, 0.02, Neighborhood::FirstOrder, 300, 0.05, 11);
  ClusterCalibration cal2 = calibrate_cluster_threshold(
      f, 0.02, Neighborhood::SecondOrder, 300, 0.05, 11);
  REQUIRE(cal1.s_min >= 2);
  REQUIRE(cal2.s_min <= 10);
  std::vector<char> none(f.n(), 0);
  CHECK(cluster_threshold_with(f, cal1) == none);
  CHECK(cluster_threshold_with(f, cal2) == diag);
}

TEST_CASE("cluster calibration is seed-deterministic and monotone in p0") {
  Rng rng(907);
  const std::size_t w = 48, h = 48;
  std::vector<double> pv(w * h);
  for (double& v : pv) v = rng.uniform();
  PValueField f = grid_field(w, h, pv);

  ClusterCalibration a = calibrate_cluster_threshold(
      f, 5e-3, Neighborhood::SecondOrder, 200, 0.05, 42);
  ClusterCalibration b = calibrate_cluster_threshold(
      f, 5e-3, Neighborhood::SecondOrder, 200, 0.05, 42);
  CHECK(a.null_max == b.null_max);
  CHECK(a.s_min == b.s_min);
  CHECK(cluster_threshold_with(f, a) == cluster_threshold_with(f, b));

  ClusterCalibration c = calibrate_cluster_threshold(
      f, 5e-3, Neighborhood::SecondOrder, 200, 0.05, 43);
  CHECK(c.null_max != a.null_max);  // different seed, different draws

  // With a shared seed the null draws are coupled across thresholds: the
  // mark set at a smaller p0 is contained in the mark set at a larger one,
  // so every replicate maximum, and hence the quantile, is monotone.
  std::size_t prev = 0;
  for (double p0 : {1e-4, 1e-3, 5e-3, 2e-2, 5e-2}) {
    ClusterCalibration cal = calibrate_cluster_threshold(
        f, p0, Neighborhood::FirstOrder, 150, 0.05, 42);
    CHECK(cal.s_min >= prev);
    prev = cal.s_min;
  }
  CHECK(prev >= 2);  // the densest threshold produces real null clusters
}
