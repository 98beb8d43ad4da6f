#include "pvmix/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pvmix/errors.hpp"
#include "pvmix/merge.hpp"
#include "pvmix/rng.hpp"

namespace pvmix {

namespace {

void check_level(double level, const char* what) {
  if (!(level > 0.0) || !(level < 1.0))
    throw DataError(std::string(what) + " must lie in (0, 1)");
}

void check_pvals(const std::vector<double>& pvals) {
  for (double v : pvals)
    if (!(v >= 0.0) || !(v <= 1.0))
      throw DataError("p-values must lie in [0, 1]");
}

// Row-major lookup table from grid cell to record index (-1 = outside mask).
struct GridLayout {
  std::size_t w = 0, h = 0;
  std::vector<std::int32_t> at;

  std::int32_t cell(std::int64_t x, std::int64_t y) const {
    if (x < 0 || y < 0 || x >= static_cast<std::int64_t>(w) ||
        y >= static_cast<std::int64_t>(h))
      return -1;
    return at[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  }
};

GridLayout layout_of(const PValueField& f) {
  if (f.n() == 0) throw DataError("cluster threshold: empty mask");
  if (f.cv != 2) throw DataError("cluster threshold: field must be a 2-D grid");
  GridLayout g;
  g.w = f.dims[0];
  g.h = f.dims[1];
  g.at.assign(g.w * g.h, -1);
  for (std::size_t i = 0; i < f.n(); ++i) {
    const int* r = f.raw_row(i);
    std::size_t idx = static_cast<std::size_t>(r[1]) * g.w + static_cast<std::size_t>(r[0]);
    if (g.at[idx] != -1) throw DataError("cluster threshold: duplicate grid cell");
    g.at[idx] = static_cast<std::int32_t>(i);
  }
  return g;
}

// Size of the largest connected marked component; flood fill with an explicit
// stack so deep components cannot overflow the call stack.
std::size_t max_cluster_size(const PValueField& f, const GridLayout& g,
                             const std::vector<char>& marked,
                             Neighborhood adjacency,
                             std::vector<char>& visited,
                             std::vector<std::int32_t>& stack) {
  const int n_off = adjacency == Neighborhood::FirstOrder ? 4 : 8;
  static constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  visited.assign(f.n(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < f.n(); ++i) {
    if (!marked[i] || visited[i]) continue;
    std::size_t size = 0;
    stack.clear();
    stack.push_back(static_cast<std::int32_t>(i));
    visited[i] = 1;
    while (!stack.empty()) {
      std::int32_t cur = stack.back();
      stack.pop_back();
      ++size;
      const int* r = f.raw_row(static_cast<std::size_t>(cur));
      for (int d = 0; d < n_off; ++d) {
        std::int32_t nb = g.cell(r[0] + kDx[d], r[1] + kDy[d]);
        if (nb < 0 || !marked[static_cast<std::size_t>(nb)] ||
            visited[static_cast<std::size_t>(nb)])
          continue;
        visited[static_cast<std::size_t>(nb)] = 1;
        stack.push_back(nb);
      }
    }
    best = std::max(best, size);
  }
  return best;
}

}  // namespace

std::vector<char> bonferroni(const std::vector<double>& pvals, double alpha) {
  check_level(alpha, "bonferroni: alpha");
  check_pvals(pvals);
  std::vector<char> mask(pvals.size(), 0);
  if (pvals.empty()) return mask;
  const double cut = alpha / static_cast<double>(pvals.size());
  for (std::size_t i = 0; i < pvals.size(); ++i) mask[i] = pvals[i] <= cut ? 1 : 0;
  return mask;
}

std::vector<char> bh_threshold(const std::vector<double>& pvals, double q) {
  check_level(q, "bh_threshold: q");
  if (pvals.empty()) return {};
  return fdr_p1(pvals, q).reject;
}

std::vector<char> by_threshold(const std::vector<double>& pvals, double q) {
  check_level(q, "by_threshold: q");
  if (pvals.empty()) return {};
  double harmonic = 0.0;
  for (std::size_t i = pvals.size(); i >= 1; --i)
    harmonic += 1.0 / static_cast<double>(i);  // small terms first
  return fdr_p1(pvals, q / harmonic).reject;
}

ClusterCalibration calibrate_cluster_threshold(const PValueField& field,
                                               double p0, Neighborhood adjacency,
                                               int n_null, double alpha,
                                               std::uint64_t seed) {
  check_level(p0, "cluster threshold: p0");
  check_level(alpha, "cluster threshold: alpha");
  if (n_null < 1) throw DataError("cluster threshold: n_null must be >= 1");
  const GridLayout grid = layout_of(field);

  ClusterCalibration cal;
  cal.p0 = p0;
  cal.adjacency = adjacency;
  cal.n_null = n_null;
  cal.alpha = alpha;
  cal.seed = seed;
  cal.n_records = field.n();
  cal.null_max.resize(static_cast<std::size_t>(n_null));

  Rng root(seed);
  std::vector<char> marked(field.n());
  std::vector<char> visited;
  std::vector<std::int32_t> stack;
  for (int rep = 0; rep < n_null; ++rep) {
    Rng rng = root.split(static_cast<std::uint64_t>(rep));
    for (std::size_t i = 0; i < field.n(); ++i)
      marked[i] = rng.uniform() <= p0 ? 1 : 0;
    cal.null_max[static_cast<std::size_t>(rep)] =
        max_cluster_size(field, grid, marked, adjacency, visited, stack);
  }
  std::sort(cal.null_max.begin(), cal.null_max.end());

  // Empirical (1 - alpha) quantile as an order statistic.
  std::size_t rank = static_cast<std::size_t>(
      std::ceil((1.0 - alpha) * static_cast<double>(n_null)));
  rank = std::min(std::max<std::size_t>(rank, 1), static_cast<std::size_t>(n_null));
  cal.s_min = cal.null_max[rank - 1];
  return cal;
}

std::vector<char> cluster_threshold_with(const PValueField& field,
                                         const ClusterCalibration& cal) {
  if (cal.n_records != field.n())
    throw DataError("cluster threshold: calibration mask size does not match field");
  check_level(cal.p0, "cluster threshold: p0");
  std::vector<char> marked(field.n());
  for (std::size_t i = 0; i < field.n(); ++i)
    marked[i] = field.p[i] <= cal.p0 ? 1 : 0;
  std::vector<std::size_t> sizes;
  std::vector<int> comp = grid_components(field, marked, cal.adjacency, sizes);
  std::vector<char> mask(field.n(), 0);
  for (std::size_t i = 0; i < field.n(); ++i)
    mask[i] = comp[i] >= 0 && sizes[static_cast<std::size_t>(comp[i])] >= cal.s_min ? 1 : 0;
  return mask;
}

std::vector<char> cluster_threshold(const PValueField& field, double p0,
                                    Neighborhood adjacency, int n_null,
                                    double alpha, std::uint64_t seed) {
  return cluster_threshold_with(
      field, calibrate_cluster_threshold(field, p0, adjacency, n_null, alpha, seed));
}

std::vector<int> grid_components(const PValueField& field,
                                 const std::vector<char>& marked,
                                 Neighborhood adjacency,
                                 std::vector<std::size_t>& sizes) {
  if (marked.size() != field.n())
    throw DataError("grid components: mark vector does not match field");
  const GridLayout grid = layout_of(field);
  const int n_off = adjacency == Neighborhood::FirstOrder ? 4 : 8;
  static constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};

  sizes.clear();
  std::vector<int> comp(field.n(), -1);
  std::vector<std::int32_t> stack;
  for (std::size_t i = 0; i < field.n(); ++i) {
    if (!marked[i] || comp[i] != -1) continue;
    const int id = static_cast<int>(sizes.size());
    std::size_t size = 0;
    stack.clear();
    stack.push_back(static_cast<std::int32_t>(i));
    comp[i] = id;
    while (!stack.empty()) {
      std::int32_t cur = stack.back();
      stack.pop_back();
      ++size;
      const int* r = field.raw_row(static_cast<std::size_t>(cur));
      for (int d = 0; d < n_off; ++d) {
        std::int32_t nb = grid.cell(r[0] + kDx[d], r[1] + kDy[d]);
        if (nb < 0 || !marked[static_cast<std::size_t>(nb)] ||
            comp[static_cast<std::size_t>(nb)] != -1)
          continue;
        comp[static_cast<std::size_t>(nb)] = id;
        stack.push_back(nb);
      }
    }
    sizes.push_back(size);
  }
  return comp;
}

}  // namespace pvmix
