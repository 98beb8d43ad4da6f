#include "pvmix/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <tuple>

#include "pvmix/errors.hpp"

namespace pvmix {

double jaccard(const std::vector<char>& pred, const std::vector<char>& truth) {
  if (pred.size() != truth.size())
    throw DataError("jaccard: mask lengths differ");
  std::size_t both = 0, either = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] != 0, b = truth[i] != 0;
    both += a && b;
    either += a || b;
  }
  if (either == 0) return 1.0;
  return static_cast<double>(both) / static_cast<double>(either);
}

double sample_quantile(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) throw DataError("sample_quantile: empty data");
  if (!(prob >= 0.0) || !(prob <= 1.0))
    throw DataError("sample_quantile: prob must lie in [0, 1]");
  const double h = static_cast<double>(sorted.size() - 1) * prob;
  const std::size_t lo = static_cast<std::size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= sorted.size() || frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

std::vector<EvalCell> summarize(const std::vector<EvalRecord>& batch) {
  using Key = std::tuple<std::string, std::string, double, double>;
  std::map<Key, std::vector<double>> cells;
  for (const EvalRecord& r : batch)
    cells[Key(r.phantom, r.method, r.omega, r.delta)].push_back(r.jaccard);

  std::vector<EvalCell> out;
  out.reserve(cells.size());
  for (auto& [key, values] : cells) {
    std::sort(values.begin(), values.end());
    EvalCell c;
    c.phantom = std::get<0>(key);
    c.method = std::get<1>(key);
    c.omega = std::get<2>(key);
    c.delta = std::get<3>(key);
    c.n = values.size();
    c.median = sample_quantile(values, 0.5);
    c.iqr = sample_quantile(values, 0.75) - sample_quantile(values, 0.25);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace pvmix
