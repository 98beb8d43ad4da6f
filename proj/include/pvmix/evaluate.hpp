#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace pvmix {

// Jaccard index |pred AND truth| / |pred OR truth| over activation masks.
// Both masks empty -> 1 (perfect agreement on "nothing active"); exactly one
// empty -> 0. Throws DataError on a length mismatch.
double jaccard(const std::vector<char>& pred, const std::vector<char>& truth);

// Linear-interpolation sample quantile of sorted ascending data: with
// h = (n - 1) * prob, returns x[floor(h)] + frac(h) * (x[floor(h)+1] -
// x[floor(h)]). Throws DataError on empty data or prob outside [0, 1].
double sample_quantile(const std::vector<double>& sorted, double prob);

// One benchmark replicate: the score of one method on one simulated field.
struct EvalRecord {
  std::string method;
  double omega = 0.0;   // target component overlap of the simulation
  double delta = 0.0;   // null-weight floor used by the fit
  std::string phantom;  // phantom variant name
  double jaccard = 0.0;
};

// Aggregated cell of the report table.
struct EvalCell {
  std::string method;
  double omega = 0.0;
  double delta = 0.0;
  std::string phantom;
  std::size_t n = 0;    // replicates in the cell
  double median = 0.0;
  double iqr = 0.0;     // 75th minus 25th percentile
};

// Group replicates by (phantom, method, omega, delta) and reduce each cell to
// its median and interquartile range. Cells are ordered by that key;
// replicate order within the batch does not affect the result.
std::vector<EvalCell> summarize(const std::vector<EvalRecord>& batch);

}  // namespace pvmix
