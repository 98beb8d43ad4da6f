#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pvmix/field.hpp"

namespace pvmix {

// Reference thresholding methods used as competitors in the benchmark
// harness. Each returns a per-record activation mask (1 = declared active)
// aligned with the input order.

// Familywise-error control: reject where p <= alpha / n.
std::vector<char> bonferroni(const std::vector<double>& pvals, double alpha = 0.05);

// Benjamini-Hochberg step-up at level q.
std::vector<char> bh_threshold(const std::vector<double>& pvals, double q = 0.05);

// Benjamini-Yekutieli: step-up at level q / H_n with H_n = sum_{i=1..n} 1/i,
// i.e. p_(i) is compared against i * q / (n * H_n). Valid under arbitrary
// dependence; never rejects more than bh_threshold on the same input.
std::vector<char> by_threshold(const std::vector<double>& pvals, double q = 0.05);

// Grid adjacency for cluster-extent thresholding on a 2-D field.
enum class Neighborhood {
  FirstOrder,   // 4-connected: cells sharing an edge
  SecondOrder,  // 8-connected: cells sharing an edge or a corner
};

// Null calibration for cluster-extent thresholding: the empirical
// distribution of the largest supra-threshold cluster on the field's mask
// when every p-value is an independent Uniform(0,1) draw.
struct ClusterCalibration {
  double p0 = 1e-3;                           // per-cell mark threshold
  Neighborhood adjacency = Neighborhood::FirstOrder;
  int n_null = 1000;                          // null replicates drawn
  double alpha = 0.05;                        // tail mass above s_min
  std::uint64_t seed = 0;
  std::size_t n_records = 0;                  // mask size the draws used
  std::size_t s_min = 0;                      // minimum surviving cluster size
  std::vector<std::size_t> null_max;          // sorted max-cluster-size draws
};

// Estimate the null max-cluster-size distribution on the field's mask and
// set s_min to its (1 - alpha) empirical quantile. Deterministic in `seed`;
// with a shared seed the per-cell null draws are identical across calls, so
// s_min is monotone non-decreasing in p0. Throws DataError on an empty field,
// a non-2-D field, duplicate grid cells, or parameters outside their ranges.
ClusterCalibration calibrate_cluster_threshold(const PValueField& field,
                                               double p0 = 1e-3,
                                               Neighborhood adjacency = Neighborhood::FirstOrder,
                                               int n_null = 1000,
                                               double alpha = 0.05,
                                               std::uint64_t seed = 0);

// Apply a calibration: mark p <= p0, form connected components under the
// calibrated adjacency, keep components of size >= s_min. The calibration
// must have been computed on a mask of the same size.
std::vector<char> cluster_threshold_with(const PValueField& field,
                                         const ClusterCalibration& cal);

// One-shot convenience: calibrate, then apply.
std::vector<char> cluster_threshold(const PValueField& field,
                                    double p0 = 1e-3,
                                    Neighborhood adjacency = Neighborhood::FirstOrder,
                                    int n_null = 1000,
                                    double alpha = 0.05,
                                    std::uint64_t seed = 0);

// Connected components of the marked records under the given adjacency on
// the field's integer grid. Returns one component id per record (-1 where
// unmarked); ids are dense, assigned in record order, and `sizes[id]` is the
// member count of component `id`. Exposed for reuse and direct testing.
std::vector<int> grid_components(const PValueField& field,
                                 const std::vector<char>& marked,
                                 Neighborhood adjacency,
                                 std::vector<std::size_t>& sizes);

}  // namespace pvmix
