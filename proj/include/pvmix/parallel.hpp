#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "pvmix/field.hpp"

namespace pvmix {

// Contiguous, disjoint row blocks with sizes differing by at most one.
struct BlockPartition {
  int D = 1;
  std::vector<std::size_t> offsets;  // D + 1 boundaries

  std::size_t lo(int d) const { return offsets[d]; }
  std::size_t hi(int d) const { return offsets[d + 1]; }
  std::size_t size(int d) const { return offsets[d + 1] - offsets[d]; }
};

// Throws DataError if D < 1 or D > n.
BlockPartition partition(std::size_t n, int D);

// Block-local sufficient statistics, one slot per component.
struct LocalStats {
  int K = 0;
  int cv = 2;
  std::vector<double> sw;      // K+1 weight totals
  std::vector<double> swv;     // (K+1) * cv weighted coordinate sums
  std::vector<double> swvv;    // (K+1) * cv weighted squared deviations
  std::vector<double> slnp;    // K+1 weighted sums of ln p
  std::vector<double> sln1mp;  // K+1 weighted sums of ln(1-p)

  LocalStats() = default;
  LocalStats(int K_, int cv_) { reset(K_, cv_); }
  void reset(int K_, int cv_);

  // Weighted beta log-likelihood of component k at shapes (a, b),
  // reconstructed from the reduced sums.
  double sbl(int k, double a, double b) const;
};

// Accumulate sw, swv, slnp, sln1mp over records [lo, hi).
void accumulate_stats(const PValueField& f, const Responsibilities& r,
                      std::size_t lo, std::size_t hi, LocalStats& out);

// Accumulate swvv around the supplied component means (second pass).
void accumulate_sqdev(const PValueField& f, const Responsibilities& r,
                      std::size_t lo, std::size_t hi,
                      const std::vector<ComponentParams>& comps,
                      LocalStats& inout);

// Component-wise sums in fixed block order 0..D-1.
// Throws DataError on an empty list or mismatched shapes.
LocalStats gather_reduce(const std::vector<LocalStats>& parts);

// Run fn(d) for d = 0..D-1 on worker threads (inline when D == 1).
// Callers communicate through per-block output slots only.
void run_blocks(int D, const std::function<void(int)>& fn);

}  // namespace pvmix
