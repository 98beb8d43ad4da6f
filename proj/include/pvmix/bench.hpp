#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pvmix/density.hpp"
#include "pvmix/io.hpp"
#include "pvmix/merge.hpp"
#include "pvmix/model_select.hpp"
#include "pvmix/phantom.hpp"

namespace pvmix {

// Study grid: phantoms x overlaps x replicates, each simulated field scored
// by every requested method at every delta.
struct BenchConfig {
  std::vector<std::string> phantoms{"b"};
  std::vector<double> omegas{0.1, 0.5};
  std::vector<double> deltas{0.99};
  // "mix" is the mixture pipeline; the rest are the reference methods.
  std::vector<std::string> methods{"mix", "bonf", "bh", "by", "ct1", "ct2"};
  int replicates = 10;
  std::uint64_t seed = 0;

  // mixture pipeline settings
  int k_max = 3;
  Criterion criterion = Criterion::Bic;
  SpatialMode spatial = SpatialMode::On;
  bool merge = true;
  FdrMethod merge_method = FdrMethod::P2;
  double q0 = 0.05;
  double eta = 0.05;
  double epsilon = 1e-6;
  int max_iter = 1000;
  int init_candidates = 50;
  double p_max_init = 0.05;
  int workers = 1;

  // reference method settings
  double alpha = 0.05;  // bonferroni level and cluster-size tail mass
  double q = 0.05;      // BH / BY level
  double p0 = 1e-3;     // cluster-forming threshold
  int n_null = 1000;    // cluster-calibration null replicates

  // Extra phantoms as (name, geometry text); names here shadow the built-in
  // variants a, b, c, null.
  std::vector<std::pair<std::string, std::string>> custom_phantoms;

  ConfigEcho echo() const;  // canonical ordered key/value description
  void check() const;       // throws DataError on out-of-range settings
};

struct BenchOutput {
  // One row per (phantom, omega, replicate, delta, method), in that nesting
  // order; rerunning a configuration reproduces the rows exactly.
  std::vector<ResultRow> rows;
  std::vector<EvalCell> table;  // summarize() over the rows
};

// Runs the grid. Every (phantom, omega, replicate) triple simulates one
// field that is shared by all methods and deltas, and the simulation and
// fit seed streams do not depend on which methods or deltas are requested.
// Cluster-extent calibrations are computed once per (phantom, adjacency)
// and reused across replicates and overlaps, since they depend only on the
// mask. The optional log callback receives one line per finished replicate.
BenchOutput run_bench(const BenchConfig& cfg,
                      const std::function<void(const std::string&)>& log = {});

// Name helpers shared with the command-line front end.
PhantomVariant phantom_variant_of(const std::string& name);
Criterion criterion_of(const std::string& name);
const char* criterion_name(Criterion c);
const char* fdr_method_name(FdrMethod m);
// Row label of the mixture pipeline, e.g. "mix-bic-p2" or
// "mix-aic-none-nospatial".
std::string method_label(const BenchConfig& cfg);

}  // namespace pvmix
