#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "pvmix/em.hpp"
#include "pvmix/field.hpp"

namespace pvmix {

enum class FdrMethod { P1, P2, P3 };

// Multiple-testing outcome. `reject` is authoritative: the two-stage
// procedures can overrule the q <= q0 comparison at their edge cases
// (no stage-one rejections, or an estimated null count of zero).
struct FdrResult {
  std::vector<double> q;
  std::vector<char> reject;
};

// Benjamini-Hochberg step-up.
FdrResult fdr_p1(const std::vector<double>& p, double q0 = 0.05);

// Two-stage adaptive step-up: stage one at q0/(1+q0) estimates the null
// count m0 = m - r1, stage two reruns the step-up at q0 * m / m0.
FdrResult fdr_p2(const std::vector<double>& p, double q0 = 0.05);

// Weighted variant of the two-stage procedure. Hypotheses are ordered by
// p/w after normalizing the weights to mean one; step-up thresholds use
// the cumulative normalized weight in place of the rank.
FdrResult fdr_p3(const std::vector<double>& p, const std::vector<double>& w,
                 double q0 = 0.05);

// Unrestricted weighted beta MLE on reduced statistics S0 = sum w,
// S1 = sum w ln p, S2 = sum w ln(1-p). Damped Newton over (ln a, ln b);
// returns the best point found, NaN when the objective is not finite.
std::pair<double, double> beta_mle(double S0, double S1, double S2,
                                   std::pair<double, double> start = {0.5,
                                                                      20.0});

// LRT of H0: alpha/(alpha+beta) >= eta against the unrestricted
// alternative on one component's p-values. The H0 optimum is either the
// unrestricted MLE (when its mean already satisfies H0) or a 1-D search
// along the boundary mean = eta. Returns (lambda, p-value); any optimizer
// failure yields p = 1 so the component merges conservatively.
std::pair<double, double> lrt_component_vs_null(const std::vector<double>& pvals,
                                                double eta);

struct ComponentTest {
  int k = 0;            // original component index, 1-based over actives
  std::size_t n_k = 0;  // MAP group size
  double lambda = 0.0;
  double p = 1.0;
  double q = 1.0;
  bool keep = false;  // false: absorbed into component 0
};

struct PairTest {
  int k = 0, l = 0;  // original component indices, k < l
  double lambda = 0.0;
  double p = 1.0;
  double q = 1.0;
  bool merge = false;
  bool retested = false;  // decision re-ran on grown groups
};

struct PairwiseOutcome {
  std::vector<PairTest> tests;  // all C(G,2) pairs in (k,l) order
  std::vector<int> cluster;     // input group -> merged cluster id, 0-based
};

// Pairwise equal-distribution LRTs: pooled single-(alpha,beta) fit versus
// separate fits, lambda ~ chi^2 with 2 df, BH across the C(G,2) tests.
// Pairs with q > q0 merge; unions are transitive, applied in descending-q
// order, and a pair is re-tested before use when both of its members
// already grew past their original groups.
PairwiseOutcome pairwise_merge(const std::vector<std::vector<double>>& groups,
                               double q0 = 0.05);

struct MergeReport {
  std::vector<ComponentTest> stage1;  // one row per original active component
  std::vector<PairTest> stage2;       // empty unless >= 2 survivors
  std::vector<int> relabel;           // old label -> new label, 0 absorbs
  int K_final = 0;
  MixtureParams theta;     // merged model; pooled groups refit one (alpha,beta)
  std::vector<int> labels;  // relabel applied to the fit's MAP labels
};

// Full post-fit merge: component-vs-null LRTs with the chosen FDR method
// (weights for P3 are the MAP group sizes), then pairwise merging among the
// survivors. Components whose H0 is not rejected join component 0.
MergeReport merge_components(const PValueField& f, const FitResult& fit,
                             FdrMethod method = FdrMethod::P2, double q0 = 0.05,
                             double eta = 0.05);

}  // namespace pvmix
