#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "pvmix/density.hpp"
#include "pvmix/field.hpp"

namespace pvmix {

struct FitConfig {
  int K = 0;
  double delta = 0.99;
  double eta = 0.05;
  double epsilon = 1e-6;   // relative loglik rise below this stops; <= 0
                           // (e.g. -inf) disables the stop, run to max_iter
  int max_iter = 1000;
  SpatialMode spatial = SpatialMode::On;
  std::uint64_t seed = 0;
  int workers = 1;
  int init_candidates = 50;
  double p_max_init = 0.05;
  bool trace_params = false;  // record the flattened theta after every iteration

  void check() const;  // throws DataError on out-of-range settings
};

struct FitResult {
  MixtureParams theta;
  double loglik = 0.0;
  int n_iter = 0;
  bool converged = false;
  bool valid = true;           // false: degenerate cluster or aborted fit
  Responsibilities resp;
  std::vector<int> labels;     // MAP component per record
  std::vector<double> trace;   // loglik at theta0, then after every iteration
  std::vector<std::vector<double>> param_trace;  // only when cfg.trace_params
  double aic = 0.0, bic = 0.0, iclbic = 0.0;  // filled by criteria()
};

// Full E-step: responsibilities and cached log densities at theta.
Responsibilities e_step(const PValueField& f, const MixtureParams& t,
                        SpatialMode spatial);

// Closed-form weight update under the floor pi[0] >= delta.
std::vector<double> update_pi_constrained(const Responsibilities& r, double delta);
std::vector<double> update_pi_from_sums(const std::vector<double>& colsum,
                                        std::size_t n, double delta);

// Weighted spatial moments for component k, variance floored per axis.
// Throws NumericalError when the column carries no weight.
std::pair<std::array<double, 3>, std::array<double, 3>> update_gaussian(
    const Responsibilities& r, const PValueField& f, int k);

// One generalized ascent step on the weighted beta log-likelihood under
// alpha < 1 < beta and alpha/(alpha+beta) <= eta. Never decreases the
// objective; returns the current point when no improving step is found.
std::pair<double, double> update_beta_constrained(const Responsibilities& r,
                                                  const PValueField& f, int k,
                                                  double eta,
                                                  std::pair<double, double> current);

// Same ascent on reduced statistics S0 = sum w, S1 = sum w ln p,
// S2 = sum w ln(1-p).
std::pair<double, double> constrained_beta_step(double S0, double S1, double S2,
                                                double eta, double alpha,
                                                double beta,
                                                int max_inner = 25);

// Run the ascent to convergence (shrinking barrier weight between rounds).
std::pair<double, double> constrained_beta_mle(double S0, double S1, double S2,
                                               double eta,
                                               std::pair<double, double> start = {
                                                   0.5, 20.0});

// Weighted beta log-likelihood (alpha-1)S1 + (beta-1)S2 - S0 log B(alpha, beta).
double beta_objective(double S0, double S1, double S2, double alpha, double beta);

// Block-cyclic EM for fixed K: each iteration runs K+1 cycles, one per
// component; a cycle updates {pi, component c} from the current
// responsibilities, then refreshes only column c of the density cache.
FitResult fit_mixture(const PValueField& f, const FitConfig& cfg,
                      const MixtureParams& theta0);

// MAP labels, ties toward the lowest component index.
std::vector<int> map_classify(const Responsibilities& r);

// Flattened parameter vector: pi, then (alpha, beta, mu, sigma2) per component.
std::vector<double> flatten_params(const MixtureParams& t);

}  // namespace pvmix
