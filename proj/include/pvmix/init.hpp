#pragma once

#include <array>
#include <vector>

#include "pvmix/em.hpp"
#include "pvmix/field.hpp"
#include "pvmix/rng.hpp"

namespace pvmix {

// One random starting configuration: K+1 seed points in (p, coords) space,
// a nearest-seed grouping of the records, and the group-wise parameter fit.
struct InitCandidate {
  std::vector<std::array<double, 4>> centers;  // (p, v0, v1, v2) per seed
  std::vector<int> grouping;                   // record -> group, 0..K
  MixtureParams theta0;
  double loglik0 = 0.0;  // filled by best_of_m
  bool valid = false;    // every group has at least two members
};

// Draws seeds (component 0 fixed at p = 0.5, volume center), groups records
// by nearest seed and fits each group's parameters. Component weights are
// the raw group shares; projecting them onto the pi[0] >= delta region is
// the caller's job.
InitCandidate draw_candidate(const PValueField& f, int K, double eta,
                             double p_max, Rng& rng);

// Best of cfg.init_candidates random candidates by penalized log-likelihood,
// drawing replacements (up to 10x the budget) while no valid candidate
// exists. Throws InitError when every attempt is degenerate.
MixtureParams best_of_m(const PValueField& f, const FitConfig& cfg,
                        std::uint64_t round = 0);

// Full pipeline: random restarts + block-cyclic EM, repeated with fresh
// candidates when a fit ends invalid. Throws InitError when no valid fit
// is reachable.
FitResult fit(const PValueField& f, const FitConfig& cfg);

}  // namespace pvmix
