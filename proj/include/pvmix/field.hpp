#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace pvmix {

inline constexpr double kPClamp = 1e-12;     // ingestion clamp for p-values
inline constexpr double kSigma2Min = 1e-6;   // variance floor per axis
inline constexpr double kShapeMargin = 1e-4; // feasibility margin for (alpha, beta)

// A collection of test records on a regular 2-D or 3-D grid. Each record is
// one grid cell inside the mask: integer grid indices, coordinates normalized
// to [0, 1] per axis, and a p-value clamped to the open unit interval.
struct PValueField {
  int cv = 2;                       // number of spatial axes (2 or 3)
  std::vector<std::size_t> dims;    // grid extent per axis
  std::vector<double> p;            // n p-values
  std::vector<double> coords;       // n * cv, normalized, row-major
  std::vector<int> raw;             // n * cv, original grid indices
  std::vector<double> logp, log1mp; // caches filled by finalize()
  std::size_t clamped = 0;          // records clamped at ingestion

  std::size_t n() const { return p.size(); }
  const double* coord_row(std::size_t i) const { return coords.data() + i * cv; }
  const int* raw_row(std::size_t i) const { return raw.data() + i * cv; }

  void finalize();  // clamp p, normalize coords from raw, fill caches
};

// Build a field from integer grid indices and p-values. Throws DataError on
// inconsistent sizes, out-of-range indices, or non-finite p.
PValueField make_field(std::vector<int> raw, std::vector<std::size_t> dims,
                       std::vector<double> pvals);

// Parameters of one mixture component: a beta density over p and a
// diagonal-covariance normal density over the normalized coordinates.
struct ComponentParams {
  double alpha = 1.0;
  double beta = 1.0;
  std::array<double, 3> mu{0.5, 0.5, 0.5};
  std::array<double, 3> sigma2{1.0, 1.0, 1.0};
};

struct MixtureParams {
  int K = 0;   // number of signal components; component 0 is the null
  int cv = 2;
  double delta = 0.99;
  double eta = 0.05;
  std::vector<double> pi;             // K + 1 weights
  std::vector<ComponentParams> comp;  // K + 1 entries, comp[0].alpha == comp[0].beta == 1

  static MixtureParams make(int K, int cv, double delta = 0.99, double eta = 0.05);

  // Throws NumericalError if any structural constraint is violated:
  // simplex weights, pi[0] >= delta, component 0 pinned at (1, 1),
  // alpha < 1 < beta and alpha/(alpha+beta) <= eta for signal components,
  // variances >= kSigma2Min.
  void check() const;
};

// Per-record posterior weights plus the cached per-component log densities
// they were computed from.
struct Responsibilities {
  std::size_t n = 0;
  int K = 0;
  std::vector<double> w;     // n * (K+1), rows sum to 1
  std::vector<double> logu;  // n * (K+1) cached log joint densities

  double& W(std::size_t i, int k) { return w[i * (K + 1) + k]; }
  double W(std::size_t i, int k) const { return w[i * (K + 1) + k]; }
  double& LU(std::size_t i, int k) { return logu[i * (K + 1) + k]; }
  double LU(std::size_t i, int k) const { return logu[i * (K + 1) + k]; }
};

}  // namespace pvmix
