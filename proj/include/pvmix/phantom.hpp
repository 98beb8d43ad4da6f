#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pvmix/field.hpp"

namespace pvmix {

enum class PhantomVariant { A, B, C, Null };

struct Ellipse {
  double cx = 0.0, cy = 0.0;  // center, pixel units
  double a = 1.0, b = 1.0;    // semi-axes
  double rot = 0.0;           // rotation, degrees
  int cls = 0;                // class the region paints
};

// A digitized 2-D phantom: a head ellipse defines the in-brain mask and the
// active regions are grown from seed ellipses until every class hits its
// target share of in-brain pixels exactly (nearest pixels first, measured in
// normalized ellipse distance, row-major index on ties).
struct PhantomSpec {
  PhantomVariant variant = PhantomVariant::Null;
  std::size_t width = 128, height = 128;
  Ellipse head;
  std::vector<Ellipse> regions;
  std::array<double, 3> pi_true{1.0, 0.0, 0.0};
  std::vector<int> cls;  // per pixel, row-major; -1 outside the brain
  std::size_t n_brain = 0;

  int cls_at(std::size_t x, std::size_t y) const { return cls[y * width + x]; }
};

PhantomSpec make_phantom(PhantomVariant v);

// Documented key-value description of a phantom (versioned, line oriented).
// Parsing re-rasterizes, so a round trip reproduces the class map exactly.
std::string geometry_text(const PhantomSpec& spec);
PhantomSpec phantom_from_text(const std::string& text);

struct ComplexityCalibration {
  double omega = 1.0;                 // requested pairwise overlap
  std::array<double, 3> nu{0.0, 0.0, 0.0};
  double omega01 = 1.0, omega02 = 1.0, omega12 = 1.0;  // achieved
};

// Density of p = 1 - Phi(Z) when Z ~ N(nu, 1): exp(nu z - nu^2/2) at
// z = Phi^{-1}(1 - p). nu = 0 gives the uniform density.
double psi_density(double p, double nu);

// Misclassification overlap of two equal-variance normal components with
// mixing weights pi_k, pi_l, via the single crossing point. Equal means are
// indistinguishable and return 1 by convention.
double pairwise_overlap(double nu_k, double nu_l, double pi_k, double pi_l);

// Solve pairwise_overlap(0, nu_k, pi0, pik) = omega for each active class
// by bisection (overlap is strictly decreasing in nu); the active-active
// overlap is reported as achieved, not constrained.
ComplexityCalibration calibrate_nu(const std::array<double, 3>& pi_true,
                                   double omega);

struct SimulatedField {
  PValueField field;       // one record per in-brain pixel, row-major
  std::vector<int> truth;  // class per record
};

// Draw z ~ N(nu_k, 1) per pixel of class k and emit p = 1 - Phi(z).
SimulatedField simulate_field(const PhantomSpec& spec,
                              const ComplexityCalibration& calib,
                              std::uint64_t seed);

}  // namespace pvmix
