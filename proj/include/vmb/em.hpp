#pragma once

#include <array>
#include <memory>
#include <vector>

#include "vmb/pair_distribution.hpp"
#include "vmb/spatial_grid.hpp"

namespace vmb {

using Field3 = std::array<std::vector<double>, 3>;

Field3 make_field3(const SpatialGrid& g);

// Electric/magnetic perturbation fields plus the constant background and the
// singular parameter epsilon = 1/c.
struct EMState {
  std::shared_ptr<const SpatialGrid> grid;
  Field3 E;
  Field3 B_tilde;
  std::array<double, 3> B_background{0.0, 0.0, 0.0};
  double epsilon = 1.0;

  static EMState zero(std::shared_ptr<const SpatialGrid> g, double epsilon);
  bool all_finite() const;
};

// rho(x) = int mu^{1/2} (f+ - f-) dv
std::vector<double> charge_density(const PairDistribution& f);
// j_i(x) = int v_i mu^{1/2} (f+ - f-) dv
Field3 current_density(const PairDistribution& f);

// Advances eps dE/dt - curl Btilde = -eps j, eps dBtilde/dt + curl E = 0
// exactly per mode: the transverse components rotate with frequency
// 2*pi*|xi|/eps in closed form and the source enters by variation of
// constants; the longitudinal and zero-mode parts obey dE/dt = -j. There is
// no light-speed CFL restriction. The kinetic steppers pass
// longitudinal_source = false because they feed the longitudinal field the
// exact transport charge flux instead (constraint-preserving update).
void maxwell_substep(EMState& em, const Field3& j, double dt, bool longitudinal_source = true);

// Moduli of the homogeneous per-mode update factors (they are exactly
// exp(+-i omega dt); exposed for the eps-uniform stability check).
std::array<double, 2> maxwell_amplification_moduli(double kappa, double epsilon, double dt);

// E = grad phi with Laplace phi = rho solved spectrally; requires mean-zero
// rho (neutrality on the torus) and returns a curl-free field with
// div E = rho.
Field3 poisson_field(const SpatialGrid& g, const std::vector<double>& rho);

// Same inversion on the mean-removed density; the steppers use this closure
// so that rounding-level charge drift cannot abort a run. The removed mean is
// reported through mean_out when requested.
Field3 poisson_field_centered(const SpatialGrid& g, const std::vector<double>& rho,
                              double* mean_out = nullptr);

// || div E - rho || / max(||rho||, floor)
double gauss_residual(const EMState& em, const std::vector<double>& rho, double floor = 1e-14);

double div_residual(const SpatialGrid& g, const Field3& b);

// Replaces the longitudinal part of E0 with the Poisson field of f0's charge
// density and removes any divergence from B0_tilde. Transverse E and
// solenoidal B pass through unchanged.
void enforce_compatibility(const PairDistribution& f0, EMState& em);

double field_l2(const SpatialGrid& g, const Field3& f);

}  // namespace vmb
