#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "vmb/pair_distribution.hpp"
#include "vmb/velocity_grid.hpp"

namespace vmb {

// Product quadrature on S^2, polar axis aligned with the relative velocity:
// Gauss-Legendre in cos(theta) on split panels [-1,0] and [0,1] (the angular
// kernel |cos theta| has a kink at 0), uniform trapezoid in azimuth. The
// azimuth count must be even so the node set is invariant under swapping the
// colliding pair.
struct SphereQuadrature {
  std::vector<double> cos_theta;
  std::vector<double> sin_theta;
  std::vector<double> polar_weight;  // includes the 2*pi/n_azimuth azimuth weight
  int n_azimuth = 0;
  std::vector<double> cos_phi;
  std::vector<double> sin_phi;

  static SphereQuadrature product(int nodes_per_half_panel, int n_azimuth);

  std::size_t node_count() const { return cos_theta.size() * n_azimuth; }
  double integrate_constant() const;                                   // -> 4*pi
  double integrate(const std::function<double(double)>& f_cos) const;  // of f(cos theta)
};

// Cutoff collision kernel: |v-u|^gamma b(cos theta) with Grad's bound
// 0 <= b(c) <= C|c|. Equal masses; the cross-section prefactor
// (sigma_+ + sigma_-)^2/4 is `scale`.
struct KernelModel {
  std::string name = "hard_sphere";  // cache key; "custom" disables caching
  double gamma = 1.0;                // in (-3, 1]
  std::function<double(double)> angular = [](double c) { return std::abs(c); };
  double grad_bound_c = 1.0;
  double scale = 1.0;
  SphereQuadrature sphere = SphereQuadrature::product(4, 6);
  double mu_floor = 1e-280;

  static KernelModel hard_sphere();
  static KernelModel soft(double gamma);

  void validate() const;  // rejects gamma outside (-3, 1]
  bool grad_bound_holds() const;
  // integral of b over S^2 by this model's quadrature (2*pi for hard sphere)
  double angular_mass() const;
};

struct CollisionStats {
  std::size_t items_total = 0;
  std::size_t items_dropped = 0;  // post-collision point left the lattice
  std::size_t floor_zeroed = 0;   // Maxwellian underflow guard hits
};

// Q(F,G)(v) for single-species lattice functions, discretized in the
// symmetrized weak form: every quadrature item moves its gain-loss imbalance
// between the colliding lattice pair and a quadratic-exact 27-point spread at
// the post-collision velocities, with off-lattice values obtained by
// interpolating F/mu and G/mu. Mass, momentum and energy of Q(F,F) vanish to
// rounding, and Q(mu,mu) is identically zero item by item.
std::vector<double> boltzmann_q(const VelocityGrid& grid, const std::vector<double>& F,
                                const std::vector<double>& G, const KernelModel& model,
                                CollisionStats* stats = nullptr);

// nu(v) = 2 * scale * (int b domega) * int |v-u|^gamma mu(u) du with the
// u-integral reduced to one radial dimension and resolved by Gauss-Legendre
// panels split at the |v-u| kink.
double collision_frequency(const std::array<double, 3>& v, const KernelModel& model);

// Same collision frequency but with the u-integral on the velocity lattice,
// consistent with the quadrature used to assemble K.
std::vector<double> nu_lattice(const VelocityGrid& grid, const KernelModel& model);

// Gamma_pm(g,h) = mu^{-1/2} { Q(mu^{1/2} g_pm, mu^{1/2} h_pm) +
//                             Q(mu^{1/2} g_pm, mu^{1/2} h_mp) },
// evaluated pointwise in x. The mu^{-1/2} division uses the cached sqrt_mu;
// entries with mu below the floor are zeroed and counted.
PairDistribution gamma_bilinear(const PairDistribution& g, const PairDistribution& h,
                                const KernelModel& model, CollisionStats* stats = nullptr);

namespace detail {

// Quadratic Lagrange stencil (3 nodes per axis around the nearest lattice
// node); exact for tensor quadratics, in particular 1, v_i and |v|^2.
struct QuadStencil {
  int base[3];      // first node index per axis (base .. base+2)
  double w[3][3];   // per-axis weights
  bool in_range;
};

QuadStencil quad_stencil(const VelocityGrid& g, const std::array<double, 3>& p);

// Orthonormal frame (t1, t2, n) with deterministic dependence on n; flipping
// n flips t1 and keeps t2, which pairs the quadrature items of (v,u) and (u,v).
void pair_frame(const std::array<double, 3>& n, std::array<double, 3>& t1,
                std::array<double, 3>& t2);

}  // namespace detail

}  // namespace vmb
