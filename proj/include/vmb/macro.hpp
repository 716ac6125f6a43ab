#pragma once

#include <Eigen/Dense>
#include <array>
#include <memory>

#include "vmb/em.hpp"
#include "vmb/linearized_operator.hpp"
#include "vmb/pair_distribution.hpp"

namespace vmb {

// Densities, bulk velocity and temperature perturbation of the macroscopic
// component, one value per spatial point.
struct MacroState {
  std::vector<double> a_plus;
  std::vector<double> a_minus;
  Field3 b;
  std::vector<double> c;
};

// Orthogonal projection onto the six-dimensional null space of L. The
// continuum basis is not exactly orthogonal under lattice quadrature; the
// 6x6 Gram inverse absorbs that, so P^2 = P and self-adjointness hold to
// rounding instead of to quadrature error.
class MacroProjector {
public:
  explicit MacroProjector(std::shared_ptr<const VelocityGrid> grid);

  const VelocityGrid& grid() const { return *grid_; }

  MacroState coefficients(const PairDistribution& g) const;
  void reconstruct(const MacroState& m, PairDistribution& out) const;
  PairDistribution project(const PairDistribution& g) const;
  PairDistribution micro(const PairDistribution& g) const;

  // Single velocity block: coefficients in the order a+, a-, b1..b3, c.
  std::array<double, 6> block_coefficients(const double* gp, const double* gm) const;
  void block_reconstruct(const std::array<double, 6>& c, double* gp, double* gm) const;

private:
  std::shared_ptr<const VelocityGrid> grid_;
  Eigen::MatrixXd basis_plus_;   // 6 columns over the lattice, species +
  Eigen::MatrixXd basis_minus_;  // species -
  Eigen::MatrixXd gram_inv_;
};

// Moment functionals of the macroscopic balance laws.
// A_{mj}(g) = int (v_m v_j - 1) mu^{1/2} g dv
std::array<double, 9> moment_A(const VelocityGrid& grid, const double* g);
// B_j(g) = (1/10) int (|v|^2 - 5) v_j mu^{1/2} g dv
std::array<double, 3> moment_B(const VelocityGrid& grid, const double* g);
// G(f) = < v mu^{1/2}, {I-P}f . q1 >, one 3-vector per spatial point
Field3 moment_G(const PairDistribution& f, const MacroProjector& proj);

// L2 residuals of the macroscopic balance laws between two consecutive
// snapshots (centered time difference at the midpoint). Collision terms use
// the assembled L and, when a kernel model is supplied, the bilinear Gamma.
struct MacroResiduals {
  double continuity = 0.0;   // d/dt (a+ + a-)/2 + div b
  double momentum = 0.0;     // b equation
  double temperature = 0.0;  // c equation
  double charge = 0.0;       // d/dt (a+ - a-) + div G
  double current = 0.0;      // G equation
  double stress = 0.0;       // A_ij micro identity
  double heat_flux = 0.0;    // B_j micro identity
};

MacroResiduals macro_residuals(const PairDistribution& f0, const EMState& em0,
                               const PairDistribution& f1, const EMState& em1, double dt,
                               const MacroProjector& proj, const LinearizedOperator& lop,
                               const KernelModel* gamma_model = nullptr);

// Relative defect of
//   {I-P}{ E.v mu^{1/2} q1 - q0 eps (v x B) . grad_v Pf }
//     = { E + eps b^f x B } . v mu^{1/2} q1,
// with the analytic gradient of the reconstructed Pf.
double verify_micro_identity(const PairDistribution& f, const Field3& E,
                             const std::array<double, 3>& B_const, double epsilon,
                             const MacroProjector& proj);

}  // namespace vmb
