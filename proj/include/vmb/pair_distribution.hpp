#pragma once

#include <memory>
#include <vector>

#include "vmb/spatial_grid.hpp"
#include "vmb/velocity_grid.hpp"

namespace vmb {

// Velocity-moment test functions used throughout the macro machinery.
enum class MomentTest { one, v1, v2, v3, v_sq };

// Two-species perturbation f = [f+, f-] sampled on (spatial grid) x (velocity
// lattice). Layout: data[(s*Nx + ix)*Nv + iv], so each (species, x) velocity
// block is contiguous. Single-writer mutation; concurrent readers are safe
// between writes.
class PairDistribution {
public:
  PairDistribution(std::shared_ptr<const SpatialGrid> xg, std::shared_ptr<const VelocityGrid> vg);

  const SpatialGrid& xgrid() const { return *xg_; }
  const VelocityGrid& vgrid() const { return *vg_; }
  std::shared_ptr<const SpatialGrid> xgrid_ptr() const { return xg_; }
  std::shared_ptr<const VelocityGrid> vgrid_ptr() const { return vg_; }

  std::size_t nx() const { return xg_->size(); }
  std::size_t nv() const { return vg_->size(); }

  double* block(int species, std::size_t ix) {
    return data_.data() + (static_cast<std::size_t>(species) * nx() + ix) * nv();
  }
  const double* block(int species, std::size_t ix) const {
    return data_.data() + (static_cast<std::size_t>(species) * nx() + ix) * nv();
  }
  double& at(int species, std::size_t ix, std::size_t iv) { return block(species, ix)[iv]; }
  double at(int species, std::size_t ix, std::size_t iv) const { return block(species, ix)[iv]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_grids(const PairDistribution& other) const {
    return xg_.get() == other.xg_.get() && vg_.get() == other.vg_.get();
  }
  void require_same_grids(const PairDistribution& other) const;

  bool all_finite() const;

  // Per-species spatial field of sum_v w * test(v) * f_s(x, v).
  std::vector<double> velocity_moment(int species, MomentTest test) const;
  std::vector<double> velocity_moment(int species,
                                      const std::function<double(double, double, double)>& test) const;

  // Pointwise algebra used by the steppers.
  void axpy(double a, const PairDistribution& g);  // this += a * g
  void scale(double a);
  void fill(double value);

private:
  std::shared_ptr<const SpatialGrid> xg_;
  std::shared_ptr<const VelocityGrid> vg_;
  std::vector<double> data_;
};

// Spectral spatial derivative of a phase-space function, applied per velocity
// node and species.
PairDistribution x_derivative(const PairDistribution& f, int axis, int order);
// Finite-difference velocity derivative, applied per spatial point and species.
PairDistribution v_derivative(const PairDistribution& f, int axis, int order);

// L2(x,v) norm over both species with the grid quadrature weights.
double pair_l2(const PairDistribution& f);
double pair_inner(const PairDistribution& f, const PairDistribution& g);

}  // namespace vmb
