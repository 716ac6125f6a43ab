#pragma once

#include <array>
#include <functional>
#include <vector>

#include "vmb/common.hpp"

namespace vmb {

// Truncated symmetric velocity lattice. Nodes sit at cell midpoints
// (k + 1/2) * dv - v_max, so the set is exactly closed under v -> -v and the
// origin is excluded. Quadrature is the midpoint rule with uniform weight dv^3.
class VelocityGrid {
public:
  VelocityGrid(double v_max, int n_v);

  double v_max() const { return v_max_; }
  int n() const { return n_; }
  std::size_t size() const { return static_cast<std::size_t>(n_) * n_ * n_; }
  double dv() const { return dv_; }
  double cell_volume() const { return dv_ * dv_ * dv_; }

  double axis(int i) const { return axis_[i]; }
  const std::vector<double>& axis_nodes() const { return axis_; }

  std::size_t index(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(ix) * n_ + iy) * n_ + iz;
  }
  std::array<int, 3> unindex(std::size_t idx) const {
    const int iz = static_cast<int>(idx % n_);
    const int iy = static_cast<int>((idx / n_) % n_);
    const int ix = static_cast<int>(idx / (static_cast<std::size_t>(n_) * n_));
    return {ix, iy, iz};
  }
  std::array<double, 3> node(std::size_t idx) const {
    const auto i = unindex(idx);
    return {axis_[i[0]], axis_[i[1]], axis_[i[2]]};
  }

  const std::vector<double>& mu() const { return mu_; }
  const std::vector<double>& sqrt_mu() const { return sqrt_mu_; }
  const std::vector<double>& inv_sqrt_mu() const { return inv_sqrt_mu_; }

  // sum_nodes dv^3 * f(node)
  double integrate(const std::vector<double>& f) const;
  // sum_nodes dv^3 * test(node) * f(node)
  double moment(const std::vector<double>& f,
                const std::function<double(double, double, double)>& test) const;

  // Mixed velocity derivatives are applied axis by axis through this routine.
  // Central second-order stencils inside, one-sided second-order at the
  // truncation boundary. order is the derivative order, 1..3.
  std::vector<double> derivative(const std::vector<double>& f, int axis, int order) const;

private:
  double v_max_;
  int n_;
  double dv_;
  std::vector<double> axis_;
  std::vector<double> mu_;
  std::vector<double> sqrt_mu_;
  std::vector<double> inv_sqrt_mu_;
};

}  // namespace vmb
