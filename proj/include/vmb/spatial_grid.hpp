#pragma once

#include <array>
#include <complex>
#include <functional>
#include <memory>
#include <vector>

#include "vmb/common.hpp"

namespace vmb {

using cplx = std::complex<double>;

// (exp(z) - 1)/z, stable near zero; used by the exact-in-time substeps.
inline cplx phi1(cplx z) {
  if (std::abs(z) < 1e-8) return 1.0 + 0.5 * z + z * z / 6.0;
  return (std::exp(z) - 1.0) / z;
}

// Periodic torus with spectral calculus. Transform convention is
// g(x) = sum_xi ghat(xi) e^{2 pi i x.xi} with frequency vectors xi = k/L.
// The unmatched Nyquist frequency on an even grid is recorded as 0 so the
// active wavenumber set is closed under negation; every mode-multiplier
// operation (derivatives, Poisson, Lambda^s, transport phases) leaves that
// mode untouched or kills it.
class SpatialGrid {
public:
  SpatialGrid(int dim, std::array<double, 3> lengths, std::array<int, 3> n_per_axis);
  ~SpatialGrid();

  SpatialGrid(const SpatialGrid&) = delete;
  SpatialGrid& operator=(const SpatialGrid&) = delete;

  int dim() const { return dim_; }
  double length(int axis) const { return lengths_[axis]; }
  int n(int axis) const { return n_[axis]; }
  std::size_t size() const { return size_; }
  // Quadrature weight of one grid cell (product of dx over active axes).
  double cell_volume() const { return cell_volume_; }
  int max_derivative_order() const { return max_order_; }

  double x(int axis, int i) const { return lengths_[axis] * i / n_[axis]; }
  std::array<int, 3> unindex(std::size_t idx) const;
  std::size_t index(int i0, int i1, int i2) const;

  // Frequency (cycles per unit length) along `axis` for mode index k.
  double xi(int axis, int k) const { return xi_[axis][k]; }
  // Frequency vector of the flattened mode index.
  std::array<double, 3> mode_xi(std::size_t idx) const;

  void forward(const double* in, cplx* out) const;
  void inverse(const cplx* in, double* out) const;  // normalized, real part
  void forward_c(const cplx* in, cplx* out) const;
  void inverse_c(const cplx* in, cplx* out) const;

  // Applies a spectral multiplier m(xi) to a real field.
  std::vector<double> mode_multiply(const std::vector<double>& g,
                                    const std::function<cplx(const std::array<double, 3>&)>& m) const;

  // order-th partial derivative along axis, multiplier (2 pi i xi_axis)^order.
  std::vector<double> derivative(const std::vector<double>& g, int axis, int order) const;

  double mean(const std::vector<double>& g) const;

private:
  int dim_;
  std::array<double, 3> lengths_;
  std::array<int, 3> n_;
  std::size_t size_;
  double cell_volume_;
  int max_order_ = 3;
  std::array<std::vector<double>, 3> xi_;
  void* plan_fwd_;
  void* plan_bwd_;
};

}  // namespace vmb
