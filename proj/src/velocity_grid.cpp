#include "vmb/velocity_grid.hpp"

namespace vmb {

VelocityGrid::VelocityGrid(double v_max, int n_v) : v_max_(v_max), n_(n_v) {
  if (v_max <= 0.0) fail(Errc::bad_argument, "velocity grid: v_max must be positive");
  if (n_v < 4 || n_v % 2 != 0) fail(Errc::bad_argument, "velocity grid: n_v must be even and >= 4");
  dv_ = 2.0 * v_max_ / n_;
  axis_.resize(n_);
  for (int i = 0; i < n_; ++i) axis_[i] = -v_max_ + (i + 0.5) * dv_;
  mu_.resize(size());
  sqrt_mu_.resize(size());
  inv_sqrt_mu_.resize(size());
  for (std::size_t idx = 0; idx < size(); ++idx) {
    const auto v = node(idx);
    mu_[idx] = maxwellian(v[0], v[1], v[2]);
    sqrt_mu_[idx] = sqrt_maxwellian(v[0], v[1], v[2]);
    inv_sqrt_mu_[idx] = 1.0 / sqrt_mu_[idx];
  }
}

double VelocityGrid::integrate(const std::vector<double>& f) const {
  if (f.size() != size()) fail(Errc::grid_mismatch, "integrate: lattice size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f[i];
  return s * cell_volume();
}

double VelocityGrid::moment(const std::vector<double>& f,
                            const std::function<double(double, double, double)>& test) const {
  if (f.size() != size()) fail(Errc::grid_mismatch, "moment: lattice size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto v = node(i);
    s += test(v[0], v[1], v[2]) * f[i];
  }
  return s * cell_volume();
}

namespace {

// Fornberg second-order-accurate stencils for derivative orders 1..3.
// apply(i) returns {offset of first point, coefficient list}.
struct Stencil {
  int first;
  std::array<double, 5> c;
  int len;
};

Stencil stencil_for(int order, int i, int n) {
  switch (order) {
    case 1:
      if (i == 0) return {0, {-1.5, 2.0, -0.5}, 3};
      if (i == n - 1) return {i - 2, {0.5, -2.0, 1.5}, 3};
      return {i - 1, {-0.5, 0.0, 0.5}, 3};
    case 2:
      if (i == 0) return {0, {2.0, -5.0, 4.0, -1.0}, 4};
      if (i == n - 1) return {i - 3, {-1.0, 4.0, -5.0, 2.0}, 4};
      return {i - 1, {1.0, -2.0, 1.0}, 3};
    case 3:
      if (i == 0) return {0, {-2.5, 9.0, -12.0, 7.0, -1.5}, 5};
      if (i == 1) return {0, {-1.5, 5.0, -6.0, 3.0, -0.5}, 5};
      if (i == n - 2) return {n - 5, {0.5, -3.0, 6.0, -5.0, 1.5}, 5};
      if (i == n - 1) return {n - 5, {1.5, -7.0, 12.0, -9.0, 2.5}, 5};
      return {i - 2, {-0.5, 1.0, 0.0, -1.0, 0.5}, 5};
    default:
      fail(Errc::bad_argument, "velocity derivative order must be 1, 2 or 3");
  }
}

}  // namespace

std::vector<double> VelocityGrid::derivative(const std::vector<double>& f, int axis,
                                             int order) const {
  if (f.size() != size()) fail(Errc::grid_mismatch, "derivative: lattice size mismatch");
  if (axis < 0 || axis > 2) fail(Errc::bad_argument, "derivative: axis must be 0..2");
  if (order < 1 || order > 3) fail(Errc::bad_argument, "derivative: order must be 1..3");

  const double scale = 1.0 / std::pow(dv_, order);
  // Strides along each axis of the (n,n,n) row-major lattice.
  const std::size_t strides[3] = {static_cast<std::size_t>(n_) * n_, static_cast<std::size_t>(n_), 1};
  const std::size_t stride = strides[axis];

  std::vector<double> out(f.size());
  for (std::size_t base = 0; base < f.size(); ++base) {
    const auto ijk = unindex(base);
    const int i = ijk[axis];
    const Stencil s = stencil_for(order, i, n_);
    const std::size_t line0 = base - static_cast<std::size_t>(i) * stride;
    double acc = 0.0;
    for (int k = 0; k < s.len; ++k) acc += s.c[k] * f[line0 + static_cast<std::size_t>(s.first + k) * stride];
    out[base] = acc * scale;
  }
  return out;
}

}  // namespace vmb
