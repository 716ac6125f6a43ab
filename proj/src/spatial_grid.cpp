#include "vmb/spatial_grid.hpp"

#include <fftw3.h>

#include <mutex>

namespace vmb {

namespace {
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

SpatialGrid::SpatialGrid(int dim, std::array<double, 3> lengths, std::array<int, 3> n_per_axis)
    : dim_(dim), lengths_(lengths), n_(n_per_axis) {
  if (dim < 1 || dim > 3) fail(Errc::bad_argument, "spatial grid: dim must be 1, 2 or 3");
  size_ = 1;
  cell_volume_ = 1.0;
  for (int a = 0; a < 3; ++a) {
    if (a >= dim) {
      n_[a] = 1;
      lengths_[a] = 1.0;
      continue;
    }
    if (n_[a] < 4 || n_[a] % 2 != 0)
      fail(Errc::bad_argument, "spatial grid: points per axis must be even and >= 4");
    if (lengths_[a] <= 0.0) fail(Errc::bad_argument, "spatial grid: period must be positive");
    size_ *= n_[a];
    cell_volume_ *= lengths_[a] / n_[a];
  }
  for (int a = 0; a < 3; ++a) {
    xi_[a].assign(n_[a], 0.0);
    for (int k = 0; k < n_[a]; ++k) {
      int f = (k <= n_[a] / 2) ? k : k - n_[a];
      if (n_[a] > 1 && k == n_[a] / 2) f = 0;  // unmatched Nyquist mode, inactive
      xi_[a][k] = f / lengths_[a];
    }
  }

  std::vector<cplx> scratch_in(size_), scratch_out(size_);
  std::lock_guard<std::mutex> lock(plan_mutex());
  int nn[3] = {n_[0], n_[1], n_[2]};
  plan_fwd_ = fftw_plan_dft(dim_, nn, reinterpret_cast<fftw_complex*>(scratch_in.data()),
                            reinterpret_cast<fftw_complex*>(scratch_out.data()), FFTW_FORWARD,
                            FFTW_ESTIMATE | FFTW_UNALIGNED);
  plan_bwd_ = fftw_plan_dft(dim_, nn, reinterpret_cast<fftw_complex*>(scratch_in.data()),
                            reinterpret_cast<fftw_complex*>(scratch_out.data()), FFTW_BACKWARD,
                            FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!plan_fwd_ || !plan_bwd_) fail(Errc::bad_argument, "spatial grid: fftw plan failed");
}

SpatialGrid::~SpatialGrid() {
  std::lock_guard<std::mutex> lock(plan_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
  fftw_destroy_plan(static_cast<fftw_plan>(plan_bwd_));
}

std::array<int, 3> SpatialGrid::unindex(std::size_t idx) const {
  const int i2 = static_cast<int>(idx % n_[2]);
  const int i1 = static_cast<int>((idx / n_[2]) % n_[1]);
  const int i0 = static_cast<int>(idx / (static_cast<std::size_t>(n_[1]) * n_[2]));
  return {i0, i1, i2};
}

std::size_t SpatialGrid::index(int i0, int i1, int i2) const {
  return (static_cast<std::size_t>(i0) * n_[1] + i1) * n_[2] + i2;
}

std::array<double, 3> SpatialGrid::mode_xi(std::size_t idx) const {
  const auto k = unindex(idx);
  return {xi_[0][k[0]], xi_[1][k[1]], xi_[2][k[2]]};
}

void SpatialGrid::forward_c(const cplx* in, cplx* out) const {
  fftw_execute_dft(static_cast<fftw_plan>(plan_fwd_),
                   reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in)),
                   reinterpret_cast<fftw_complex*>(out));
}

void SpatialGrid::inverse_c(const cplx* in, cplx* out) const {
  fftw_execute_dft(static_cast<fftw_plan>(plan_bwd_),
                   reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in)),
                   reinterpret_cast<fftw_complex*>(out));
  const double inv = 1.0 / static_cast<double>(size_);
  for (std::size_t i = 0; i < size_; ++i) out[i] *= inv;
}

void SpatialGrid::forward(const double* in, cplx* out) const {
  std::vector<cplx> tmp(size_);
  for (std::size_t i = 0; i < size_; ++i) tmp[i] = in[i];
  forward_c(tmp.data(), out);
}

void SpatialGrid::inverse(const cplx* in, double* out) const {
  std::vector<cplx> tmp(size_);
  inverse_c(in, tmp.data());
  for (std::size_t i = 0; i < size_; ++i) out[i] = tmp[i].real();
}

std::vector<double> SpatialGrid::mode_multiply(
    const std::vector<double>& g, const std::function<cplx(const std::array<double, 3>&)>& m) const {
  if (g.size() != size_) fail(Errc::grid_mismatch, "mode_multiply: field size mismatch");
  std::vector<cplx> spec(size_);
  forward(g.data(), spec.data());
  for (std::size_t i = 0; i < size_; ++i) spec[i] *= m(mode_xi(i));
  std::vector<double> out(size_);
  inverse(spec.data(), out.data());
  return out;
}

std::vector<double> SpatialGrid::derivative(const std::vector<double>& g, int axis,
                                            int order) const {
  if (axis < 0 || axis >= dim_) fail(Errc::bad_argument, "spectral derivative: axis outside active dimensions");
  if (order < 0 || order > max_order_) fail(Errc::bad_argument, "spectral derivative: order above configured maximum");
  if (order == 0) return g;
  return mode_multiply(g, [axis, order](const std::array<double, 3>& xi) {
    cplx f(0.0, two_pi * xi[axis]);
    cplx p = f;
    for (int i = 1; i < order; ++i) p *= f;
    return p;
  });
}

double SpatialGrid::mean(const std::vector<double>& g) const {
  double s = 0.0;
  for (double v : g) s += v;
  return s / static_cast<double>(size_);
}

}  // namespace vmb
