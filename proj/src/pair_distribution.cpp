#include "vmb/pair_distribution.hpp"

#include <algorithm>
#include <cmath>

namespace vmb {

PairDistribution::PairDistribution(std::shared_ptr<const SpatialGrid> xg,
                                   std::shared_ptr<const VelocityGrid> vg)
    : xg_(std::move(xg)), vg_(std::move(vg)) {
  data_.assign(2 * nx() * nv(), 0.0);
}

void PairDistribution::require_same_grids(const PairDistribution& other) const {
  if (!same_grids(other)) fail(Errc::grid_mismatch, "pair distributions live on different grids");
}

bool PairDistribution::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::vector<double> PairDistribution::velocity_moment(
    int species, const std::function<double(double, double, double)>& test) const {
  std::vector<double> w(nv());
  for (std::size_t iv = 0; iv < nv(); ++iv) {
    const auto v = vg_->node(iv);
    w[iv] = test(v[0], v[1], v[2]);
  }
  std::vector<double> out(nx());
  const double vol = vg_->cell_volume();
  for (std::size_t ix = 0; ix < nx(); ++ix) {
    const double* f = block(species, ix);
    double s = 0.0;
    for (std::size_t iv = 0; iv < nv(); ++iv) s += w[iv] * f[iv];
    out[ix] = s * vol;
  }
  return out;
}

std::vector<double> PairDistribution::velocity_moment(int species, MomentTest test) const {
  switch (test) {
    case MomentTest::one:
      return velocity_moment(species, [](double, double, double) { return 1.0; });
    case MomentTest::v1:
      return velocity_moment(species, [](double a, double, double) { return a; });
    case MomentTest::v2:
      return velocity_moment(species, [](double, double b, double) { return b; });
    case MomentTest::v3:
      return velocity_moment(species, [](double, double, double c) { return c; });
    case MomentTest::v_sq:
      return velocity_moment(species,
                             [](double a, double b, double c) { return a * a + b * b + c * c; });
  }
  fail(Errc::bad_argument, "unknown moment test");
}

void PairDistribution::axpy(double a, const PairDistribution& g) {
  require_same_grids(g);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * g.data_[i];
}

void PairDistribution::scale(double a) {
  for (double& v : data_) v *= a;
}

void PairDistribution::fill(double value) { data_.assign(data_.size(), value); }

PairDistribution x_derivative(const PairDistribution& f, int axis, int order) {
  const auto& xg = f.xgrid();
  const std::size_t nx = f.nx();
  const std::size_t nv = f.nv();
  PairDistribution out(f.xgrid_ptr(), f.vgrid_ptr());
  std::vector<double> line(nx);
  for (int s = 0; s < 2; ++s)
    for (std::size_t iv = 0; iv < nv; ++iv) {
      for (std::size_t ix = 0; ix < nx; ++ix) line[ix] = f.at(s, ix, iv);
      const auto d = xg.derivative(line, axis, order);
      for (std::size_t ix = 0; ix < nx; ++ix) out.at(s, ix, iv) = d[ix];
    }
  return out;
}

PairDistribution v_derivative(const PairDistribution& f, int axis, int order) {
  const auto& vg = f.vgrid();
  PairDistribution out(f.xgrid_ptr(), f.vgrid_ptr());
  std::vector<double> blk(f.nv());
  for (int s = 0; s < 2; ++s)
    for (std::size_t ix = 0; ix < f.nx(); ++ix) {
      blk.assign(f.block(s, ix), f.block(s, ix) + f.nv());
      const auto d = vg.derivative(blk, axis, order);
      std::copy(d.begin(), d.end(), out.block(s, ix));
    }
  return out;
}

double pair_inner(const PairDistribution& f, const PairDistribution& g) {
  f.require_same_grids(g);
  double s = 0.0;
  for (std::size_t i = 0; i < f.data().size(); ++i) s += f.data()[i] * g.data()[i];
  return s * f.xgrid().cell_volume() * f.vgrid().cell_volume();
}

double pair_l2(const PairDistribution& f) { return std::sqrt(pair_inner(f, f)); }

}  // namespace vmb
