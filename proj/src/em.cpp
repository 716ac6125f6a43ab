#include "vmb/em.hpp"

#include <cmath>
#include <complex>

namespace vmb {

namespace {

struct Spectra {
  std::vector<cplx> c[3];
};

Spectra to_spectra(const SpatialGrid& g, const Field3& f) {
  Spectra s;
  for (int a = 0; a < 3; ++a) {
    s.c[a].resize(g.size());
    g.forward(f[a].data(), s.c[a].data());
  }
  return s;
}

void from_spectra(const SpatialGrid& g, const Spectra& s, Field3& f) {
  for (int a = 0; a < 3; ++a) g.inverse(s.c[a].data(), f[a].data());
}

}  // namespace

Field3 make_field3(const SpatialGrid& g) {
  return Field3{std::vector<double>(g.size(), 0.0), std::vector<double>(g.size(), 0.0),
                std::vector<double>(g.size(), 0.0)};
}

EMState EMState::zero(std::shared_ptr<const SpatialGrid> g, double epsilon) {
  EMState em;
  em.grid = g;
  em.E = make_field3(*g);
  em.B_tilde = make_field3(*g);
  em.epsilon = epsilon;
  return em;
}

bool EMState::all_finite() const {
  for (int a = 0; a < 3; ++a) {
    for (double v : E[a])
      if (!std::isfinite(v)) return false;
    for (double v : B_tilde[a])
      if (!std::isfinite(v)) return false;
  }
  return true;
}

std::vector<double> charge_density(const PairDistribution& f) {
  const auto& vg = f.vgrid();
  std::vector<double> out(f.nx(), 0.0);
  const double vol = vg.cell_volume();
  for (std::size_t ix = 0; ix < f.nx(); ++ix) {
    const double* fp = f.block(0, ix);
    const double* fm = f.block(1, ix);
    double s = 0.0;
    for (std::size_t iv = 0; iv < f.nv(); ++iv) s += vg.sqrt_mu()[iv] * (fp[iv] - fm[iv]);
    out[ix] = s * vol;
  }
  return out;
}

Field3 current_density(const PairDistribution& f) {
  const auto& vg = f.vgrid();
  Field3 out = make_field3(f.xgrid());
  const double vol = vg.cell_volume();
  for (std::size_t ix = 0; ix < f.nx(); ++ix) {
    const double* fp = f.block(0, ix);
    const double* fm = f.block(1, ix);
    double s[3] = {0.0, 0.0, 0.0};
    for (std::size_t iv = 0; iv < f.nv(); ++iv) {
      const auto v = vg.node(iv);
      const double d = vg.sqrt_mu()[iv] * (fp[iv] - fm[iv]);
      s[0] += v[0] * d;
      s[1] += v[1] * d;
      s[2] += v[2] * d;
    }
    for (int a = 0; a < 3; ++a) out[a][ix] = s[a] * vol;
  }
  return out;
}

void maxwell_substep(EMState& em, const Field3& j, double dt, bool longitudinal_source) {
  if (dt <= 0.0) fail(Errc::bad_argument, "maxwell_substep: dt must be positive");
  const auto& g = *em.grid;
  Spectra se = to_spectra(g, em.E);
  Spectra sb = to_spectra(g, em.B_tilde);
  Spectra sj = to_spectra(g, j);

  for (std::size_t m = 0; m < g.size(); ++m) {
    const auto xi = g.mode_xi(m);
    const std::array<double, 3> kap{two_pi * xi[0], two_pi * xi[1], two_pi * xi[2]};
    const double kn = std::sqrt(kap[0] * kap[0] + kap[1] * kap[1] + kap[2] * kap[2]);
    cplx E[3] = {se.c[0][m], se.c[1][m], se.c[2][m]};
    cplx B[3] = {sb.c[0][m], sb.c[1][m], sb.c[2][m]};
    cplx J[3] = {sj.c[0][m], sj.c[1][m], sj.c[2][m]};
    if (kn == 0.0) {
      if (longitudinal_source)
        for (int a = 0; a < 3; ++a) se.c[a][m] = E[a] - dt * J[a];
      continue;
    }
    const std::array<double, 3> nh{kap[0] / kn, kap[1] / kn, kap[2] / kn};
    // transverse orthonormal pair with nh x e1 = e2
    int small = 0;
    if (std::abs(nh[1]) < std::abs(nh[small])) small = 1;
    if (std::abs(nh[2]) < std::abs(nh[small])) small = 2;
    std::array<double, 3> ea{0.0, 0.0, 0.0};
    ea[small] = 1.0;
    std::array<double, 3> e1{nh[1] * ea[2] - nh[2] * ea[1], nh[2] * ea[0] - nh[0] * ea[2],
                             nh[0] * ea[1] - nh[1] * ea[0]};
    const double n1 = std::sqrt(e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]);
    for (auto& c : e1) c /= n1;
    const std::array<double, 3> e2{nh[1] * e1[2] - nh[2] * e1[1], nh[2] * e1[0] - nh[0] * e1[2],
                                   nh[0] * e1[1] - nh[1] * e1[0]};

    auto dot = [](const cplx* v, const std::array<double, 3>& u) {
      return v[0] * u[0] + v[1] * u[1] + v[2] * u[2];
    };
    const cplx El = dot(E, nh), E1 = dot(E, e1), E2 = dot(E, e2);
    const cplx B1 = dot(B, e1), B2 = dot(B, e2), Bl = dot(B, nh);
    const cplx J1 = dot(J, e1), J2 = dot(J, e2), Jl = dot(J, nh);

    // longitudinal: dE/dt = -j (the curl has no component along kappa)
    const cplx El_new = longitudinal_source ? El - dt * Jl : El;

    const double omega = kn / em.epsilon;
    const cplx lm(0.0, -omega * dt);  // lambda*dt for the co-rotating pair
    const cplx lp(0.0, omega * dt);
    const cplx em_ = std::exp(lm), ep = std::exp(lp);
    // d/dt (E1 + B2) = -i w (E1 + B2) - J1 ; d/dt (E1 - B2) = +i w (...) - J1
    const cplx p = em_ * (E1 + B2) - dt * J1 * phi1(lm);
    const cplx q = ep * (E1 - B2) - dt * J1 * phi1(lp);
    // d/dt (E2 + B1) = +i w (E2 + B1) - J2 ; d/dt (E2 - B1) = -i w (...) - J2
    const cplx pp = ep * (E2 + B1) - dt * J2 * phi1(lp);
    const cplx qp = em_ * (E2 - B1) - dt * J2 * phi1(lm);

    const cplx E1n = 0.5 * (p + q), B2n = 0.5 * (p - q);
    const cplx E2n = 0.5 * (pp + qp), B1n = 0.5 * (pp - qp);
    for (int a = 0; a < 3; ++a) {
      se.c[a][m] = El_new * nh[a] + E1n * e1[a] + E2n * e2[a];
      sb.c[a][m] = Bl * nh[a] + B1n * e1[a] + B2n * e2[a];
    }
  }
  from_spectra(g, se, em.E);
  from_spectra(g, sb, em.B_tilde);
}

std::array<double, 2> maxwell_amplification_moduli(double kappa, double epsilon, double dt) {
  const double w = kappa / epsilon;
  return {std::abs(std::exp(cplx(0.0, -w * dt))), std::abs(std::exp(cplx(0.0, w * dt)))};
}

namespace {
Field3 poisson_from_spectrum(const SpatialGrid& g, const std::vector<cplx>& spec) {
  Field3 out = make_field3(g);
  std::vector<cplx> comp(g.size());
  for (int a = 0; a < 3; ++a) {
    for (std::size_t m = 0; m < g.size(); ++m) {
      const auto xi = g.mode_xi(m);
      const double k2 = (two_pi * two_pi) * (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]);
      if (k2 == 0.0) {
        comp[m] = 0.0;
      } else {
        comp[m] = cplx(0.0, -two_pi * xi[a] / k2) * spec[m];
      }
    }
    g.inverse(comp.data(), out[a].data());
  }
  return out;
}
}  // namespace

Field3 poisson_field(const SpatialGrid& g, const std::vector<double>& rho) {
  if (rho.size() != g.size()) fail(Errc::grid_mismatch, "poisson_field: field size mismatch");
  std::vector<cplx> spec(g.size());
  g.forward(rho.data(), spec.data());
  const double mean_mag = std::abs(spec[0]) / static_cast<double>(g.size());
  double norm = 0.0;
  for (double v : rho) norm += v * v;
  norm = std::sqrt(norm * g.cell_volume());
  if (mean_mag > 1e-10 * std::max(1.0, norm))
    fail(Errc::constraint_violation,
         "poisson_field: rho has nonzero spatial mean " + std::to_string(mean_mag) +
             " (non-neutral data)");
  return poisson_from_spectrum(g, spec);
}

Field3 poisson_field_centered(const SpatialGrid& g, const std::vector<double>& rho,
                              double* mean_out) {
  if (rho.size() != g.size()) fail(Errc::grid_mismatch, "poisson_field: field size mismatch");
  std::vector<cplx> spec(g.size());
  g.forward(rho.data(), spec.data());
  if (mean_out) *mean_out = spec[0].real() / static_cast<double>(g.size());
  spec[0] = 0.0;
  return poisson_from_spectrum(g, spec);
}

namespace {
void div_field(const SpatialGrid& g, const Field3& f, std::vector<double>& out) {
  out.assign(g.size(), 0.0);
  for (int a = 0; a < g.dim(); ++a) {
    const auto d = g.derivative(f[a], a, 1);
    for (std::size_t i = 0; i < g.size(); ++i) out[i] += d[i];
  }
}
}  // namespace

double gauss_residual(const EMState& em, const std::vector<double>& rho, double floor) {
  const auto& g = *em.grid;
  std::vector<double> div;
  div_field(g, em.E, div);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = div[i] - rho[i];
    num += d * d;
    den += rho[i] * rho[i];
  }
  num = std::sqrt(num * g.cell_volume());
  den = std::sqrt(den * g.cell_volume());
  return num / std::max(den, floor);
}

double div_residual(const SpatialGrid& g, const Field3& b) {
  std::vector<double> div;
  div_field(g, b, div);
  double s = 0.0;
  for (double v : div) s += v * v;
  return std::sqrt(s * g.cell_volume());
}

void enforce_compatibility(const PairDistribution& f0, EMState& em) {
  const auto& g = *em.grid;
  const auto rho = charge_density(f0);
  const Field3 elong = poisson_field(g, rho);  // rejects non-neutral f0

  // strip the longitudinal part of E (zero mode kept: it has no divergence)
  Spectra se = to_spectra(g, em.E);
  Spectra sb = to_spectra(g, em.B_tilde);
  for (std::size_t m = 0; m < g.size(); ++m) {
    const auto xi = g.mode_xi(m);
    const double kn2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    if (kn2 == 0.0) continue;
    const std::array<double, 3> nh{xi[0] / std::sqrt(kn2), xi[1] / std::sqrt(kn2),
                                   xi[2] / std::sqrt(kn2)};
    const cplx el = se.c[0][m] * nh[0] + se.c[1][m] * nh[1] + se.c[2][m] * nh[2];
    const cplx bl = sb.c[0][m] * nh[0] + sb.c[1][m] * nh[1] + sb.c[2][m] * nh[2];
    for (int a = 0; a < 3; ++a) {
      se.c[a][m] -= el * nh[a];
      sb.c[a][m] -= bl * nh[a];
    }
  }
  from_spectra(g, se, em.E);
  from_spectra(g, sb, em.B_tilde);
  for (int a = 0; a < 3; ++a)
    for (std::size_t i = 0; i < g.size(); ++i) em.E[a][i] += elong[a][i];
}

double field_l2(const SpatialGrid& g, const Field3& f) {
  double s = 0.0;
  for (int a = 0; a < 3; ++a)
    for (double v : f[a]) s += v * v;
  return std::sqrt(s * g.cell_volume());
}

}  // namespace vmb
