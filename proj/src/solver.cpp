#include "vmb/solver.hpp"

#include <omp.h>

#include <cmath>

namespace vmb {

void SolverConfig::validate() const {
  if (dt <= 0.0) fail(Errc::invalid_config, "solver config: dt must be positive");
  if (t_end < 0.0) fail(Errc::invalid_config, "solver config: t_end must be nonnegative");
  if (recorder_cadence < 1) fail(Errc::invalid_config, "solver config: recorder cadence must be >= 1");
}

namespace {

void check_finite(const PairDistribution& f, const char* substep) {
  if (!f.all_finite())
    fail(Errc::numerical_abort, std::string("NaN detected after substep ") + substep);
}

// Exact phase-shift transport over tau. When em is supplied, the exact
// time-integrated charge flux of this substep is fed into the longitudinal
// and zero modes of E, which transports the Gauss constraint to rounding.
void transport_substep(PairDistribution& f, double tau, EMState* em) {
  const auto& xg = f.xgrid();
  const auto& vg = f.vgrid();
  const std::size_t nx = xg.size();
  const std::size_t nv = vg.size();
  const double vol = vg.cell_volume();

  const int nthreads = omp_get_max_threads();
  std::vector<std::array<std::vector<cplx>, 3>> jint(em ? nthreads : 0);
  if (em)
    for (auto& t : jint)
      for (auto& comp : t) comp.assign(nx, cplx(0.0));

#pragma omp parallel
  {
    const int tid = omp_get_thread_num();
    std::vector<cplx> line(nx), spec(nx);
#pragma omp for schedule(static) collapse(2)
    for (int s = 0; s < 2; ++s)
      for (std::size_t iv = 0; iv < nv; ++iv) {
        const auto v = vg.node(iv);
        const double sign = (s == 0) ? 1.0 : -1.0;
        const double smw = vg.sqrt_mu()[iv] * vol;
        for (std::size_t ix = 0; ix < nx; ++ix) line[ix] = f.at(s, ix, iv);
        xg.forward_c(line.data(), spec.data());
        for (std::size_t m = 0; m < nx; ++m) {
          const auto xi = xg.mode_xi(m);
          const double vxi = v[0] * xi[0] + v[1] * xi[1] + v[2] * xi[2];
          const cplx z(0.0, -two_pi * vxi * tau);
          if (em) {
            const cplx flux = sign * smw * spec[m] * tau * phi1(z);
            auto& acc = jint[tid];
            for (int a = 0; a < 3; ++a) acc[a][m] += v[a] * flux;
          }
          spec[m] *= std::exp(z);
        }
        xg.inverse_c(spec.data(), line.data());
        for (std::size_t ix = 0; ix < nx; ++ix) f.at(s, ix, iv) = line[ix].real();
      }
  }

  if (!em) return;
  std::array<std::vector<cplx>, 3> total;
  for (auto& comp : total) comp.assign(nx, cplx(0.0));
  for (int t = 0; t < nthreads; ++t)
    for (int a = 0; a < 3; ++a)
      for (std::size_t m = 0; m < nx; ++m) total[a][m] += jint[t][a][m];

  std::array<std::vector<cplx>, 3> espec;
  for (int a = 0; a < 3; ++a) {
    espec[a].resize(nx);
    xg.forward(em->E[a].data(), espec[a].data());
  }
  for (std::size_t m = 0; m < nx; ++m) {
    const auto xi = xg.mode_xi(m);
    const double kn = std::sqrt(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]);
    if (kn == 0.0) {
      for (int a = 0; a < 3; ++a) espec[a][m] -= total[a][m];
    } else {
      const std::array<double, 3> nh{xi[0] / kn, xi[1] / kn, xi[2] / kn};
      const cplx jl = total[0][m] * nh[0] + total[1][m] * nh[1] + total[2][m] * nh[2];
      for (int a = 0; a < 3; ++a) espec[a][m] -= jl * nh[a];
    }
  }
  for (int a = 0; a < 3; ++a) xg.inverse(espec[a].data(), em->E[a].data());
}

// One advection entry: -coeff * q0 (E + v x B) . (1/sqrt_mu) D_v (sqrt_mu g).
// The paired -1/2 E.v g term of the displays is absorbed by differentiating
// the sqrt_mu-weighted unknown, which also keeps the charge moments clean.
struct AdvectionSpec {
  const Field3* E = nullptr;
  const Field3* B = nullptr;               // spatially varying part, pre-scaled
  std::array<double, 3> B_const{0, 0, 0};  // constant part, pre-scaled
  double coeff = 1.0;
};

struct ForceSpec {
  const Field3* e_q1 = nullptr;  // + (E.v) sqrt_mu q1 production
  AdvectionSpec evolved;         // advection of the evolved unknown
  bool has_evolved = false;
  // frozen advection sources: pairs of (spec, target)
  std::vector<std::pair<AdvectionSpec, const PairDistribution*>> frozen;
};

void add_advection(const AdvectionSpec& a, const PairDistribution& g, PairDistribution& out) {
  const auto& vg = g.vgrid();
  const std::size_t nv = vg.size();
  const auto& sm = vg.sqrt_mu();
  const auto& ism = vg.inv_sqrt_mu();
  std::vector<double> weighted(nv), d0, d1, d2;
  for (int s = 0; s < 2; ++s) {
    const double q = (s == 0) ? 1.0 : -1.0;
    for (std::size_t ix = 0; ix < g.nx(); ++ix) {
      const double* gb = g.block(s, ix);
      for (std::size_t iv = 0; iv < nv; ++iv) weighted[iv] = sm[iv] * gb[iv];
      d0 = vg.derivative(weighted, 0, 1);
      d1 = vg.derivative(weighted, 1, 1);
      d2 = vg.derivative(weighted, 2, 1);
      const double Ex = a.E ? (*a.E)[0][ix] : 0.0;
      const double Ey = a.E ? (*a.E)[1][ix] : 0.0;
      const double Ez = a.E ? (*a.E)[2][ix] : 0.0;
      const double Bx = a.B_const[0] + (a.B ? (*a.B)[0][ix] : 0.0);
      const double By = a.B_const[1] + (a.B ? (*a.B)[1][ix] : 0.0);
      const double Bz = a.B_const[2] + (a.B ? (*a.B)[2][ix] : 0.0);
      double* ob = out.block(s, ix);
      for (std::size_t iv = 0; iv < nv; ++iv) {
        const auto v = vg.node(iv);
        const double ax = Ex + v[1] * Bz - v[2] * By;
        const double ay = Ey + v[2] * Bx - v[0] * Bz;
        const double az = Ez + v[0] * By - v[1] * Bx;
        ob[iv] -= a.coeff * q * (ax * d0[iv] + ay * d1[iv] + az * d2[iv]) * ism[iv];
      }
    }
  }
}

void add_production(const Field3& E, const PairDistribution& like, PairDistribution& out) {
  const auto& vg = like.vgrid();
  const std::size_t nv = vg.size();
  for (int s = 0; s < 2; ++s) {
    const double q = (s == 0) ? 1.0 : -1.0;
    for (std::size_t ix = 0; ix < like.nx(); ++ix) {
      const double Ex = E[0][ix], Ey = E[1][ix], Ez = E[2][ix];
      double* ob = out.block(s, ix);
      for (std::size_t iv = 0; iv < nv; ++iv) {
        const auto v = vg.node(iv);
        ob[iv] += q * (Ex * v[0] + Ey * v[1] + Ez * v[2]) * vg.sqrt_mu()[iv];
      }
    }
  }
}

void check_cfl(const ForceSpec& spec, const VelocityGrid& vg, const SpatialGrid& xg, double tau) {
  if (!spec.has_evolved) return;
  const auto& a = spec.evolved;
  double amax = 0.0;
  const double vdiag = std::sqrt(3.0) * vg.v_max();
  for (std::size_t ix = 0; ix < xg.size(); ++ix) {
    double e = 0.0, b = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double ec = a.E ? (*a.E)[c][ix] : 0.0;
      const double bc = a.B_const[c] + (a.B ? (*a.B)[c][ix] : 0.0);
      e += ec * ec;
      b += bc * bc;
    }
    amax = std::max(amax, a.coeff * (std::sqrt(e) + std::sqrt(b) * vdiag));
  }
  if (amax > 0.0 && tau > vg.dv() / amax)
    fail(Errc::numerical_abort, "CFL violation in force substep: dt = " + std::to_string(tau) +
                                    " exceeds bound dv/max|E + v x B| = " +
                                    std::to_string(vg.dv() / amax));
}

// Explicit midpoint step of df/dt = production + advection(f) + frozen.
void force_substep(PairDistribution& f, double tau, const ForceSpec& spec) {
  check_cfl(spec, f.vgrid(), f.xgrid(), tau);
  PairDistribution frozen(f.xgrid_ptr(), f.vgrid_ptr());
  if (spec.e_q1) add_production(*spec.e_q1, f, frozen);
  for (const auto& [a, target] : spec.frozen) add_advection(a, *target, frozen);

  PairDistribution r1 = frozen;
  if (spec.has_evolved) add_advection(spec.evolved, f, r1);
  PairDistribution f1 = f;
  f1.axpy(0.5 * tau, r1);
  PairDistribution r2 = frozen;
  if (spec.has_evolved) add_advection(spec.evolved, f1, r2);
  f.axpy(tau, r2);
}

using ExtraRhs = std::function<void(const PairDistribution& mid, PairDistribution& add)>;

// Collision substep for df/dt = -L f + extra(f). The stiff path applies
// exp(-L tau) exactly through the cached eigendecomposition (unconditionally
// stable, conserves the collision invariants to rounding); when a bilinear
// term is present, or stiff integration is off, an explicit midpoint rule is
// used instead (stable for dt below ~2/nu_max).
void collision_substep(PairDistribution& f, double tau, const Operators& ops,
                       const SolverConfig& cfg, const ExtraRhs& extra) {
  if (cfg.stiff_collision && !extra) {
    PairDistribution out(f.xgrid_ptr(), f.vgrid_ptr());
    ops.lin->apply_exp(f, tau, out);
    f.data().swap(out.data());
    return;
  }
  auto rhs_of = [&](const PairDistribution& g) {
    PairDistribution r(f.xgrid_ptr(), f.vgrid_ptr());
    ops.lin->apply(g, r);
    r.scale(-1.0);
    if (extra) extra(g, r);
    return r;
  };
  PairDistribution r1 = rhs_of(f);
  PairDistribution f1 = f;
  f1.axpy(0.5 * tau, r1);
  PairDistribution r2 = rhs_of(f1);
  f.axpy(tau, r2);
}

// Feed the realized charge change of a non-transport substep back into the
// longitudinal electric field (rounding-level numerical currents included).
void slave_longitudinal(EMState& em, const std::vector<double>& rho_before,
                        const PairDistribution& f) {
  const auto rho_after = charge_density(f);
  std::vector<double> delta(rho_after.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = rho_after[i] - rho_before[i];
  const Field3 de = poisson_field_centered(*em.grid, delta);
  for (int a = 0; a < 3; ++a)
    for (std::size_t i = 0; i < delta.size(); ++i) em.E[a][i] += de[a][i];
}

Field3 scaled_field(const Field3& f, double c) {
  Field3 out = f;
  for (auto& comp : out)
    for (auto& v : comp) v *= c;
  return out;
}

ExtraRhs vmb_gamma_extra(const Operators& ops, const SolverConfig& cfg) {
  if (cfg.collision_mode != CollisionMode::full_bilinear) return nullptr;
  return [&ops](const PairDistribution& mid, PairDistribution& add) {
    add.axpy(1.0, gamma_bilinear(mid, mid, ops.model));
  };
}

}  // namespace

void step_vmb(VMBState& s, const Operators& ops, const SolverConfig& cfg) {
  cfg.validate();
  const double dt = cfg.dt;
  const bool strang = cfg.splitting == Splitting::strang;
  const double h = strang ? 0.5 * dt : dt;
  const ExtraRhs extra = vmb_gamma_extra(ops, cfg);

  auto do_transport = [&]() {
    transport_substep(s.f, h, &s.em);
    if (cfg.check_finite) check_finite(s.f, "transport");
  };
  auto do_force = [&]() {
    ForceSpec spec;
    spec.e_q1 = &s.em.E;
    const Field3 beps = scaled_field(s.em.B_tilde, s.em.epsilon);
    spec.evolved.E = &s.em.E;
    spec.evolved.B = &beps;
    for (int a = 0; a < 3; ++a) spec.evolved.B_const[a] = s.em.epsilon * s.em.B_background[a];
    spec.has_evolved = true;
    const auto rho0 = charge_density(s.f);
    force_substep(s.f, h, spec);
    slave_longitudinal(s.em, rho0, s.f);
    if (cfg.check_finite) check_finite(s.f, "force");
  };
  auto do_collision = [&]() {
    const auto rho0 = charge_density(s.f);
    collision_substep(s.f, h, ops, cfg, extra);
    slave_longitudinal(s.em, rho0, s.f);
    if (cfg.check_finite) check_finite(s.f, "collision");
  };
  auto do_maxwell = [&]() {
    const Field3 j = current_density(s.f);
    maxwell_substep(s.em, j, dt, /*longitudinal_source=*/false);
    if (cfg.check_finite && !s.em.all_finite()) fail(Errc::numerical_abort, "NaN detected after substep maxwell");
  };

  do_transport();
  do_force();
  do_collision();
  do_maxwell();
  if (strang) {
    do_collision();
    do_force();
    do_transport();
  }
  s.t += dt;
  s.step += 1;
}

namespace {

void vpb_closure(VPBState& s) {
  s.E = poisson_field_centered(*s.f.xgrid_ptr(), charge_density(s.f));
}

}  // namespace

void step_vpb(VPBState& s, const Operators& ops, const SolverConfig& cfg) {
  cfg.validate();
  const double dt = cfg.dt;
  const bool strang = cfg.splitting == Splitting::strang;
  const double h = strang ? 0.5 * dt : dt;
  const ExtraRhs extra = vmb_gamma_extra(ops, cfg);
  const Field3 e_start = s.E;

  auto do_transport = [&]() {
    transport_substep(s.f, h, nullptr);
    vpb_closure(s);
    if (cfg.check_finite) check_finite(s.f, "transport");
  };
  auto do_force = [&]() {
    ForceSpec spec;
    spec.e_q1 = &s.E;
    spec.evolved.E = &s.E;
    for (int a = 0; a < 3; ++a) spec.evolved.B_const[a] = s.epsilon * s.B_eff[a];
    spec.has_evolved = true;
    force_substep(s.f, h, spec);
    vpb_closure(s);
    if (cfg.check_finite) check_finite(s.f, "force");
  };
  auto do_collision = [&]() {
    collision_substep(s.f, h, ops, cfg, extra);
    if (cfg.check_finite) check_finite(s.f, "collision");
  };

  do_transport();
  do_force();
  do_collision();
  const Field3 j_mid = current_density(s.f);  // midpoint current for the dE/dt monitor
  if (strang) {
    do_collision();
    do_force();
    do_transport();
  }

  double acc = 0.0;
  for (int a = 0; a < 3; ++a)
    for (std::size_t i = 0; i < s.E[a].size(); ++i) {
      const double r = (s.E[a][i] - e_start[a][i]) / dt + j_mid[a][i];
      acc += r * r;
    }
  s.dtE_residual = std::sqrt(acc * s.f.xgrid().cell_volume());

  s.t += dt;
  s.step += 1;
}

CascadeState::CascadeState(std::shared_ptr<const SpatialGrid> xg,
                           std::shared_ptr<const VelocityGrid> vg, double eps, int order)
    : m(order), epsilon(eps), leader(xg, vg), remainder(xg, vg, eps) {
  if (order < 1) fail(Errc::invalid_config, "cascade: expansion order must be >= 1");
  leader.epsilon = eps;
  for (int i = 1; i < order; ++i) {
    f_i.emplace_back(xg, vg);
    E_i.push_back(make_field3(*xg));
    B_i.push_back({0.0, 0.0, 0.0});
    level_step.push_back(0);
  }
}

namespace {

PairDistribution midpoint(const PairDistribution& a, const PairDistribution& b) {
  PairDistribution out = a;
  out.scale(0.5);
  out.axpy(0.5, b);
  return out;
}

Field3 midpoint(const Field3& a, const Field3& b, const SpatialGrid& g) {
  Field3 out = make_field3(g);
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < g.size(); ++i) out[c][i] = 0.5 * (a[c][i] + b[c][i]);
  return out;
}

}  // namespace

std::array<double, 3> cascade_effective_b(const CascadeState& c) {
  std::array<double, 3> b = c.B_P;
  double ep = 1.0;
  for (std::size_t j = 0; j < c.B_i.size(); ++j) {
    ep *= c.epsilon;
    for (int a = 0; a < 3; ++a) b[a] += ep * c.B_i[j][a];
  }
  return b;
}

void step_cascade_linear(int i, CascadeState& c, const VPBState& leader_old, const Operators& ops,
                         const SolverConfig& cfg) {
  if (i < 1 || i >= c.m) fail(Errc::bad_argument, "cascade level index out of range");
  const std::size_t k = static_cast<std::size_t>(i - 1);
  if (c.leader.step != c.level_step[k] + 1)
    fail(Errc::bad_argument, "cascade level " + std::to_string(i) +
                                 " stepped out of order: leader has not advanced");
  for (std::size_t j = 0; j + 1 < k + 1; ++j)
    if (c.level_step[j] != c.level_step[k] + 1)
      fail(Errc::bad_argument, "cascade level " + std::to_string(i) +
                                   " stepped out of order: lower level lags");

  const auto xg = c.leader.f.xgrid_ptr();
  const double dt = cfg.dt;
  const bool strang = cfg.splitting == Splitting::strang;
  const double h = strang ? 0.5 * dt : dt;

  const PairDistribution fP_mid = midpoint(leader_old.f, c.leader.f);
  const Field3 eP_mid = midpoint(leader_old.E, c.leader.E, *xg);

  PairDistribution& f = c.f_i[k];
  Field3& E = c.E_i[k];

  auto closure = [&]() { E = poisson_field_centered(*xg, charge_density(f)); };

  auto do_transport = [&]() {
    transport_substep(f, h, nullptr);
    closure();
    if (cfg.check_finite) check_finite(f, "transport");
  };
  auto do_force = [&]() {
    ForceSpec spec;
    spec.e_q1 = &E;
    spec.evolved.E = &eP_mid;  // q0 E_P . grad_v f_i with its -E_P.v f_i/2 partner
    const auto beff = cascade_effective_b(c);
    for (int a = 0; a < 3; ++a) spec.evolved.B_const[a] = c.epsilon * beff[a];
    spec.has_evolved = true;
    AdvectionSpec on_leader;  // q0 E_i . grad_v f_P pair
    on_leader.E = &E;
    spec.frozen.push_back({on_leader, &fP_mid});
    // convolution sums are empty below order 3; kept for completeness
    for (int j1 = 1; j1 < i; ++j1) {
      const int j2 = i - j1;
      if (j2 < 1 || j2 >= i) continue;
      AdvectionSpec conv;
      conv.E = &c.E_i[static_cast<std::size_t>(j1 - 1)];
      spec.frozen.push_back({conv, &c.f_i[static_cast<std::size_t>(j2 - 1)]});
    }
    force_substep(f, h, spec);
    closure();
    if (cfg.check_finite) check_finite(f, "force");
  };
  ExtraRhs extra;
  if (cfg.collision_mode == CollisionMode::full_bilinear) {
    extra = [&](const PairDistribution& mid, PairDistribution& add) {
      add.axpy(1.0, gamma_bilinear(fP_mid, mid, ops.model));
      add.axpy(1.0, gamma_bilinear(mid, fP_mid, ops.model));
      for (int j1 = 1; j1 < i; ++j1) {
        const int j2 = i - j1;
        if (j2 < 1 || j2 >= i) continue;
        add.axpy(1.0, gamma_bilinear(c.f_i[static_cast<std::size_t>(j1 - 1)],
                                     c.f_i[static_cast<std::size_t>(j2 - 1)], ops.model));
      }
    };
  }
  auto do_collision = [&]() {
    collision_substep(f, h, ops, cfg, extra);
    if (cfg.check_finite) check_finite(f, "collision");
  };

  do_transport();
  do_force();
  do_collision();
  if (strang) {
    do_collision();
    do_force();
    do_transport();
  }
  c.level_step[k] += 1;
}

void step_remainder(CascadeState& c, const VPBState& leader_old,
                    const std::vector<PairDistribution>& f_i_old,
                    const std::vector<Field3>& E_i_old, const Operators& ops,
                    const SolverConfig& cfg) {
  if (c.leader.step != c.remainder.step + 1)
    fail(Errc::bad_argument, "remainder stepped out of order: leader has not advanced");
  for (std::size_t k = 0; k < c.level_step.size(); ++k)
    if (c.level_step[k] != c.remainder.step + 1)
      fail(Errc::bad_argument, "remainder stepped out of order: level " + std::to_string(k + 1) +
                                   " lags");

  const auto xg = c.leader.f.xgrid_ptr();
  const double dt = cfg.dt;
  const bool strang = cfg.splitting == Splitting::strang;
  const double h = strang ? 0.5 * dt : dt;
  const double eps = c.epsilon;
  const int m = c.m;

  const PairDistribution fP_mid = midpoint(leader_old.f, c.leader.f);
  const Field3 eP_mid = midpoint(leader_old.E, c.leader.E, *xg);
  std::vector<PairDistribution> fi_mid;
  std::vector<Field3> ei_mid;
  for (std::size_t k = 0; k < c.f_i.size(); ++k) {
    fi_mid.push_back(midpoint(f_i_old[k], c.f_i[k]));
    ei_mid.push_back(midpoint(E_i_old[k], c.E_i[k], *xg));
  }

  VMBState& r = c.remainder;
  PairDistribution& f = r.f;

  // f_P + sum eps^i f_i, the target of the eps (v x B_m) source term
  PairDistribution lower_sum = fP_mid;
  {
    double ep = 1.0;
    for (std::size_t k = 0; k < fi_mid.size(); ++k) {
      ep *= eps;
      lower_sum.axpy(ep, fi_mid[k]);
    }
  }

  const double eps_m = std::pow(eps, m);

  auto do_transport = [&]() {
    transport_substep(f, h, &r.em);
    if (cfg.check_finite) check_finite(f, "transport");
  };
  auto do_force = [&]() {
    // combined advection field on f_m: E_P + sum eps^j E_j + eps^m E_m,
    // magnetic eps (B_P + sum eps^i B_i) + eps^{m+1} B_m(x)
    Field3 advE = make_field3(*xg);
    for (int a = 0; a < 3; ++a)
      for (std::size_t ix = 0; ix < xg->size(); ++ix) {
        double v = eP_mid[a][ix] + eps_m * r.em.E[a][ix];
        double ep = 1.0;
        for (std::size_t k = 0; k < ei_mid.size(); ++k) {
          ep *= eps;
          v += ep * ei_mid[k][a][ix];
        }
        advE[a][ix] = v;
      }
    const Field3 advB = scaled_field(r.em.B_tilde, std::pow(eps, m + 1));
    ForceSpec spec;
    spec.e_q1 = &r.em.E;
    spec.evolved.E = &advE;
    spec.evolved.B = &advB;
    const auto beff = cascade_effective_b(c);
    for (int a = 0; a < 3; ++a) spec.evolved.B_const[a] = eps * beff[a];
    spec.has_evolved = true;

    AdvectionSpec em_on_leader;  // q0 E_m . grad_v f_P
    em_on_leader.E = &r.em.E;
    spec.frozen.push_back({em_on_leader, &fP_mid});
    for (std::size_t k = 0; k < fi_mid.size(); ++k) {  // eps^j E_m . grad_v f_j
      AdvectionSpec a;
      a.E = &r.em.E;
      a.coeff = std::pow(eps, static_cast<int>(k + 1));
      spec.frozen.push_back({a, &fi_mid[k]});
    }
    // the eps^{j1} E_{j1} advections of f_m itself are already inside advE;
    // cross pairs j1 + j2 >= m with both indices < m enter as frozen sources
    for (int j1 = 1; j1 < m; ++j1)
      for (int j2 = 1; j2 < m; ++j2) {
        if (j1 + j2 < m) continue;
        AdvectionSpec a;
        a.E = &ei_mid[static_cast<std::size_t>(j1 - 1)];
        a.coeff = std::pow(eps, j1 + j2 - m);
        spec.frozen.push_back({a, &fi_mid[static_cast<std::size_t>(j2 - 1)]});
      }
    AdvectionSpec bm_on_lower;  // eps q0 (v x B_m) . grad_v {f_P + sum eps^i f_i}
    bm_on_lower.B = &r.em.B_tilde;
    bm_on_lower.coeff = eps;
    spec.frozen.push_back({bm_on_lower, &lower_sum});

    const auto rho0 = charge_density(f);
    force_substep(f, h, spec);
    slave_longitudinal(r.em, rho0, f);
    if (cfg.check_finite) check_finite(f, "force");
  };
  ExtraRhs extra;
  if (cfg.collision_mode == CollisionMode::full_bilinear) {
    extra = [&](const PairDistribution& mid, PairDistribution& add) {
      add.axpy(1.0, gamma_bilinear(fP_mid, mid, ops.model));
      add.axpy(1.0, gamma_bilinear(mid, fP_mid, ops.model));
      add.axpy(eps_m, gamma_bilinear(mid, mid, ops.model));
      // pairs (j1, j2) <= m with j1 + j2 >= m, excluding (m, m)
      for (int j1 = 1; j1 < m; ++j1) {
        const double w = std::pow(eps, j1);
        add.axpy(w, gamma_bilinear(fi_mid[static_cast<std::size_t>(j1 - 1)], mid, ops.model));
        add.axpy(w, gamma_bilinear(mid, fi_mid[static_cast<std::size_t>(j1 - 1)], ops.model));
        for (int j2 = 1; j2 < m; ++j2) {
          if (j1 + j2 < m) continue;
          add.axpy(std::pow(eps, j1 + j2 - m),
                   gamma_bilinear(fi_mid[static_cast<std::size_t>(j1 - 1)],
                                  fi_mid[static_cast<std::size_t>(j2 - 1)], ops.model));
        }
      }
    };
  }
  auto do_collision = [&]() {
    const auto rho0 = charge_density(f);
    collision_substep(f, h, ops, cfg, extra);
    slave_longitudinal(r.em, rho0, f);
    if (cfg.check_finite) check_finite(f, "collision");
  };
  auto do_maxwell = [&]() {
    const Field3 j = current_density(f);
    maxwell_substep(r.em, j, dt, /*longitudinal_source=*/false);
    if (cfg.check_finite && !r.em.all_finite())
      fail(Errc::numerical_abort, "NaN detected after substep maxwell");
  };

  do_transport();
  do_force();
  do_collision();
  do_maxwell();
  if (strang) {
    do_collision();
    do_force();
    do_transport();
  }
  r.t += dt;
  r.step += 1;
}

void step_cascade(CascadeState& c, const Operators& ops, const SolverConfig& cfg) {
  const VPBState leader_old = c.leader;
  c.leader.B_eff = cascade_effective_b(c);
  step_vpb(c.leader, ops, cfg);
  std::vector<PairDistribution> f_i_old;
  std::vector<Field3> E_i_old;
  for (std::size_t k = 0; k < c.f_i.size(); ++k) {
    f_i_old.push_back(c.f_i[k]);
    E_i_old.push_back(c.E_i[k]);
  }
  for (int i = 1; i < c.m; ++i) step_cascade_linear(i, c, leader_old, ops, cfg);
  step_remainder(c, leader_old, f_i_old, E_i_old, ops, cfg);
  c.t += cfg.dt;
  c.step += 1;
}

namespace {

long step_count(const SolverConfig& cfg) {
  return static_cast<long>(std::llround(cfg.t_end / cfg.dt));
}

}  // namespace

void run_vmb(VMBState& s, const Operators& ops, const SolverConfig& cfg,
             const std::function<void(const VMBState&)>& on_record) {
  cfg.validate();
  const long n = step_count(cfg);
  if (on_record) on_record(s);
  for (long i = 1; i <= n; ++i) {
    step_vmb(s, ops, cfg);
    if (on_record && i % cfg.recorder_cadence == 0) on_record(s);
  }
}

void run_vpb(VPBState& s, const Operators& ops, const SolverConfig& cfg,
             const std::function<void(const VPBState&)>& on_record) {
  cfg.validate();
  const long n = step_count(cfg);
  if (on_record) on_record(s);
  for (long i = 1; i <= n; ++i) {
    step_vpb(s, ops, cfg);
    if (on_record && i % cfg.recorder_cadence == 0) on_record(s);
  }
}

void run_cascade(CascadeState& c, const Operators& ops, const SolverConfig& cfg,
                 const std::function<void(const CascadeState&)>& on_record) {
  cfg.validate();
  const long n = step_count(cfg);
  if (on_record) on_record(c);
  for (long i = 1; i <= n; ++i) {
    step_cascade(c, ops, cfg);
    if (on_record && i % cfg.recorder_cadence == 0) on_record(c);
  }
}

}  // namespace vmb
