#include "vmb/macro.hpp"

#include <cmath>

namespace vmb {

MacroProjector::MacroProjector(std::shared_ptr<const VelocityGrid> grid) : grid_(std::move(grid)) {
  const std::size_t n = grid_->size();
  basis_plus_.setZero(n, 6);
  basis_minus_.setZero(n, 6);
  const auto& sm = grid_->sqrt_mu();
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = grid_->node(i);
    const double e = v[0] * v[0] + v[1] * v[1] + v[2] * v[2] - 3.0;
    basis_plus_(i, 0) = sm[i];
    basis_minus_(i, 1) = sm[i];
    for (int a = 0; a < 3; ++a) {
      basis_plus_(i, 2 + a) = v[a] * sm[i];
      basis_minus_(i, 2 + a) = v[a] * sm[i];
    }
    basis_plus_(i, 5) = e * sm[i];
    basis_minus_(i, 5) = e * sm[i];
  }
  const double vol = grid_->cell_volume();
  Eigen::MatrixXd gram =
      vol * (basis_plus_.transpose() * basis_plus_ + basis_minus_.transpose() * basis_minus_);
  gram_inv_ = gram.inverse();
}

std::array<double, 6> MacroProjector::block_coefficients(const double* gp, const double* gm) const {
  const std::size_t n = grid_->size();
  Eigen::Map<const Eigen::VectorXd> vp(gp, n), vm(gm, n);
  Eigen::Matrix<double, 6, 1> mom =
      grid_->cell_volume() * (basis_plus_.transpose() * vp + basis_minus_.transpose() * vm);
  Eigen::Matrix<double, 6, 1> c = gram_inv_ * mom;
  return {c[0], c[1], c[2], c[3], c[4], c[5]};
}

void MacroProjector::block_reconstruct(const std::array<double, 6>& c, double* gp,
                                       double* gm) const {
  const std::size_t n = grid_->size();
  Eigen::Map<const Eigen::Matrix<double, 6, 1>> cv(c.data());
  Eigen::Map<Eigen::VectorXd>(gp, n) = basis_plus_ * cv;
  Eigen::Map<Eigen::VectorXd>(gm, n) = basis_minus_ * cv;
}

MacroState MacroProjector::coefficients(const PairDistribution& g) const {
  MacroState m;
  const std::size_t nx = g.nx();
  m.a_plus.resize(nx);
  m.a_minus.resize(nx);
  m.c.resize(nx);
  for (auto& comp : m.b) comp.resize(nx);
  for (std::size_t ix = 0; ix < nx; ++ix) {
    const auto c = block_coefficients(g.block(0, ix), g.block(1, ix));
    m.a_plus[ix] = c[0];
    m.a_minus[ix] = c[1];
    for (int a = 0; a < 3; ++a) m.b[a][ix] = c[2 + a];
    m.c[ix] = c[5];
  }
  return m;
}

void MacroProjector::reconstruct(const MacroState& m, PairDistribution& out) const {
  for (std::size_t ix = 0; ix < out.nx(); ++ix) {
    const std::array<double, 6> c{m.a_plus[ix], m.a_minus[ix], m.b[0][ix],
                                  m.b[1][ix],   m.b[2][ix],   m.c[ix]};
    block_reconstruct(c, out.block(0, ix), out.block(1, ix));
  }
}

PairDistribution MacroProjector::project(const PairDistribution& g) const {
  PairDistribution out(g.xgrid_ptr(), g.vgrid_ptr());
  for (std::size_t ix = 0; ix < g.nx(); ++ix) {
    const auto c = block_coefficients(g.block(0, ix), g.block(1, ix));
    block_reconstruct(c, out.block(0, ix), out.block(1, ix));
  }
  return out;
}

PairDistribution MacroProjector::micro(const PairDistribution& g) const {
  PairDistribution out = project(g);
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = g.data()[i] - out.data()[i];
  return out;
}

std::array<double, 9> moment_A(const VelocityGrid& grid, const double* g) {
  std::array<double, 9> out{};
  const auto& sm = grid.sqrt_mu();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto v = grid.node(i);
    const double w = sm[i] * g[i];
    for (int m = 0; m < 3; ++m)
      for (int j = 0; j < 3; ++j) out[m * 3 + j] += (v[m] * v[j] - 1.0) * w;
  }
  for (auto& x : out) x *= grid.cell_volume();
  return out;
}

std::array<double, 3> moment_B(const VelocityGrid& grid, const double* g) {
  std::array<double, 3> out{};
  const auto& sm = grid.sqrt_mu();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto v = grid.node(i);
    const double vsq = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    const double w = 0.1 * (vsq - 5.0) * sm[i] * g[i];
    for (int j = 0; j < 3; ++j) out[j] += v[j] * w;
  }
  for (auto& x : out) x *= grid.cell_volume();
  return out;
}

Field3 moment_G(const PairDistribution& f, const MacroProjector& proj) {
  const PairDistribution m = proj.micro(f);
  return current_density(m);
}

namespace {

PairDistribution average(const PairDistribution& a, const PairDistribution& b) {
  PairDistribution out(a.xgrid_ptr(), a.vgrid_ptr());
  for (std::size_t i = 0; i < out.data().size(); ++i)
    out.data()[i] = 0.5 * (a.data()[i] + b.data()[i]);
  return out;
}

double l2(const SpatialGrid& g, const std::vector<double>& f) {
  double s = 0.0;
  for (double v : f) s += v * v;
  return std::sqrt(s * g.cell_volume());
}

}  // namespace

MacroResiduals macro_residuals(const PairDistribution& f0, const EMState& em0,
                               const PairDistribution& f1, const EMState& em1, double dt,
                               const MacroProjector& proj, const LinearizedOperator& lop,
                               const KernelModel* gamma_model) {
  if (dt <= 0.0) fail(Errc::bad_argument, "macro_residuals: dt must be positive");
  f0.require_same_grids(f1);
  const auto& xg = f0.xgrid();
  const auto& vg = f0.vgrid();
  const std::size_t nx = f0.nx();
  const int dim = xg.dim();
  const double eps = em0.epsilon;

  const MacroState m0 = proj.coefficients(f0);
  const MacroState m1 = proj.coefficients(f1);
  const PairDistribution micro0 = proj.micro(f0);
  const PairDistribution micro1 = proj.micro(f1);

  // midpoint state for every non-time-derivative term
  const PairDistribution fm = average(f0, f1);
  const PairDistribution microm = proj.micro(fm);
  const MacroState mm = proj.coefficients(fm);
  EMState emm = em0;
  for (int a = 0; a < 3; ++a)
    for (std::size_t i = 0; i < nx; ++i) {
      emm.E[a][i] = 0.5 * (em0.E[a][i] + em1.E[a][i]);
      emm.B_tilde[a][i] = 0.5 * (em0.B_tilde[a][i] + em1.B_tilde[a][i]);
    }

  const Field3 G0 = moment_G(f0, proj);
  const Field3 G1 = moment_G(f1, proj);
  const Field3 Gm = moment_G(fm, proj);

  PairDistribution lf(f0.xgrid_ptr(), f0.vgrid_ptr());
  lop.apply(fm, lf);
  PairDistribution gamma(f0.xgrid_ptr(), f0.vgrid_ptr());
  if (gamma_model) gamma = gamma_bilinear(fm, fm, *gamma_model);

  auto ddt = [&](const std::vector<double>& x0, const std::vector<double>& x1, std::size_t i) {
    return (x1[i] - x0[i]) / dt;
  };

  // spatial derivative of a per-x scalar produced by a velocity moment
  auto deriv = [&](const std::vector<double>& field, int axis) {
    return xg.derivative(field, axis, 1);
  };

  MacroResiduals res;

  {  // continuity and charge
    std::vector<double> r_cont(nx), r_chg(nx);
    std::vector<double> divb(nx, 0.0), divG(nx, 0.0);
    for (int a = 0; a < dim; ++a) {
      const auto db = deriv(mm.b[a], a);
      const auto dg = deriv(Gm[a], a);
      for (std::size_t i = 0; i < nx; ++i) {
        divb[i] += db[i];
        divG[i] += dg[i];
      }
    }
    for (std::size_t i = 0; i < nx; ++i) {
      r_cont[i] = 0.5 * (ddt(m0.a_plus, m1.a_plus, i) + ddt(m0.a_minus, m1.a_minus, i)) + divb[i];
      r_chg[i] = (ddt(m0.a_plus, m1.a_plus, i) - ddt(m0.a_minus, m1.a_minus, i)) + divG[i];
    }
    res.continuity = l2(xg, r_cont);
    res.charge = l2(xg, r_chg);
  }

  // per-x moment tables of the midpoint micro part
  std::vector<std::array<double, 9>> A_sum(nx), A_diff(nx), A_sum0(nx), A_sum1(nx);
  std::vector<std::array<double, 3>> B_sum(nx), B_sum0(nx), B_sum1(nx);
  std::vector<double> blk(vg.size());
  auto fill_tables = [&](const PairDistribution& micro, std::vector<std::array<double, 9>>& As,
                         std::vector<std::array<double, 3>>& Bs) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const double* p = micro.block(0, ix);
      const double* m = micro.block(1, ix);
      for (std::size_t iv = 0; iv < vg.size(); ++iv) blk[iv] = p[iv] + m[iv];
      As[ix] = moment_A(vg, blk.data());
      Bs[ix] = moment_B(vg, blk.data());
    }
  };
  fill_tables(microm, A_sum, B_sum);
  fill_tables(micro0, A_sum0, B_sum0);
  fill_tables(micro1, A_sum1, B_sum1);
  for (std::size_t ix = 0; ix < nx; ++ix) {
    const double* p = microm.block(0, ix);
    const double* m = microm.block(1, ix);
    for (std::size_t iv = 0; iv < vg.size(); ++iv) blk[iv] = p[iv] - m[iv];
    A_diff[ix] = moment_A(vg, blk.data());
  }

  auto col = [&](const std::vector<std::array<double, 9>>& t, int m, int j) {
    std::vector<double> out(nx);
    for (std::size_t i = 0; i < nx; ++i) out[i] = t[i][m * 3 + j];
    return out;
  };
  auto colB = [&](const std::vector<std::array<double, 3>>& t, int j) {
    std::vector<double> out(nx);
    for (std::size_t i = 0; i < nx; ++i) out[i] = t[i][j];
    return out;
  };

  {  // momentum (b) equation
    double acc = 0.0;
    std::vector<double> asum_half(nx), divb(nx, 0.0);
    for (std::size_t i = 0; i < nx; ++i)
      asum_half[i] = 0.5 * (mm.a_plus[i] + mm.a_minus[i]) + 2.0 * mm.c[i];
    for (int i = 0; i < 3; ++i) {
      std::vector<double> r(nx, 0.0);
      for (std::size_t k = 0; k < nx; ++k) r[k] = ddt(m0.b[i], m1.b[i], k);
      if (i < dim) {
        const auto dp = deriv(asum_half, i);
        for (std::size_t k = 0; k < nx; ++k) r[k] += dp[k];
      }
      for (int j = 0; j < dim; ++j) {
        const auto da = deriv(col(A_sum, i, j), j);
        for (std::size_t k = 0; k < nx; ++k) r[k] += 0.5 * da[k];
      }
      for (std::size_t k = 0; k < nx; ++k) {
        const double gxB =
            Gm[(i + 1) % 3][k] * emm.B_tilde[(i + 2) % 3][k] - Gm[(i + 2) % 3][k] * emm.B_tilde[(i + 1) % 3][k];
        const double gxBc = Gm[(i + 1) % 3][k] * emm.B_background[(i + 2) % 3] -
                            Gm[(i + 2) % 3][k] * emm.B_background[(i + 1) % 3];
        r[k] -= 0.5 * (mm.a_plus[k] - mm.a_minus[k]) * emm.E[i][k];
        r[k] -= eps * (gxBc + gxB);
      }
      const double n = l2(xg, r);
      acc += n * n;
    }
    res.momentum = std::sqrt(acc);
  }

  {  // temperature (c) equation
    std::vector<double> r(nx, 0.0);
    for (std::size_t k = 0; k < nx; ++k) r[k] = ddt(m0.c, m1.c, k);
    for (int a = 0; a < dim; ++a) {
      const auto db = deriv(mm.b[a], a);
      const auto dB = deriv(colB(B_sum, a), a);
      for (std::size_t k = 0; k < nx; ++k) r[k] += db[k] / 3.0 + (5.0 / 6.0) * dB[k];
    }
    for (std::size_t k = 0; k < nx; ++k) {
      double ge = 0.0;
      for (int a = 0; a < 3; ++a) ge += Gm[a][k] * emm.E[a][k];
      r[k] -= ge / 6.0;
    }
    res.temperature = l2(xg, r);
  }

  {  // current (G) equation; the collision term enters as derived from the
     // moment of the evolution equation: +<v mu^{1/2}, q1 . (Lf - Gamma)>
    std::vector<double> adiff(nx);
    for (std::size_t k = 0; k < nx; ++k) adiff[k] = mm.a_plus[k] - mm.a_minus[k];
    double acc = 0.0;
    const Field3 lmom = current_density(lf);
    Field3 gmom = make_field3(xg);
    if (gamma_model) gmom = current_density(gamma);
    for (int i = 0; i < 3; ++i) {
      std::vector<double> r(nx, 0.0);
      for (std::size_t k = 0; k < nx; ++k) r[k] = (G1[i][k] - G0[i][k]) / dt;
      if (i < dim) {
        const auto dp = deriv(adiff, i);
        for (std::size_t k = 0; k < nx; ++k) r[k] += dp[k];
      }
      for (int j = 0; j < dim; ++j) {
        const auto da = deriv(col(A_diff, i, j), j);
        for (std::size_t k = 0; k < nx; ++k) r[k] += da[k];
      }
      for (std::size_t k = 0; k < nx; ++k) {
        const double bxBc = mm.b[(i + 1) % 3][k] * emm.B_background[(i + 2) % 3] -
                            mm.b[(i + 2) % 3][k] * emm.B_background[(i + 1) % 3];
        const double bxB = mm.b[(i + 1) % 3][k] * emm.B_tilde[(i + 2) % 3][k] -
                           mm.b[(i + 2) % 3][k] * emm.B_tilde[(i + 1) % 3][k];
        r[k] += -2.0 * emm.E[i][k] - emm.E[i][k] * (mm.a_plus[k] + mm.a_minus[k]) -
                2.0 * eps * (bxBc + bxB) + lmom[i][k] - gmom[i][k];
      }
      const double n = l2(xg, r);
      acc += n * n;
    }
    res.current = std::sqrt(acc);
  }

  {  // stress and heat-flux identities need r_pm + g_pm of the midpoint state
    PairDistribution rg(f0.xgrid_ptr(), f0.vgrid_ptr());
    // -v . grad_x micro
    for (int a = 0; a < dim; ++a) {
      const PairDistribution dmicro = x_derivative(microm, a, 1);
      for (int s = 0; s < 2; ++s)
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const double* d = dmicro.block(s, ix);
          double* o = rg.block(s, ix);
          for (std::size_t iv = 0; iv < vg.size(); ++iv) {
            const auto v = vg.node(iv);
            o[iv] -= v[a] * d[iv];
          }
        }
    }
    rg.axpy(-1.0, lf);
    if (gamma_model) rg.axpy(1.0, gamma);
    // field terms of g_pm
    std::array<PairDistribution, 3> dv{PairDistribution(f0.xgrid_ptr(), f0.vgrid_ptr()),
                                       PairDistribution(f0.xgrid_ptr(), f0.vgrid_ptr()),
                                       PairDistribution(f0.xgrid_ptr(), f0.vgrid_ptr())};
    for (int a = 0; a < 3; ++a) dv[a] = v_derivative(fm, a, 1);
    for (int s = 0; s < 2; ++s) {
      const double q = (s == 0) ? 1.0 : -1.0;
      for (std::size_t ix = 0; ix < nx; ++ix) {
        double* o = rg.block(s, ix);
        const double* f = fm.block(s, ix);
        const double Bx = emm.B_background[0] + emm.B_tilde[0][ix];
        const double By = emm.B_background[1] + emm.B_tilde[1][ix];
        const double Bz = emm.B_background[2] + emm.B_tilde[2][ix];
        for (std::size_t iv = 0; iv < vg.size(); ++iv) {
          const auto v = vg.node(iv);
          double ev = 0.0, edv = 0.0;
          for (int a = 0; a < 3; ++a) {
            ev += emm.E[a][ix] * v[a];
            edv += emm.E[a][ix] * dv[a].block(s, ix)[iv];
          }
          const double vxb_dot = (v[1] * Bz - v[2] * By) * dv[0].block(s, ix)[iv] +
                                 (v[2] * Bx - v[0] * Bz) * dv[1].block(s, ix)[iv] +
                                 (v[0] * By - v[1] * Bx) * dv[2].block(s, ix)[iv];
          o[iv] += q * (0.5 * ev * f[iv] - edv - eps * vxb_dot);
        }
      }
    }
    // moments of r+ + r- + g+ + g-
    double acc_s = 0.0, acc_h = 0.0;
    std::vector<std::array<double, 9>> A_rg(nx);
    std::vector<std::array<double, 3>> B_rg(nx);
    fill_tables(rg, A_rg, B_rg);
    for (int i = 0; i < 3; ++i) {
      for (int j = i; j < 3; ++j) {
        std::vector<double> r(nx, 0.0);
        for (std::size_t k = 0; k < nx; ++k)
          r[k] = 0.5 * (A_sum1[k][i * 3 + j] - A_sum0[k][i * 3 + j]) / dt - 0.5 * A_rg[k][i * 3 + j];
        if (j < dim) {
          const auto d = deriv(mm.b[i], j);
          for (std::size_t k = 0; k < nx; ++k) r[k] += d[k];
        }
        if (i < dim) {
          const auto d = deriv(mm.b[j], i);
          for (std::size_t k = 0; k < nx; ++k) r[k] += d[k];
        }
        if (i == j) {
          std::vector<double> divb(nx, 0.0), divB(nx, 0.0);
          for (int a = 0; a < dim; ++a) {
            const auto db = deriv(mm.b[a], a);
            const auto dB = deriv(colB(B_sum, a), a);
            for (std::size_t k = 0; k < nx; ++k) {
              divb[k] += db[k];
              divB[k] += dB[k];
            }
          }
          for (std::size_t k = 0; k < nx; ++k) {
            double ge = 0.0;
            for (int a = 0; a < 3; ++a) ge += Gm[a][k] * emm.E[a][k];
            r[k] += -(2.0 / 3.0) * divb[k] - (5.0 / 3.0) * divB[k] + ge / 3.0;
          }
        }
        const double nn = l2(xg, r);
        acc_s += (i == j ? 1.0 : 2.0) * nn * nn;
      }
    }
    for (int j = 0; j < 3; ++j) {
      std::vector<double> r(nx, 0.0);
      for (std::size_t k = 0; k < nx; ++k)
        r[k] = 0.5 * (B_sum1[k][j] - B_sum0[k][j]) / dt - 0.5 * B_rg[k][j];
      if (j < dim) {
        const auto d = deriv(mm.c, j);
        for (std::size_t k = 0; k < nx; ++k) r[k] += d[k];
      }
      const double nn = l2(xg, r);
      acc_h += nn * nn;
    }
    res.stress = std::sqrt(acc_s);
    res.heat_flux = std::sqrt(acc_h);
  }

  return res;
}

double verify_micro_identity(const PairDistribution& f, const Field3& E,
                             const std::array<double, 3>& B_const, double epsilon,
                             const MacroProjector& proj) {
  const auto& vg = f.vgrid();
  const std::size_t nx = f.nx();
  const std::size_t nv = vg.size();
  const MacroState m = proj.coefficients(f);

  PairDistribution arg(f.xgrid_ptr(), f.vgrid_ptr());
  PairDistribution rhs(f.xgrid_ptr(), f.vgrid_ptr());
  for (std::size_t ix = 0; ix < nx; ++ix) {
    const std::array<double, 3> b{m.b[0][ix], m.b[1][ix], m.b[2][ix]};
    const std::array<double, 3> bxB{b[1] * B_const[2] - b[2] * B_const[1],
                                    b[2] * B_const[0] - b[0] * B_const[2],
                                    b[0] * B_const[1] - b[1] * B_const[0]};
    for (int s = 0; s < 2; ++s) {
      const double q0 = (s == 0) ? 1.0 : -1.0;
      const double a_coef = (s == 0) ? m.a_plus[ix] : m.a_minus[ix];
      double* pa = arg.block(s, ix);
      double* pr = rhs.block(s, ix);
      for (std::size_t iv = 0; iv < nv; ++iv) {
        const auto v = vg.node(iv);
        const double sm = vg.sqrt_mu()[iv];
        const double vsq = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        const double poly = a_coef + b[0] * v[0] + b[1] * v[1] + b[2] * v[2] + m.c[ix] * (vsq - 3.0);
        // analytic grad_v of Pf_s = poly * sqrt(mu)
        std::array<double, 3> grad;
        for (int a = 0; a < 3; ++a)
          grad[a] = (b[a] + 2.0 * m.c[ix] * v[a]) * sm - 0.5 * v[a] * poly * sm;
        const std::array<double, 3> vxB{v[1] * B_const[2] - v[2] * B_const[1],
                                        v[2] * B_const[0] - v[0] * B_const[2],
                                        v[0] * B_const[1] - v[1] * B_const[0]};
        double ev = 0.0, rot = 0.0, shifted = 0.0;
        for (int a = 0; a < 3; ++a) {
          ev += E[a][ix] * v[a];
          rot += vxB[a] * grad[a];
          shifted += (E[a][ix] + epsilon * bxB[a]) * v[a];
        }
        pa[iv] = q0 * (ev * sm - q0 * epsilon * rot);  // q1 carries the species sign of E.v
        pr[iv] = q0 * shifted * sm;
      }
    }
  }
  const PairDistribution lhs = proj.micro(arg);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < lhs.data().size(); ++i) {
    const double d = lhs.data()[i] - rhs.data()[i];
    num += d * d;
    den += rhs.data()[i] * rhs.data()[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-30);
}

}  // namespace vmb
