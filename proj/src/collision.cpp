#include "vmb/collision.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

namespace vmb {

namespace {

// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (t * p1 - p0) / (t * t - 1.0);
      const double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    double p0 = 1.0, p1 = t;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    const double dp = n * (t * p1 - p0) / (t * t - 1.0);
    x[i] = t;
    w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
  }
  // ascending nodes, deterministic order
  std::vector<std::size_t> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> xs(n), ws(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = x[perm[i]];
    ws[i] = w[perm[i]];
  }
  x = xs;
  w = ws;
}

}  // namespace

SphereQuadrature SphereQuadrature::product(int nodes_per_half_panel, int n_azimuth) {
  if (nodes_per_half_panel < 1 || n_azimuth < 2 || n_azimuth % 2 != 0)
    fail(Errc::bad_argument, "sphere quadrature: need >=1 polar node per panel and even azimuth count");
  SphereQuadrature q;
  q.n_azimuth = n_azimuth;
  std::vector<double> gx, gw;
  gauss_legendre(nodes_per_half_panel, gx, gw);
  const double wphi = two_pi / n_azimuth;
  for (int panel = 0; panel < 2; ++panel) {
    const double a = (panel == 0) ? -1.0 : 0.0;
    const double b = a + 1.0;
    for (int i = 0; i < nodes_per_half_panel; ++i) {
      const double c = 0.5 * (a + b) + 0.5 * (b - a) * gx[i];
      q.cos_theta.push_back(c);
      q.sin_theta.push_back(std::sqrt(std::max(0.0, 1.0 - c * c)));
      q.polar_weight.push_back(0.5 * (b - a) * gw[i] * wphi);
    }
  }
  for (int k = 0; k < n_azimuth; ++k) {
    q.cos_phi.push_back(std::cos(two_pi * k / n_azimuth));
    q.sin_phi.push_back(std::sin(two_pi * k / n_azimuth));
  }
  return q;
}

double SphereQuadrature::integrate_constant() const {
  double s = 0.0;
  for (double w : polar_weight) s += w;
  return s * n_azimuth;
}

double SphereQuadrature::integrate(const std::function<double(double)>& f_cos) const {
  double s = 0.0;
  for (std::size_t i = 0; i < cos_theta.size(); ++i) s += polar_weight[i] * f_cos(cos_theta[i]);
  return s * n_azimuth;
}

KernelModel KernelModel::hard_sphere() { return KernelModel{}; }

KernelModel KernelModel::soft(double gamma) {
  KernelModel m;
  m.name = "soft_" + std::to_string(gamma);
  m.gamma = gamma;
  m.validate();
  return m;
}

void KernelModel::validate() const {
  if (!(gamma > -3.0 && gamma <= 1.0))
    fail(Errc::bad_argument, "kernel model: gamma must lie in (-3, 1], quadrature diverges otherwise");
  if (scale <= 0.0) fail(Errc::bad_argument, "kernel model: cross-section scale must be positive");
}

bool KernelModel::grad_bound_holds() const {
  for (double c : sphere.cos_theta) {
    const double b = angular(c);
    if (b < 0.0 || b > grad_bound_c * std::abs(c) + 1e-14) return false;
  }
  return true;
}

double KernelModel::angular_mass() const { return sphere.integrate(angular); }

namespace detail {

QuadStencil quad_stencil(const VelocityGrid& g, const std::array<double, 3>& p) {
  QuadStencil st;
  st.in_range = true;
  const double inv_dv = 1.0 / g.dv();
  for (int a = 0; a < 3; ++a) {
    const double t = (p[a] + g.v_max()) * inv_dv - 0.5;
    const int c = static_cast<int>(std::lround(t));
    if (c < 1 || c > g.n() - 2) {
      st.in_range = false;
      return st;
    }
    const double s = t - c;
    st.base[a] = c - 1;
    st.w[a][0] = 0.5 * s * (s - 1.0);
    st.w[a][1] = 1.0 - s * s;
    st.w[a][2] = 0.5 * s * (s + 1.0);
  }
  return st;
}

void pair_frame(const std::array<double, 3>& n, std::array<double, 3>& t1,
                std::array<double, 3>& t2) {
  int a = 0;
  if (std::abs(n[1]) < std::abs(n[a])) a = 1;
  if (std::abs(n[2]) < std::abs(n[a])) a = 2;
  std::array<double, 3> e{0.0, 0.0, 0.0};
  e[a] = 1.0;
  t1 = {n[1] * e[2] - n[2] * e[1], n[2] * e[0] - n[0] * e[2], n[0] * e[1] - n[1] * e[0]};
  const double inv = 1.0 / std::sqrt(t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2]);
  for (auto& c : t1) c *= inv;
  t2 = {n[1] * t1[2] - n[2] * t1[1], n[2] * t1[0] - n[0] * t1[2], n[0] * t1[1] - n[1] * t1[0]};
}

}  // namespace detail

std::vector<double> boltzmann_q(const VelocityGrid& grid, const std::vector<double>& F,
                                const std::vector<double>& G, const KernelModel& model,
                                CollisionStats* stats) {
  if (F.size() != grid.size() || G.size() != grid.size())
    fail(Errc::grid_mismatch, "boltzmann_q: lattice size mismatch");
  model.validate();

  const std::size_t nv = grid.size();
  const int n = grid.n();
  const double vol = grid.cell_volume();
  const auto& mu = grid.mu();

  std::vector<double> rf(nv), rg(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    rf[i] = F[i] / mu[i];
    rg[i] = G[i] / mu[i];
  }

  const auto& sph = model.sphere;
  const std::size_t n_pol = sph.cos_theta.size();
  std::vector<double> bval(n_pol);
  for (std::size_t k = 0; k < n_pol; ++k) bval[k] = model.angular(sph.cos_theta[k]);

  const int nthreads = omp_get_max_threads();
  std::vector<std::vector<double>> partial(nthreads, std::vector<double>(nv, 0.0));
  std::vector<CollisionStats> pstats(nthreads);

#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < nv; ++i) {
    const int tid = omp_get_thread_num();
    auto& out = partial[tid];
    auto& cs = pstats[tid];
    const auto vi = grid.node(i);
    const double fi = F[i];
    for (std::size_t j = 0; j < nv; ++j) {
      if (j == i) continue;  // zero-measure coincidence, kernel singular for soft potentials
      const auto uj = grid.node(j);
      const std::array<double, 3> d{vi[0] - uj[0], vi[1] - uj[1], vi[2] - uj[2]};
      const double r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
      const double r = std::sqrt(r2);
      const double kern0 = model.scale * std::pow(r, model.gamma) * vol;
      const std::array<double, 3> nh{d[0] / r, d[1] / r, d[2] / r};
      std::array<double, 3> t1, t2;
      detail::pair_frame(nh, t1, t2);
      const double loss = fi * G[j];
      for (std::size_t kp = 0; kp < n_pol; ++kp) {
        if (bval[kp] == 0.0) continue;
        const double ct = sph.cos_theta[kp];
        const double st = sph.sin_theta[kp];
        const double h = r * ct;  // (v-u).omega
        for (int ka = 0; ka < sph.n_azimuth; ++ka) {
          const double ox = ct * nh[0] + st * (sph.cos_phi[ka] * t1[0] + sph.sin_phi[ka] * t2[0]);
          const double oy = ct * nh[1] + st * (sph.cos_phi[ka] * t1[1] + sph.sin_phi[ka] * t2[1]);
          const double oz = ct * nh[2] + st * (sph.cos_phi[ka] * t1[2] + sph.sin_phi[ka] * t2[2]);
          const std::array<double, 3> vp{vi[0] - h * ox, vi[1] - h * oy, vi[2] - h * oz};
          const std::array<double, 3> up{uj[0] + h * ox, uj[1] + h * oy, uj[2] + h * oz};
          cs.items_total++;
          const auto sv = detail::quad_stencil(grid, vp);
          const auto su = detail::quad_stencil(grid, up);
          if (!sv.in_range || !su.in_range) {
            cs.items_dropped++;
            continue;
          }
          // interpolate F/mu at v' and G/mu at u'; mu(v')mu(u') = mu(v)mu(u)
          double rfv = 0.0;
          double rgu = 0.0;
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
              const double wab_v = sv.w[0][a] * sv.w[1][b];
              const double wab_u = su.w[0][a] * su.w[1][b];
              const std::size_t row_v = grid.index(sv.base[0] + a, sv.base[1] + b, sv.base[2]);
              const std::size_t row_u = grid.index(su.base[0] + a, su.base[1] + b, su.base[2]);
              for (int c = 0; c < 3; ++c) {
                rfv += wab_v * sv.w[2][c] * rf[row_v + c];
                rgu += wab_u * su.w[2][c] * rg[row_u + c];
              }
            }
          const double gain = mu[i] * mu[j] * rfv * rgu;
          const double q = 0.5 * sph.polar_weight[kp] * bval[kp] * kern0 * (gain - loss);
          // symmetrized weak form: +q at the pre-collision node, -q spread at v'
          out[i] += q;
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
              const double wab = q * sv.w[0][a] * sv.w[1][b];
              const std::size_t row = grid.index(sv.base[0] + a, sv.base[1] + b, sv.base[2]);
              for (int c = 0; c < 3; ++c) out[row + c] -= wab * sv.w[2][c];
            }
        }
      }
    }
  }

  std::vector<double> out(nv, 0.0);
  for (int t = 0; t < nthreads; ++t) {
    for (std::size_t i = 0; i < nv; ++i) out[i] += partial[t][i];
    if (stats) {
      stats->items_total += pstats[t].items_total;
      stats->items_dropped += pstats[t].items_dropped;
    }
  }
  return out;
}

namespace {

// Radial reduction of int |v-u|^gamma mu(u) du for isotropic mu.
double radial_kernel_integral(double r, double gamma) {
  const double c0 = 0.06349363593424098;  // (2 pi)^{-3/2}
  const int ngl = 48;
  static thread_local std::vector<double> gx, gw;
  if (gx.empty()) gauss_legendre(ngl, gx, gw);

  const double s_max = r + 14.0;
  auto inner = [&](double s) {
    // int_{|r-s|}^{r+s} w^{gamma+1} dw
    const double e = gamma + 2.0;
    double lo = std::abs(r - s), hi = r + s;
    if (std::abs(e) < 1e-14) return std::log(hi) - std::log(std::max(lo, 1e-300));
    return (std::pow(hi, e) - std::pow(lo, e)) / e;
  };
  auto segment = [&](double a, double b) {
    double acc = 0.0;
    for (int i = 0; i < ngl; ++i) {
      const double s = 0.5 * (a + b) + 0.5 * (b - a) * gx[i];
      acc += 0.5 * (b - a) * gw[i] * s * std::exp(-0.5 * s * s) * inner(s);
    }
    return acc;
  };

  if (r < 1e-8) {
    // limit (1/r) * [ (r+s)^{g+2} - |r-s|^{g+2} ] -> 2 (g+2) s^{g+1}
    double acc = 0.0;
    const double a = 0.0, b = 14.0;
    for (int i = 0; i < ngl; ++i) {
      const double s = 0.5 * (a + b) + 0.5 * (b - a) * gx[i];
      acc += 0.5 * (b - a) * gw[i] * s * std::exp(-0.5 * s * s) * 2.0 * std::pow(s, gamma + 1.0);
    }
    return two_pi * c0 * acc;
  }
  const double total = segment(0.0, r) + segment(r, s_max);
  return two_pi * c0 * total / r;
}

}  // namespace

double collision_frequency(const std::array<double, 3>& v, const KernelModel& model) {
  model.validate();
  const double r = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return 2.0 * model.scale * model.angular_mass() * radial_kernel_integral(r, model.gamma);
}

std::vector<double> nu_lattice(const VelocityGrid& grid, const KernelModel& model) {
  model.validate();
  const double beta0 = model.angular_mass();
  const double vol = grid.cell_volume();
  std::vector<double> nu(grid.size(), 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto vi = grid.node(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < grid.size(); ++j) {
      if (j == i) continue;
      const auto uj = grid.node(j);
      const double dx = vi[0] - uj[0], dy = vi[1] - uj[1], dz = vi[2] - uj[2];
      const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
      acc += std::pow(r, model.gamma) * grid.mu()[j];
    }
    nu[i] = 2.0 * model.scale * beta0 * vol * acc;
  }
  return nu;
}

PairDistribution gamma_bilinear(const PairDistribution& g, const PairDistribution& h,
                                const KernelModel& model, CollisionStats* stats) {
  g.require_same_grids(h);
  const auto& vg = g.vgrid();
  const std::size_t nv = vg.size();
  const auto& sm = vg.sqrt_mu();
  const auto& mu = vg.mu();

  PairDistribution out(g.xgrid_ptr(), g.vgrid_ptr());
  std::vector<double> Fs(nv), Hsum(nv);
  for (std::size_t ix = 0; ix < g.nx(); ++ix) {
    const double* hp = h.block(0, ix);
    const double* hm = h.block(1, ix);
    for (std::size_t iv = 0; iv < nv; ++iv) Hsum[iv] = sm[iv] * (hp[iv] + hm[iv]);
    for (int s = 0; s < 2; ++s) {
      const double* gs = g.block(s, ix);
      for (std::size_t iv = 0; iv < nv; ++iv) Fs[iv] = sm[iv] * gs[iv];
      const auto q = boltzmann_q(vg, Fs, Hsum, model, stats);
      double* o = out.block(s, ix);
      for (std::size_t iv = 0; iv < nv; ++iv) {
        if (mu[iv] < model.mu_floor) {
          o[iv] = 0.0;
          if (stats) stats->floor_zeroed++;
        } else {
          o[iv] = q[iv] / sm[iv];
        }
      }
    }
  }
  return out;
}

}  // namespace vmb
