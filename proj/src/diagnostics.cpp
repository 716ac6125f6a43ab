#include "vmb/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace vmb {

double WeightSpec::value(double t, double v_sq, int beta_order) const {
  if (ell < beta_order) fail(Errc::bad_argument, "weight: requires ell >= |beta|");
  const double br = 1.0 + v_sq;  // <v>^2
  const double p = kappa * (ell - beta_order);
  return std::pow(br, 0.5 * p) * std::exp(q * br / std::pow(1.0 + t, vartheta));
}

namespace {

std::vector<std::array<int, 3>> multi_indices(int max_order, int active_axes) {
  std::vector<std::array<int, 3>> out;
  for (int total = 0; total <= max_order; ++total)
    for (int a = 0; a <= total; ++a)
      for (int b = 0; b <= total - a; ++b) {
        const int c = total - a - b;
        if (active_axes < 3 && c > 0) continue;
        if (active_axes < 2 && b > 0) continue;
        out.push_back({a, b, c});
      }
  return out;
}

int order_of(const std::array<int, 3>& m) { return m[0] + m[1] + m[2]; }

PairDistribution apply_alpha_beta(const PairDistribution& f, const std::array<int, 3>& alpha,
                                  const std::array<int, 3>& beta) {
  PairDistribution g = f;
  for (int a = 0; a < 3; ++a)
    if (alpha[a] > 0) g = x_derivative(g, a, alpha[a]);
  for (int a = 0; a < 3; ++a)
    if (beta[a] > 0) g = v_derivative(g, a, beta[a]);
  return g;
}

double field_sobolev_sq(const SpatialGrid& xg, const Field3& f, int n) {
  double acc = 0.0;
  for (const auto& alpha : multi_indices(n, xg.dim())) {
    for (int c = 0; c < 3; ++c) {
      std::vector<double> g = f[c];
      for (int a = 0; a < 3; ++a)
        if (alpha[a] > 0) g = xg.derivative(g, a, alpha[a]);
      double s = 0.0;
      for (double v : g) s += v * v;
      acc += s * xg.cell_volume();
    }
  }
  return acc;
}

double scalar_l2_sq(const SpatialGrid& xg, const std::vector<double>& f) {
  double s = 0.0;
  for (double v : f) s += v * v;
  return s * xg.cell_volume();
}

double pair_weighted_sq(const PairDistribution& f, const std::vector<double>& w_over_v) {
  const std::size_t nv = f.nv();
  double s = 0.0;
  for (int sp = 0; sp < 2; ++sp)
    for (std::size_t ix = 0; ix < f.nx(); ++ix) {
      const double* b = f.block(sp, ix);
      for (std::size_t iv = 0; iv < nv; ++iv) s += w_over_v[iv] * b[iv] * b[iv];
    }
  return s * f.xgrid().cell_volume() * f.vgrid().cell_volume();
}

}  // namespace

double energy_functional(const VMBState& s, int n) {
  if (n < 0 || n > 3) fail(Errc::bad_argument, "energy functional: n must be 0..3");
  const auto& xg = s.f.xgrid();
  double acc = 0.0;
  for (const auto& alpha : multi_indices(n, xg.dim()))
    for (const auto& beta : multi_indices(n - order_of(alpha), 3)) {
      const PairDistribution g = apply_alpha_beta(s.f, alpha, beta);
      const double nn = pair_l2(g);
      acc += nn * nn;
    }
  acc += field_sobolev_sq(xg, s.em.E, n);
  acc += field_sobolev_sq(xg, s.em.B_tilde, n);
  return acc;
}

double dissipation_functional(const VMBState& s, int n, const Operators& ops) {
  if (n < 0 || n > 3) fail(Errc::bad_argument, "dissipation functional: n must be 0..3");
  const auto& xg = s.f.xgrid();
  const auto& vg = s.f.vgrid();
  const double eps = s.em.epsilon;
  double acc = 0.0;

  const MacroState mac = ops.proj->coefficients(s.f);
  // sum_{1<=|alpha|<=n} || d^alpha [a_pm, b, c] ||^2
  for (const auto& alpha : multi_indices(n, xg.dim())) {
    if (order_of(alpha) < 1) continue;
    auto add_scalar = [&](const std::vector<double>& f) {
      std::vector<double> g = f;
      for (int a = 0; a < 3; ++a)
        if (alpha[a] > 0) g = xg.derivative(g, a, alpha[a]);
      acc += scalar_l2_sq(xg, g);
    };
    add_scalar(mac.a_plus);
    add_scalar(mac.a_minus);
    for (int c = 0; c < 3; ++c) add_scalar(mac.b[c]);
    add_scalar(mac.c);
  }

  // sum_{|alpha|+|beta|<=n} || d^alpha_beta {I-P} f ||^2_nu
  const PairDistribution micro = ops.proj->micro(s.f);
  std::vector<double> nu_w(vg.size());
  for (std::size_t iv = 0; iv < vg.size(); ++iv) nu_w[iv] = ops.lin->nu()[iv];
  for (const auto& alpha : multi_indices(n, xg.dim()))
    for (const auto& beta : multi_indices(n - order_of(alpha), 3)) {
      const PairDistribution g = apply_alpha_beta(micro, alpha, beta);
      acc += pair_weighted_sq(g, nu_w);
    }

  {  // || a+ - a- ||^2
    std::vector<double> d(s.f.nx());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = mac.a_plus[i] - mac.a_minus[i];
    acc += scalar_l2_sq(xg, d);
  }

  {  // eps^2 || E + eps b x B ||^2
    const double sf = shifted_field_norm(s.em, mac);
    acc += eps * eps * sf * sf;
  }

  if (n >= 2) {  // eps^2 || grad_x [E, Btilde] ||^2_{H^{n-2}}
    double g = 0.0;
    for (const auto& alpha : multi_indices(n - 1, xg.dim())) {
      if (order_of(alpha) < 1) continue;
      for (int c = 0; c < 3; ++c) {
        auto de = s.em.E[c];
        auto db = s.em.B_tilde[c];
        for (int a = 0; a < 3; ++a)
          if (alpha[a] > 0) {
            de = xg.derivative(de, a, alpha[a]);
            db = xg.derivative(db, a, alpha[a]);
          }
        g += scalar_l2_sq(xg, de) + scalar_l2_sq(xg, db);
      }
    }
    acc += eps * eps * g;
  }
  return acc;
}

double weighted_norm(const PairDistribution& f, const WeightSpec& spec, double t,
                     const std::array<int, 3>& alpha, const std::array<int, 3>& beta,
                     WeightedVariant variant, const Eigen::VectorXd* nu) {
  const int border = beta[0] + beta[1] + beta[2];
  if (spec.ell < border) fail(Errc::bad_argument, "weighted_norm: requires ell >= |beta|");
  const PairDistribution g = apply_alpha_beta(f, alpha, beta);
  const auto& vg = f.vgrid();
  std::vector<double> w(vg.size());
  for (std::size_t iv = 0; iv < vg.size(); ++iv) {
    const auto v = vg.node(iv);
    const double vsq = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    double wi = spec.value(t, vsq, border);
    switch (variant) {
      case WeightedVariant::plain:
        break;
      case WeightedVariant::nu_weighted:
        if (!nu) fail(Errc::bad_argument, "weighted_norm: nu required for the nu variant");
        wi *= std::sqrt((*nu)[iv]);
        break;
      case WeightedVariant::bracket:
        wi *= std::sqrt(1.0 + vsq) / std::pow(1.0 + t, 0.5 * (1.0 + spec.vartheta));
        break;
    }
    w[iv] = wi * wi;
  }
  return std::sqrt(pair_weighted_sq(g, w));
}

namespace {

double neg_sobolev_sum(const SpatialGrid& xg, const std::vector<double>& acc_per_mode,
                       double varrho) {
  double acc = 0.0;
  for (std::size_t m = 0; m < xg.size(); ++m) {
    const auto xi = xg.mode_xi(m);
    const double kn = std::sqrt(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]);
    if (kn == 0.0) continue;
    acc += std::pow(kn, -2.0 * varrho) * acc_per_mode[m];
  }
  return acc;
}

}  // namespace

double negative_sobolev_norm(const PairDistribution& g, double varrho, bool strict) {
  const auto& xg = g.xgrid();
  const auto& vg = g.vgrid();
  const std::size_t nx = xg.size();
  std::vector<double> acc_mode(nx, 0.0);
  std::vector<cplx> line(nx), spec(nx);
  double zero_mode = 0.0, total = 0.0;
  for (int s = 0; s < 2; ++s)
    for (std::size_t iv = 0; iv < vg.size(); ++iv) {
      for (std::size_t ix = 0; ix < nx; ++ix) line[ix] = g.at(s, ix, iv);
      xg.forward_c(line.data(), spec.data());
      for (std::size_t m = 0; m < nx; ++m) {
        const double a = std::norm(spec[m]) / (static_cast<double>(nx) * nx);
        acc_mode[m] += a;
        total += a;
        if (m == 0) zero_mode += a;
      }
    }
  if (strict && zero_mode > 1e-20 * std::max(total, 1e-300))
    fail(Errc::constraint_violation, "negative Sobolev norm: input has nonzero spatial mean");
  // Parseval with the physical-space quadrature weights
  const double vol = xg.cell_volume() * static_cast<double>(nx) * vg.cell_volume();
  return std::sqrt(neg_sobolev_sum(xg, acc_mode, varrho) * vol);
}

double negative_sobolev_norm_field(const SpatialGrid& xg, const std::vector<double>& g,
                                   double varrho, bool strict) {
  const std::size_t nx = xg.size();
  std::vector<cplx> spec(nx);
  xg.forward(g.data(), spec.data());
  std::vector<double> acc_mode(nx, 0.0);
  double zero_mode = 0.0, total = 0.0;
  for (std::size_t m = 0; m < nx; ++m) {
    const double a = std::norm(spec[m]) / (static_cast<double>(nx) * nx);
    acc_mode[m] = a;
    total += a;
    if (m == 0) zero_mode = a;
  }
  if (strict && zero_mode > 1e-20 * std::max(total, 1e-300))
    fail(Errc::constraint_violation, "negative Sobolev norm: input has nonzero spatial mean");
  const double vol = xg.cell_volume() * static_cast<double>(nx);
  return std::sqrt(neg_sobolev_sum(xg, acc_mode, varrho) * vol);
}

double shifted_field_norm(const EMState& em, const MacroState& macro) {
  const auto& xg = *em.grid;
  double acc = 0.0;
  for (std::size_t i = 0; i < xg.size(); ++i) {
    const std::array<double, 3> b{macro.b[0][i], macro.b[1][i], macro.b[2][i]};
    const auto& Bc = em.B_background;
    const std::array<double, 3> bxB{b[1] * Bc[2] - b[2] * Bc[1], b[2] * Bc[0] - b[0] * Bc[2],
                                    b[0] * Bc[1] - b[1] * Bc[0]};
    for (int a = 0; a < 3; ++a) {
      const double v = em.E[a][i] + em.epsilon * bxB[a];
      acc += v * v;
    }
  }
  return std::sqrt(acc * xg.cell_volume());
}

namespace {

double total_charge(const PairDistribution& f) {
  const auto rho = charge_density(f);
  double s = 0.0;
  for (double v : rho) s += v;
  return s * f.xgrid().cell_volume();
}

void fill_weighted(const PairDistribution& f, double t, const Operators& ops,
                   const DiagnosticsConfig& cfg, EnergyReport& r) {
  for (const auto& w : cfg.weights)
    r.weighted.push_back(weighted_norm(f, w, t, cfg.weight_alpha, cfg.weight_beta,
                                       WeightedVariant::plain, &ops.lin->nu()));
}

}  // namespace

EnergyReport make_energy_report(const VMBState& s, const Operators& ops,
                                const DiagnosticsConfig& cfg) {
  EnergyReport r;
  r.t = s.t;
  for (int n = 0; n <= cfg.n_max && n <= 3; ++n) {
    r.energy[n] = energy_functional(s, n);
    r.dissipation[n] = dissipation_functional(s, n, ops);
  }
  r.gauss_residual = gauss_residual(s.em, charge_density(s.f));
  r.shifted_field = shifted_field_norm(s.em, ops.proj->coefficients(s.f));
  r.neg_sobolev = negative_sobolev_norm(s.f, cfg.varrho, /*strict=*/false);
  fill_weighted(s.f, s.t, ops, cfg, r);
  r.total_charge = total_charge(s.f);
  return r;
}

EnergyReport make_energy_report(const VPBState& s, const Operators& ops,
                                const DiagnosticsConfig& cfg) {
  VMBState tmp(s.f.xgrid_ptr(), s.f.vgrid_ptr(), std::max(s.epsilon, 1e-300));
  tmp.f = s.f;
  tmp.em.E = s.E;
  tmp.t = s.t;
  EnergyReport r = make_energy_report(tmp, ops, cfg);
  r.dtE_residual = s.dtE_residual;
  return r;
}

void write_series_header(std::ostream& out, const DiagnosticsConfig& cfg) {
  out << "t,E0,E1,E2,E3,D0,D1,D2,D3,gauss_residual,shifted_field,neg_sobolev";
  for (std::size_t i = 0; i < cfg.weights.size(); ++i) out << ",w" << i;
  out << ",total_charge,dtE_residual\n";
}

void write_series_row(std::ostream& out, const EnergyReport& r) {
  char buf[32];
  auto put = [&](double v, bool lead_comma = true) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    if (lead_comma) out << ',';
    out << buf;
  };
  put(r.t, false);
  for (int i = 0; i < 4; ++i) put(r.energy[i]);
  for (int i = 0; i < 4; ++i) put(r.dissipation[i]);
  put(r.gauss_residual);
  put(r.shifted_field);
  put(r.neg_sobolev);
  for (double w : r.weighted) put(w);
  put(r.total_charge);
  put(r.dtE_residual);
  out << '\n';
}

}  // namespace vmb
