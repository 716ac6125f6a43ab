#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "vmb/solver.hpp"

namespace vmb {

// Time-velocity weight w_{ell-|beta|,kappa}(t,v) =
//   <v>^{kappa (ell-|beta|)} exp( q <v>^2 / (1+t)^vartheta ).
struct WeightSpec {
  double ell = 0.0;
  double kappa = 1.0;      // the paper uses kappa in {-gamma, 1}
  double q = 0.05;         // 0 < q << 1
  double vartheta = 0.25;  // > 0

  double value(double t, double v_sq, int beta_order) const;
};

enum class WeightedVariant {
  plain,        // || w d^a_b f ||
  nu_weighted,  // || w d^a_b f ||_nu            (the D^L term)
  bracket       // (1+t)^{-(1+vt)/2} || <v> w d^a_b f ||  (square is the D^W term)
};

struct DiagnosticsConfig {
  int n_max = 3;
  double varrho = 1.0;  // negative-Sobolev order, in [1/2, 3/2)
  std::vector<WeightSpec> weights;
  std::array<int, 3> weight_alpha{0, 0, 0};  // derivative applied to weighted columns
  std::array<int, 3> weight_beta{0, 0, 0};
};

struct EnergyReport {
  double t = 0.0;
  std::array<double, 4> energy{};       // E_0 .. E_3
  std::array<double, 4> dissipation{};  // D_0 .. D_3
  double gauss_residual = 0.0;
  double shifted_field = 0.0;
  double neg_sobolev = 0.0;
  std::vector<double> weighted;
  double total_charge = 0.0;
  double dtE_residual = 0.0;  // populated for VPB states
};

// sum_{|a|+|b| <= n} ||d^a_b f||^2 + ||[E, Btilde]||^2_{H^n}; the paper's
// equivalence constants are all fixed to one.
double energy_functional(const VMBState& s, int n);

double dissipation_functional(const VMBState& s, int n, const Operators& ops);

double weighted_norm(const PairDistribution& f, const WeightSpec& spec, double t,
                     const std::array<int, 3>& alpha, const std::array<int, 3>& beta,
                     WeightedVariant variant = WeightedVariant::plain,
                     const Eigen::VectorXd* nu = nullptr);

// || |xi|^{-varrho} ghat || over nonzero modes. strict rejects input whose
// spatial mean is not negligible; the report path drops the zero mode and
// records the restriction instead.
double negative_sobolev_norm(const PairDistribution& g, double varrho, bool strict = true);
double negative_sobolev_norm_field(const SpatialGrid& xg, const std::vector<double>& g,
                                   double varrho, bool strict = true);

// || E + eps b x B ||
double shifted_field_norm(const EMState& em, const MacroState& macro);

EnergyReport make_energy_report(const VMBState& s, const Operators& ops,
                                const DiagnosticsConfig& cfg);
EnergyReport make_energy_report(const VPBState& s, const Operators& ops,
                                const DiagnosticsConfig& cfg);

// series.csv schema: t, E0..E3, D0..D3, gauss_residual, shifted_field,
// neg_sobolev, w0..wk, total_charge, dtE_residual. Fixed order, one row per
// recorded time, %.17g formatting (bitwise reproducible).
void write_series_header(std::ostream& out, const DiagnosticsConfig& cfg);
void write_series_row(std::ostream& out, const EnergyReport& r);

}  // namespace vmb
