#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vmb/checkpoint.hpp"
#include "vmb/config.hpp"
#include "vmb/diagnostics.hpp"

namespace vmb {

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // rms residual in log space
};

// Least squares on (log eps, log error); inputs positive, eps strictly
// decreasing, length >= 3.
FitResult fit_rate(const std::vector<double>& errors, const std::vector<double>& eps);

struct RateReport {
  std::vector<double> epsilons;
  std::vector<double> sup_errors;  // sup-in-time squared-norm error per epsilon
  FitResult fit;
  double wall_seconds = 0.0;
  std::string error_functional;  // documented composition of the measured norm
  std::string to_json() const;
};

// Solves the limit system once and the scaled system per epsilon; the error
// is sup over recorded times of
//   sum_{|a|+|b|<=3} ||d^a_b (f^eps - f^inf)||^2 + ||E^eps - E^inf||^2_{H^3}
//   + ||B^eps - B||^2_{H^3}.
RateReport run_epsilon_sweep(const RunConfig& cfg);

// Evolves the m-level cascade and the direct solution of the summed data per
// epsilon and fits the squared-norm remainder scaling (expected slope 2).
RateReport run_expansion_check(const RunConfig& cfg);

struct PropertyCheck {
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  bool larger_is_better = false;
  bool pass = false;
};

struct PropertyReport {
  std::vector<PropertyCheck> checks;
  double sigma0 = 0.0;
  bool all_pass() const;
  std::string to_json() const;
};

// Executes the invariant suite (projection algebra, operator symmetry and
// coercivity, collision conservation, field-solver conservation, identity
// defects, refinement ratios, weight algebra, transform inverses). An empty
// selection list runs nothing; no selection runs everything.
PropertyReport run_property_suite(const RunConfig& cfg,
                                  const std::optional<std::vector<std::string>>& selection = {});

struct SimulateResult {
  long steps = 0;
  double final_t = 0.0;
  EnergyReport final_report;
};

// Time integration with the CSV recorder and optional checkpointing; resume
// reproduces an uninterrupted run bit for bit.
SimulateResult run_simulate(const RunConfig& cfg, const std::string& out_dir,
                            const std::string& resume_from = "");

void save_state_checkpoint(const std::string& path, const VMBState& s, std::uint64_t config_hash);
VMBState load_state_checkpoint(const std::string& path, const Grids& grids,
                               std::uint64_t config_hash);

void apply_thread_config(const RunConfig& cfg);

}  // namespace vmb
