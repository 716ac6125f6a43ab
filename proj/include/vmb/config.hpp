#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "vmb/collision.hpp"
#include "vmb/diagnostics.hpp"
#include "vmb/solver.hpp"

namespace vmb {

// Named analytic initial-data families; random recipes are seed-pinned.
enum class Recipe { single_mode_macro, transverse_pulse, random_band_limited, zero };

struct InitialSpec {
  Recipe recipe = Recipe::single_mode_macro;
  double amplitude = 1e-3;
  // VMB data differ from the VPB data by eps^eta times a fixed perturbation.
  double eta = 1.0;
  double perturbation_amplitude = 1.0;
  std::array<double, 3> B_background{0.0, 0.0, 0.0};
  std::uint64_t seed = 20240101;
};

struct GridSpec {
  int dim = 1;
  std::array<double, 3> lengths{two_pi, two_pi, two_pi};
  std::array<int, 3> n_per_axis{32, 4, 4};
  double v_max = 6.0;
  int n_v = 16;
  double tol_mass = 1e-6;
};

struct KernelSpec {
  std::string model = "hard_sphere";  // hard_sphere | soft | grad_violating_flat
  double gamma = 1.0;
  double grad_bound_c = 1.0;
  double scale = 1.0;
  int sphere_polar = 4;  // Gauss-Legendre nodes per half panel
  int sphere_azimuth = 6;
  double mu_floor = 1e-280;

  KernelModel build() const;
};

struct RunConfig {
  GridSpec grid;
  KernelSpec kernel;
  SolverConfig solver;
  InitialSpec initial;
  DiagnosticsConfig diagnostics;
  double epsilon = 0.1;
  std::vector<double> epsilon_list{0.4, 0.2, 0.1, 0.05};
  int expansion_order = 1;
  int expansion_norm_order = 2;  // derivative orders measured by the expansion check
  std::string operator_cache;
  int threads = 0;  // 0: leave the OpenMP default
  long checkpoint_cadence = 0;

  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_file(const std::string& path);
  std::string to_json_text() const;
  std::uint64_t content_hash() const;
  void validate() const;
};

struct Grids {
  std::shared_ptr<const SpatialGrid> x;
  std::shared_ptr<const VelocityGrid> v;
};

Grids make_grids(const RunConfig& cfg);
Operators make_operators(const RunConfig& cfg, const Grids& grids);

// Initial data: the VPB base state and the eps-perturbed VMB state whose gap
// is O(eps^eta) in data, with compatible fields on both sides.
VPBState make_initial_vpb(const RunConfig& cfg, const Grids& grids);
VMBState make_initial_vmb(const RunConfig& cfg, const Grids& grids, double epsilon);
// Cascade data: leader carries the base recipe, intermediate levels start
// empty, the remainder carries the perturbation shape; the matching direct
// VMB data is the exact eps-weighted sum of the levels.
CascadeState make_initial_cascade(const RunConfig& cfg, const Grids& grids, double epsilon);
VMBState assemble_cascade_total(const CascadeState& c);

}  // namespace vmb
