#pragma once

#include <functional>
#include <memory>

#include "vmb/em.hpp"
#include "vmb/linearized_operator.hpp"
#include "vmb/macro.hpp"
#include "vmb/pair_distribution.hpp"

namespace vmb {

enum class Splitting { lie, strang };
enum class CollisionMode { linearized_only, full_bilinear };

struct SolverConfig {
  double dt = 1e-2;
  double t_end = 1.0;
  Splitting splitting = Splitting::strang;
  CollisionMode collision_mode = CollisionMode::linearized_only;
  // nu is integrated exactly and K (and Gamma) at the exponential midpoint;
  // one dense application per collision substep, no collision CFL. When off,
  // the substep is an explicit midpoint rule.
  bool stiff_collision = true;
  int recorder_cadence = 10;
  bool check_finite = true;

  void validate() const;
};

struct Operators {
  std::shared_ptr<const LinearizedOperator> lin;
  std::shared_ptr<const MacroProjector> proj;
  KernelModel model;  // used when collision_mode = full_bilinear
};

struct VMBState {
  PairDistribution f;
  EMState em;
  double t = 0.0;
  long step = 0;

  VMBState(std::shared_ptr<const SpatialGrid> xg, std::shared_ptr<const VelocityGrid> vg,
           double epsilon)
      : f(xg, vg), em(EMState::zero(xg, epsilon)) {}
};

// Vlasov-Poisson-Boltzmann state: the electric field is closed through the
// Gauss constraint every substep; d/dt E = -j is tracked as a residual.
struct VPBState {
  PairDistribution f;
  Field3 E;
  std::array<double, 3> B_eff{0.0, 0.0, 0.0};  // constant field of the eps(v x B) term
  double epsilon = 0.0;                        // 0 reproduces the exact limit system
  double t = 0.0;
  long step = 0;
  double dtE_residual = 0.0;  // ||(E(t+dt)-E(t))/dt + j_mid|| of the last step

  VPBState(std::shared_ptr<const SpatialGrid> xg, std::shared_ptr<const VelocityGrid> vg)
      : f(xg, vg), E(make_field3(*xg)) {}
};

// Expansion cascade: VPB leader, linear correctors i = 1..m-1, remainder.
struct CascadeState {
  int m = 1;
  double epsilon = 1.0;
  double t = 0.0;
  long step = 0;
  VPBState leader;
  std::array<double, 3> B_P{0.0, 0.0, 0.0};
  std::vector<PairDistribution> f_i;
  std::vector<Field3> E_i;
  std::vector<std::array<double, 3>> B_i;
  std::vector<long> level_step;  // ordering guard for the per-level steppers
  VMBState remainder;            // carries f_m, E_m, B_m through an EMState

  CascadeState(std::shared_ptr<const SpatialGrid> xg, std::shared_ptr<const VelocityGrid> vg,
               double eps, int order);
};

// B_P + sum_j eps^j B_j, the constant field seen by the leader and levels.
std::array<double, 3> cascade_effective_b(const CascadeState& c);

void step_vmb(VMBState& s, const Operators& ops, const SolverConfig& cfg);
void step_vpb(VPBState& s, const Operators& ops, const SolverConfig& cfg);

// One full cascade step: leader, correctors in ascending order, remainder.
void step_cascade(CascadeState& c, const Operators& ops, const SolverConfig& cfg);
// Individual levels; they refuse to run ahead of their prerequisites.
void step_cascade_linear(int i, CascadeState& c, const VPBState& leader_old,
                         const Operators& ops, const SolverConfig& cfg);
void step_remainder(CascadeState& c, const VPBState& leader_old,
                    const std::vector<PairDistribution>& f_i_old,
                    const std::vector<Field3>& E_i_old, const Operators& ops,
                    const SolverConfig& cfg);

// Time loop with recorder callback (invoked at t=0, every cadence-th step and
// at t_end). Deterministic for a fixed configuration and thread count.
void run_vmb(VMBState& s, const Operators& ops, const SolverConfig& cfg,
             const std::function<void(const VMBState&)>& on_record);
void run_vpb(VPBState& s, const Operators& ops, const SolverConfig& cfg,
             const std::function<void(const VPBState&)>& on_record);
void run_cascade(CascadeState& c, const Operators& ops, const SolverConfig& cfg,
                 const std::function<void(const CascadeState&)>& on_record);

}  // namespace vmb
