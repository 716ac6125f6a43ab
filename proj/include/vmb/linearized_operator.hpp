#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>

#include "vmb/collision.hpp"
#include "vmb/pair_distribution.hpp"

namespace vmb {

struct OperatorBuildOptions {
  // Production operators are symmetrized (weak-form realization of the
  // self-adjoint kernel; the raw quadrature defect is measured and reported)
  // and sandwiched between microscopic projections so that the six discrete
  // collision invariants are annihilated to rounding. Raw mode exists for the
  // small-lattice oracle, which sums the displayed integrand directly.
  bool symmetrize = true;
  bool null_project = true;
  double asymmetry_ceiling = 0.75;  // relative Frobenius defect that aborts the build
  std::string cache_dir;            // empty: no on-disk cache
};

struct OperatorStats {
  double asymmetry_sum = 0.0;   // ||K - K^T||_F / ||K||_F per species channel
  double asymmetry_diff = 0.0;
  double dropped_fraction = 0.0;
  double build_seconds = 0.0;
  bool from_cache = false;
};

// Dense realization of L = nu - K on the velocity lattice. The two-species
// structure [[K_same, K_cross], [K_cross, K_same]] is stored in its species
// channels: k_sum acts on g+ + g-, k_diff on g+ - g-.
class LinearizedOperator {
public:
  static LinearizedOperator build(std::shared_ptr<const VelocityGrid> grid,
                                  const KernelModel& model, const OperatorBuildOptions& opts = {});

  const VelocityGrid& grid() const { return *grid_; }
  std::shared_ptr<const VelocityGrid> grid_ptr() const { return grid_; }
  const Eigen::VectorXd& nu() const { return nu_; }
  const Eigen::MatrixXd& k_sum() const { return k_sum_; }
  const Eigen::MatrixXd& k_diff() const { return k_diff_; }
  Eigen::MatrixXd k_same() const { return 0.5 * (k_sum_ + k_diff_); }
  Eigen::MatrixXd k_cross() const { return 0.5 * (k_sum_ - k_diff_); }
  const OperatorStats& stats() const { return stats_; }

  // (L f)(x, v) pointwise in x. out may not alias f.
  void apply(const PairDistribution& f, PairDistribution& out) const;
  // Single velocity block: out_pm = nu g_pm - (K g)_pm.
  void apply_block(const double* gp, const double* gm, double* outp, double* outm) const;
  // K alone on a single block (decomposition consistency checks).
  void apply_k_block(const double* gp, const double* gm, double* outp, double* outm) const;
  // K alone, pointwise in x (batched matrix product).
  void apply_k(const PairDistribution& f, PairDistribution& out) const;

  // Spectral gap on the microscopic subspace in the nu-weighted metric:
  // min <g, Lg> / <g, nu g> over g orthogonal to the discrete null space.
  double coercivity_sigma0(int lanczos_iters = 160) const;

  // out = exp(-L tau) f, via the symmetric eigendecomposition of the channel
  // operators (computed on first use, reused while tau is unchanged, and
  // cached on disk next to the operator matrices). Exact collision substep:
  // unconditionally stable and conserves the collision invariants to
  // rounding.
  void apply_exp(const PairDistribution& f, double tau, PairDistribution& out) const;

private:
  struct Channel {
    Eigen::MatrixXd vectors;
    Eigen::VectorXd values;
  };
  void ensure_eigen() const;
  void ensure_exp(double tau) const;

  std::shared_ptr<const VelocityGrid> grid_;
  Eigen::VectorXd nu_;
  Eigen::MatrixXd k_sum_;
  Eigen::MatrixXd k_diff_;
  OperatorStats stats_;
  std::string cache_dir_;
  std::uint64_t cache_hash_ = 0;
  mutable Channel eig_sum_, eig_diff_;
  mutable Eigen::MatrixXd exp_sum_, exp_diff_;
  mutable double exp_tau_ = -1.0;
};

// Orthonormal lattice bases of the channel null spaces (columns).
Eigen::MatrixXd null_basis_sum_channel(const VelocityGrid& grid);
Eigen::MatrixXd null_basis_diff_channel(const VelocityGrid& grid);

}  // namespace vmb
