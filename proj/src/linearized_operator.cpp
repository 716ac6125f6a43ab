#include "vmb/linearized_operator.hpp"

#include <lapacke.h>
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <filesystem>

#include "vmb/checkpoint.hpp"

namespace vmb {

namespace {

Eigen::MatrixXd orthonormalize(Eigen::MatrixXd b) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(b);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(b.rows(), b.cols());
  return q;
}

// L -> (I - QQ^T) L (I - QQ^T), expressed as an update of K with L = nu - K.
void project_out_null(const Eigen::VectorXd& nu, Eigen::MatrixXd& k, const Eigen::MatrixXd& q) {
  const Eigen::MatrixXd lq = nu.asDiagonal() * q - k * q;                 // L Q
  const Eigen::MatrixXd qtl = (q.transpose() * nu.asDiagonal() - q.transpose() * k);  // Q^T L
  const Eigen::MatrixXd qtlq = qtl * q;                                   // Q^T L Q
  k.noalias() += q * qtl;
  k.noalias() += lq * q.transpose();
  k.noalias() -= q * qtlq * q.transpose();
}

double symmetrize_reporting_defect(Eigen::MatrixXd& m) {
  const double norm = m.norm();
  double defect2 = 0.0;
  const Eigen::Index n = m.rows();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = m(i, j) - m(j, i);
      defect2 += 2.0 * d * d;
      const double avg = 0.5 * (m(i, j) + m(j, i));
      m(i, j) = avg;
      m(j, i) = avg;
    }
  return norm > 0.0 ? std::sqrt(defect2) / norm : 0.0;
}

struct LanczosResult {
  double eigenvalue;
};

// Largest eigenvalue of op restricted to the orthogonal complement of the
// columns of defl, via Lanczos with full reorthogonalization.
template <class Op>
double lanczos_max(const Op& op, const Eigen::MatrixXd& defl, Eigen::Index n, int iters,
                   std::uint64_t seed) {
  std::vector<Eigen::VectorXd> basis;
  std::vector<double> alpha, beta;
  Eigen::VectorXd v(n);
  std::uint64_t s = seed;
  for (Eigen::Index i = 0; i < n; ++i) {
    s = s * 6364136223846793005ull + 1442695040888963407ull;
    v[i] = static_cast<double>(static_cast<std::int64_t>(s >> 11)) / 9.223372036854775807e18;
  }
  auto deflate = [&](Eigen::VectorXd& x) {
    if (defl.cols() > 0) x.noalias() -= defl * (defl.transpose() * x);
    for (const auto& b : basis) x -= b.dot(x) * b;
  };
  deflate(v);
  v.normalize();
  basis.push_back(v);
  Eigen::VectorXd w(n);
  for (int it = 0; it < iters; ++it) {
    op(basis.back(), w);
    const double a = basis.back().dot(w);
    alpha.push_back(a);
    w -= a * basis.back();
    if (basis.size() > 1) w -= beta.back() * basis[basis.size() - 2];
    deflate(w);
    const double b = w.norm();
    if (b < 1e-13) break;
    beta.push_back(b);
    w /= b;
    basis.push_back(w);
  }
  const int m = static_cast<int>(alpha.size());
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    t(i, i) = alpha[i];
    if (i + 1 < m) {
      t(i, i + 1) = beta[i];
      t(i + 1, i) = beta[i];
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
  return es.eigenvalues().maxCoeff();
}

double channel_sigma0(const Eigen::VectorXd& nu, const Eigen::MatrixXd& k,
                      const Eigen::MatrixXd& null_basis, int iters) {
  const Eigen::Index n = nu.size();
  const Eigen::VectorXd d_half = nu.cwiseSqrt();
  const Eigen::VectorXd d_inv_half = d_half.cwiseInverse();
  // C = D^{-1/2} (nu - K) D^{-1/2}; null vectors map to D^{1/2} b.
  Eigen::MatrixXd defl = d_half.asDiagonal() * null_basis;
  defl = orthonormalize(defl);
  auto apply_c = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    const Eigen::VectorXd t = d_inv_half.cwiseProduct(x);
    y.noalias() = k * t;
    y = x - d_inv_half.cwiseProduct(y);
  };
  const double lmax = lanczos_max(apply_c, defl, n, 60, 0x9e3779b97f4a7c15ull);
  const double shift = 1.02 * std::max(1.0, lmax);
  auto apply_shifted = [&](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    apply_c(x, y);
    y = shift * x - y;
  };
  const double smax = lanczos_max(apply_shifted, defl, n, iters, 0xda3e39cb94b95bdbull);
  return shift - smax;
}

std::string cache_key(const VelocityGrid& g, const KernelModel& m, const OperatorBuildOptions& o) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "op-v3|%.17g|%d|%s|%.17g|%.17g|%.17g|%zu|%d|%d|%d",
                g.v_max(), g.n(), m.name.c_str(), m.gamma, m.grad_bound_c, m.scale,
                m.sphere.cos_theta.size(), m.sphere.n_azimuth, int(o.symmetrize),
                int(o.null_project));
  return buf;
}

}  // namespace

Eigen::MatrixXd null_basis_sum_channel(const VelocityGrid& grid) {
  const std::size_t n = grid.size();
  Eigen::MatrixXd b(n, 5);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = grid.node(i);
    const double sm = grid.sqrt_mu()[i];
    b(i, 0) = sm;
    b(i, 1) = v[0] * sm;
    b(i, 2) = v[1] * sm;
    b(i, 3) = v[2] * sm;
    b(i, 4) = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] - 3.0) * sm;
  }
  return orthonormalize(b);
}

Eigen::MatrixXd null_basis_diff_channel(const VelocityGrid& grid) {
  const std::size_t n = grid.size();
  Eigen::MatrixXd b(n, 1);
  for (std::size_t i = 0; i < n; ++i) b(i, 0) = grid.sqrt_mu()[i];
  return orthonormalize(b);
}

LinearizedOperator LinearizedOperator::build(std::shared_ptr<const VelocityGrid> grid,
                                             const KernelModel& model,
                                             const OperatorBuildOptions& opts) {
  model.validate();
  LinearizedOperator op;
  op.grid_ = grid;

  const std::string key = cache_key(*grid, model, opts);
  const std::uint64_t hash = fnv1a(key);
  op.cache_dir_ = opts.cache_dir;
  op.cache_hash_ = (model.name != "custom") ? hash : 0;
  std::filesystem::path cache_file;
  if (!opts.cache_dir.empty() && model.name != "custom") {
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
    cache_file = std::filesystem::path(opts.cache_dir) / (std::string("vmb_op_") + hex + ".ckpt");
    if (std::filesystem::exists(cache_file) &&
        load_operator_cache(cache_file.string(), key, op.nu_, op.k_sum_, op.k_diff_)) {
      op.stats_.from_cache = true;
      return op;
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t nv = grid->size();
  const double vol = grid->cell_volume();
  const auto& sm = grid->sqrt_mu();

  const auto nu_vec = nu_lattice(*grid, model);
  op.nu_ = Eigen::Map<const Eigen::VectorXd>(nu_vec.data(), nv);

  op.k_sum_.setZero(nv, nv);
  op.k_diff_.setZero(nv, nv);

  const auto& sph = model.sphere;
  const std::size_t n_pol = sph.cos_theta.size();
  std::vector<double> bval(n_pol);
  for (std::size_t k = 0; k < n_pol; ++k) bval[k] = model.angular(sph.cos_theta[k]);

  std::size_t dropped = 0, total = 0;
#pragma omp parallel for schedule(dynamic, 8) reduction(+ : dropped, total)
  for (std::size_t i = 0; i < nv; ++i) {
    std::vector<double> t1row(nv, 0.0), t23row(nv, 0.0);
    const auto vi = grid->node(i);
    for (std::size_t j = 0; j < nv; ++j) {
      if (j == i) continue;
      const auto uj = grid->node(j);
      const std::array<double, 3> d{vi[0] - uj[0], vi[1] - uj[1], vi[2] - uj[2]};
      const double r = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
      const double kern0 = model.scale * std::pow(r, model.gamma) * vol * sm[j];
      const std::array<double, 3> nh{d[0] / r, d[1] / r, d[2] / r};
      std::array<double, 3> t1, t2;
      detail::pair_frame(nh, t1, t2);
      const double smij = sm[i] * sm[j];
      for (std::size_t kp = 0; kp < n_pol; ++kp) {
        const double ct = sph.cos_theta[kp];
        const double st = sph.sin_theta[kp];
        const double h = r * ct;
        for (int ka = 0; ka < sph.n_azimuth; ++ka) {
          const double common = sph.polar_weight[kp] * bval[kp] * kern0;
          // term 3 keeps the pre-collision node; always on the lattice
          t23row[j] += common * sm[i];
          ++total;
          if (common == 0.0) continue;
          const double ox = ct * nh[0] + st * (sph.cos_phi[ka] * t1[0] + sph.sin_phi[ka] * t2[0]);
          const double oy = ct * nh[1] + st * (sph.cos_phi[ka] * t1[1] + sph.sin_phi[ka] * t2[1]);
          const double oz = ct * nh[2] + st * (sph.cos_phi[ka] * t1[2] + sph.sin_phi[ka] * t2[2]);
          const std::array<double, 3> vp{vi[0] - h * ox, vi[1] - h * oy, vi[2] - h * oz};
          const std::array<double, 3> up{uj[0] + h * ox, uj[1] + h * oy, uj[2] + h * oz};
          const auto sv = detail::quad_stencil(*grid, vp);
          const auto su = detail::quad_stencil(*grid, up);
          if (!sv.in_range || !su.in_range) {
            ++dropped;
            continue;
          }
          // mu^{1/2}(v') mu^{1/2}(u') = mu^{1/2}(v) mu^{1/2}(u): one exp per item
          const double smvp = sqrt_maxwellian(vp[0], vp[1], vp[2]);
          const double smup = smij / smvp;
          // term 1: 2 mu^{1/2}(u') g_same(v')
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
              const double wab = 2.0 * common * smup * sv.w[0][a] * sv.w[1][b];
              const std::size_t col = grid->index(sv.base[0] + a, sv.base[1] + b, sv.base[2]);
              for (int c = 0; c < 3; ++c) t1row[col + c] += wab * sv.w[2][c];
            }
          // term 2: -mu^{1/2}(v') (g+ + g-)(u')
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
              const double wab = common * smvp * su.w[0][a] * su.w[1][b];
              const std::size_t col = grid->index(su.base[0] + a, su.base[1] + b, su.base[2]);
              for (int c = 0; c < 3; ++c) t23row[col + c] -= wab * su.w[2][c];
            }
        }
      }
    }
    for (std::size_t col = 0; col < nv; ++col) {
      op.k_diff_(i, col) = t1row[col];
      op.k_sum_(i, col) = t1row[col] + 2.0 * t23row[col];
    }
  }
  op.stats_.dropped_fraction = total > 0 ? static_cast<double>(dropped) / total : 0.0;

  if (opts.symmetrize) {
    op.stats_.asymmetry_sum = symmetrize_reporting_defect(op.k_sum_);
    op.stats_.asymmetry_diff = symmetrize_reporting_defect(op.k_diff_);
    if (op.stats_.asymmetry_sum > opts.asymmetry_ceiling ||
        op.stats_.asymmetry_diff > opts.asymmetry_ceiling)
      fail(Errc::constraint_violation,
           "linearized operator: non-symmetric assembly beyond tolerance (defects " +
               std::to_string(op.stats_.asymmetry_sum) + ", " +
               std::to_string(op.stats_.asymmetry_diff) + ")");
  }
  if (opts.null_project) {
    project_out_null(op.nu_, op.k_sum_, null_basis_sum_channel(*grid));
    project_out_null(op.nu_, op.k_diff_, null_basis_diff_channel(*grid));
  }
  op.stats_.build_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (!cache_file.empty()) save_operator_cache(cache_file.string(), key, op.nu_, op.k_sum_, op.k_diff_);
  return op;
}

void LinearizedOperator::apply_block(const double* gp, const double* gm, double* outp,
                                     double* outm) const {
  const Eigen::Index n = nu_.size();
  Eigen::Map<const Eigen::VectorXd> fp(gp, n), fm(gm, n);
  const Eigen::VectorXd u = fp + fm;
  const Eigen::VectorXd w = fp - fm;
  const Eigen::VectorXd ku = k_sum_ * u;
  const Eigen::VectorXd kw = k_diff_ * w;
  Eigen::Map<Eigen::VectorXd>(outp, n) = nu_.cwiseProduct(fp) - 0.5 * (ku + kw);
  Eigen::Map<Eigen::VectorXd>(outm, n) = nu_.cwiseProduct(fm) - 0.5 * (ku - kw);
}

void LinearizedOperator::apply_k_block(const double* gp, const double* gm, double* outp,
                                       double* outm) const {
  const Eigen::Index n = nu_.size();
  Eigen::Map<const Eigen::VectorXd> fp(gp, n), fm(gm, n);
  const Eigen::VectorXd ku = k_sum_ * (fp + fm);
  const Eigen::VectorXd kw = k_diff_ * (fp - fm);
  Eigen::Map<Eigen::VectorXd>(outp, n) = 0.5 * (ku + kw);
  Eigen::Map<Eigen::VectorXd>(outm, n) = 0.5 * (ku - kw);
}

void LinearizedOperator::apply(const PairDistribution& f, PairDistribution& out) const {
  if (f.vgrid_ptr().get() != grid_.get())
    fail(Errc::grid_mismatch, "apply_L: operator built on a different lattice");
  f.require_same_grids(out);
  const Eigen::Index n = nu_.size();
  const Eigen::Index nx = static_cast<Eigen::Index>(f.nx());
  Eigen::Map<const Eigen::MatrixXd> fp(f.block(0, 0), n, nx);
  Eigen::Map<const Eigen::MatrixXd> fm(f.block(1, 0), n, nx);
  const Eigen::MatrixXd u = fp + fm;
  const Eigen::MatrixXd w = fp - fm;
  Eigen::MatrixXd ku(n, nx), kw(n, nx);
  ku.noalias() = k_sum_ * u;
  kw.noalias() = k_diff_ * w;
  Eigen::Map<Eigen::MatrixXd> op(out.block(0, 0), n, nx);
  Eigen::Map<Eigen::MatrixXd> om(out.block(1, 0), n, nx);
  op = nu_.asDiagonal() * fp - 0.5 * (ku + kw);
  om = nu_.asDiagonal() * fm - 0.5 * (ku - kw);
}

void LinearizedOperator::apply_k(const PairDistribution& f, PairDistribution& out) const {
  if (f.vgrid_ptr().get() != grid_.get())
    fail(Errc::grid_mismatch, "apply_K: operator built on a different lattice");
  f.require_same_grids(out);
  const Eigen::Index n = nu_.size();
  const Eigen::Index nx = static_cast<Eigen::Index>(f.nx());
  Eigen::Map<const Eigen::MatrixXd> fp(f.block(0, 0), n, nx);
  Eigen::Map<const Eigen::MatrixXd> fm(f.block(1, 0), n, nx);
  const Eigen::MatrixXd u = fp + fm;
  const Eigen::MatrixXd w = fp - fm;
  Eigen::MatrixXd ku(n, nx), kw(n, nx);
  ku.noalias() = k_sum_ * u;
  kw.noalias() = k_diff_ * w;
  Eigen::Map<Eigen::MatrixXd>(out.block(0, 0), n, nx) = 0.5 * (ku + kw);
  Eigen::Map<Eigen::MatrixXd>(out.block(1, 0), n, nx) = 0.5 * (ku - kw);
}

namespace {

std::string eig_cache_path(const std::string& dir, std::uint64_t hash) {
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
  return dir + "/vmb_eig_" + hex + ".ckpt";
}

}  // namespace

void LinearizedOperator::ensure_eigen() const {
  if (eig_sum_.vectors.size() > 0) return;
  const std::size_t n = static_cast<std::size_t>(nu_.size());
  if (!cache_dir_.empty() && cache_hash_ != 0) {
    const std::string path = eig_cache_path(cache_dir_, cache_hash_);
    if (std::filesystem::exists(path)) {
      try {
        const Checkpoint ck = Checkpoint::load(path);
        if (ck.meta.value("key_hash", 0ull) == cache_hash_) {
          auto unpack = [n](const NamedArray& a, Eigen::MatrixXd& m) {
            m.resize(n, n);
            for (std::size_t r = 0; r < n; ++r)
              for (std::size_t c = 0; c < n; ++c) m(r, c) = a.data[r * n + c];
          };
          unpack(ck.get("vec_sum"), eig_sum_.vectors);
          unpack(ck.get("vec_diff"), eig_diff_.vectors);
          eig_sum_.values = Eigen::Map<const Eigen::VectorXd>(ck.get("val_sum").data.data(), n);
          eig_diff_.values = Eigen::Map<const Eigen::VectorXd>(ck.get("val_diff").data.data(), n);
          return;
        }
      } catch (const Error&) {
        // fall through to a fresh decomposition
      }
    }
  }
  auto decompose = [&](const Eigen::MatrixXd& k, Channel& out) {
    out.vectors = Eigen::MatrixXd(nu_.asDiagonal()) - k;
    out.values.resize(n);
    const auto info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', static_cast<lapack_int>(n),
                                     out.vectors.data(), static_cast<lapack_int>(n),
                                     out.values.data());
    if (info != 0) fail(Errc::numerical_abort, "eigendecomposition of L failed");
  };
  decompose(k_sum_, eig_sum_);
  decompose(k_diff_, eig_diff_);
  if (!cache_dir_.empty() && cache_hash_ != 0) {
    Checkpoint ck;
    ck.meta["key_hash"] = cache_hash_;
    auto pack = [n](const Eigen::MatrixXd& m) {
      std::vector<double> out(n * n);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) out[r * n + c] = m(r, c);
      return out;
    };
    ck.add("vec_sum", {n, n}, pack(eig_sum_.vectors));
    ck.add("val_sum", {n}, std::vector<double>(eig_sum_.values.data(), eig_sum_.values.data() + n));
    ck.add("vec_diff", {n, n}, pack(eig_diff_.vectors));
    ck.add("val_diff", {n},
           std::vector<double>(eig_diff_.values.data(), eig_diff_.values.data() + n));
    ck.save(eig_cache_path(cache_dir_, cache_hash_));
  }
}

void LinearizedOperator::ensure_exp(double tau) const {
  if (exp_tau_ == tau && exp_sum_.size() > 0) return;
  ensure_eigen();
  auto build = [&](const Channel& ch, Eigen::MatrixXd& out) {
    const Eigen::VectorXd e = (-tau * ch.values.array()).exp().matrix();
    Eigen::MatrixXd scaled = ch.vectors * e.asDiagonal();
    out.noalias() = scaled * ch.vectors.transpose();
  };
  build(eig_sum_, exp_sum_);
  build(eig_diff_, exp_diff_);
  exp_tau_ = tau;
}

void LinearizedOperator::apply_exp(const PairDistribution& f, double tau,
                                   PairDistribution& out) const {
  if (f.vgrid_ptr().get() != grid_.get())
    fail(Errc::grid_mismatch, "apply_exp: operator built on a different lattice");
  f.require_same_grids(out);
  ensure_exp(tau);
  const Eigen::Index n = nu_.size();
  const Eigen::Index nx = static_cast<Eigen::Index>(f.nx());
  Eigen::Map<const Eigen::MatrixXd> fp(f.block(0, 0), n, nx);
  Eigen::Map<const Eigen::MatrixXd> fm(f.block(1, 0), n, nx);
  const Eigen::MatrixXd u = fp + fm;
  const Eigen::MatrixXd w = fp - fm;
  Eigen::MatrixXd eu(n, nx), ew(n, nx);
  eu.noalias() = exp_sum_ * u;
  ew.noalias() = exp_diff_ * w;
  Eigen::Map<Eigen::MatrixXd>(out.block(0, 0), n, nx) = 0.5 * (eu + ew);
  Eigen::Map<Eigen::MatrixXd>(out.block(1, 0), n, nx) = 0.5 * (eu - ew);
}

double LinearizedOperator::coercivity_sigma0(int lanczos_iters) const {
  const double s_sum = channel_sigma0(nu_, k_sum_, null_basis_sum_channel(*grid_), lanczos_iters);
  const double s_diff = channel_sigma0(nu_, k_diff_, null_basis_diff_channel(*grid_), lanczos_iters);
  return std::min(s_sum, s_diff);
}

}  // namespace vmb
