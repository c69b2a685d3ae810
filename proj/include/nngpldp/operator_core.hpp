#pragma once

// Grid-discretized trace-class operator algebra. An operator with kernel
// K(x,y) on L2(U) is represented by the similarity-symmetrized matrix
//   S = diag(sqrt(w)) * [K(x_i,x_j)] * diag(sqrt(w)),
// whose eigenvalues coincide with those of the discretized operator, so
// traces and the operator/HS/trace norms are plain spectral quantities.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "nngpldp/common.hpp"
#include "nngpldp/grid.hpp"

namespace nngpldp {

struct Tolerances {
  double psd_tol = 1e-10;  // eigenvalues in [-psd_tol, 0) are floating-point zeros
  double sym_tol = 1e-12;  // relative asymmetry allowed in input kernels
  double eig_clip = 0.0;   // replacement value for clipped eigenvalues
};

struct KernelGrid {
  Grid grid;
  Eigen::MatrixXd values;  // values(i,j) = K(x_i, x_j)
};

class OperatorRep {
 public:
  Grid grid;
  Eigen::MatrixXd sym;      // symmetrized representation S
  Eigen::VectorXd evals;    // descending
  Eigen::MatrixXd evecs;    // columns match evals
  bool nonneg = false;      // min eigenvalue >= -psd_tol at construction

  OperatorRep() = default;

  static OperatorRep from_sym(Grid g, Eigen::MatrixXd s, const Tolerances& tol = {}) {
    OperatorRep op;
    op.grid = std::move(g);
    op.sym = 0.5 * (s + s.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op.sym);
    const Eigen::Index n = op.sym.rows();
    op.evals = es.eigenvalues().reverse();
    op.evecs = es.eigenvectors().rowwise().reverse();
    op.nonneg = op.evals[n - 1] >= -psd_slack(op, tol);
    return op;
  }

  Eigen::Index size() const { return sym.rows(); }
  double min_eig() const { return evals[evals.size() - 1]; }
  double max_eig() const { return evals[0]; }

  // kernel values at node pairs: K_ij = S_ij / (sqrt(w_i) sqrt(w_j))
  Eigen::MatrixXd kernel_values() const {
    const Eigen::VectorXd inv_sw = grid.sqrt_weights().cwiseInverse();
    return inv_sw.asDiagonal() * sym * inv_sw.asDiagonal();
  }

  KernelGrid kernel() const { return KernelGrid{grid, kernel_values()}; }

  static double psd_slack(const OperatorRep& op, const Tolerances& tol) {
    return tol.psd_tol * std::max(1.0, std::abs(op.evals.size() ? op.max_eig() : 0.0));
  }
};

// ---- construction ----------------------------------------------------------

inline OperatorRep kernel_to_operator(const KernelGrid& k, const Tolerances& tol = {}) {
  k.grid.validate();
  const Eigen::Index n = k.grid.size();
  if (k.values.rows() != n || k.values.cols() != n)
    throw invalid_kernel("kernel matrix shape does not match grid");
  const double scale = std::max(1.0, k.values.cwiseAbs().maxCoeff());
  const double asym = (k.values - k.values.transpose()).cwiseAbs().maxCoeff();
  if (asym > tol.sym_tol * scale)
    throw invalid_kernel("kernel asymmetry " + fmt17(asym) + " exceeds tolerance");
  const Eigen::VectorXd sw = k.grid.sqrt_weights();
  return OperatorRep::from_sym(k.grid, sw.asDiagonal() * k.values * sw.asDiagonal(), tol);
}

// ---- spectral functionals ---------------------------------------------------

inline double trace(const OperatorRep& k) { return k.sym.trace(); }

inline double trace_norm(const OperatorRep& k) { return k.evals.cwiseAbs().sum(); }

inline double hs_norm(const OperatorRep& k) { return std::sqrt(k.evals.squaredNorm()); }

inline double op_norm(const OperatorRep& k) {
  return k.evals.size() ? k.evals.cwiseAbs().maxCoeff() : 0.0;
}

inline void require_psd(const OperatorRep& k, const Tolerances& tol, const char* who) {
  if (k.min_eig() < -OperatorRep::psd_slack(k, tol))
    throw not_psd(std::string(who) + ": min eigenvalue " + fmt17(k.min_eig()));
}

// Unique non-negative square root. Eigenvalues inside the psd slack band are
// zeros (sqrt would amplify 1e-16 dust to 1e-8 otherwise).
inline OperatorRep sqrt_op(const OperatorRep& k, const Tolerances& tol = {}) {
  require_psd(k, tol, "sqrt_op");
  const double slack = OperatorRep::psd_slack(k, tol);
  Eigen::VectorXd lam = k.evals;
  for (Eigen::Index i = 0; i < lam.size(); ++i)
    lam[i] = lam[i] > slack ? std::sqrt(lam[i]) : std::sqrt(tol.eig_clip);
  return OperatorRep::from_sym(k.grid, k.evecs * lam.asDiagonal() * k.evecs.transpose(), tol);
}

// trace of sqrt(K) without building the root
inline double trace_sqrt(const OperatorRep& k) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < k.evals.size(); ++i)
    if (k.evals[i] > 0.0) s += std::sqrt(k.evals[i]);
  return s;
}

// ---- arithmetic -------------------------------------------------------------

inline OperatorRep op_add(const OperatorRep& a, const OperatorRep& b, double ca = 1.0, double cb = 1.0,
                          const Tolerances& tol = {}) {
  if (!a.grid.same_as(b.grid)) throw std::invalid_argument("operator arithmetic: grid mismatch");
  return OperatorRep::from_sym(a.grid, ca * a.sym + cb * b.sym, tol);
}

inline OperatorRep op_diff(const OperatorRep& a, const OperatorRep& b, const Tolerances& tol = {}) {
  return op_add(a, b, 1.0, -1.0, tol);
}

// ---- Powers–Størmer and convergence metrics ---------------------------------

struct GapRecord {
  double lhs = 0.0;
  double rhs = 0.0;
};

// classical: ||sqrt(K) - sqrt(K2)||_2^2 <= ||K - K2||_1
inline GapRecord powers_stormer_gap(const OperatorRep& k, const OperatorRep& k2,
                                    const Tolerances& tol = {}) {
  const OperatorRep ra = sqrt_op(k, tol), rb = sqrt_op(k2, tol);
  const double lhs = (ra.sym - rb.sym).squaredNorm();
  return GapRecord{lhs, trace_norm(op_diff(k, k2, tol))};
}

// variant: ||sqrt K - sqrt K'||_2 <= |tr K - tr K'|^{1/2}
//          + sqrt(2) ||K-K'||_2^{1/4} min(tr sqrt K, tr sqrt K')^{1/2}
inline GapRecord powers_stormer_variant(const OperatorRep& k, const OperatorRep& k2,
                                        const Tolerances& tol = {}) {
  const OperatorRep ra = sqrt_op(k, tol), rb = sqrt_op(k2, tol);
  const double lhs = (ra.sym - rb.sym).norm();
  const double gap = std::abs(trace(k) - trace(k2));
  const double d2 = hs_norm(op_diff(k, k2, tol));
  const double m = std::min(trace_sqrt(k), trace_sqrt(k2));
  return GapRecord{lhs, std::sqrt(gap) + std::sqrt(2.0) * std::pow(d2, 0.25) * std::sqrt(m)};
}

struct EquivMetrics {
  double d_sqrt_hs = 0.0;   // ||sqrt(Kn) - sqrt(K)||_2
  double d_tr = 0.0;        // ||Kn - K||_1
  double d_hs = 0.0;        // ||Kn - K||_2
  double d_trace_gap = 0.0; // |tr Kn - tr K|
};

inline EquivMetrics equiv_metrics(const OperatorRep& kn, const OperatorRep& k,
                                  const Tolerances& tol = {}) {
  const OperatorRep diff = op_diff(kn, k, tol);
  EquivMetrics m;
  m.d_sqrt_hs = (sqrt_op(kn, tol).sym - sqrt_op(k, tol).sym).norm();
  m.d_tr = trace_norm(diff);
  m.d_hs = hs_norm(diff);
  m.d_trace_gap = std::abs(trace(kn) - trace(k));
  return m;
}

// ---- PSD projection ----------------------------------------------------------

struct PsdProjection {
  OperatorRep op;
  double clipped = 0.0;   // magnitude of the most negative clipped eigenvalue
  bool exceeded = false;  // clipping went beyond psd_tol
};

// Nearest-in-HS projection onto the PSD cone; exact no-op on PSD input.
inline PsdProjection psd_project(const Grid& grid, const Eigen::MatrixXd& m,
                                 const Tolerances& tol = {}) {
  OperatorRep op = OperatorRep::from_sym(grid, m, tol);
  PsdProjection out;
  if (op.min_eig() >= 0.0) {
    out.op = std::move(op);
    return out;
  }
  out.clipped = -op.min_eig();
  out.exceeded = out.clipped > OperatorRep::psd_slack(op, tol);
  Eigen::VectorXd lam = op.evals.cwiseMax(tol.eig_clip);
  out.op = OperatorRep::from_sym(grid, op.evecs * lam.asDiagonal() * op.evecs.transpose(), tol);
  return out;
}

inline PsdProjection psd_project(const OperatorRep& op, const Tolerances& tol = {}) {
  return psd_project(op.grid, op.sym, tol);
}

}  // namespace nngpldp
