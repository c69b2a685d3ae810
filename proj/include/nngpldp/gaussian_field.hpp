#pragma once

// Gaussian random elements of N_H(0, K) on the grid, and the rank-one
// activation operators C_h with kernel sigma(h(x)) sigma(h(y)).

#include <Eigen/Dense>
#include <cmath>

#include "nngpldp/activation.hpp"
#include "nngpldp/common.hpp"
#include "nngpldp/grid.hpp"
#include "nngpldp/operator_core.hpp"

namespace nngpldp {

struct FieldSample {
  Grid grid;
  Eigen::MatrixXd values;  // m x n, row = one field evaluated at the nodes
};

namespace detail {

// factor F with F F^T = sym (eigendecomposition; Cholesky would reject the
// rank-deficient operators that arise constantly here). Columns with
// eigenvalue inside the psd slack band are dropped to zero.
inline Eigen::MatrixXd sampling_factor(const OperatorRep& k, const Tolerances& tol) {
  require_psd(k, tol, "sample_field");
  const double slack = OperatorRep::psd_slack(k, tol);
  Eigen::VectorXd lam = k.evals;
  for (Eigen::Index i = 0; i < lam.size(); ++i) lam[i] = lam[i] > slack ? std::sqrt(lam[i]) : 0.0;
  return k.evecs * lam.asDiagonal();
}

}  // namespace detail

// m iid fields h ~ N_H(0, K). In sqrt(w)-coordinates h_sym = V Lambda^{1/2} xi;
// node values are h_sym / sqrt(w). Field i consumes draws [i*n, (i+1)*n) of the
// stream, so any parallel split over i reproduces the sequential result.
inline FieldSample sample_field(const OperatorRep& k, Eigen::Index m, SeedSpec seed,
                                const Tolerances& tol = {}, int workers = 1) {
  if (m < 1) throw std::invalid_argument("sample_field: m must be >= 1");
  const Eigen::Index n = k.size();
  const Eigen::MatrixXd factor = detail::sampling_factor(k, tol);
  const Eigen::VectorXd inv_sw = k.grid.sqrt_weights().cwiseInverse();
  FieldSample out{k.grid, Eigen::MatrixXd(m, n)};
  const RandomStream rs(seed);
  parallel_for(std::size_t(m), workers, [&](std::size_t i) {
    Eigen::VectorXd xi(n);
    for (Eigen::Index j = 0; j < n; ++j) xi[j] = rs.normal(std::uint64_t(i) * n + j);
    out.values.row(i) = (inv_sw.asDiagonal() * (factor * xi)).transpose();
  });
  return out;
}

// (1/m) sum_i h_i(x) h_i(y); PSD by construction
inline OperatorRep empirical_covariance(const FieldSample& s, const Tolerances& tol = {}) {
  const Eigen::Index m = s.values.rows();
  if (m < 1) throw std::invalid_argument("empirical_covariance: no samples");
  const Eigen::VectorXd sw = s.grid.sqrt_weights();
  const Eigen::MatrixXd scaled = s.values * sw.asDiagonal();  // rows in sym coordinates
  return OperatorRep::from_sym(s.grid, scaled.transpose() * scaled / double(m), tol);
}

// sym coordinates of sigma(h): s = sqrt(w) .* sigma(h)
inline Eigen::VectorXd activated_sym(const Eigen::VectorXd& h_values, const ActivationSpec& act,
                                     const Grid& grid) {
  Eigen::VectorXd s(h_values.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    s[i] = std::sqrt(grid.weights[i]) * act(h_values[i]);
  return s;
}

// rank-one operator with kernel sigma(h(x)) sigma(h(y))
inline OperatorRep cf_operator(const Eigen::VectorXd& h_values, const ActivationSpec& act,
                               const Grid& grid, const Tolerances& tol = {}) {
  if (h_values.size() != grid.size())
    throw std::invalid_argument("cf_operator: field length does not match grid");
  const Eigen::VectorXd s = activated_sym(h_values, act, grid);
  return OperatorRep::from_sym(grid, s * s.transpose(), tol);
}

}  // namespace nngpldp
