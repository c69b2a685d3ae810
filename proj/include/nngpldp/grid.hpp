#pragma once

// Quadrature grids discretizing the compact input set U and the L2(U) inner
// product: (f,g) = sum_i w_i f(x_i) g(x_i).

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "nngpldp/common.hpp"

namespace nngpldp {

struct Grid {
  Eigen::MatrixXd nodes;    // n x dim, row i = coordinates of node i
  Eigen::VectorXd weights;  // n positive quadrature weights
  std::string rule;         // "gauss_legendre" | "trapezoid" | "explicit"

  Eigen::Index size() const { return nodes.rows(); }
  Eigen::Index dim() const { return nodes.cols(); }
  double volume() const { return weights.sum(); }

  Eigen::VectorXd sqrt_weights() const { return weights.array().sqrt().matrix(); }

  bool same_as(const Grid& other) const {
    return nodes.rows() == other.nodes.rows() && nodes.cols() == other.nodes.cols() &&
           nodes == other.nodes && weights == other.weights;
  }

  void validate() const {
    if (size() < 1) throw std::invalid_argument("grid: needs at least one node");
    if (weights.size() != size()) throw std::invalid_argument("grid: nodes/weights length mismatch");
    for (Eigen::Index i = 0; i < size(); ++i)
      if (!(weights[i] > 0.0)) throw std::invalid_argument("grid: weights must be strictly positive");
    for (Eigen::Index i = 0; i < size(); ++i)
      for (Eigen::Index j = i + 1; j < size(); ++j)
        if (nodes.row(i) == nodes.row(j)) throw std::invalid_argument("grid: nodes must be pairwise distinct");
  }
};

namespace detail {

// Golub–Welsch: Gauss–Legendre nodes/weights on [-1,1] from the symmetric
// tridiagonal Jacobi matrix of the Legendre three-term recurrence.
inline void gauss_legendre_reference(int n, std::vector<double>& x, std::vector<double>& w) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  x.resize(n);
  w.resize(n);
  for (int k = 0; k < n; ++k) {
    x[k] = es.eigenvalues()[k];
    const double v0 = es.eigenvectors()(0, k);
    w[k] = 2.0 * v0 * v0;
  }
}

}  // namespace detail

// Tensor-product quadrature grid over a box given as per-axis intervals.
// n is the per-axis node count.
inline Grid make_grid(const std::vector<std::pair<double, double>>& domain, int n,
                      const std::string& rule = "gauss_legendre") {
  if (domain.empty()) throw std::invalid_argument("make_grid: empty domain");
  if (n < 1) throw std::invalid_argument("make_grid: n must be >= 1");
  for (const auto& [a, b] : domain)
    if (!(b > a)) throw std::invalid_argument("make_grid: degenerate interval in domain");
  if (rule != "gauss_legendre" && rule != "trapezoid")
    throw std::invalid_argument("make_grid: unknown rule '" + rule + "'");
  if (rule == "trapezoid" && n < 2)
    throw std::invalid_argument("make_grid: trapezoid needs n >= 2");

  // per-axis 1D rules
  const int dim = int(domain.size());
  std::vector<std::vector<double>> ax(dim), aw(dim);
  for (int d = 0; d < dim; ++d) {
    const double a = domain[d].first, b = domain[d].second;
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    if (rule == "gauss_legendre") {
      std::vector<double> xr, wr;
      detail::gauss_legendre_reference(n, xr, wr);
      for (int k = 0; k < n; ++k) {
        ax[d].push_back(mid + half * xr[k]);
        aw[d].push_back(half * wr[k]);
      }
    } else {
      const double h = (b - a) / (n - 1);
      for (int k = 0; k < n; ++k) {
        ax[d].push_back(a + h * k);
        aw[d].push_back(h * ((k == 0 || k == n - 1) ? 0.5 : 1.0));
      }
    }
  }

  Eigen::Index total = 1;
  for (int d = 0; d < dim; ++d) total *= n;
  Grid g;
  g.rule = rule;
  g.nodes.resize(total, dim);
  g.weights.resize(total);
  for (Eigen::Index i = 0; i < total; ++i) {
    Eigen::Index rest = i;
    double w = 1.0;
    for (int d = dim - 1; d >= 0; --d) {
      const int k = int(rest % n);
      rest /= n;
      g.nodes(i, d) = ax[d][k];
      w *= aw[d][k];
    }
    g.weights[i] = w;
  }
  g.validate();
  return g;
}

// Grid from explicit nodes (equal weights by default). Used where only the
// node-value law matters, e.g. evaluating chains at a handful of inputs.
inline Grid grid_from_nodes(const Eigen::MatrixXd& nodes, double total_weight = 1.0) {
  Grid g;
  g.rule = "explicit";
  g.nodes = nodes;
  g.weights = Eigen::VectorXd::Constant(nodes.rows(), total_weight / double(nodes.rows()));
  g.validate();
  return g;
}

}  // namespace nngpldp
