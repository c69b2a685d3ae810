#pragma once

// The covariance Markov chain of a wide fully connected Gaussian network:
// K^1 deterministic from the inputs, then
//   K^{l+1} = b^{(l+1)} * 1-kernel + (1/(lambda_l N_l)) sum_i C_{h_i},
// with h_i iid ~ N_H(0, K^l). Also the raw weight-space recursion, kept as an
// independent cross-check of the same law.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "nngpldp/activation.hpp"
#include "nngpldp/common.hpp"
#include "nngpldp/gaussian_field.hpp"
#include "nngpldp/grid.hpp"
#include "nngpldp/operator_core.hpp"

namespace nngpldp {

struct NetworkConfig {
  int depth = 1;      // L = number of hidden layers / chain transitions
  int input_dim = 1;  // N0
  int output_dim = 1; // D
  std::vector<double> width_ratios;  // m_1..m_L
  std::vector<double> precisions;    // lambda_0..lambda_L
  std::vector<double> biases;        // b^(1)..b^(L+1)
  ActivationSpec act = ActivationSpec::relu();

  void validate() const {
    if (depth < 1) throw config_error("network.depth", "must be >= 1");
    if (input_dim < 1) throw config_error("network.input_dim", "must be >= 1");
    if (output_dim < 1) throw config_error("network.output_dim", "must be >= 1");
    if (int(width_ratios.size()) != depth)
      throw config_error("network.width_ratios", "need exactly depth entries");
    if (int(precisions.size()) != depth + 1)
      throw config_error("network.precisions", "need exactly depth+1 entries (input layer included)");
    if (int(biases.size()) != depth + 1)
      throw config_error("network.biases", "need exactly depth+1 entries");
    for (double m : width_ratios)
      if (!(m > 0.0)) throw config_error("network.width_ratios", "ratios must be positive");
    for (double l : precisions)
      if (!(l > 0.0)) throw config_error("network.precisions", "precisions must be positive");
    for (double b : biases)
      if (b < 0.0) throw config_error("network.biases", "biases must be non-negative");
  }

  // realized widths N_l = max(1, floor(m_l N))
  std::vector<Eigen::Index> widths(Eigen::Index n) const {
    std::vector<Eigen::Index> w(depth);
    for (int l = 0; l < depth; ++l)
      w[l] = std::max<Eigen::Index>(1, Eigen::Index(std::floor(width_ratios[l] * double(n))));
    return w;
  }
};

struct ChainState {
  Grid grid;
  std::vector<OperatorRep> ops;  // K^2 .. K^{L+1}
  NetworkConfig cfg;
  SeedSpec seed;
  Eigen::Index scale_n = 0;            // the N the widths were derived from
  std::vector<Eigen::Index> widths;    // realized N_1..N_L
};

// K^1(x,x') = b1 + <x,x'> / (lambda0 * N0)
inline OperatorRep init_kernel(const Grid& grid, double lambda0, double b1 = 0.0,
                               const Tolerances& tol = {}) {
  if (!(lambda0 > 0.0)) throw std::invalid_argument("init_kernel: lambda0 must be positive");
  if (b1 < 0.0) throw std::invalid_argument("init_kernel: bias must be non-negative");
  const double n0 = double(grid.dim());
  Eigen::MatrixXd values = (grid.nodes * grid.nodes.transpose()) / (lambda0 * n0);
  values.array() += b1;
  return kernel_to_operator(KernelGrid{grid, values}, tol);
}

// one transition of the covariance chain
inline OperatorRep chain_step(const OperatorRep& k, Eigen::Index width, double lambda, double b,
                              const ActivationSpec& act, SeedSpec seed, const Tolerances& tol = {},
                              int workers = 1) {
  if (width < 1) throw std::invalid_argument("chain_step: width must be >= 1");
  if (!(lambda > 0.0)) throw std::invalid_argument("chain_step: lambda must be positive");
  if (b < 0.0) throw std::invalid_argument("chain_step: bias must be non-negative");
  const FieldSample fields = sample_field(k, width, seed, tol, workers);
  const Eigen::Index n = k.size();
  Eigen::MatrixXd s(width, n);  // row i = sqrt(w) .* sigma(h_i)
  const Eigen::VectorXd sw = k.grid.sqrt_weights();
  for (Eigen::Index i = 0; i < width; ++i)
    for (Eigen::Index j = 0; j < n; ++j) s(i, j) = sw[j] * act(fields.values(i, j));
  Eigen::MatrixXd sym = (s.transpose() * s) / (lambda * double(width));
  if (b > 0.0) sym += b * (sw * sw.transpose());
  return OperatorRep::from_sym(k.grid, std::move(sym), tol);
}

inline ChainState simulate_chain(const NetworkConfig& cfg, Eigen::Index n_scale, const Grid& grid,
                                 SeedSpec seed, const Tolerances& tol = {}, int workers = 1) {
  cfg.validate();
  if (n_scale < 1) throw std::invalid_argument("simulate_chain: N must be >= 1");
  if (grid.dim() != cfg.input_dim)
    throw std::invalid_argument("simulate_chain: grid dimension != network input_dim");
  ChainState st;
  st.grid = grid;
  st.cfg = cfg;
  st.seed = seed;
  st.scale_n = n_scale;
  st.widths = cfg.widths(n_scale);
  OperatorRep k = init_kernel(grid, cfg.precisions[0], cfg.biases[0], tol);
  for (int l = 1; l <= cfg.depth; ++l) {
    k = chain_step(k, st.widths[l - 1], cfg.precisions[l], cfg.biases[l], cfg.act,
                   seed.derive(std::uint64_t(l)), tol, workers);
    st.ops.push_back(k);
  }
  return st;
}

// K^layer for layer in [1, L+1]; layer 1 is the deterministic init kernel
inline OperatorRep chain_operator_at(const ChainState& st, int layer, const Tolerances& tol = {}) {
  if (layer < 1 || layer > st.cfg.depth + 1)
    throw std::invalid_argument("chain layer index out of range");
  if (layer == 1) return init_kernel(st.grid, st.cfg.precisions[0], st.cfg.biases[0], tol);
  return st.ops[std::size_t(layer - 2)];
}

// Raw weight-space recursion
//   h^(1)_i(x) = B^(1)_i + N0^{-1/2} sum_j W^(0)_ij x_j,
//   h^(l)_i(x) = B^(l)_i + N_{l-1}^{-1/2} sum_j W^(l-1)_ij sigma(h^(l-1)_j(x)),
// W^(l-1)_ij ~ N(0, 1/lambda_{l-1}), B^(l)_i ~ N(0, b^(l)). Returns the M
// requested output coordinates of h^(L+1) at the given inputs (M x P).
inline Eigen::MatrixXd simulate_network_outputs(const NetworkConfig& cfg, Eigen::Index n_scale,
                                                const Eigen::MatrixXd& inputs, Eigen::Index m_outputs,
                                                SeedSpec seed) {
  cfg.validate();
  if (inputs.cols() != cfg.input_dim)
    throw std::invalid_argument("simulate_network_outputs: input dim mismatch");
  if (m_outputs < 1 || m_outputs > cfg.output_dim)
    throw std::invalid_argument("simulate_network_outputs: need 1 <= M <= output_dim");
  const Eigen::Index p = inputs.rows();
  const auto widths = cfg.widths(n_scale);
  NormalSequence gen(seed);

  auto layer_pass = [&](const Eigen::MatrixXd& below, Eigen::Index n_out, double lambda,
                        double bias_var) {
    const Eigen::Index n_in = below.rows();
    const double scale = 1.0 / std::sqrt(double(n_in) * lambda);
    Eigen::MatrixXd w(n_out, n_in);
    for (Eigen::Index i = 0; i < n_out; ++i)
      for (Eigen::Index j = 0; j < n_in; ++j) w(i, j) = scale * gen.next();
    Eigen::MatrixXd h = w * below;
    if (bias_var > 0.0) {
      const double sd = std::sqrt(bias_var);
      for (Eigen::Index i = 0; i < n_out; ++i) h.row(i).array() += sd * gen.next();
    }
    return h;
  };

  // pre-activations at layer 1 from the raw inputs
  Eigen::MatrixXd h = layer_pass(inputs.transpose(), widths.empty() ? 1 : widths[0],
                                 cfg.precisions[0], cfg.biases[0]);
  for (int l = 2; l <= cfg.depth + 1; ++l) {
    Eigen::MatrixXd s(h.rows(), p);
    for (Eigen::Index i = 0; i < h.rows(); ++i)
      for (Eigen::Index mu = 0; mu < p; ++mu) s(i, mu) = cfg.act(h(i, mu));
    const Eigen::Index n_out = (l == cfg.depth + 1) ? m_outputs : widths[std::size_t(l - 1)];
    h = layer_pass(s, n_out, cfg.precisions[std::size_t(l - 1)], cfg.biases[std::size_t(l - 1)]);
  }
  return h;  // M x P
}

}  // namespace nngpldp
