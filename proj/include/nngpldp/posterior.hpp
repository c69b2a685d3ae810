#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "nngpldp/chain.hpp"
#include "nngpldp/nngp.hpp"
#include "nngpldp/rate.hpp"

namespace nngpldp {

// ---- training data -------------------------------------------------------

struct TrainingSet {
  Eigen::MatrixXd inputs;     // P x dim
  Eigen::MatrixXd responses;  // P x D, row mu = y_mu
  double beta = 1.0;          // likelihood precision

  Eigen::Index count() const { return inputs.rows(); }
  Eigen::Index response_dim() const { return responses.cols(); }

  void validate() const {
    if (inputs.rows() < 1) throw config_error("train.inputs", "need at least one input");
    if (responses.rows() != inputs.rows())
      throw config_error("train.responses", "row count must match inputs");
    if (responses.cols() < 1) throw config_error("train.responses", "need at least one column");
    if (!(beta > 0.0)) throw config_error("train.beta", "must be positive");
    if (!inputs.allFinite() || !responses.allFinite())
      throw config_error("train.inputs", "non-finite entries");
  }

  // y_{1:P}: blocks of length D, block mu = y_mu (column stacking of [y_1 .. y_P])
  Eigen::VectorXd stacked() const {
    const Eigen::Index p = count(), d = response_dim();
    Eigen::VectorXd y(p * d);
    for (Eigen::Index mu = 0; mu < p; ++mu) y.segment(mu * d, d) = responses.row(mu).transpose();
    return y;
  }
};

// Map each training input to its grid node (inputs must sit on nodes).
inline std::vector<Eigen::Index> resolve_on_grid(const TrainingSet& train, const Grid& grid,
                                                 double match_tol = 1e-9) {
  train.validate();
  if (train.inputs.cols() != grid.dim())
    throw config_error("train.inputs", "dimension does not match grid");
  std::vector<Eigen::Index> idx(std::size_t(train.count()), -1);
  for (Eigen::Index mu = 0; mu < train.count(); ++mu) {
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index arg = -1;
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
      const double d = (grid.nodes.row(i) - train.inputs.row(mu)).norm();
      if (d < best) {
        best = d;
        arg = i;
      }
    }
    if (best > match_tol)
      throw config_error("train.inputs",
                         "input " + std::to_string(mu) + " is not a grid node (distance " +
                             fmt17(best) + "); enable interpolation or move it");
    idx[std::size_t(mu)] = arg;
  }
  return idx;
}

namespace detail {

// Linear interpolation weights of x on an ascending 1-d node set.
inline void interp1_weights(const Eigen::MatrixXd& nodes, double x, Eigen::Index& i0,
                            Eigen::Index& i1, double& w0, double& w1) {
  const Eigen::Index n = nodes.rows();
  if (x <= nodes(0, 0)) {
    i0 = i1 = 0;
    w0 = 1.0;
    w1 = 0.0;
    return;
  }
  if (x >= nodes(n - 1, 0)) {
    i0 = i1 = n - 1;
    w0 = 1.0;
    w1 = 0.0;
    return;
  }
  Eigen::Index hi = 1;
  while (nodes(hi, 0) < x) ++hi;
  i0 = hi - 1;
  i1 = hi;
  const double t = (x - nodes(i0, 0)) / (nodes(i1, 0) - nodes(i0, 0));
  w0 = 1.0 - t;
  w1 = t;
}

}  // namespace detail

// Kernel restricted to the training inputs. With interpolate the kernel is
// extended off-node by piecewise-linear interpolation in each argument
// (1-d grids only); exact node matching otherwise.
inline Eigen::MatrixXd kernel_at_inputs(const KernelGrid& k, const TrainingSet& train,
                                        bool interpolate = false) {
  const Eigen::Index p = train.count();
  Eigen::MatrixXd out(p, p);
  if (!interpolate) {
    const std::vector<Eigen::Index> idx = resolve_on_grid(train, k.grid);
    for (Eigen::Index a = 0; a < p; ++a)
      for (Eigen::Index b = 0; b < p; ++b)
        out(a, b) = k.values(idx[std::size_t(a)], idx[std::size_t(b)]);
    return out;
  }
  train.validate();
  if (k.grid.dim() != 1 || train.inputs.cols() != 1)
    throw config_error("train.inputs", "kernel interpolation supports 1-d grids only");
  const std::size_t ps = std::size_t(p);
  std::vector<Eigen::Index> i0(ps), i1(ps);
  std::vector<double> w0(ps), w1(ps);
  for (Eigen::Index a = 0; a < p; ++a)
    detail::interp1_weights(k.grid.nodes, train.inputs(a, 0), i0[std::size_t(a)],
                            i1[std::size_t(a)], w0[std::size_t(a)], w1[std::size_t(a)]);
  for (Eigen::Index a = 0; a < p; ++a)
    for (Eigen::Index b = 0; b < p; ++b) {
      const auto sa = std::size_t(a), sb = std::size_t(b);
      out(a, b) = w0[sa] * (w0[sb] * k.values(i0[sa], i0[sb]) + w1[sb] * k.values(i0[sa], i1[sb])) +
                  w1[sa] * (w0[sb] * k.values(i1[sa], i0[sb]) + w1[sb] * k.values(i1[sa], i1[sb]));
    }
  return out;
}

// Sigma = [K(x_mu, x_nu)] (x) 1_D, block (mu, nu) = K(x_mu, x_nu) * identity.
inline Eigen::MatrixXd sigma_matrix(const Eigen::MatrixXd& k_at_inputs, Eigen::Index d_out) {
  if (k_at_inputs.rows() != k_at_inputs.cols())
    throw std::invalid_argument("sigma_matrix: kernel block must be square");
  if (d_out < 1) throw std::invalid_argument("sigma_matrix: output dimension must be >= 1");
  const Eigen::Index p = k_at_inputs.rows();
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(p * d_out, p * d_out);
  for (Eigen::Index mu = 0; mu < p; ++mu)
    for (Eigen::Index nu = 0; nu < p; ++nu)
      sigma.block(mu * d_out, nu * d_out, d_out, d_out) =
          k_at_inputs(mu, nu) * Eigen::MatrixXd::Identity(d_out, d_out);
  return sigma;
}

// ---- tilting functionals --------------------------------------------------

struct PsiParts {
  double value = 0.0;   // quad + logdet
  double quad = 0.0;    // beta y^T (1 + beta Sigma)^{-1} y
  double logdet = 0.0;  // log det(1 + beta Sigma)
};

// Psi(Sigma | y) = beta y^T (1 + beta Sigma)^{-1} y + log det(1 + beta Sigma),
// through a Cholesky factorization of the (always >= 1) matrix 1 + beta Sigma.
inline PsiParts psi_parts(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& y, double beta) {
  if (sigma.rows() != sigma.cols()) throw std::invalid_argument("psi: Sigma must be square");
  if (y.size() != sigma.rows()) throw std::invalid_argument("psi: y size does not match Sigma");
  if (!(beta > 0.0)) throw std::invalid_argument("psi: beta must be positive");
  const Eigen::Index n = sigma.rows();
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) + beta * sigma;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw not_psd("psi: 1 + beta Sigma is not positive definite (Sigma far from PSD)");
  PsiParts out;
  out.quad = beta * y.dot(llt.solve(y));
  out.logdet = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  out.value = out.quad + out.logdet;
  return out;
}

inline double psi(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& y, double beta) {
  return psi_parts(sigma, y, beta).value;
}

// Mean-field tilt: the quadratic term rides the speed N.
inline PsiParts psi_mf_parts(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& y, double beta,
                             Eigen::Index n_scale) {
  if (n_scale < 1) throw std::invalid_argument("psi_mf: N must be >= 1");
  PsiParts parts = psi_parts(sigma, y, beta);
  parts.quad *= double(n_scale);
  parts.value = parts.quad + parts.logdet;
  return parts;
}

inline double psi_mf(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& y, double beta,
                     Eigen::Index n_scale) {
  return psi_mf_parts(sigma, y, beta, n_scale).value;
}

// ---- posterior reweighting --------------------------------------------------

// log posterior weight of one simulated chain: -Psi/2 (or -Psi_N/2) evaluated
// at its terminal kernel restricted to the training inputs.
inline double posterior_log_weight(const ChainState& chain, const TrainingSet& train,
                                   bool mean_field = false, Eigen::Index n_scale = 1,
                                   bool interpolate = false) {
  train.validate();
  if (chain.ops.empty()) throw std::invalid_argument("posterior_log_weight: empty chain");
  if (train.response_dim() != chain.cfg.output_dim)
    throw config_error("train.responses",
                       "column count must equal the network output dimension");
  const OperatorRep& last = chain.ops.back();
  const Eigen::MatrixXd kp =
      kernel_at_inputs(KernelGrid{last.grid, last.kernel_values()}, train, interpolate);
  const Eigen::MatrixXd sigma = sigma_matrix(kp, chain.cfg.output_dim);
  const Eigen::VectorXd y = train.stacked();
  const double p =
      mean_field ? psi_mf(sigma, y, train.beta, n_scale) : psi(sigma, y, train.beta);
  return -0.5 * p;
}

struct PosteriorEnsemble {
  std::vector<ChainState> samples;
  std::vector<double> log_weights;           // raw -Psi/2 per sample
  std::vector<double> weights;               // self-normalized
  bool normalized = false;
  bool interpolated = false;
  double ess = 0.0;                          // (sum w)^2 / sum w^2
  std::vector<Eigen::Index> resample_index;  // multinomial draw, same count
};

// Self-normalized importance weighting of a prior chain ensemble, with a
// multinomial resample to an unweighted ensemble (indices into samples).
inline PosteriorEnsemble posterior_resample(const std::vector<ChainState>& prior,
                                            const TrainingSet& train, bool mean_field,
                                            Eigen::Index n_scale, SeedSpec seed,
                                            bool interpolate = false, int workers = 1) {
  if (prior.empty()) throw std::invalid_argument("posterior_resample: empty prior ensemble");
  const std::size_t m = prior.size();
  PosteriorEnsemble out;
  out.samples = prior;
  out.log_weights.assign(m, 0.0);
  out.interpolated = interpolate;
  parallel_for(m, workers, [&](std::size_t i) {
    out.log_weights[i] =
        posterior_log_weight(prior[i], train, mean_field, n_scale, interpolate);
  });

  const double shift = *std::max_element(out.log_weights.begin(), out.log_weights.end());
  if (!std::isfinite(shift))
    throw std::logic_error("posterior_resample: all log-weights are non-finite");
  out.weights.assign(m, 0.0);
  double total = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    out.weights[i] = std::exp(out.log_weights[i] - shift);
    total += out.weights[i];
  }
  for (std::size_t i = 0; i < m; ++i) {
    out.weights[i] /= total;
    sq += out.weights[i] * out.weights[i];
  }
  out.normalized = true;
  out.ess = 1.0 / sq;

  // multinomial resample by inverse CDF on a common uniform stream
  out.resample_index.assign(m, 0);
  RandomStream rs(seed);
  for (std::size_t i = 0; i < m; ++i) {
    const double u = rs.uniform(std::uint64_t(i));
    double acc = 0.0;
    Eigen::Index pick = Eigen::Index(m) - 1;
    for (std::size_t j = 0; j < m; ++j) {
      acc += out.weights[j];
      if (u <= acc) {
        pick = Eigen::Index(j);
        break;
      }
    }
    out.resample_index[i] = pick;
  }
  return out;
}

// ---- mean-field rate --------------------------------------------------------

struct MfRateResult {
  double value = 0.0;  // chain rate + quadratic term - I0
  double quad = 0.0;   // beta y^T (1 + beta Sigma(K^{L+1}))^{-1} y
  ChainRateResult chain;
};

// I_mf(path) = I(path) + beta y^T (1 + beta Sigma(K_{L+1}))^{-1} y - I0
inline MfRateResult mf_rate(const std::vector<OperatorRep>& ks, const TrainingSet& train,
                            const NetworkConfig& cfg, double i0, const RateOptions& opts = {},
                            const Tolerances& tol = {}, bool interpolate = false) {
  train.validate();
  if (train.response_dim() != cfg.output_dim)
    throw config_error("train.responses", "column count must equal the network output dimension");
  MfRateResult out;
  out.chain = chain_rate(ks, cfg, opts, tol);
  const OperatorRep& last = ks.back();
  const Eigen::MatrixXd kp =
      kernel_at_inputs(KernelGrid{last.grid, last.kernel_values()}, train, interpolate);
  out.quad = psi_parts(sigma_matrix(kp, cfg.output_dim), train.stacked(), train.beta).quad;
  out.value = out.chain.total + out.quad - i0;
  return out;
}

// ---- I0 search ---------------------------------------------------------------

struct I0SearchOptions {
  int population = 16;       // candidates per round
  int elite = 4;             // kept for the distribution update
  int rounds = 4;
  Eigen::Index search_samples = 10000;  // reduced MC budget during the search
  int search_max_iter = 150;
  double init_scale_sd = 0.35;   // stddev of log-scaling parameters
  double init_bump_sd = 0.35;    // stddev of bump-amplitude parameters (amp = v^2)
  double min_sd = 0.02;          // keeps the proposal from collapsing
  double bump_width = 0.0;       // Gaussian bump length scale; 0 = 2x mean node spacing
  double improve_tol = 5e-3;     // last-round gain above this flags an exhausted budget

  void validate() const {
    if (population < 2) throw config_error("i0.population", "must be >= 2");
    if (elite < 1 || elite > population)
      throw config_error("i0.elite", "must be in [1, population]");
    if (rounds < 1) throw config_error("i0.rounds", "must be >= 1");
    if (search_samples < 2) throw config_error("i0.search_samples", "must be >= 2");
    if (search_max_iter < 1) throw config_error("i0.search_max_iter", "must be >= 1");
    if (!(init_scale_sd > 0.0) || !(init_bump_sd > 0.0) || !(min_sd > 0.0))
      throw config_error("i0.init_scale_sd", "proposal stddevs must be positive");
    if (bump_width < 0.0) throw config_error("i0.bump_width", "must be >= 0");
    if (!(improve_tol > 0.0)) throw config_error("i0.improve_tol", "must be positive");
  }
};

struct I0Estimate {
  double i0_upper = 0.0;             // certified upper bound (full-budget re-evaluation)
  std::vector<OperatorRep> argmin;   // best candidate chain K^2..K^{L+1}
  std::vector<double> trace;         // best search objective after each round
  bool exhausted = false;            // still improving when the round budget ran out
};

namespace detail {

// Candidate family: per-layer positive scalings of the NNGP path plus a
// nonnegative Gaussian-bump rank correction at the training inputs on the
// terminal kernel. theta = (u_1..u_L, v_1..v_P), scale_l = exp(u_l),
// amplitude_mu = v_mu^2.
inline std::vector<OperatorRep> i0_candidate(const std::vector<OperatorRep>& base,
                                             const Eigen::VectorXd& theta,
                                             const std::vector<Eigen::MatrixXd>& bumps,
                                             const Tolerances& tol) {
  const int depth = int(base.size());
  std::vector<OperatorRep> out;
  out.reserve(base.size());
  for (int l = 0; l < depth; ++l) {
    Eigen::MatrixXd sym = std::exp(theta[l]) * base[std::size_t(l)].sym;
    if (l == depth - 1)
      for (std::size_t mu = 0; mu < bumps.size(); ++mu) {
        const double v = theta[depth + Eigen::Index(mu)];
        sym += (v * v) * bumps[mu];
      }
    out.push_back(OperatorRep::from_sym(base[std::size_t(l)].grid, sym, tol));
  }
  return out;
}

}  // namespace detail

// Cross-entropy search for an upper bound on I0 = inf over chains of
// [prior chain rate + quadratic data term]. Exactness is only claimed where a
// scan oracle exists (scalar case); elsewhere this is an upper bound witness.
inline I0Estimate estimate_I0(const NetworkConfig& cfg, const Grid& grid,
                              const TrainingSet& train, const I0SearchOptions& search = {},
                              const RateOptions& opts = {}, SeedSpec seed = {},
                              const Tolerances& tol = {}) {
  cfg.validate();
  search.validate();
  opts.validate();
  train.validate();
  cfg.act.require_rate_admissible("estimate_I0");
  if (train.response_dim() != cfg.output_dim)
    throw config_error("train.responses", "column count must equal the network output dimension");
  resolve_on_grid(train, grid);

  const std::vector<OperatorRep> base = nngp_chain(cfg, grid, {}, tol);
  const Eigen::Index p = train.count();
  const int dim = cfg.depth + int(p);

  // Gaussian bump vectors at the training inputs, in sym coordinates
  double width = search.bump_width;
  if (width == 0.0) {
    if (grid.size() > 1) {
      double acc = 0.0;
      int cnt = 0;
      for (Eigen::Index i = 1; i < grid.size(); ++i) {
        acc += (grid.nodes.row(i) - grid.nodes.row(i - 1)).norm();
        ++cnt;
      }
      width = 2.0 * acc / double(cnt);
    } else {
      width = 1.0;
    }
  }
  const Eigen::VectorXd sw = grid.sqrt_weights();
  std::vector<Eigen::MatrixXd> bumps;
  for (Eigen::Index mu = 0; mu < p; ++mu) {
    Eigen::VectorXd g(grid.size());
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
      const double d = (grid.nodes.row(i) - train.inputs.row(mu)).norm();
      g[i] = std::exp(-0.5 * (d / width) * (d / width)) * sw[i];
    }
    bumps.push_back(g * g.transpose());
  }

  RateOptions sopts = opts;
  sopts.mc_samples = search.search_samples;
  sopts.max_iter = search.search_max_iter;
  sopts.seed = seed.derive(9001);  // common randomness across candidates

  auto objective = [&](const Eigen::VectorXd& theta, const RateOptions& ro) {
    const std::vector<OperatorRep> cand = detail::i0_candidate(base, theta, bumps, tol);
    return mf_rate(cand, train, cfg, 0.0, ro, tol).value;
  };

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd sd(dim);
  for (int i = 0; i < dim; ++i)
    sd[i] = (i < cfg.depth) ? search.init_scale_sd : search.init_bump_sd;

  I0Estimate out;
  Eigen::VectorXd best_theta = mean;
  double best = objective(mean, sopts);  // NNGP path itself is always a candidate

  NormalSequence gen(seed.derive(9000));
  for (int round = 0; round < search.rounds; ++round) {
    std::vector<std::pair<double, Eigen::VectorXd>> scored;
    scored.reserve(std::size_t(search.population));
    for (int c = 0; c < search.population; ++c) {
      Eigen::VectorXd theta(dim);
      for (int i = 0; i < dim; ++i) theta[i] = mean[i] + sd[i] * gen.next();
      scored.emplace_back(objective(theta, sopts), theta);
    }
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (scored.front().first < best) {
      best = scored.front().first;
      best_theta = scored.front().second;
    }
    const int ne = std::min(search.elite, int(scored.size()));
    Eigen::VectorXd emean = Eigen::VectorXd::Zero(dim), esq = Eigen::VectorXd::Zero(dim);
    for (int e = 0; e < ne; ++e) {
      emean += scored[std::size_t(e)].second;
      esq += scored[std::size_t(e)].second.cwiseProduct(scored[std::size_t(e)].second);
    }
    emean /= double(ne);
    for (int i = 0; i < dim; ++i) {
      const double var = std::max(0.0, esq[i] / double(ne) - emean[i] * emean[i]);
      sd[i] = std::max(search.min_sd, std::sqrt(var));
    }
    mean = emean;
    out.trace.push_back(best);
  }
  out.exhausted = (out.trace.size() >= 2 &&
                   out.trace[out.trace.size() - 2] - out.trace.back() > search.improve_tol);

  // certify the winner with the full budget and fresh-sample rate values
  RateOptions fopts = opts;
  fopts.seed = seed.derive(9002);
  out.i0_upper = objective(best_theta, fopts);
  out.argmin = detail::i0_candidate(base, best_theta, bumps, tol);
  return out;
}

}  // namespace nngpldp
