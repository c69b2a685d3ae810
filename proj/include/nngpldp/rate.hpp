#pragma once

// The large-deviation rate function of one chain transition,
//   I_lambda(K2|K1) = sup_D { tr(D K2) - log E[exp(tr(D C_h)/lambda)] },
// h ~ N_H(0, K1), evaluated by concave dual ascent over symmetric matrices
// with a Monte-Carlo log-MGF. Also the summed chain rate, a scalar closed
// form for oracle tests, and empirical tail-slope estimation.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nngpldp/activation.hpp"
#include "nngpldp/chain.hpp"
#include "nngpldp/common.hpp"
#include "nngpldp/gaussian_field.hpp"
#include "nngpldp/grid.hpp"
#include "nngpldp/operator_core.hpp"

namespace nngpldp {

// Symmetrized representation of the dual variable D
struct DualVariable {
  Grid grid;
  Eigen::MatrixXd sym;

  static DualVariable zero(const Grid& g) {
    return DualVariable{g, Eigen::MatrixXd::Zero(g.size(), g.size())};
  }

  void validate() const {
    if (sym.rows() != grid.size() || sym.cols() != grid.size())
      throw std::invalid_argument("dual variable: matrix size does not match grid");
    if ((sym - sym.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + sym.cwiseAbs().maxCoeff()))
      throw std::invalid_argument("dual variable: matrix must be symmetric");
  }
};

struct RateOptions {
  Eigen::Index mc_samples = 200000;
  int max_iter = 500;
  double gtol = 1e-4;            // ascent stops early when ||grad||_F <= gtol
  double ess_floor_frac = 0.01;  // reject tilts with ess below this fraction of M
  SeedSpec seed{};
  int workers = 1;

  void validate() const {
    if (mc_samples < 2) throw config_error("rate.mc_samples", "must be >= 2");
    if (max_iter < 1) throw config_error("rate.max_iter", "must be >= 1");
    if (!(gtol > 0.0)) throw config_error("rate.gtol", "must be positive");
    if (!(ess_floor_frac > 0.0 && ess_floor_frac <= 1.0))
      throw config_error("rate.ess_floor_frac", "must be in (0, 1]");
    if (workers < 1) throw config_error("rate.workers", "must be >= 1");
  }
};

struct RateEstimate {
  double value = 0.0;  // sup estimate, clamped at 0 (D = 0 attains exactly 0)
  DualVariable dual;
  double mc_stderr = 0.0;  // stderr of the fresh-sample final evaluation
  int iterations = 0;
  bool converged = false;  // gradient norm reached gtol (MC noise may prevent this)
  double ess_min = 0.0;    // worst effective sample size across accepted iterates
};

struct LogMgfResult {
  double value = 0.0;
  double mc_stderr = 0.0;
  double ess = 0.0;
};

namespace detail {

// rows s_m = diag(sqrt w) sigma(h_m), the sym coordinates of the sampled
// rank-one kernels C_{h_m}
inline Eigen::MatrixXd activated_field_rows(const OperatorRep& k1, const ActivationSpec& act,
                                            Eigen::Index m, SeedSpec seed, const Tolerances& tol,
                                            int workers) {
  const FieldSample fields = sample_field(k1, m, seed, tol, workers);
  const Eigen::VectorXd sw = k1.grid.sqrt_weights();
  Eigen::MatrixXd s(m, k1.size());
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < k1.size(); ++j) s(i, j) = sw[j] * act(fields.values(i, j));
  return s;
}

// log mean exp of q_m = s_m' D s_m / lambda with a logsumexp shift; optional
// tilted second moment sum_m p_m s_m s_m' (p tilting weights) for gradients
struct MgfEval {
  double value = 0.0;
  double mc_stderr = 0.0;
  double ess = 0.0;
  Eigen::MatrixXd tilted;  // empty unless requested
};

inline MgfEval log_mgf_rows(const Eigen::MatrixXd& s, const Eigen::MatrixXd& dsym, double lambda,
                            bool want_tilted) {
  const Eigen::Index m = s.rows();
  const Eigen::VectorXd q = (s * dsym).cwiseProduct(s).rowwise().sum() / lambda;
  const double qmax = q.maxCoeff();
  MgfEval out;
  if (!std::isfinite(qmax)) {
    out.value = qmax;
    return out;  // ess 0: caller's guard rejects
  }
  const Eigen::ArrayXd u = (q.array() - qmax).exp();
  const double sum_u = u.sum();
  const double sum_u2 = u.square().sum();
  out.value = qmax + std::log(sum_u / double(m));
  out.ess = sum_u * sum_u / sum_u2;
  const double mean_u = sum_u / double(m);
  const double var_u = std::max(0.0, sum_u2 / double(m) - mean_u * mean_u);
  out.mc_stderr = std::sqrt(var_u / double(m)) / mean_u;
  if (want_tilted) {
    const Eigen::VectorXd p = (u / sum_u).matrix();
    out.tilted.noalias() = s.transpose() * p.asDiagonal() * s;
  }
  return out;
}

}  // namespace detail

// One Monte-Carlo evaluation of the log moment generating functional
//   log E[exp(tr(D C_h)/lambda)], h ~ N_H(0, K1).
inline LogMgfResult log_mgf(const DualVariable& d, const OperatorRep& k1, double lambda,
                            const ActivationSpec& act, Eigen::Index mc_samples, SeedSpec seed,
                            double ess_floor = -1.0, const Tolerances& tol = {}, int workers = 1) {
  act.require_rate_admissible("log_mgf");
  if (!(lambda > 0.0)) throw std::invalid_argument("log_mgf: lambda must be positive");
  if (mc_samples < 2) throw std::invalid_argument("log_mgf: need at least 2 samples");
  d.validate();
  if (!d.grid.same_as(k1.grid)) throw std::invalid_argument("log_mgf: dual grid != kernel grid");
  require_psd(k1, tol, "log_mgf");
  if (ess_floor < 0.0) ess_floor = 0.01 * double(mc_samples);
  const Eigen::MatrixXd s = detail::activated_field_rows(k1, act, mc_samples, seed, tol, workers);
  const detail::MgfEval ev = detail::log_mgf_rows(s, d.sym, lambda, false);
  if (!(ev.ess >= ess_floor))
    throw unstable_mgf("log_mgf: effective sample size " + fmt17(ev.ess) + " below floor " +
                       fmt17(ess_floor) + "; the tilt exp(tr(D C_h)/lambda) is too aggressive");
  return LogMgfResult{ev.value, ev.mc_stderr, ev.ess};
}

// Gradient of the MC log-MGF at D under common random numbers:
// (1/lambda) sum_m p_m s_m s_m', p the exponential tilting weights.
inline Eigen::MatrixXd log_mgf_gradient(const DualVariable& d, const OperatorRep& k1, double lambda,
                                        const ActivationSpec& act, Eigen::Index mc_samples,
                                        SeedSpec seed, const Tolerances& tol = {}, int workers = 1) {
  act.require_rate_admissible("log_mgf_gradient");
  if (!(lambda > 0.0)) throw std::invalid_argument("log_mgf_gradient: lambda must be positive");
  if (mc_samples < 2) throw std::invalid_argument("log_mgf_gradient: need at least 2 samples");
  d.validate();
  if (!d.grid.same_as(k1.grid))
    throw std::invalid_argument("log_mgf_gradient: dual grid != kernel grid");
  require_psd(k1, tol, "log_mgf_gradient");
  const Eigen::MatrixXd s = detail::activated_field_rows(k1, act, mc_samples, seed, tol, workers);
  return detail::log_mgf_rows(s, d.sym, lambda, true).tilted / lambda;
}

// Dual ascent for I_lambda(K2|K1). The objective tr(D K2) - log_mgf(D) is
// concave (exactly so under common random numbers); ascent uses backtracking
// steps guarded by the effective-sample-size floor, and the returned value is
// re-estimated at the final D with fresh samples, clamped at the exact lower
// bound 0 attained by D = 0.
inline RateEstimate rate_eval(const OperatorRep& k2, const OperatorRep& k1, double lambda,
                              const ActivationSpec& act, const RateOptions& opts = {},
                              const Tolerances& tol = {}) {
  opts.validate();
  act.require_rate_admissible("rate_eval");
  if (!(lambda > 0.0)) throw std::invalid_argument("rate_eval: lambda must be positive");
  if (!k1.grid.same_as(k2.grid)) throw std::invalid_argument("rate_eval: operand grids differ");
  require_psd(k1, tol, "rate_eval K1");
  require_psd(k2, tol, "rate_eval K2");

  const Eigen::Index m = opts.mc_samples;
  const double ess_floor = opts.ess_floor_frac * double(m);
  const Eigen::MatrixXd s =
      detail::activated_field_rows(k1, act, m, opts.seed.derive(1), tol, opts.workers);

  auto objective = [&](const Eigen::MatrixXd& dsym, bool want_tilted) {
    detail::MgfEval ev = detail::log_mgf_rows(s, dsym, lambda, want_tilted);
    ev.value = dsym.cwiseProduct(k2.sym).sum() - ev.value;  // now the dual objective
    return ev;
  };

  RateEstimate est;
  est.dual = DualVariable::zero(k1.grid);
  Eigen::MatrixXd dsym = est.dual.sym;
  detail::MgfEval cur = objective(dsym, true);
  est.ess_min = cur.ess;

  double step = 1.0;
  for (int it = 0; it < opts.max_iter; ++it) {
    const Eigen::MatrixXd grad = k2.sym - cur.tilted / lambda;
    const double gnorm = grad.norm();
    if (gnorm <= opts.gtol) {
      est.converged = true;
      break;
    }
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      const Eigen::MatrixXd trial = dsym + step * grad;
      const detail::MgfEval ev = objective(trial, false);
      if (ev.ess >= ess_floor && ev.value > cur.value + 1e-4 * step * gnorm * gnorm) {
        dsym = trial;
        cur = objective(trial, true);
        est.ess_min = std::min(est.ess_min, cur.ess);
        est.iterations = it + 1;
        step *= 1.5;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no ess-safe improving step: MC optimum reached
  }

  est.dual.sym = dsym;
  // fresh-sample de-biased value at the final dual point
  const Eigen::MatrixXd s2 =
      detail::activated_field_rows(k1, act, m, opts.seed.derive(2), tol, opts.workers);
  const detail::MgfEval fin = detail::log_mgf_rows(s2, dsym, lambda, false);
  if (!(fin.ess >= ess_floor))
    throw unstable_mgf("rate_eval: fresh-sample ess " + fmt17(fin.ess) + " below floor at the final dual point");
  est.value = std::max(0.0, dsym.cwiseProduct(k2.sym).sum() - fin.value);
  est.mc_stderr = fin.mc_stderr;
  est.ess_min = std::min(est.ess_min, fin.ess);
  return est;
}

// sigma = identity on a one-point grid: I = (x - 1 - log x)/2, x = lambda k2/k1
inline double scalar_rate_closed_form(double k2, double k1, double lambda) {
  if (!(k1 > 0.0) || !(k2 > 0.0) || !(lambda > 0.0))
    throw std::invalid_argument("scalar_rate_closed_form: arguments must be positive");
  const double x = lambda * k2 / k1;
  return 0.5 * (x - 1.0 - std::log(x));
}

struct ChainRateResult {
  double total = 0.0;  // sum_l m_l I_{lambda_l}(K^{l+1}|K^l)
  std::vector<RateEstimate> per_layer;
};

// Rate of a full chain trajectory (ks = K^2..K^{L+1}; K^1 from the config).
// Bias terms are deterministic shifts of the transition law, so layer l is
// evaluated as I(K^{l+1} - b^{(l+1)} 1-kernel | K^l).
inline ChainRateResult chain_rate(const std::vector<OperatorRep>& ks, const NetworkConfig& cfg,
                                  const RateOptions& opts = {}, const Tolerances& tol = {}) {
  cfg.validate();
  opts.validate();
  cfg.act.require_rate_admissible("chain_rate");
  if (int(ks.size()) != cfg.depth)
    throw std::invalid_argument("chain_rate: need exactly depth operators (K^2..K^{L+1})");
  const Grid& grid = ks.front().grid;
  for (const OperatorRep& k : ks)
    if (!k.grid.same_as(grid)) throw std::invalid_argument("chain_rate: mixed grids");
  if (grid.dim() != cfg.input_dim)
    throw std::invalid_argument("chain_rate: grid dimension != network input_dim");

  const Eigen::VectorXd sw = grid.sqrt_weights();
  ChainRateResult out;
  OperatorRep prev = init_kernel(grid, cfg.precisions[0], cfg.biases[0], tol);
  for (int l = 0; l < cfg.depth; ++l) {
    const double bias = cfg.biases[std::size_t(l) + 1];
    OperatorRep k2 = ks[std::size_t(l)];
    if (bias > 0.0)
      k2 = OperatorRep::from_sym(grid, k2.sym - bias * (sw * sw.transpose()), tol);
    RateOptions lopts = opts;
    lopts.seed = opts.seed.derive(std::uint64_t(l) + 1);
    out.per_layer.push_back(
        rate_eval(k2, prev, cfg.precisions[std::size_t(l) + 1], cfg.act, lopts, tol));
    out.total += cfg.width_ratios[std::size_t(l)] * out.per_layer.back().value;
    prev = ks[std::size_t(l)];
  }
  return out;
}

// Threshold event on a continuous functional of the chain
struct EventSpec {
  std::string stat = "kernel_entry";  // trace | trace_norm | hs_norm | op_norm | kernel_entry
  int layer = 2;                      // chain layer in [1, L+1]
  Eigen::Index row = 0, col = 0;      // kernel_entry coordinates
  double threshold = 0.0;
  bool geq = true;  // event {stat >= threshold}; otherwise {stat <= threshold}

  void validate() const {
    if (stat != "trace" && stat != "trace_norm" && stat != "hs_norm" && stat != "op_norm" &&
        stat != "kernel_entry")
      throw config_error("event.stat", "unknown statistic '" + stat + "'");
    if (layer < 1) throw config_error("event.layer", "must be >= 1");
  }

  double eval(const ChainState& st) const {
    const OperatorRep op = chain_operator_at(st, layer);
    if (stat == "trace") return trace(op);
    if (stat == "trace_norm") return trace_norm(op);
    if (stat == "hs_norm") return hs_norm(op);
    if (stat == "op_norm") return op_norm(op);
    return op.kernel_values()(row, col);
  }

  bool hit(const ChainState& st) const {
    const double v = eval(st);
    return geq ? v >= threshold : v <= threshold;
  }
};

struct TailCount {
  Eigen::Index n = 0;
  long reps = 0;
  long hits = 0;
};

struct TailSlopeResult {
  double slope = 0.0;    // least-squares slope of -log(hit fraction) against N
  double slope_stderr = 0.0;  // regression standard error of the slope
  std::vector<TailCount> counts;
};

// Empirical LDP speed check: P(event) should decay exponentially in N with
// slope given by the rate function. N values with fewer than 5 hits are
// dropped; at least 3 must survive.
inline TailSlopeResult tail_slope(const EventSpec& event, const NetworkConfig& cfg,
                                  const Grid& grid, const std::vector<Eigen::Index>& n_scales,
                                  long reps, SeedSpec seed, const Tolerances& tol = {},
                                  int workers = 1) {
  event.validate();
  cfg.validate();
  if (event.layer > cfg.depth + 1) throw config_error("event.layer", "beyond the last chain layer");
  if (reps < 1) throw std::invalid_argument("tail_slope: reps must be >= 1");
  if (event.stat == "kernel_entry" &&
      (event.row < 0 || event.row >= grid.size() || event.col < 0 || event.col >= grid.size()))
    throw config_error("event.row", "kernel entry outside the grid");

  TailSlopeResult out;
  std::vector<double> xs, ys;
  for (Eigen::Index n : n_scales) {
    long hits = 0;
    for (long r = 0; r < reps; ++r) {
      const ChainState st = simulate_chain(cfg, n, grid,
                                           seed.derive(std::uint64_t(n)).derive(std::uint64_t(r)),
                                           tol, workers);
      if (event.hit(st)) ++hits;
    }
    out.counts.push_back(TailCount{n, reps, hits});
    if (hits >= 5) {
      xs.push_back(double(n));
      ys.push_back(-std::log(double(hits) / double(reps)));
    }
  }
  if (xs.size() < 3)
    throw insufficient_hits("tail_slope: only " + std::to_string(xs.size()) +
                            " width scales had >= 5 hits; need at least 3");

  const std::size_t k = xs.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= double(k);
  my /= double(k);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  out.slope = sxy / sxx;
  double rss = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double fit = my + out.slope * (xs[i] - mx);
    rss += (ys[i] - fit) * (ys[i] - fit);
  }
  out.slope_stderr = k > 2 ? std::sqrt(rss / double(k - 2) / sxx) : 0.0;
  return out;
}

}  // namespace nngpldp
