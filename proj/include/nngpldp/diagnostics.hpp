#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nngpldp/chain.hpp"
#include "nngpldp/nngp.hpp"

namespace nngpldp {

// ---- two-sample energy-distance permutation test ---------------------------

struct EnergyTestResult {
  double stat = 0.0;     // 2 E|X-Y| - E|X-X'| - E|Y-Y'| (V-statistic means)
  double p_value = 1.0;  // permutation p-value, (1 + #{perm >= obs}) / (B + 1)
  int permutations = 0;
};

namespace detail {

inline double energy_from_groups(double s_aa, double s_bb, double s_all, double n, double m) {
  // every unordered pooled pair lies within A, within B, or across; the cross
  // sum already counts each (a, b) pair exactly once
  const double s_ab = s_all - s_aa - s_bb;
  return 2.0 * s_ab / (n * m) - 2.0 * s_aa / (n * n) - 2.0 * s_bb / (m * m);
}

}  // namespace detail

// Permutation test on the pooled pairwise-distance matrix: each shuffle only
// re-accumulates the two within-group sums, the cross sum follows from the
// fixed pooled total.
inline EnergyTestResult energy_distance_test(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                             int b_perms = 199, SeedSpec seed = {}) {
  if (x.rows() < 2 || y.rows() < 2)
    throw std::invalid_argument("energy_distance_test: need >= 2 samples per group");
  if (x.cols() != y.cols())
    throw std::invalid_argument("energy_distance_test: dimension mismatch");
  if (b_perms < 1) throw std::invalid_argument("energy_distance_test: permutations must be >= 1");
  const Eigen::Index n = x.rows(), m = y.rows(), pooled = n + m;

  Eigen::MatrixXd pts(pooled, x.cols());
  pts.topRows(n) = x;
  pts.bottomRows(m) = y;
  Eigen::MatrixXd dist(pooled, pooled);
  dist.setZero();
  double s_all = 0.0;
  for (Eigen::Index i = 0; i < pooled; ++i)
    for (Eigen::Index j = i + 1; j < pooled; ++j) {
      const double d = (pts.row(i) - pts.row(j)).norm();
      dist(i, j) = dist(j, i) = d;
      s_all += d;
    }

  auto within = [&](const std::vector<Eigen::Index>& idx, Eigen::Index count) {
    double s = 0.0;
    for (Eigen::Index a = 0; a < count; ++a)
      for (Eigen::Index b = a + 1; b < count; ++b)
        s += dist(idx[std::size_t(a)], idx[std::size_t(b)]);
    return s;
  };

  const std::size_t pooled_sz = std::size_t(pooled);
  std::vector<Eigen::Index> idx(pooled_sz);
  for (Eigen::Index i = 0; i < pooled; ++i) idx[std::size_t(i)] = i;
  EnergyTestResult out;
  const double s_aa = within(idx, n);
  std::vector<Eigen::Index> tail(idx.begin() + n, idx.end());
  const double s_bb = within(tail, m);
  out.stat = detail::energy_from_groups(s_aa, s_bb, s_all, double(n), double(m));

  RandomStream rs(seed);
  std::uint64_t ctr = 0;
  int exceed = 0;
  for (int b = 0; b < b_perms; ++b) {
    for (Eigen::Index k = pooled - 1; k > 0; --k) {
      const double u = rs.uniform(ctr++);
      const Eigen::Index j = Eigen::Index(std::ceil(u * double(k + 1))) - 1;
      std::swap(idx[std::size_t(k)], idx[std::size_t(j)]);
    }
    const double p_aa = within(idx, n);
    std::vector<Eigen::Index> pb(idx.begin() + n, idx.end());
    const double p_bb = within(pb, m);
    const double stat_b = detail::energy_from_groups(p_aa, p_bb, s_all, double(n), double(m));
    if (stat_b >= out.stat) ++exceed;
  }
  out.permutations = b_perms;
  out.p_value = double(1 + exceed) / double(b_perms + 1);
  return out;
}

// ---- conditional CLT diagnostic ---------------------------------------------

struct CltReport {
  Eigen::MatrixXd limit_cov;        // NNGP covariance at the inputs (P x P)
  Eigen::VectorXd skewness;         // per coordinate, d = m_outputs * P
  Eigen::VectorXd excess_kurtosis;  // per coordinate
  EnergyTestResult energy;          // draws vs N(0, limit_cov x identity)
  double level = 0.01;
  bool pass = false;
};

namespace detail {

// PSD square-root factor of a small kernel block (eigenvalue clip at zero).
inline Eigen::MatrixXd kernel_factor(const Eigen::MatrixXd& k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
  Eigen::VectorXd e = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * e.asDiagonal();
}

}  // namespace detail

// Finite-N output draws against the Gaussian limit law. Outputs are sampled
// law-exactly: each replicate simulates the covariance chain restricted to the
// input points, then draws m_outputs conditionally Gaussian units from the
// realized terminal kernel. Coordinate (i, mu) of a draw is unit i at input mu.
inline CltReport clt_diagnostic(const NetworkConfig& cfg, const Eigen::MatrixXd& inputs,
                                Eigen::Index n_scale, Eigen::Index m_outputs, Eigen::Index reps,
                                SeedSpec seed, double level = 0.01, int b_perms = 199,
                                Eigen::Index test_cap = 1024, const NngpOptions& nopts = {},
                                const Tolerances& tol = {}, int workers = 1) {
  cfg.validate();
  if (inputs.rows() < 1 || inputs.cols() != cfg.input_dim)
    throw config_error("clt.inputs", "need P x input_dim input points");
  if (m_outputs < 1 || m_outputs > cfg.output_dim)
    throw config_error("clt.m_outputs", "must be in [1, output_dim]");
  if (reps < 8) throw config_error("clt.reps", "need at least 8 replicates");
  if (n_scale < 1) throw config_error("clt.n_scale", "must be >= 1");
  if (!(level > 0.0 && level < 1.0)) throw config_error("clt.level", "must be in (0, 1)");
  const Eigen::Index p = inputs.rows();
  const Eigen::Index d = m_outputs * p;
  if (d > 64) throw config_error("clt.m_outputs", "tested dimension m_outputs * P must be <= 64");

  const Grid pts = grid_from_nodes(inputs);

  // finite-N draws
  Eigen::MatrixXd draws(reps, d);
  parallel_for(std::size_t(reps), workers, [&](std::size_t r) {
    const ChainState st =
        simulate_chain(cfg, n_scale, pts, seed.derive(1000000 + std::uint64_t(r)), tol, 1);
    const Eigen::MatrixXd f = detail::kernel_factor(st.ops.back().kernel_values());
    RandomStream os(seed.derive(2000000 + std::uint64_t(r)));
    for (Eigen::Index i = 0; i < m_outputs; ++i) {
      Eigen::VectorXd z(p);
      for (Eigen::Index mu = 0; mu < p; ++mu)
        z[mu] = os.normal(std::uint64_t(i) * std::uint64_t(p) + std::uint64_t(mu));
      draws.row(Eigen::Index(r)).segment(i * p, p) = (f * z).transpose();
    }
  });

  CltReport rep;
  rep.level = level;

  // limit covariance and the Gaussian reference sample
  const std::vector<OperatorRep> limit = nngp_chain(cfg, pts, nopts, tol, workers);
  rep.limit_cov = limit.back().kernel_values();
  const Eigen::MatrixXd lf = detail::kernel_factor(rep.limit_cov);
  Eigen::MatrixXd ref(reps, d);
  RandomStream rs(seed.derive(3000000));
  for (Eigen::Index r = 0; r < reps; ++r)
    for (Eigen::Index i = 0; i < m_outputs; ++i) {
      Eigen::VectorXd z(p);
      for (Eigen::Index mu = 0; mu < p; ++mu)
        z[mu] = rs.normal(std::uint64_t(r * d + i * p + mu));
      ref.row(r).segment(i * p, p) = (lf * z).transpose();
    }

  // per-coordinate shape statistics of the finite-N draws
  rep.skewness.resize(d);
  rep.excess_kurtosis.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const Eigen::VectorXd c = draws.col(j).array() - draws.col(j).mean();
    const double m2 = c.squaredNorm() / double(reps);
    const double m3 = c.array().pow(3).mean();
    const double m4 = c.array().pow(4).mean();
    rep.skewness[j] = m3 / std::pow(m2, 1.5);
    rep.excess_kurtosis[j] = m4 / (m2 * m2) - 3.0;
  }

  const Eigen::Index cap = std::min(reps, test_cap);
  rep.energy = energy_distance_test(draws.topRows(cap), ref.topRows(cap), b_perms,
                                    seed.derive(4000000));
  rep.pass = rep.energy.p_value >= level;
  return rep;
}

// ---- singular-value tail check ----------------------------------------------

struct TailCheckRow {
  double t = 0.0;
  double threshold = 0.0;  // C (sqrt(n2/n1) + 1 + t)
  Eigen::Index hits = 0;
  double empirical = 0.0;
  double bound = 0.0;  // 2 exp(-n1 t^2)
  double wilson_lo = 0.0;
  double wilson_hi = 0.0;
  bool violates = false;  // wilson_lo > bound
};

// Monte-Carlo check of the Gaussian-matrix tail bound
// P(|W| > C (sqrt(n2/n1) + 1 + t)) <= 2 exp(-n1 t^2), entries iid N(0, lambda/n1).
inline std::vector<TailCheckRow> singvalue_tail_check(Eigen::Index n1, Eigen::Index n2,
                                                      double lambda,
                                                      const std::vector<double>& t_values,
                                                      Eigen::Index reps, double c_const,
                                                      SeedSpec seed, int workers = 1) {
  if (n1 < 1 || n2 < 1) throw config_error("tailcheck.n1", "matrix sides must be >= 1");
  if (!(lambda > 0.0)) throw config_error("tailcheck.lambda", "must be positive");
  if (reps < 1000) throw config_error("tailcheck.reps", "need at least 1000 replicates");
  if (!(c_const > 0.0)) throw config_error("tailcheck.C", "must be positive");
  if (t_values.empty()) throw config_error("tailcheck.t_values", "need at least one t");
  for (double t : t_values)
    if (t < 0.0) throw config_error("tailcheck.t_values", "t must be >= 0");

  const double sd = std::sqrt(lambda / double(n1));
  std::vector<double> top(std::size_t(reps), 0.0);
  parallel_for(std::size_t(reps), workers, [&](std::size_t r) {
    RandomStream rs(seed.derive(std::uint64_t(r)));
    Eigen::MatrixXd w(n1, n2);
    std::uint64_t c = 0;
    for (Eigen::Index i = 0; i < n1; ++i)
      for (Eigen::Index j = 0; j < n2; ++j) w(i, j) = sd * rs.normal(c++);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w.transpose() * w,
                                                      Eigen::EigenvaluesOnly);
    top[r] = std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
  });

  const double z = 1.959963984540054;  // 95% Wilson interval
  const double zz = z * z, nr = double(reps);
  std::vector<TailCheckRow> rows;
  for (double t : t_values) {
    TailCheckRow row;
    row.t = t;
    row.threshold = c_const * (std::sqrt(double(n2) / double(n1)) + 1.0 + t);
    for (double s : top)
      if (s > row.threshold) ++row.hits;
    row.empirical = double(row.hits) / nr;
    row.bound = 2.0 * std::exp(-double(n1) * t * t);
    const double center = (row.empirical + zz / (2.0 * nr)) / (1.0 + zz / nr);
    const double half = z *
                        std::sqrt(row.empirical * (1.0 - row.empirical) / nr +
                                  zz / (4.0 * nr * nr)) /
                        (1.0 + zz / nr);
    row.wilson_lo = std::max(0.0, center - half);
    row.wilson_hi = std::min(1.0, center + half);
    row.violates = row.wilson_lo > row.bound;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace nngpldp
