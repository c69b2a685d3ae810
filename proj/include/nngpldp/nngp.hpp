#pragma once

// Deterministic NNGP recursion: the infinite-width limit of the covariance
// chain, computed pairwise to quadrature accuracy, plus closed-form oracles
// (identity, ReLU arc-cosine, erf) and LLN distance curves against the
// finite-width chain.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "nngpldp/activation.hpp"
#include "nngpldp/chain.hpp"
#include "nngpldp/common.hpp"
#include "nngpldp/grid.hpp"
#include "nngpldp/operator_core.hpp"

namespace nngpldp {

struct NngpOptions {
  int hermite_nodes = 40;                    // tensor rule order for smooth activations
  double correlation_clamp = 1.0 - 1e-12;    // |rho| at which a pair degenerates to 1D

  void validate() const {
    if (hermite_nodes < 2) throw config_error("nngp.hermite_nodes", "must be >= 2");
    if (!(correlation_clamp > 0.0 && correlation_clamp <= 1.0))
      throw config_error("nngp.correlation_clamp", "must be in (0, 1]");
  }
};

namespace detail {

// Probabilists' Gauss-Hermite: E[f(Z)] ~ sum w_i f(z_i), Z standard normal.
// Golub-Welsch eigenvalues as starting points, then Newton steps on the
// orthonormal recurrence; the eigensolver alone leaves ~1e-12 errors in the
// rule's moments, which the fixed-point invariants cannot absorb.
inline void gauss_hermite_prob(int n, std::vector<double>& z, std::vector<double>& w) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = std::sqrt(double(k));
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  z.resize(n);
  w.resize(n);
  // orthonormal p_0 = 1, p_{k+1}(x) = (x p_k - sqrt(k) p_{k-1}) / sqrt(k+1),
  // with p_n'(x) = sqrt(n) p_{n-1}(x) at the roots
  auto eval = [n](double x, double& pn, double& pnm1) {
    double pm = 0.0, p = 1.0;
    for (int k = 0; k < n; ++k) {
      const double next = (x * p - std::sqrt(double(k)) * pm) / std::sqrt(double(k + 1));
      pm = p;
      p = next;
    }
    pn = p;
    pnm1 = pm;
  };
  for (int i = 0; i < n; ++i) {
    double x = es.eigenvalues()[i];
    for (int it = 0; it < 4; ++it) {
      double pn, pnm1;
      eval(x, pn, pnm1);
      const double step = pn / (std::sqrt(double(n)) * pnm1);
      x -= step;
      if (std::abs(step) < 1e-15 * (1.0 + std::abs(x))) break;
    }
    z[i] = x;
    double pm = 0.0, p = 1.0, christoffel = 1.0;
    for (int k = 0; k + 1 < n; ++k) {
      const double next = (x * p - std::sqrt(double(k)) * pm) / std::sqrt(double(k + 1));
      pm = p;
      p = next;
      christoffel += p * p;
    }
    w[i] = 1.0 / christoffel;
  }
}

// Kinked activations in this codebase are piecewise linear between their
// breakpoints (relu and interpolated tables). The affine pieces make the
// inner Gaussian expectation closed-form.
struct PLDecomp {
  std::vector<double> knots;         // sorted breakpoints, size p
  std::vector<double> alpha, beta;   // piece k on (knots[k-1], knots[k]): alpha + beta x, size p+1
};

inline PLDecomp pl_decompose(const ActivationSpec& act) {
  PLDecomp pl;
  pl.knots = act.breakpoints();
  std::sort(pl.knots.begin(), pl.knots.end());
  const std::size_t p = pl.knots.size();
  pl.alpha.resize(p + 1);
  pl.beta.resize(p + 1);
  for (std::size_t k = 0; k <= p; ++k) {
    const double lo = (k == 0) ? pl.knots.front() - 2.0 : pl.knots[k - 1];
    const double hi = (k == p) ? pl.knots.back() + 2.0 : pl.knots[k];
    const double x1 = lo + (hi - lo) / 3.0, x2 = hi - (hi - lo) / 3.0;
    const double y1 = act(x1), y2 = act(x2);
    pl.beta[k] = (y2 - y1) / (x2 - x1);
    pl.alpha[k] = y1 - pl.beta[k] * x1;
    const double xm = 0.5 * (x1 + x2);
    if (std::abs(act(xm) - (pl.alpha[k] + pl.beta[k] * xm)) >
        1e-10 * (1.0 + std::abs(act(xm))))
      throw std::invalid_argument("pair_expectation: activation with breakpoints is not piecewise linear");
  }
  return pl;
}

inline double std_normal_pdf(double x) { return std::exp(-0.5 * x * x) * 0.3989422804014327; }
inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865476); }

// E[sigma(mu + sd Z)] for piecewise-linear sigma, exact up to erfc round-off
inline double pl_gauss_expect(const PLDecomp& pl, double mu, double sd) {
  if (sd <= 0.0) {
    // degenerate inner marginal: evaluate the pieces directly at mu
    std::size_t k = 0;
    while (k < pl.knots.size() && mu > pl.knots[k]) ++k;
    return pl.alpha[k] + pl.beta[k] * mu;
  }
  const std::size_t p = pl.knots.size();
  double acc = 0.0;
  double cdf_lo = 0.0, pdf_lo = 0.0;  // at z = -inf
  for (std::size_t k = 0; k <= p; ++k) {
    double cdf_hi = 1.0, pdf_hi = 0.0;  // at z = +inf
    if (k < p) {
      const double z = (pl.knots[k] - mu) / sd;
      cdf_hi = std_normal_cdf(z);
      pdf_hi = std_normal_pdf(z);
    }
    acc += (pl.alpha[k] + pl.beta[k] * mu) * (cdf_hi - cdf_lo) + pl.beta[k] * sd * (pdf_lo - pdf_hi);
    cdf_lo = cdf_hi;
    pdf_lo = pdf_hi;
  }
  return acc;
}

struct GLRule {
  std::vector<double> x, w;  // reference nodes/weights on [-1,1]
};

inline GLRule panel_rule(int hermite_nodes) {
  GLRule r;
  const int order = std::clamp(hermite_nodes / 2, 8, 24);
  gauss_legendre_reference(order, r.x, r.w);
  return r;
}

// integral of f(z) phi(z) dz over [-R, R] with panels no wider than maxw,
// splitting additionally at the supplied edges
template <typename F>
inline double gauss_panels(F&& f, std::vector<double> edges, const GLRule& rule, double R,
                           double maxw) {
  edges.push_back(-R);
  edges.push_back(R);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  double total = 0.0;
  for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
    const double lo = std::max(edges[e], -R), hi = std::min(edges[e + 1], R);
    if (!(hi > lo)) continue;
    const int npan = std::max(1, int(std::ceil((hi - lo) / maxw)));
    const double h = (hi - lo) / npan;
    for (int pnl = 0; pnl < npan; ++pnl) {
      const double mid = lo + (pnl + 0.5) * h, half = 0.5 * h;
      for (std::size_t q = 0; q < rule.x.size(); ++q) {
        const double z = mid + half * rule.x[q];
        total += half * rule.w[q] * f(z) * std_normal_pdf(z);
      }
    }
  }
  return total;
}

// geometric panel edges around p at the given scale: the outer integrand is
// smooth there but transitions over a width ~scale window
inline void refine_edges(std::vector<double>& edges, double p, double scale, double span = 2.0) {
  edges.push_back(p);
  for (double w = std::max(scale, 1e-13); w < span; w *= 2.0) {
    edges.push_back(p - w);
    edges.push_back(p + w);
  }
}

constexpr double kGaussRange = 10.0;  // phi mass beyond is ~7.6e-24

}  // namespace detail

// E[sigma(U) sigma(V)] for (U,V) centered bivariate normal with covariance
// [[kxx, kxy], [kxy, kyy]]. Activations whose inner Gaussian expectation has
// a closed form (piecewise-linear ones via Phi/phi, erf via
// E[erf(mu + sd Z)] = erf(mu / sqrt(1 + 2 sd^2))) use an iterated scheme:
// outer 1D panel quadrature split at kink images, inner exact. The remaining
// smooth activations use a tensor Gauss-Hermite rule, which is accurate for
// them but loses several digits at kinks or saturation scales.
inline double pair_expectation(double kxx, double kxy, double kyy, const ActivationSpec& act,
                               const NngpOptions& opts = {}) {
  opts.validate();
  kxx = std::max(kxx, 0.0);
  kyy = std::max(kyy, 0.0);

  const int q = opts.hermite_nodes;
  const bool kinked = !act.smooth();
  const bool is_erf = act.kind == ActKind::erf;
  const bool iterated = kinked || is_erf;

  std::vector<double> hz, hw;
  if (!iterated) detail::gauss_hermite_prob(q, hz, hw);
  const detail::GLRule rule = iterated ? detail::panel_rule(q) : detail::GLRule{};
  const double maxw = 40.0 / double(q);
  const detail::PLDecomp pl = kinked ? detail::pl_decompose(act) : detail::PLDecomp{};
  const std::vector<double> breaks = act.breakpoints();

  // the scale below which the activation transitions, in its own argument;
  // panel edges at images of these points keep the outer rule spectral
  auto kink_images = [&](double scale) {
    std::vector<double> edges;
    for (double t : breaks) edges.push_back(t / scale);
    if (is_erf) edges.push_back(0.0);
    return edges;
  };

  auto expect_marginal = [&](double scale) {
    // E[act(scale Z)]
    if (!iterated) {
      double acc = 0.0;
      for (int i = 0; i < q; ++i) acc += hw[i] * act(scale * hz[i]);
      return acc;
    }
    return detail::gauss_panels([&](double z) { return act(scale * z); }, kink_images(scale), rule,
                                detail::kGaussRange, maxw);
  };

  const double a = std::sqrt(kxx), b = std::sqrt(kyy);
  if (kxx == 0.0 && kyy == 0.0) return act(0.0) * act(0.0);
  if (kxx == 0.0) {
    const double s0 = act(0.0);
    return s0 == 0.0 ? 0.0 : s0 * expect_marginal(b);
  }
  if (kyy == 0.0) {
    const double s0 = act(0.0);
    return s0 == 0.0 ? 0.0 : s0 * expect_marginal(a);
  }

  const double rho_raw = kxy / (a * b);

  if (std::abs(rho_raw) >= opts.correlation_clamp) {
    // V = c U exactly (diagonal entries in particular); 1D reduction
    const double c = (rho_raw > 0.0 ? 1.0 : -1.0) * b / a;
    if (!iterated) {
      double acc = 0.0;
      for (int i = 0; i < q; ++i) acc += hw[i] * act(a * hz[i]) * act(c * a * hz[i]);
      return acc;
    }
    std::vector<double> edges = kink_images(a);
    for (double e : kink_images(c * a)) edges.push_back(e);
    return detail::gauss_panels([&](double z) { return act(a * z) * act(c * a * z); },
                                std::move(edges), rule, detail::kGaussRange, maxw);
  }

  const double rho = std::clamp(rho_raw, -opts.correlation_clamp, opts.correlation_clamp);

  if (!iterated) {
    const double s = std::sqrt(1.0 - rho * rho);
    double acc = 0.0;
    for (int i = 0; i < q; ++i) {
      double inner = 0.0;
      for (int j = 0; j < q; ++j) inner += hw[j] * act(b * (rho * hz[i] + s * hz[j]));
      acc += hw[i] * act(a * hz[i]) * inner;
    }
    return acc;
  }

  const double s = std::sqrt(1.0 - rho * rho);
  const double inner_sd = b * s;

  if (is_erf) {
    // inner closed form: E[erf(b rho z1 + b s Z)] = erf(c z1)
    const double c = b * rho / std::sqrt(1.0 + 2.0 * inner_sd * inner_sd);
    return detail::gauss_panels(
        [&](double z1) { return act(a * z1) * std::erf(c * z1); }, {0.0}, rule,
        detail::kGaussRange, maxw);
  }

  // piecewise linear: outer integral over z1 with the inner expectation in
  // closed form. The outer integrand kinks at the activation's own breakpoint
  // images and transitions smoothly (width ~ s/|rho|) where the inner mean
  // crosses a breakpoint.
  std::vector<double> edges = kink_images(a);
  if (std::abs(rho) > 1e-8)
    for (double t : breaks) detail::refine_edges(edges, t / (b * rho), s / std::abs(rho));
  return detail::gauss_panels(
      [&](double z1) {
        return act(a * z1) * detail::pl_gauss_expect(pl, b * rho * z1, inner_sd);
      },
      std::move(edges), rule, detail::kGaussRange, maxw);
}

// One application of the limit map: (x,x') -> b + E[sigma(Z(x)) sigma(Z(x'))] / lambda
inline OperatorRep nngp_step(const OperatorRep& k, double lambda, double b,
                             const ActivationSpec& act, const NngpOptions& opts = {},
                             const Tolerances& tol = {}, int workers = 1) {
  if (!(lambda > 0.0)) throw std::invalid_argument("nngp_step: lambda must be positive");
  if (b < 0.0) throw std::invalid_argument("nngp_step: bias must be non-negative");
  require_psd(k, tol, "nngp_step");
  const Eigen::Index n = k.size();
  const Eigen::MatrixXd kv = k.kernel_values();
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  pairs.reserve(std::size_t(n) * (n + 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) pairs.emplace_back(i, j);
  Eigen::MatrixXd out(n, n);
  parallel_for(pairs.size(), workers, [&](std::size_t idx) {
    const auto [i, j] = pairs[idx];
    const double v = b + pair_expectation(kv(i, i), kv(i, j), kv(j, j), act, opts) / lambda;
    out(i, j) = v;
    out(j, i) = v;
  });
  return psd_project(kernel_to_operator(KernelGrid{k.grid, std::move(out)}, tol), tol).op;
}

// Closed-form ReLU limit step (arc-cosine kernel of degree 1)
inline OperatorRep relu_arccos_kernel(const OperatorRep& k, double lambda, double b,
                                      const Tolerances& tol = {}) {
  if (!(lambda > 0.0)) throw std::invalid_argument("relu_arccos_kernel: lambda must be positive");
  const Eigen::Index n = k.size();
  const Eigen::MatrixXd kv = k.kernel_values();
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double prod = std::max(kv(i, i), 0.0) * std::max(kv(j, j), 0.0);
      double v = b;
      if (prod > 0.0) {
        const double norm = std::sqrt(prod);
        const double theta = std::acos(std::clamp(kv(i, j) / norm, -1.0, 1.0));
        v += norm / (2.0 * M_PI * lambda) * (std::sin(theta) + (M_PI - theta) * std::cos(theta));
      }
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return kernel_to_operator(KernelGrid{k.grid, std::move(out)}, tol);
}

// Closed-form erf limit step: b + (2/(pi lambda)) asin(2 k_xy / sqrt((1+2k_xx)(1+2k_yy)))
inline OperatorRep erf_asin_kernel(const OperatorRep& k, double lambda, double b,
                                   const Tolerances& tol = {}) {
  if (!(lambda > 0.0)) throw std::invalid_argument("erf_asin_kernel: lambda must be positive");
  const Eigen::Index n = k.size();
  const Eigen::MatrixXd kv = k.kernel_values();
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double den = std::sqrt((1.0 + 2.0 * std::max(kv(i, i), 0.0)) *
                                   (1.0 + 2.0 * std::max(kv(j, j), 0.0)));
      const double v = b + 2.0 / (M_PI * lambda) * std::asin(std::clamp(2.0 * kv(i, j) / den, -1.0, 1.0));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return kernel_to_operator(KernelGrid{k.grid, std::move(out)}, tol);
}

// Deterministic chain (K^2_inf, ..., K^{L+1}_inf) from the init kernel
inline std::vector<OperatorRep> nngp_chain(const NetworkConfig& cfg, const Grid& grid,
                                           const NngpOptions& opts = {}, const Tolerances& tol = {},
                                           int workers = 1) {
  cfg.validate();
  if (grid.dim() != cfg.input_dim)
    throw std::invalid_argument("nngp_chain: grid dimension != network input_dim");
  std::vector<OperatorRep> out;
  out.reserve(std::size_t(cfg.depth));
  OperatorRep k = init_kernel(grid, cfg.precisions[0], cfg.biases[0], tol);
  for (int l = 1; l <= cfg.depth; ++l) {
    k = nngp_step(k, cfg.precisions[std::size_t(l)], cfg.biases[std::size_t(l)], cfg.act, opts, tol,
                  workers);
    out.push_back(k);
  }
  return out;
}

struct DistanceCurveRow {
  Eigen::Index n = 0;   // width scale N
  int layer = 2;        // chain layer index in [2, L+1]
  double median = 0.0;  // median trace distance to the limit over reps
  double iqr = 0.0;
};

namespace detail {

inline double quantile_sorted(const std::vector<double>& v, double p) {
  const double pos = p * double(v.size() - 1);
  const std::size_t lo = std::size_t(pos);
  if (lo + 1 >= v.size()) return v.back();
  const double t = pos - double(lo);
  return v[lo] * (1.0 - t) + v[lo + 1] * t;
}

}  // namespace detail

// Per-layer LLN curves: median (and IQR) of ||K^l_N - K^l_inf||_1 over reps,
// for each N, rows sorted by N then layer.
inline std::vector<DistanceCurveRow> lln_distance_curve(const NetworkConfig& cfg, const Grid& grid,
                                                        std::vector<Eigen::Index> n_scales,
                                                        int reps, SeedSpec seed,
                                                        const NngpOptions& opts = {},
                                                        const Tolerances& tol = {},
                                                        int workers = 1) {
  if (reps < 1) throw std::invalid_argument("lln_distance_curve: reps must be >= 1");
  if (n_scales.empty()) throw std::invalid_argument("lln_distance_curve: no width scales");
  std::sort(n_scales.begin(), n_scales.end());
  const std::vector<OperatorRep> limits = nngp_chain(cfg, grid, opts, tol, workers);
  std::vector<DistanceCurveRow> rows;
  for (Eigen::Index n : n_scales) {
    std::vector<std::vector<double>> dists(std::size_t(cfg.depth));
    for (int r = 0; r < reps; ++r) {
      const ChainState st =
          simulate_chain(cfg, n, grid, seed.derive(std::uint64_t(n)).derive(std::uint64_t(r)), tol,
                         workers);
      for (int l = 0; l < cfg.depth; ++l)
        dists[std::size_t(l)].push_back(trace_norm(op_diff(st.ops[std::size_t(l)], limits[std::size_t(l)])));
    }
    for (int l = 0; l < cfg.depth; ++l) {
      auto& d = dists[std::size_t(l)];
      std::sort(d.begin(), d.end());
      DistanceCurveRow row;
      row.n = n;
      row.layer = l + 2;
      row.median = detail::quantile_sorted(d, 0.5);
      row.iqr = detail::quantile_sorted(d, 0.75) - detail::quantile_sorted(d, 0.25);
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace nngpldp
