// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on failure.
// Every tolerance, budget, and seed is pinned here on purpose; loosening one
// to make a line pass defeats the gate.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nngpldp/diagnostics.hpp"
#include "nngpldp/experiment.hpp"
#include "nngpldp/nngp.hpp"
#include "nngpldp/posterior.hpp"
#include "nngpldp/rate.hpp"

using namespace nngpldp;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

template <class Body>
void criterion(int id, double limit_sec, const std::string& title, Body&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail = std::string("threw: ") + e.what();
  }
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool pass = out.pass;
  std::string note = out.detail;
  if (limit_sec > 0.0 && sec > limit_sec) {
    pass = false;
    note += " [over time limit " + fmt17(limit_sec) + " s]";
  }
  if (!pass) ++g_failures;
  std::printf("C%-2d %s  %s (%s; %.1f s)\n", id, pass ? "PASS" : "FAIL", title.c_str(),
              note.c_str(), sec);
  std::fflush(stdout);
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

Eigen::MatrixXd random_gram(RandomStream& rs, std::uint64_t& c, Eigen::Index n,
                            Eigen::Index extra = 2) {
  Eigen::MatrixXd g(n, n + extra);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n + extra; ++j) g(i, j) = rs.normal(c++);
  return g * g.transpose() / double(n + extra);
}

// correlation matrix with prescribed diagonal
Eigen::MatrixXd random_kernel_with_diag(RandomStream& rs, std::uint64_t& c,
                                        const Eigen::VectorXd& diag) {
  const Eigen::Index n = diag.size();
  Eigen::MatrixXd r = random_gram(rs, c, n, 1);
  Eigen::VectorXd s = r.diagonal().cwiseSqrt();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      k(i, j) = std::sqrt(diag[i] * diag[j]) * r(i, j) / (s[i] * s[j]);
  return k;
}

// brute-force Legendre transform of the scalar identity transition
double scalar_rate_scan(double k2, double k1, double lambda) {
  const double dmax = lambda / (2.0 * k1);
  auto f = [&](double d) { return d * k2 + 0.5 * std::log(1.0 - 2.0 * d * k1 / lambda); };
  double best = f(0.0), best_d = 0.0;
  const int n = 200000;
  for (int i = -n; i < n; ++i) {
    const double d = dmax * double(i) / double(n);
    const double v = f(d);
    if (v > best) {
      best = v;
      best_d = d;
    }
  }
  double lo = best_d - dmax / double(n), hi = best_d + dmax / double(n);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
  for (int it = 0; it < 200; ++it) {
    if (f(a) > f(b)) {
      hi = b;
      b = a;
      a = hi - gr * (hi - lo);
    } else {
      lo = a;
      a = b;
      b = lo + gr * (hi - lo);
    }
  }
  return f(0.5 * (lo + hi));
}

// 1D scan of the scalar mean-field floor: min_k I(k|1) + beta y^2 / (1 + beta k)
double scalar_i0_scan(double y, double beta) {
  auto f = [&](double k) { return scalar_rate_closed_form(k, 1.0, 1.0) + beta * y * y / (1.0 + beta * k); };
  const int n = 800000;
  double best = f(1.0), best_k = 1.0;
  for (int i = 1; i <= n; ++i) {
    const double k = 8.0 * double(i) / double(n);
    const double v = f(k);
    if (v < best) {
      best = v;
      best_k = k;
    }
  }
  double lo = std::max(1e-12, best_k - 8.0 / double(n)), hi = best_k + 8.0 / double(n);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
  for (int it = 0; it < 200; ++it) {
    if (f(a) < f(b)) {
      hi = b;
      b = a;
      a = hi - gr * (hi - lo);
    } else {
      lo = a;
      a = b;
      b = lo + gr * (hi - lo);
    }
  }
  return f(0.5 * (lo + hi));
}

struct Fit {
  double slope = 0.0;
  double stderr_ = 0.0;
};

Fit ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t k = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(k);
  my /= double(k);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  Fit f;
  f.slope = sxy / sxx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double r = y[i] - my - f.slope * (x[i] - mx);
    ssr += r * r;
  }
  f.stderr_ = std::sqrt(ssr / double(k - 2) / sxx);
  return f;
}

NetworkConfig relu_l2(double bias) {
  NetworkConfig cfg;
  cfg.depth = 2;
  cfg.width_ratios = {1.0, 1.0};
  cfg.precisions = {1.0, 1.0, 1.0};
  cfg.biases = {bias, bias, bias};
  cfg.act = ActivationSpec::relu();
  return cfg;
}

NetworkConfig tanh_l2(double bias) {
  NetworkConfig cfg = relu_l2(bias);
  cfg.act = ActivationSpec::tanh();
  return cfg;
}

NetworkConfig scalar_l1(const ActivationSpec& act) {
  NetworkConfig cfg;
  cfg.depth = 1;
  cfg.width_ratios = {1.0};
  cfg.precisions = {1.0, 1.0};
  cfg.biases = {0.0, 0.0};
  cfg.act = act;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

// ---- criteria ---------------------------------------------------------------

Outcome c1_operator_algebra() {
  RandomStream rs(SeedSpec{101, 0});
  std::uint64_t c = 0;
  double worst_mercer = 0.0, worst_spec = 0.0, worst_sqrt = 0.0;
  double min_chain = 1e300, min_ps = 1e300, min_var = 1e300;
  for (int t = 0; t < 1000; ++t) {
    const Eigen::Index n = 1 + Eigen::Index(rs.uniform(c++) * 32.0 - 1e-12);
    const Grid g = make_grid({{0.0, 1.0}}, int(n));
    const Eigen::MatrixXd ka = (1.0 + rs.uniform(c++)) * random_gram(rs, c, n);
    const Eigen::MatrixXd kb = (1.0 + rs.uniform(c++)) * random_gram(rs, c, n);
    const OperatorRep a = kernel_to_operator(KernelGrid{g, ka});
    const OperatorRep b = kernel_to_operator(KernelGrid{g, kb});

    min_chain = std::min({min_chain, hs_norm(a) - op_norm(a), trace_norm(a) - hs_norm(a)});

    const double quad = g.weights.dot(ka.diagonal());
    worst_mercer = std::max(worst_mercer, std::abs(trace(a) - quad) / std::max(1.0, std::abs(quad)));
    worst_spec = std::max(worst_spec,
                          std::abs(a.evals.sum() - trace(a)) / std::max(1.0, std::abs(trace(a))));

    const GapRecord ps = powers_stormer_gap(a, b);
    const GapRecord var = powers_stormer_variant(a, b);
    min_ps = std::min(min_ps, ps.rhs - ps.lhs);
    min_var = std::min(min_var, var.rhs - var.lhs);

    const OperatorRep r = sqrt_op(a);
    worst_sqrt = std::max(worst_sqrt,
                          (r.sym * r.sym - a.sym).norm() / std::max(1.0, a.sym.norm()));
  }
  Outcome out;
  out.pass = min_chain >= -1e-10 && worst_mercer <= 1e-12 && worst_spec <= 1e-12 &&
             min_ps >= -1e-10 && min_var >= -1e-10 && worst_sqrt <= 1e-8;
  out.detail = "mercer " + num(worst_mercer) + ", spectral " + num(worst_spec) + ", sqrt " +
               num(worst_sqrt) + ", ps slack " + num(min_ps) + "/" + num(min_var);
  return out;
}

Outcome c2_nngp_oracles() {
  RandomStream rs(SeedSpec{102, 0});
  std::uint64_t c = 0;
  NngpOptions opts;
  opts.hermite_nodes = 40;
  double sup_relu = 0.0, sup_id = 0.0;
  for (int t = 0; t < 160; ++t) {
    const Eigen::Index n = 2 + Eigen::Index(rs.uniform(c++) * 7.0 - 1e-12);
    const Grid g = make_grid({{0.0, 1.0}}, int(n));
    Eigen::VectorXd diag(n);
    for (Eigen::Index i = 0; i < n; ++i) diag[i] = std::pow(10.0, -3.0 + 4.0 * rs.uniform(c++));
    if (t == 0) {
      diag[0] = 1e-3;
      diag[n - 1] = 10.0;
    }
    const OperatorRep op = kernel_to_operator(KernelGrid{g, random_kernel_with_diag(rs, c, diag)});
    const double lam = 0.7 + rs.uniform(c++);
    const double bias = 0.3 * rs.uniform(c++);
    const OperatorRep quad = nngp_step(op, lam, bias, ActivationSpec::relu(), opts);
    const OperatorRep closed = relu_arccos_kernel(op, lam, bias);
    sup_relu = std::max(sup_relu,
                        (quad.kernel_values() - closed.kernel_values()).cwiseAbs().maxCoeff());
    const OperatorRep fixed = nngp_step(op, 1.0, 0.0, ActivationSpec::identity(), opts);
    sup_id = std::max(sup_id, (fixed.kernel_values() - op.kernel_values()).cwiseAbs().maxCoeff());
  }
  Outcome out;
  out.pass = sup_relu <= 1e-6 && sup_id <= 1e-12;
  out.detail = "relu sup " + num(sup_relu) + ", identity sup " + num(sup_id);
  return out;
}

Outcome c3_lln() {
  const NetworkConfig cfg = relu_l2(0.1);
  const Grid g = make_grid({{0.0, 1.0}}, 16);
  const std::vector<DistanceCurveRow> rows =
      lln_distance_curve(cfg, g, {64, 256, 1024}, 20, SeedSpec{7, 0});
  std::vector<double> med;
  for (const DistanceCurveRow& r : rows)
    if (r.layer == cfg.depth + 1) med.push_back(r.median);
  Outcome out;
  out.pass = med.size() == 3 && med[0] > med[1] && med[1] > med[2] && med[2] <= 0.5 * med[0];
  out.detail = "terminal medians " + num(med[0]) + " > " + num(med[1]) + " > " + num(med[2]);
  return out;
}

Outcome c4_scalar_rate() {
  double worst_oracle = 0.0, worst_mc = 0.0;
  const Grid g = make_grid({{0.5, 1.5}}, 1);
  const OperatorRep k1 = kernel_to_operator(KernelGrid{g, Eigen::MatrixXd::Constant(1, 1, 1.0)});
  int idx = 0;
  for (double k2v : {0.5, 1.0, 2.0}) {
    const double closed = scalar_rate_closed_form(k2v, 1.0, 1.0);
    worst_oracle = std::max(worst_oracle, std::abs(closed - scalar_rate_scan(k2v, 1.0, 1.0)));
    const OperatorRep k2 =
        kernel_to_operator(KernelGrid{g, Eigen::MatrixXd::Constant(1, 1, k2v)});
    RateOptions ro;
    ro.mc_samples = 200000;
    ro.seed = SeedSpec{104, std::uint64_t(idx++)};
    const RateEstimate est = rate_eval(k2, k1, 1.0, ActivationSpec::clipped_linear(), ro);
    worst_mc = std::max(worst_mc, std::abs(est.value - closed));
  }
  Outcome out;
  out.pass = worst_oracle <= 1e-6 && worst_mc <= 0.03;
  out.detail = "scan gap " + num(worst_oracle) + ", mc err " + num(worst_mc);
  return out;
}

Outcome c5_rate_on_limit_path() {
  const NetworkConfig cfg = tanh_l2(0.0);
  const Grid g = make_grid({{0.0, 1.0}}, 8);
  const std::vector<OperatorRep> limits = nngp_chain(cfg, g);
  RateOptions ro;
  ro.mc_samples = 200000;
  ro.seed = SeedSpec{105, 0};
  const ChainRateResult cr = chain_rate(limits, cfg, ro);
  double worst = 0.0;
  for (const RateEstimate& e : cr.per_layer) worst = std::max(worst, e.value);
  Outcome out;
  out.pass = cr.per_layer.size() == 2 && worst <= 0.02;
  out.detail = "max per-layer rate " + num(worst);
  return out;
}

Outcome c6_tail_slope() {
  const NetworkConfig cfg = scalar_l1(ActivationSpec::identity());
  const Grid g = make_grid({{0.5, 1.5}}, 1);
  EventSpec ev;
  ev.stat = "kernel_entry";
  ev.layer = 2;
  ev.threshold = 2.0;
  const TailSlopeResult ts = tail_slope(ev, cfg, g, {20, 30, 40, 50, 60}, 200000, SeedSpec{5, 0});
  const double target = scalar_rate_closed_form(2.0, 1.0, 1.0);
  Outcome out;
  out.pass = std::abs(ts.slope - target) <= 0.25 * target;
  out.detail = "slope " + num(ts.slope) + " +- " + num(ts.slope_stderr) + " vs " + num(target);
  return out;
}

Outcome c7_gradient_check() {
  RandomStream rs(SeedSpec{107, 0});
  std::uint64_t c = 0;
  const Eigen::Index m = 50000;
  const double h = 1e-3;
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Eigen::Index n = 1 + t % 4;
    const Grid g = make_grid({{0.0, 1.0}}, int(n));
    Eigen::VectorXd diag(n);
    for (Eigen::Index i = 0; i < n; ++i) diag[i] = 0.3 + 1.7 * rs.uniform(c++);
    const OperatorRep k1 = kernel_to_operator(KernelGrid{g, random_kernel_with_diag(rs, c, diag)});
    const double lam = 0.8 + rs.uniform(c++);
    DualVariable d = DualVariable::zero(g);
    const double s = 0.3 / double(n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j) {
        const double v = s * (2.0 * rs.uniform(c++) - 1.0);
        d.sym(i, j) = v;
        d.sym(j, i) = v;
      }
    const SeedSpec crn{107, std::uint64_t(1000 + t)};
    const Eigen::MatrixXd grad =
        log_mgf_gradient(d, k1, lam, ActivationSpec::tanh(), m, crn);
    Eigen::MatrixXd fd(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j) {
        DualVariable dp = d, dm = d;
        dp.sym(i, j) += h;
        dm.sym(i, j) -= h;
        if (i != j) {
          dp.sym(j, i) += h;
          dm.sym(j, i) -= h;
        }
        const double up = log_mgf(dp, k1, lam, ActivationSpec::tanh(), m, crn).value;
        const double dn = log_mgf(dm, k1, lam, ActivationSpec::tanh(), m, crn).value;
        const double slope = (up - dn) / (2.0 * h);
        fd(i, j) = (i == j) ? slope : 0.5 * slope;
        fd(j, i) = fd(i, j);
      }
    worst = std::max(worst, (fd - grad).norm() / grad.norm());
  }
  Outcome out;
  out.pass = worst <= 1e-3;
  out.detail = "worst rel gradient error " + num(worst);
  return out;
}

Outcome c8_posterior_laziness() {
  const NetworkConfig cfg = tanh_l2(0.1);
  const Grid g = make_grid({{0.0, 1.0}}, 8);
  TrainingSet train;
  train.inputs.resize(2, 1);
  train.inputs << g.nodes(0, 0), g.nodes(6, 0);
  train.responses.resize(2, 1);
  train.responses << 1.0, -0.5;
  train.beta = 1.0;

  const std::vector<Eigen::Index> ns{64, 256, 1024};
  std::vector<double> xs, spreads;
  for (Eigen::Index n : ns) {
    std::vector<double> lw;
    for (int r = 0; r < 200; ++r) {
      const ChainState st = simulate_chain(
          cfg, n, g, SeedSpec{13, 0}.derive(std::uint64_t(n)).derive(std::uint64_t(r)));
      lw.push_back(posterior_log_weight(st, train, false, n));
    }
    double mean = 0.0;
    for (double v : lw) mean += v;
    mean /= double(lw.size());
    double var = 0.0;
    for (double v : lw) var += (v - mean) * (v - mean);
    spreads.push_back(std::sqrt(var / double(lw.size() - 1)));
    xs.push_back(double(n));
  }
  const Fit f = ols_slope(xs, spreads);
  Outcome out;
  out.pass = std::abs(f.slope) <= 2.0 * f.stderr_;
  out.detail = "spreads " + num(spreads[0]) + "/" + num(spreads[1]) + "/" + num(spreads[2]) +
               ", slope " + num(f.slope) + " +- " + num(f.stderr_);
  return out;
}

Outcome c9_mean_field() {
  RandomStream rs(SeedSpec{109, 0});
  std::uint64_t c = 0;
  double worst_decomp = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Eigen::Index p = 1 + t % 3, dd = 1 + t % 2;
    Eigen::MatrixXd sigma = random_gram(rs, c, p * dd, 3);
    Eigen::VectorXd y(p * dd);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = 2.0 * rs.uniform(c++) - 1.0;
    const double beta = 0.5 + 1.5 * rs.uniform(c++);
    const PsiParts parts = psi_parts(sigma, y, beta);
    for (Eigen::Index n : {Eigen::Index(2), Eigen::Index(17), Eigen::Index(1024)}) {
      const double mf = psi_mf(sigma, y, beta, n);
      const double expect = psi(sigma, y, beta) + double(n - 1) * parts.quad;
      worst_decomp = std::max(worst_decomp, std::abs(mf - expect) / std::max(1.0, std::abs(mf)));
    }
  }

  const NetworkConfig cfg = scalar_l1(ActivationSpec::clipped_linear());
  const Grid g = make_grid({{0.5, 1.5}}, 1);
  TrainingSet train;
  train.inputs = Eigen::MatrixXd::Constant(1, 1, g.nodes(0, 0));
  train.responses = Eigen::MatrixXd::Constant(1, 1, 1.2);
  train.beta = 1.0;

  const double scan = scalar_i0_scan(1.2, 1.0);
  I0SearchOptions so;
  so.search_samples = 20000;
  RateOptions ro;
  ro.mc_samples = 100000;
  ro.seed = SeedSpec{109, 1};
  const I0Estimate est = estimate_I0(cfg, g, train, so, ro, SeedSpec{15, 0});
  const double i0_err = std::abs(est.i0_upper - scan);

  double min_mf = 1e300;
  for (int r = 0; r < 100; ++r) {
    const ChainState st = simulate_chain(cfg, 64, g, SeedSpec{15, 0}.derive(50000 + r));
    min_mf = std::min(min_mf, mf_rate(st.ops, train, cfg, est.i0_upper, ro).value);
  }
  const double at_argmin = mf_rate(est.argmin, train, cfg, est.i0_upper, ro).value;

  Outcome out;
  out.pass = worst_decomp <= 1e-12 && i0_err <= 0.03 && min_mf >= -0.01 && at_argmin <= 0.05;
  out.detail = "decomp " + num(worst_decomp) + ", i0 err " + num(i0_err) + ", min mf " +
               num(min_mf) + ", argmin mf " + num(at_argmin);
  return out;
}

Outcome c10_clt() {
  const NetworkConfig cfg = relu_l2(0.1);
  Eigen::MatrixXd inputs(2, 1);
  inputs << 0.3, 0.8;
  const CltReport rep = clt_diagnostic(cfg, inputs, 1024, 1, 5000, SeedSpec{17, 0}, 0.01, 199, 1024);
  Outcome out;
  out.pass = rep.pass;
  out.detail = "energy p " + num(rep.energy.p_value) + " at level 0.01";
  return out;
}

Outcome c11_singular_value_tails() {
  const std::vector<TailCheckRow> rows =
      singvalue_tail_check(64, 64, 1.0, {0.3, 0.5, 0.8}, 10000, 1.5,
                           SeedSpec{17, 0}.derive(424242));
  Outcome out;
  out.pass = true;
  std::string d;
  for (const TailCheckRow& r : rows) {
    out.pass = out.pass && r.empirical <= r.bound;
    d += (d.empty() ? "" : ", ") + num(r.empirical) + "<=" + num(r.bound);
  }
  out.detail = d;
  return out;
}

Outcome c12_determinism() {
  const fs::path root = fs::temp_directory_path() / "nngpldp_acceptance";
  fs::remove_all(root);
  const Grid g = make_grid({{0.0, 1.0}}, 8);

  nlohmann::json net{{"depth", 2},
                     {"input_dim", 1},
                     {"output_dim", 1},
                     {"width_ratios", {1.0, 1.0}},
                     {"precisions", {1.0, 1.0, 1.0}},
                     {"biases", {0.1, 0.1, 0.1}},
                     {"activation", "tanh"}};
  nlohmann::json grid{{"domain", {{0.0, 1.0}}}, {"n", 8}};
  std::vector<nlohmann::json> cfgs;
  cfgs.push_back({{"kind", "simulate"},
                  {"network", net},
                  {"grid", grid},
                  {"n_scale", 64},
                  {"seed", {{"master", 3}, {"stream", 0}}}});
  cfgs.push_back({{"kind", "posterior"},
                  {"network", net},
                  {"grid", grid},
                  {"train",
                   {{"inputs", {{g.nodes(0, 0)}, {g.nodes(6, 0)}}},
                    {"responses", {{1.0}, {-0.5}}},
                    {"beta", 1.0}}},
                  {"ensemble_size", 60},
                  {"n_scale", 64},
                  {"mean_field", false},
                  {"seed", {{"master", 13}, {"stream", 0}}}});

  Outcome out;
  out.pass = true;
  int files = 0;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    nlohmann::json a = cfgs[i], b = cfgs[i];
    a["out"] = (root / ("k" + std::to_string(i) + "_a")).string();
    b["out"] = (root / ("k" + std::to_string(i) + "_b")).string();
    const RunResult ra = run_experiment(a);
    const RunResult rb = run_experiment(b);
    out.pass = out.pass && ra.artifacts == rb.artifacts && ra.config_hash == rb.config_hash;
    for (const std::string& name : ra.artifacts) {
      out.pass = out.pass && slurp(fs::path(ra.out_dir) / name) == slurp(fs::path(rb.out_dir) / name);
      ++files;
    }
    nlohmann::json ma = nlohmann::json::parse(slurp(fs::path(ra.out_dir) / "manifest.json"));
    nlohmann::json mb = nlohmann::json::parse(slurp(fs::path(rb.out_dir) / "manifest.json"));
    ma["config"]["out"] = "";
    mb["config"]["out"] = "";
    out.pass = out.pass && ma == mb;

    // rerun in place: every byte, manifest included, must reproduce
    std::map<std::string, std::string> before;
    for (const auto& e : fs::recursive_directory_iterator(ra.out_dir))
      if (e.is_regular_file()) before[e.path().string()] = slurp(e.path());
    run_experiment(a);
    for (const auto& [path, bytes] : before) out.pass = out.pass && slurp(path) == bytes;
  }
  fs::remove_all(root);
  out.detail = std::to_string(files) + " artifacts byte-compared across reruns";
  return out;
}

}  // namespace

int main() {
  std::printf("acceptance gate: 12 criteria\n");
  criterion(1, 30.0, "operator algebra on 1000 random PSD pairs", c1_operator_algebra);
  criterion(2, 10.0, "quadrature step vs closed forms", c2_nngp_oracles);
  criterion(3, 300.0, "trace-norm LLN curve, relu depth 2", c3_lln);
  criterion(4, 120.0, "scalar rate vs closed form", c4_scalar_rate);
  criterion(5, 180.0, "rate vanishes on the limit path", c5_rate_on_limit_path);
  criterion(6, 300.0, "tail decay slope vs rate", c6_tail_slope);
  criterion(7, 60.0, "dual gradient vs CRN finite differences", c7_gradient_check);
  criterion(8, 300.0, "posterior log-weights stay O(1) in width", c8_posterior_laziness);
  criterion(9, 300.0, "mean-field decomposition, I0 search, rate floor", c9_mean_field);
  criterion(10, 180.0, "finite-width outputs match the Gaussian limit", c10_clt);
  criterion(11, 120.0, "singular-value tail bound", c11_singular_value_tails);
  criterion(12, 0.0, "byte-identical reruns", c12_determinism);
  if (g_failures == 0) {
    std::printf("acceptance: 12/12 PASS\n");
    return 0;
  }
  std::printf("acceptance: %d criterion(s) FAILED\n", g_failures);
  return 1;
}
