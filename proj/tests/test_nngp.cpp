#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "nngpldp/nngp.hpp"

using namespace nngpldp;

namespace {

double relu_pair_exact(double kxx, double kxy, double kyy) {
  const double norm = std::sqrt(kxx * kyy);
  if (norm == 0.0) return 0.0;
  const double theta = std::acos(std::clamp(kxy / norm, -1.0, 1.0));
  return norm / (2.0 * M_PI) * (std::sin(theta) + (M_PI - theta) * std::cos(theta));
}

double erf_pair_exact(double kxx, double kxy, double kyy) {
  return 2.0 / M_PI * std::asin(2.0 * kxy / std::sqrt((1.0 + 2.0 * kxx) * (1.0 + 2.0 * kyy)));
}

OperatorRep random_psd_kernel(const Grid& g, SeedSpec seed, double diag_lo, double diag_hi) {
  // random correlation matrix rescaled to a diagonal range
  const Eigen::Index n = g.size();
  RandomStream rs(seed);
  std::uint64_t c = 0;
  Eigen::MatrixXd f(n, n + 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n + 2; ++j) f(i, j) = rs.normal(c++);
  Eigen::MatrixXd corr = f * f.transpose();
  Eigen::VectorXd d = corr.diagonal().cwiseSqrt().cwiseInverse();
  corr = d.asDiagonal() * corr * d.asDiagonal();
  Eigen::VectorXd scale(n);
  for (Eigen::Index i = 0; i < n; ++i)
    scale[i] = std::sqrt(diag_lo * std::pow(diag_hi / diag_lo, rs.uniform(c++)));
  Eigen::MatrixXd kv = scale.asDiagonal() * corr * scale.asDiagonal();
  kv = 0.5 * (kv + kv.transpose());
  return kernel_to_operator(KernelGrid{g, kv});
}

}  // namespace

TEST_CASE("pair_expectation: relu against the arc-cosine formula") {
  NngpOptions opts;  // default 40
  double worst = 0.0;
  for (int ri = 0; ri < 23; ++ri) {
    const double rho = -0.99 + ri * (1.98 / 22.0);
    for (double kxx : {1e-3, 0.1, 1.0, 10.0}) {
      for (double kyy : {1e-3, 1.0, 10.0}) {
        const double kxy = rho * std::sqrt(kxx * kyy);
        const double got = pair_expectation(kxx, kxy, kyy, ActivationSpec::relu(), opts);
        worst = std::max(worst, std::abs(got - relu_pair_exact(kxx, kxy, kyy)));
      }
    }
  }
  REQUIRE(worst < 1e-9);

  // near-degenerate correlations
  for (double one_minus : {1e-4, 1e-7, 1e-10, 1e-13, 0.0}) {
    for (double sign : {1.0, -1.0}) {
      const double rho = sign * (1.0 - one_minus);
      const double kxy = rho * std::sqrt(10.0 * 0.001);
      const double got = pair_expectation(10.0, kxy, 0.001, ActivationSpec::relu(), opts);
      REQUIRE(got == Catch::Approx(relu_pair_exact(10.0, kxy, 0.001)).margin(1e-9));
    }
  }

  // degenerate marginals and the diagonal second moment E[relu(Z)^2] = k/2
  REQUIRE(pair_expectation(0.0, 0.0, 1.0, ActivationSpec::relu(), opts) == 0.0);
  REQUIRE(pair_expectation(3.0, 3.0, 3.0, ActivationSpec::relu(), opts) ==
          Catch::Approx(1.5).epsilon(1e-10));
  REQUIRE(pair_expectation(1.0, 0.0, 1.0, ActivationSpec::relu(), opts) ==
          Catch::Approx(1.0 / (2.0 * M_PI)).epsilon(1e-10));
}

TEST_CASE("pair_expectation: smooth activations") {
  NngpOptions opts;

  // identity: Gauss-Hermite reproduces the covariance to round-off
  for (double rho : {-0.7, 0.0, 0.3, 0.999}) {
    const double kxy = rho * std::sqrt(2.0 * 0.5);
    REQUIRE(pair_expectation(2.0, kxy, 0.5, ActivationSpec::identity(), opts) ==
            Catch::Approx(kxy).margin(1e-13));
  }

  // erf closed form
  double worst = 0.0;
  for (int ri = 0; ri < 15; ++ri) {
    const double rho = -0.98 + ri * (1.96 / 14.0);
    for (double kxx : {0.01, 1.0, 8.0}) {
      const double kxy = rho * std::sqrt(kxx * 1.3);
      const double got = pair_expectation(kxx, kxy, 1.3, ActivationSpec::erf(), opts);
      worst = std::max(worst, std::abs(got - erf_pair_exact(kxx, kxy, 1.3)));
    }
  }
  REQUIRE(worst < 1e-8);

  // clipped identity behaves as identity for order-one kernels
  REQUIRE(pair_expectation(1.0, 0.4, 1.0, ActivationSpec::clipped_linear(), opts) ==
          Catch::Approx(0.4).margin(1e-10));

  REQUIRE_THROWS_AS(pair_expectation(1.0, 0.0, 1.0, ActivationSpec::tanh(), NngpOptions{1, 0.5}),
                    config_error);
}

TEST_CASE("pair_expectation: refinement is Cauchy-decreasing") {
  auto diffs = [](const ActivationSpec& act, double kxx, double kxy, double kyy) {
    NngpOptions o20{20, 1.0 - 1e-12}, o40{40, 1.0 - 1e-12}, o80{80, 1.0 - 1e-12};
    const double p20 = pair_expectation(kxx, kxy, kyy, act, o20);
    const double p40 = pair_expectation(kxx, kxy, kyy, act, o40);
    const double p80 = pair_expectation(kxx, kxy, kyy, act, o80);
    return std::pair{std::abs(p40 - p20), std::abs(p80 - p40)};
  };
  for (const ActivationSpec& act : {ActivationSpec::tanh(), ActivationSpec::relu()}) {
    const auto [d1, d2] = diffs(act, 1.7, 0.6, 0.9);
    REQUIRE(d2 <= d1 + 1e-15);
  }
}

TEST_CASE("nngp_step: fixed point, closed forms, PSD preservation") {
  Grid g = make_grid({{0.0, 1.0}}, 10, "gauss_legendre");
  OperatorRep k = random_psd_kernel(g, SeedSpec{111, 0}, 1e-3, 10.0);

  // identity activation with lambda=1, b=0 is the identity map
  OperatorRep fixed = nngp_step(k, 1.0, 0.0, ActivationSpec::identity());
  REQUIRE((fixed.kernel_values() - k.kernel_values()).cwiseAbs().maxCoeff() < 1e-12);

  // relu quadrature against the arc-cosine oracle
  OperatorRep quad = nngp_step(k, 1.3, 0.2, ActivationSpec::relu());
  OperatorRep oracle = relu_arccos_kernel(k, 1.3, 0.2);
  REQUIRE((quad.kernel_values() - oracle.kernel_values()).cwiseAbs().maxCoeff() < 1e-6);

  // erf quadrature against the asin oracle
  OperatorRep quad_erf = nngp_step(k, 0.8, 0.05, ActivationSpec::erf());
  OperatorRep oracle_erf = erf_asin_kernel(k, 0.8, 0.05);
  REQUIRE((quad_erf.kernel_values() - oracle_erf.kernel_values()).cwiseAbs().maxCoeff() < 1e-8);

  // outputs stay PSD without clipping beyond tolerance
  for (const OperatorRep* op : {&quad, &quad_erf}) {
    REQUIRE(op->nonneg);
    PsdProjection proj = psd_project(*op);
    REQUIRE_FALSE(proj.exceeded);
  }

  // workers do not change values
  OperatorRep quad4 = nngp_step(k, 1.3, 0.2, ActivationSpec::relu(), NngpOptions{}, Tolerances{}, 4);
  REQUIRE(quad4.sym == quad.sym);

  REQUIRE_THROWS_AS(nngp_step(k, 0.0, 0.0, ActivationSpec::relu()), std::invalid_argument);
  Eigen::MatrixXd neg = -Eigen::MatrixXd::Identity(10, 10);
  REQUIRE_THROWS_AS(nngp_step(OperatorRep::from_sym(g, neg), 1.0, 0.0, ActivationSpec::relu()),
                    not_psd);
}

TEST_CASE("relu_arccos_kernel and erf_asin_kernel: spot values") {
  Grid g = grid_from_nodes((Eigen::MatrixXd(2, 1) << 1.0, 2.0).finished());

  Eigen::MatrixXd kv(2, 2);
  kv << 1.0, 0.0, 0.0, 1.0;
  OperatorRep indep = kernel_to_operator(KernelGrid{g, kv});
  Eigen::MatrixXd out = relu_arccos_kernel(indep, 1.0, 0.0).kernel_values();
  REQUIRE(out(0, 0) == Catch::Approx(0.5));              // theta = 0
  REQUIRE(out(0, 1) == Catch::Approx(1.0 / (2.0 * M_PI)));  // theta = pi/2

  Eigen::MatrixXd kzero(2, 2);
  kzero << 0.0, 0.0, 0.0, 4.0;
  OperatorRep degen = kernel_to_operator(KernelGrid{g, kzero});
  Eigen::MatrixXd outz = relu_arccos_kernel(degen, 2.0, 0.3).kernel_values();
  REQUIRE(outz(0, 0) == Catch::Approx(0.3));
  REQUIRE(outz(0, 1) == Catch::Approx(0.3));
  REQUIRE(outz(1, 1) == Catch::Approx(0.3 + 2.0 / 2.0));

  Eigen::MatrixXd oute = erf_asin_kernel(indep, 1.0, 0.1).kernel_values();
  REQUIRE(oute(0, 1) == Catch::Approx(0.1));
  REQUIRE(oute(0, 0) == Catch::Approx(0.1 + 2.0 / M_PI * std::asin(2.0 / 3.0)));
}

TEST_CASE("nngp_step matches the mean of chain_step") {
  Grid g = grid_from_nodes((Eigen::MatrixXd(2, 1) << 0.4, 1.1).finished());
  OperatorRep k = init_kernel(g, 1.0, 0.1);
  OperatorRep limit = nngp_step(k, 1.0, 0.05, ActivationSpec::relu());

  const int width = 32, reps = 8000;
  Eigen::Matrix2d acc = Eigen::Matrix2d::Zero();
  for (int r = 0; r < reps; ++r)
    acc += chain_step(k, width, 1.0, 0.05, ActivationSpec::relu(), SeedSpec{321, std::uint64_t(r)})
               .kernel_values();
  acc /= reps;
  // entry sd ~ k/sqrt(width reps); 4 sigma margin
  const double margin = 4.0 * 1.3 / std::sqrt(double(width) * reps);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      REQUIRE(acc(i, j) == Catch::Approx(limit.kernel_values()(i, j)).margin(margin));
}

TEST_CASE("nngp_chain: identity scalings and the iterated relu oracle") {
  Grid g = make_grid({{0.0, 1.0}}, 6, "gauss_legendre");

  NetworkConfig cfg;
  cfg.depth = 3;
  cfg.width_ratios = {1.0, 1.0, 1.0};
  cfg.precisions = {1.0, 1.0, 1.0, 1.0};
  cfg.biases = {0.0, 0.0, 0.0, 0.0};
  cfg.act = ActivationSpec::identity();

  OperatorRep k1 = init_kernel(g, 1.0, 0.0);
  std::vector<OperatorRep> lim = nngp_chain(cfg, g);
  REQUIRE(lim.size() == 3);
  for (const OperatorRep& op : lim)
    REQUIRE((op.kernel_values() - k1.kernel_values()).cwiseAbs().maxCoeff() < 1e-11);

  NetworkConfig half = cfg;
  half.precisions = {1.0, 2.0, 2.0, 2.0};
  std::vector<OperatorRep> lim2 = nngp_chain(half, g);
  for (int l = 0; l < 3; ++l) {
    const double f = std::pow(0.5, l + 1);
    REQUIRE((lim2[l].kernel_values() - f * k1.kernel_values()).cwiseAbs().maxCoeff() < 1e-11);
  }

  NetworkConfig relu = cfg;
  relu.act = ActivationSpec::relu();
  relu.precisions = {1.0, 1.5, 1.0, 2.0};
  relu.biases = {0.1, 0.0, 0.2, 0.05};
  std::vector<OperatorRep> limr = nngp_chain(relu, g);
  OperatorRep it = init_kernel(g, 1.0, 0.1);
  for (int l = 1; l <= 3; ++l) {
    it = relu_arccos_kernel(it, relu.precisions[l], relu.biases[l]);
    REQUIRE((limr[l - 1].kernel_values() - it.kernel_values()).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("lln_distance_curve: scalar reduction and determinism") {
  NetworkConfig cfg;
  cfg.depth = 1;
  cfg.width_ratios = {1.0};
  cfg.precisions = {1.0, 1.0};
  cfg.biases = {0.0, 0.0};
  cfg.act = ActivationSpec::identity();

  Grid pt = make_grid({{0.5, 1.5}}, 1, "gauss_legendre");
  SeedSpec seed{77, 0};
  auto rows = lln_distance_curve(cfg, pt, {16, 64}, 3, seed);
  REQUIRE(rows.size() == 2);
  REQUIRE(rows[0].n == 16);
  REQUIRE(rows[1].n == 64);
  REQUIRE(rows[0].layer == 2);

  // identity on one point: distance is |k_N - k_inf| of the scalar chain
  const double k1 = init_kernel(pt, 1.0, 0.0).kernel_values()(0, 0);
  std::vector<double> d;
  for (int r = 0; r < 3; ++r) {
    ChainState st = simulate_chain(cfg, 16, pt, seed.derive(16).derive(std::uint64_t(r)));
    d.push_back(std::abs(st.ops[0].kernel_values()(0, 0) * pt.weights[0] - k1 * pt.weights[0]));
  }
  std::sort(d.begin(), d.end());
  REQUIRE(rows[0].median == Catch::Approx(d[1]).epsilon(1e-12));

  auto again = lln_distance_curve(cfg, pt, {64, 16}, 3, seed);
  REQUIRE(again[0].median == rows[0].median);
  REQUIRE(again[0].iqr == rows[0].iqr);

  REQUIRE_THROWS_AS(lln_distance_curve(cfg, pt, {16}, 0, seed), std::invalid_argument);
}
