#pragma once

// Activation functions with their growth/Lipschitz metadata. Growth contract:
// sigma(x)^2 <= A (1 + |x|^r). Activations with r >= 2 (identity, relu) are
// legal for simulation and limits but rejected by the rate-function machinery,
// whose tilted moment generating functional can diverge at linear growth.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "nngpldp/common.hpp"

namespace nngpldp {

enum class ActKind { identity, relu, tanh, erf, custom };

struct ActivationSpec {
  ActKind kind = ActKind::identity;
  double growth_exponent = 2.0;  // r
  double growth_const = 1.0;     // A
  double lipschitz = 1.0;        // L_sigma
  std::string name = "identity";

  // custom activations: monotone piecewise-linear table, constant beyond ends
  std::vector<double> table_x, table_y;

  static ActivationSpec identity() { return ActivationSpec{ActKind::identity, 2.0, 1.0, 1.0, "identity"}; }
  static ActivationSpec relu() { return ActivationSpec{ActKind::relu, 2.0, 1.0, 1.0, "relu"}; }
  static ActivationSpec tanh() { return ActivationSpec{ActKind::tanh, 1.0, 1.0, 1.0, "tanh"}; }
  static ActivationSpec erf() {
    // max |erf'| = 2/sqrt(pi)
    return ActivationSpec{ActKind::erf, 1.0, 1.0, 1.1283791670955126, "erf"};
  }

  static ActivationSpec custom(std::vector<double> xs, std::vector<double> ys,
                               double r, double a, double lip, std::string label = "custom") {
    if (xs.size() < 2 || xs.size() != ys.size())
      throw std::invalid_argument("activation table: need >= 2 matching (x,y) pairs");
    for (std::size_t i = 1; i < xs.size(); ++i) {
      if (!(xs[i] > xs[i - 1])) throw std::invalid_argument("activation table: x not strictly increasing");
      if (ys[i] < ys[i - 1]) throw std::invalid_argument("activation table: y not monotone nondecreasing");
    }
    if (!(r > 0.0 && r <= 2.0)) throw std::invalid_argument("activation growth_exponent must be in (0,2]");
    if (!(a > 0.0)) throw std::invalid_argument("activation growth_const must be positive");
    // sanity on the declared constants over the table range
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (ys[i] * ys[i] > a * (1.0 + std::pow(std::abs(xs[i]), r)) * (1.0 + 1e-12))
        throw std::invalid_argument("activation table violates declared growth bound");
    double max_slope = 0.0;
    for (std::size_t i = 1; i < xs.size(); ++i)
      max_slope = std::max(max_slope, (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]));
    if (max_slope > lip * (1.0 + 1e-12))
      throw std::invalid_argument("activation table violates declared Lipschitz constant");
    ActivationSpec s{ActKind::custom, r, a, lip, std::move(label)};
    s.table_x = std::move(xs);
    s.table_y = std::move(ys);
    return s;
  }

  // identity clipped to [-c, c]: matches identity up to ~20-sigma tails while
  // satisfying the r < 2 growth needed by the rate machinery
  static ActivationSpec clipped_linear(double c = 20.0) {
    return custom({-c, c}, {-c, c}, 1.0, c * c, 1.0, "clipped_linear");
  }

  double operator()(double x) const {
    switch (kind) {
      case ActKind::identity: return x;
      case ActKind::relu: return x > 0.0 ? x : 0.0;
      case ActKind::tanh: return std::tanh(x);
      case ActKind::erf: return std::erf(x);
      case ActKind::custom: {
        if (x <= table_x.front()) return table_y.front();
        if (x >= table_x.back()) return table_y.back();
        const auto it = std::upper_bound(table_x.begin(), table_x.end(), x);
        const std::size_t j = std::size_t(it - table_x.begin());
        const double t = (x - table_x[j - 1]) / (table_x[j] - table_x[j - 1]);
        return table_y[j - 1] + t * (table_y[j] - table_y[j - 1]);
      }
    }
    return x;
  }

  // x-locations where the function is not C^1 (drives kink-aware quadrature)
  std::vector<double> breakpoints() const {
    switch (kind) {
      case ActKind::relu: return {0.0};
      case ActKind::custom: return table_x;
      default: return {};
    }
  }

  bool smooth() const { return breakpoints().empty(); }

  bool rate_admissible() const { return growth_exponent < 2.0; }

  void require_rate_admissible(const char* who) const {
    if (!rate_admissible())
      throw unsupported_growth(std::string(who) + ": activation '" + name +
                               "' has growth exponent r = " + fmt17(growth_exponent) +
                               " but the rate machinery requires r < 2");
  }
};

}  // namespace nngpldp
