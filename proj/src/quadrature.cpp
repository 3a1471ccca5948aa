#include "avgadam/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace avgadam {

// Newton iteration on P_n from the Chebyshev-like initial guess, with P_n and
// P_n' from the three-term recurrence.
QuadratureRule gauss_legendre(Eigen::Index n) {
  if (n < 1) throw std::invalid_argument("quadrature needs at least one node");
  QuadratureRule rule{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  const double nd = static_cast<double>(n);
  for (Eigen::Index i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (nd + 0.5));
    double dp = 0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1, p1 = x;
      for (Eigen::Index k = 2; k <= n; ++k) {
        const double kd = static_cast<double>(k);
        const double p2 = ((2 * kd - 1) * x * p1 - (kd - 1) * p0) / kd;
        p0 = p1;
        p1 = p2;
      }
      const double pn = n == 1 ? x : p1;
      const double pm = n == 1 ? 1.0 : p0;
      dp = nd * (x * pn - pm) / (x * x - 1);
      const double dx = pn / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute the derivative at the converged node
    double p0 = 1, p1 = x;
    for (Eigen::Index k = 2; k <= n; ++k) {
      const double kd = static_cast<double>(k);
      const double p2 = ((2 * kd - 1) * x * p1 - (kd - 1) * p0) / kd;
      p0 = p1;
      p1 = p2;
    }
    dp = n == 1 ? 1.0 : nd * (x * p1 - p0) / (x * x - 1);
    const double w = 2 / ((1 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0;
  return rule;
}

}  // namespace avgadam
