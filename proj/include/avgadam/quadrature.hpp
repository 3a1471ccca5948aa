#ifndef AVGADAM_QUADRATURE_HPP
#define AVGADAM_QUADRATURE_HPP

#include <Eigen/Dense>

namespace avgadam {

struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// n-point Gauss-Legendre rule on [-1, 1]; weights sum to 2.
QuadratureRule gauss_legendre(Eigen::Index n);

}  // namespace avgadam

#endif  // AVGADAM_QUADRATURE_HPP
