#ifndef AVGADAM_PROBLEMS_HPP
#define AVGADAM_PROBLEMS_HPP

#include "avgadam/nn.hpp"
#include "avgadam/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>

namespace avgadam::problems {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct LossGrad {
  double loss = 0;
  Vector grad;
};

/// One row per sample.
struct Batch {
  Matrix inputs;
  Vector targets;
};

/// Inputs with their noise-free reference values.
struct TestSet {
  Matrix inputs;
  Vector exact;
};

/// sqrt(sum (pred - exact)^2) / sqrt(sum exact^2)
double relative_l2_error(const Vector& predictions, const Vector& exact);

/// Mean squared error of a network over a batch and its parameter gradient.
LossGrad mse_loss_grad(const nn::MlpSpec& spec, const Vector& params, const Batch& batch);

/// Least-squares fit of sin(pi x) by a degree-`degree` polynomial in the raw
/// monomial basis, from uniform samples on [-1, 1] with Gaussian output noise.
struct PolyRegression {
  int degree = 25;
  double noise_std = std::sqrt(0.2);

  Index dim() const { return degree + 1; }
  static double target(double x);
  /// sum_k theta_k x^k
  static double evaluate(const Vector& theta, double x);

  Batch sample_batch(Index batch_size, Engine& rng) const;
  LossGrad loss_grad(const Vector& theta, const Batch& batch) const;
  LossGrad sample_loss_grad(const Vector& theta, Index batch_size, Engine& rng) const;
  /// L2 distance to sin(pi x) under the uniform law on [-1, 1], by 256-point
  /// Gauss-Legendre quadrature.
  double test_error(const Vector& theta) const;
};

struct SupervisedTarget {
  enum class Kind { cubic, gauss_density };

  Kind kind = Kind::cubic;
  Index dim = 6;
  double lower = -1;
  double upper = 1;
  double noise_std = 0;

  /// f(x) = 1 + sum_i (d + 1 - 2i) x_i^3 on [-1, 1]^d, noise-free.
  static SupervisedTarget cubic(Index d = 6);
  /// f(x) = exp(-|x|^2 / 6) on [-2, 2]^d with noise variance 1/5.
  static SupervisedTarget gauss_density(Index d = 20);

  double value(const Eigen::Ref<const Vector>& x) const;
  Matrix draw_inputs(Index n, Engine& rng) const;
  Batch sample_batch(Index batch_size, Engine& rng) const;
  TestSet make_test_set(Index n, Engine& rng) const;
};

LossGrad supervised_sample_loss_grad(const nn::Mlp<double>& mlp, const SupervisedTarget& target, Index batch_size,
                                     Engine& rng);

/// Heat equation du/dt = Laplace(u), u(0, x) = |x|^2, solved at time T on
/// [-1, 1]^d through its Kolmogorov regression: the terminal value at xi is
/// the conditional mean of |xi + sqrt(2T) Z|^2.
struct HeatDkm {
  Index dim = 10;
  double horizon = 2;

  static double initial_value(const Eigen::Ref<const Vector>& x) { return x.squaredNorm(); }
  /// u(t, x) = |x|^2 + 2 d t
  double exact(double t, const Eigen::Ref<const Vector>& x) const {
    return x.squaredNorm() + 2.0 * static_cast<double>(dim) * t;
  }
  double terminal(const Eigen::Ref<const Vector>& x) const { return exact(horizon, x); }

  Matrix draw_inputs(Index n, Engine& rng) const;
  /// Terminal-time sample of the diffusion started at xi.
  Vector diffuse(const Eigen::Ref<const Vector>& xi, Engine& rng) const;
  Batch sample_batch(Index batch_size, Engine& rng) const;
  TestSet make_test_set(Index n, Engine& rng) const;
};

LossGrad dkm_sample_loss_grad(const nn::Mlp<double>& mlp, const HeatDkm& prob, Index batch_size, Engine& rng);
double dkm_test_error(const nn::Mlp<double>& mlp, const TestSet& test_set);
double dkm_test_error(const nn::Mlp<double>& mlp, const HeatDkm& prob, Index n_test, Engine& fixed_rng);

/// Uniform interface the training loop runs against.
class StochasticProblem {
 public:
  virtual ~StochasticProblem() = default;
  virtual Index dim() const = 0;
  virtual Vector initial_params(Engine& init_rng) const = 0;
  virtual LossGrad sample_loss_grad(const Vector& params, Index batch_size, Engine& data_rng) const = 0;
  /// Deterministic, noise-free error against the ground truth.
  virtual double test_error(const Vector& params) const = 0;
};

std::unique_ptr<StochasticProblem> make_poly_problem(const PolyRegression& prob);
std::unique_ptr<StochasticProblem> make_supervised_problem(const SupervisedTarget& target, const nn::MlpSpec& spec,
                                                           Index test_points, Engine& test_rng);
std::unique_ptr<StochasticProblem> make_dkm_problem(const HeatDkm& prob, const nn::MlpSpec& spec, Index test_points,
                                                    Engine& test_rng);

}  // namespace avgadam::problems

#endif  // AVGADAM_PROBLEMS_HPP
