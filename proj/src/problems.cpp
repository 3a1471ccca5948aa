#include "avgadam/problems.hpp"

#include "avgadam/quadrature.hpp"

#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace avgadam::problems {

namespace {

Matrix uniform_matrix(Index rows, Index cols, double lower, double upper, Engine& rng) {
  std::uniform_real_distribution<double> dist(lower, upper);
  Matrix out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) out(i, j) = dist(rng);
  }
  return out;
}

void check_network(const nn::MlpSpec& spec, Index input_dim) {
  if (spec.input_dim() != input_dim || spec.output_dim() != 1) {
    throw std::invalid_argument("network must map R^" + std::to_string(input_dim) + " to R, got [" +
                                std::to_string(spec.input_dim()) + " -> " + std::to_string(spec.output_dim()) + "]");
  }
}

}  // namespace

double relative_l2_error(const Vector& predictions, const Vector& exact) {
  if (predictions.size() != exact.size()) throw std::invalid_argument("prediction/reference size mismatch");
  return (predictions - exact).norm() / exact.norm();
}

LossGrad mse_loss_grad(const nn::MlpSpec& spec, const Vector& params, const Batch& batch) {
  if (batch.inputs.rows() != batch.targets.size()) throw std::invalid_argument("batch inputs/targets mismatch");
  if (spec.output_dim() != 1) throw std::invalid_argument("squared loss expects a scalar network output");
  auto fwd = nn::forward(spec, params, batch.inputs);
  const Vector residual = fwd.outputs.col(0) - batch.targets;
  const double j = static_cast<double>(batch.targets.size());
  LossGrad out;
  out.loss = residual.squaredNorm() / j;
  const Matrix output_grad = (2.0 / j) * residual;
  out.grad = nn::backward(spec, params, std::move(fwd.tape), output_grad);
  return out;
}

// --- polynomial regression -------------------------------------------------

double PolyRegression::target(double x) { return std::sin(std::numbers::pi * x); }

double PolyRegression::evaluate(const Vector& theta, double x) {
  double acc = 0;
  for (Index k = theta.size() - 1; k >= 0; --k) acc = acc * x + theta[k];
  return acc;
}

Batch PolyRegression::sample_batch(Index batch_size, Engine& rng) const {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Batch b{Matrix(batch_size, 1), Vector(batch_size)};
  for (Index j = 0; j < batch_size; ++j) {
    const double x = unif(rng);
    b.inputs(j, 0) = x;
    b.targets[j] = target(x) + noise_std * normal(rng);
  }
  return b;
}

LossGrad PolyRegression::loss_grad(const Vector& theta, const Batch& batch) const {
  if (theta.size() != dim()) {
    throw std::invalid_argument("polynomial coefficients must have dimension " + std::to_string(dim()));
  }
  const Index batch_size = batch.targets.size();
  LossGrad out{0, Vector::Zero(dim())};
  Vector powers(dim());
  for (Index j = 0; j < batch_size; ++j) {
    const double x = batch.inputs(j, 0);
    powers[0] = 1;
    for (Index k = 1; k < dim(); ++k) powers[k] = powers[k - 1] * x;
    const double r = powers.dot(theta) - batch.targets[j];
    out.loss += r * r;
    out.grad += (2 * r) * powers;
  }
  out.loss /= static_cast<double>(batch_size);
  out.grad /= static_cast<double>(batch_size);
  return out;
}

LossGrad PolyRegression::sample_loss_grad(const Vector& theta, Index batch_size, Engine& rng) const {
  return loss_grad(theta, sample_batch(batch_size, rng));
}

double PolyRegression::test_error(const Vector& theta) const {
  static const QuadratureRule rule = gauss_legendre(256);
  double acc = 0;
  for (Index i = 0; i < rule.nodes.size(); ++i) {
    const double r = evaluate(theta, rule.nodes[i]) - target(rule.nodes[i]);
    acc += rule.weights[i] * r * r;
  }
  return std::sqrt(acc / 2);
}

// --- supervised targets ----------------------------------------------------

SupervisedTarget SupervisedTarget::cubic(Index d) { return {Kind::cubic, d, -1, 1, 0}; }

SupervisedTarget SupervisedTarget::gauss_density(Index d) { return {Kind::gauss_density, d, -2, 2, std::sqrt(0.2)}; }

double SupervisedTarget::value(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != dim) throw std::invalid_argument("input has the wrong dimension");
  if (kind == Kind::gauss_density) return std::exp(-x.squaredNorm() / 6);
  double acc = 1;
  const double d = static_cast<double>(dim);
  for (Index i = 0; i < dim; ++i) {
    const double coef = d + 1 - 2 * static_cast<double>(i + 1);
    acc += coef * x[i] * x[i] * x[i];
  }
  return acc;
}

Matrix SupervisedTarget::draw_inputs(Index n, Engine& rng) const { return uniform_matrix(n, dim, lower, upper, rng); }

Batch SupervisedTarget::sample_batch(Index batch_size, Engine& rng) const {
  Batch b{draw_inputs(batch_size, rng), Vector(batch_size)};
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index j = 0; j < batch_size; ++j) {
    b.targets[j] = value(b.inputs.row(j).transpose());
    if (noise_std > 0) b.targets[j] += noise_std * normal(rng);
  }
  return b;
}

TestSet SupervisedTarget::make_test_set(Index n, Engine& rng) const {
  TestSet t{draw_inputs(n, rng), Vector(n)};
  for (Index j = 0; j < n; ++j) t.exact[j] = value(t.inputs.row(j).transpose());
  return t;
}

LossGrad supervised_sample_loss_grad(const nn::Mlp<double>& mlp, const SupervisedTarget& target, Index batch_size,
                                     Engine& rng) {
  check_network(mlp.spec, target.dim);
  return mse_loss_grad(mlp.spec, mlp.params, target.sample_batch(batch_size, rng));
}

// --- heat equation -----------------------------------------------------------

Matrix HeatDkm::draw_inputs(Index n, Engine& rng) const { return uniform_matrix(n, dim, -1, 1, rng); }

Vector HeatDkm::diffuse(const Eigen::Ref<const Vector>& xi, Engine& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = std::sqrt(2 * horizon);
  Vector x(dim);
  for (Index i = 0; i < dim; ++i) x[i] = xi[i] + scale * normal(rng);
  return x;
}

Batch HeatDkm::sample_batch(Index batch_size, Engine& rng) const {
  Batch b{draw_inputs(batch_size, rng), Vector(batch_size)};
  for (Index j = 0; j < batch_size; ++j) b.targets[j] = initial_value(diffuse(b.inputs.row(j).transpose(), rng));
  return b;
}

TestSet HeatDkm::make_test_set(Index n, Engine& rng) const {
  TestSet t{draw_inputs(n, rng), Vector(n)};
  for (Index j = 0; j < n; ++j) t.exact[j] = terminal(t.inputs.row(j).transpose());
  return t;
}

LossGrad dkm_sample_loss_grad(const nn::Mlp<double>& mlp, const HeatDkm& prob, Index batch_size, Engine& rng) {
  check_network(mlp.spec, prob.dim);
  return mse_loss_grad(mlp.spec, mlp.params, prob.sample_batch(batch_size, rng));
}

double dkm_test_error(const nn::Mlp<double>& mlp, const TestSet& test_set) {
  return relative_l2_error(nn::predict(mlp.spec, mlp.params, test_set.inputs).col(0), test_set.exact);
}

double dkm_test_error(const nn::Mlp<double>& mlp, const HeatDkm& prob, Index n_test, Engine& fixed_rng) {
  return dkm_test_error(mlp, prob.make_test_set(n_test, fixed_rng));
}

// --- harness adapters --------------------------------------------------------

namespace {

class PolyProblem final : public StochasticProblem {
 public:
  explicit PolyProblem(PolyRegression prob) : prob_(prob) {}

  Index dim() const override { return prob_.dim(); }

  // Treated as a bias-free linear layer with dim() inputs and one output.
  Vector initial_params(Engine& init_rng) const override {
    const double limit = std::sqrt(6.0 / static_cast<double>(dim() + 1));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Vector theta(dim());
    for (Index k = 0; k < dim(); ++k) theta[k] = dist(init_rng);
    return theta;
  }

  LossGrad sample_loss_grad(const Vector& params, Index batch_size, Engine& data_rng) const override {
    return prob_.sample_loss_grad(params, batch_size, data_rng);
  }

  double test_error(const Vector& params) const override { return prob_.test_error(params); }

 private:
  PolyRegression prob_;
};

/// Network regression against a sampler, scored on a fixed test set.
template <typename Sampler>
class NetworkProblem final : public StochasticProblem {
 public:
  NetworkProblem(Sampler sampler, nn::MlpSpec spec, TestSet test_set)
      : sampler_(std::move(sampler)), spec_(std::move(spec)), test_set_(std::move(test_set)) {}

  Index dim() const override { return spec_.param_count(); }

  Vector initial_params(Engine& init_rng) const override { return nn::init_params<double>(spec_, init_rng); }

  LossGrad sample_loss_grad(const Vector& params, Index batch_size, Engine& data_rng) const override {
    return mse_loss_grad(spec_, params, sampler_.sample_batch(batch_size, data_rng));
  }

  double test_error(const Vector& params) const override {
    return relative_l2_error(nn::predict(spec_, params, test_set_.inputs).col(0), test_set_.exact);
  }

 private:
  Sampler sampler_;
  nn::MlpSpec spec_;
  TestSet test_set_;
};

}  // namespace

std::unique_ptr<StochasticProblem> make_poly_problem(const PolyRegression& prob) {
  return std::make_unique<PolyProblem>(prob);
}

std::unique_ptr<StochasticProblem> make_supervised_problem(const SupervisedTarget& target, const nn::MlpSpec& spec,
                                                           Index test_points, Engine& test_rng) {
  spec.validate();
  check_network(spec, target.dim);
  return std::make_unique<NetworkProblem<SupervisedTarget>>(target, spec, target.make_test_set(test_points, test_rng));
}

std::unique_ptr<StochasticProblem> make_dkm_problem(const HeatDkm& prob, const nn::MlpSpec& spec, Index test_points,
                                                    Engine& test_rng) {
  spec.validate();
  check_network(spec, prob.dim);
  return std::make_unique<NetworkProblem<HeatDkm>>(prob, spec, prob.make_test_set(test_points, test_rng));
}

}  // namespace avgadam::problems
