#ifndef AVGADAM_NN_HPP
#define AVGADAM_NN_HPP

#include "avgadam/optim.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace avgadam::nn {

enum class Activation { relu, gelu };

std::string to_string(Activation act);
Activation parse_activation(const std::string& text);

/// x * Phi(x) with the exact (erf based) normal CDF.
template <typename Scalar>
Scalar gelu(Scalar x) {
  using std::erfc;
  return x * Scalar(0.5) * erfc(-x / std::numbers::sqrt2_v<Scalar>);
}

template <typename Scalar>
Scalar gelu_prime(Scalar x) {
  using std::erfc;
  using std::exp;
  const Scalar cdf = Scalar(0.5) * erfc(-x / std::numbers::sqrt2_v<Scalar>);
  const Scalar pdf = exp(-x * x / 2) * std::numbers::inv_sqrtpi_v<Scalar> / std::numbers::sqrt2_v<Scalar>;
  return cdf + x * pdf;
}

/// The ReLU subgradient at 0 is taken to be 0.
template <typename Scalar>
Scalar relu(Scalar x) {
  return x > 0 ? x : Scalar(0);
}

template <typename Scalar>
Scalar relu_prime(Scalar x) {
  return x > 0 ? Scalar(1) : Scalar(0);
}

/// Layer widths [d_in, h_1, ..., h_L, d_out]. The activation follows every
/// hidden layer; the output layer is affine.
struct MlpSpec {
  std::vector<Index> layer_dims;
  Activation activation = Activation::relu;

  void validate() const {
    if (layer_dims.size() < 2) throw std::invalid_argument("an MLP needs at least input and output widths");
    for (Index d : layer_dims) {
      if (d < 1) throw std::invalid_argument("layer widths must be positive");
    }
  }

  Index num_layers() const { return static_cast<Index>(layer_dims.size()) - 1; }
  Index input_dim() const { return layer_dims.front(); }
  Index output_dim() const { return layer_dims.back(); }
  Index fan_in(Index layer) const { return layer_dims[layer]; }
  Index fan_out(Index layer) const { return layer_dims[layer + 1]; }

  /// Offset of layer `layer`'s weights in the flat vector. Each layer stores
  /// its fan_out x fan_in weight matrix row-major, followed by its bias.
  Index weight_offset(Index layer) const {
    Index off = 0;
    for (Index l = 0; l < layer; ++l) off += fan_out(l) * fan_in(l) + fan_out(l);
    return off;
  }
  Index bias_offset(Index layer) const { return weight_offset(layer) + fan_out(layer) * fan_in(layer); }
  Index param_count() const { return weight_offset(num_layers()); }
};

template <typename Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
Eigen::Map<const RowMajorMatrix<Scalar>> weights(const MlpSpec& spec, const ParamVector<Scalar>& params,
                                                 Index layer) {
  return {params.data() + spec.weight_offset(layer), spec.fan_out(layer), spec.fan_in(layer)};
}

template <typename Scalar>
Eigen::Map<RowMajorMatrix<Scalar>> weights(const MlpSpec& spec, ParamVector<Scalar>& params, Index layer) {
  return {params.data() + spec.weight_offset(layer), spec.fan_out(layer), spec.fan_in(layer)};
}

template <typename Scalar>
auto bias(const MlpSpec& spec, const ParamVector<Scalar>& params, Index layer) {
  return params.segment(spec.bias_offset(layer), spec.fan_out(layer));
}

template <typename Scalar>
auto bias(const MlpSpec& spec, ParamVector<Scalar>& params, Index layer) {
  return params.segment(spec.bias_offset(layer), spec.fan_out(layer));
}

/// Per-layer (weight, bias) copies of a flat parameter vector.
template <typename Scalar>
struct LayerParams {
  Matrix<Scalar> weight;
  ParamVector<Scalar> bias;
};

template <typename Scalar>
std::vector<LayerParams<Scalar>> unflatten(const MlpSpec& spec, const ParamVector<Scalar>& params) {
  if (params.size() != spec.param_count()) throw std::invalid_argument("parameter vector does not match spec");
  std::vector<LayerParams<Scalar>> layers;
  for (Index l = 0; l < spec.num_layers(); ++l) {
    layers.push_back({weights(spec, params, l), bias(spec, params, l)});
  }
  return layers;
}

template <typename Scalar>
ParamVector<Scalar> flatten(const MlpSpec& spec, const std::vector<LayerParams<Scalar>>& layers) {
  if (static_cast<Index>(layers.size()) != spec.num_layers()) throw std::invalid_argument("layer count mismatch");
  ParamVector<Scalar> params(spec.param_count());
  for (Index l = 0; l < spec.num_layers(); ++l) {
    const auto& lp = layers[l];
    if (lp.weight.rows() != spec.fan_out(l) || lp.weight.cols() != spec.fan_in(l) || lp.bias.size() != spec.fan_out(l)) {
      throw std::invalid_argument("layer " + std::to_string(l) + " has the wrong shape");
    }
    weights(spec, params, l) = lp.weight;
    bias(spec, params, l) = lp.bias;
  }
  return params;
}

/// Glorot-uniform weights, zero biases.
template <typename Scalar, typename Rng>
ParamVector<Scalar> init_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  ParamVector<Scalar> params = ParamVector<Scalar>::Zero(spec.param_count());
  for (Index l = 0; l < spec.num_layers(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(spec.fan_in(l) + spec.fan_out(l)));
    std::uniform_real_distribution<double> dist(-limit, limit);
    auto w = params.segment(spec.weight_offset(l), spec.fan_out(l) * spec.fan_in(l));
    for (Index i = 0; i < w.size(); ++i) w[i] = static_cast<Scalar>(dist(rng));
  }
  return params;
}

/// Network description plus its flat parameters.
template <typename Scalar = double>
struct Mlp {
  MlpSpec spec;
  ParamVector<Scalar> params;

  Mlp(MlpSpec s, ParamVector<Scalar> p) : spec(std::move(s)), params(std::move(p)) {
    spec.validate();
    if (params.size() != spec.param_count()) {
      throw std::invalid_argument("expected " + std::to_string(spec.param_count()) + " parameters, got " +
                                  std::to_string(params.size()));
    }
  }
};

/// Intermediates of one forward pass, stored feature-major (one column per
/// sample). post[0] is the input; pre[l] is layer l's affine output.
template <typename Scalar>
struct ForwardTape {
  std::vector<Matrix<Scalar>> pre;
  std::vector<Matrix<Scalar>> post;
  Index batch_size = 0;
};

template <typename Scalar>
struct ForwardResult {
  Matrix<Scalar> outputs;  // batch_size x d_out
  ForwardTape<Scalar> tape;
};

namespace detail {

template <typename Scalar>
Matrix<Scalar> activate(const Matrix<Scalar>& z, Activation act) {
  if (act == Activation::relu) return z.unaryExpr([](Scalar x) { return relu(x); });
  return z.unaryExpr([](Scalar x) { return gelu(x); });
}

template <typename Scalar>
Matrix<Scalar> activate_prime(const Matrix<Scalar>& z, Activation act) {
  if (act == Activation::relu) return z.unaryExpr([](Scalar x) { return relu_prime(x); });
  return z.unaryExpr([](Scalar x) { return gelu_prime(x); });
}

template <typename Scalar>
void check_params(const MlpSpec& spec, const ParamVector<Scalar>& params) {
  if (params.size() != spec.param_count()) {
    throw std::invalid_argument("expected " + std::to_string(spec.param_count()) + " parameters, got " +
                                std::to_string(params.size()));
  }
}

}  // namespace detail

/// Network outputs only, without recording a tape.
template <typename Scalar>
Matrix<Scalar> predict(const MlpSpec& spec, const ParamVector<Scalar>& params, const Matrix<Scalar>& batch) {
  detail::check_params(spec, params);
  if (batch.cols() != spec.input_dim()) {
    throw std::invalid_argument("batch has width " + std::to_string(batch.cols()) + ", network expects " +
                                std::to_string(spec.input_dim()));
  }
  Matrix<Scalar> a = batch.transpose();
  for (Index l = 0; l < spec.num_layers(); ++l) {
    Matrix<Scalar> z = weights(spec, params, l) * a;
    z.colwise() += bias(spec, params, l);
    a = (l + 1 < spec.num_layers()) ? detail::activate(z, spec.activation) : std::move(z);
  }
  return a.transpose();
}

template <typename Scalar>
ForwardResult<Scalar> forward(const MlpSpec& spec, const ParamVector<Scalar>& params, const Matrix<Scalar>& batch) {
  detail::check_params(spec, params);
  if (batch.cols() != spec.input_dim()) {
    throw std::invalid_argument("batch has width " + std::to_string(batch.cols()) + ", network expects " +
                                std::to_string(spec.input_dim()));
  }
  ForwardResult<Scalar> out;
  auto& tape = out.tape;
  tape.batch_size = batch.rows();
  tape.post.push_back(batch.transpose());
  for (Index l = 0; l < spec.num_layers(); ++l) {
    Matrix<Scalar> z = weights(spec, params, l) * tape.post.back();
    z.colwise() += bias(spec, params, l);
    tape.pre.push_back(std::move(z));
    if (l + 1 < spec.num_layers()) tape.post.push_back(detail::activate(tape.pre.back(), spec.activation));
  }
  out.outputs = tape.pre.back().transpose();
  return out;
}

template <typename Scalar>
ForwardResult<Scalar> forward(const Mlp<Scalar>& mlp, const Matrix<Scalar>& batch) {
  return forward(mlp.spec, mlp.params, batch);
}

/// Reverse pass: given dLoss/dOutputs (batch_size x d_out), returns
/// dLoss/dParams in the flat parameter layout. Any 1/J batch averaging must
/// already be folded into `output_grad`.
template <typename Scalar>
ParamVector<Scalar> backward(const MlpSpec& spec, const ParamVector<Scalar>& params, ForwardTape<Scalar>&& tape,
                             const Matrix<Scalar>& output_grad) {
  detail::check_params(spec, params);
  const Index layers = spec.num_layers();
  if (static_cast<Index>(tape.pre.size()) != layers || static_cast<Index>(tape.post.size()) != layers) {
    throw std::invalid_argument("tape does not match the network");
  }
  if (output_grad.rows() != tape.batch_size || output_grad.cols() != spec.output_dim()) {
    throw std::invalid_argument("output gradient must be " + std::to_string(tape.batch_size) + " x " +
                                std::to_string(spec.output_dim()));
  }
  ParamVector<Scalar> grad(spec.param_count());
  Matrix<Scalar> delta = output_grad.transpose();
  for (Index l = layers - 1; l >= 0; --l) {
    weights(spec, grad, l).noalias() = delta * tape.post[l].transpose();
    bias(spec, grad, l) = delta.rowwise().sum();
    if (l > 0) {
      Matrix<Scalar> back = weights(spec, params, l).transpose() * delta;
      delta = back.cwiseProduct(detail::activate_prime(tape.pre[l - 1], spec.activation));
    }
  }
  tape = {};
  return grad;
}

template <typename Scalar>
ParamVector<Scalar> backward(const Mlp<Scalar>& mlp, ForwardTape<Scalar>&& tape, const Matrix<Scalar>& output_grad) {
  return backward(mlp.spec, mlp.params, std::move(tape), output_grad);
}

}  // namespace avgadam::nn

#endif  // AVGADAM_NN_HPP
