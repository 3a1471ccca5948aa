#ifndef AVGADAM_OPTIM_HPP
#define AVGADAM_OPTIM_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>

namespace avgadam {

template <typename Scalar>
using ParamVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

/// Adam hyperparameters. Defaults are the PyTorch defaults.
template <typename Scalar = double>
struct HyperParams {
  Scalar alpha = Scalar(0.9);     ///< momentum decay
  Scalar beta = Scalar(0.999);    ///< second-moment decay
  Scalar epsilon = Scalar(1e-8);  ///< added to sqrt of the second moment
  Index batch_size = 1;

  void validate() const {
    if (!(alpha >= 0 && alpha < 1)) throw std::invalid_argument("alpha must lie in [0,1)");
    if (!(beta >= 0 && beta < 1)) throw std::invalid_argument("beta must lie in [0,1)");
    if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  }

  bool operator==(const HyperParams&) const = default;
};

struct ConstantLr {
  double c = 1e-3;
  bool operator==(const ConstantLr&) const = default;
};

/// gamma_n = c * n^(-p)
struct PolyDecayLr {
  double c = 1e-3;
  double p = 0.5;
  bool operator==(const PolyDecayLr&) const = default;
};

using LrSchedule = std::variant<ConstantLr, PolyDecayLr>;

inline void validate(const LrSchedule& sched) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if (!(s.c > 0) || !std::isfinite(s.c)) throw std::invalid_argument("learning rate must be positive");
        if constexpr (std::is_same_v<T, PolyDecayLr>) {
          if (!(s.p > 0 && s.p < 1)) throw std::invalid_argument("decay exponent must lie in (0,1)");
        }
      },
      sched);
}

/// Learning rate for the 1-indexed step n.
inline double lr_at(const LrSchedule& sched, std::int64_t n) {
  if (n < 1) throw std::domain_error("learning-rate schedules are 1-indexed, got n = " + std::to_string(n));
  if (const auto* c = std::get_if<ConstantLr>(&sched)) return c->c;
  const auto& d = std::get<PolyDecayLr>(sched);
  return d.c * std::pow(static_cast<double>(n), -d.p);
}

namespace detail {

template <typename Scalar>
void check_gradient(const ParamVector<Scalar>& params, const ParamVector<Scalar>& grad) {
  if (grad.size() != params.size()) {
    throw std::invalid_argument("gradient has dimension " + std::to_string(grad.size()) + ", expected " +
                                std::to_string(params.size()));
  }
  for (Index i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(static_cast<double>(grad[i]))) {
      throw std::domain_error("non-finite gradient component at index " + std::to_string(i));
    }
  }
}

}  // namespace detail

/// Moments, step counter and bias-correction products of one Adam run,
/// together with the raw (unaveraged) iterate.
template <typename Scalar = double>
struct AdamState {
  ParamVector<Scalar> m;
  ParamVector<Scalar> v;
  std::int64_t n = 0;
  Scalar prod_alpha = 1;
  Scalar prod_beta = 1;
  ParamVector<Scalar> raw_params;

  static AdamState start(ParamVector<Scalar> theta0) {
    AdamState s;
    s.m = ParamVector<Scalar>::Zero(theta0.size());
    s.v = ParamVector<Scalar>::Zero(theta0.size());
    s.raw_params = std::move(theta0);
    return s;
  }
};

/// One Adam update with `grad` the batch-averaged stochastic gradient taken
/// at `state.raw_params`. Epsilon is added to sqrt(v_hat), not inside it.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, const HyperParams<Scalar>& hp, const LrSchedule& sched,
               const ParamVector<Scalar>& grad) {
  detail::check_gradient(state.raw_params, grad);
  state.n += 1;
  const Scalar gamma = static_cast<Scalar>(lr_at(sched, state.n));
  state.m = hp.alpha * state.m + (1 - hp.alpha) * grad;
  state.v = hp.beta * state.v + (1 - hp.beta) * grad.cwiseAbs2();
  state.prod_alpha *= hp.alpha;
  state.prod_beta *= hp.beta;
  const Scalar m_corr = 1 - state.prod_alpha;
  const Scalar v_corr = 1 - state.prod_beta;
  state.raw_params.array() -=
      gamma * (state.m.array() / m_corr) / (hp.epsilon + (state.v.array() / v_corr).sqrt());
}

/// Plain SGD: params - gamma_n * grad.
template <typename Scalar>
ParamVector<Scalar> sgd_step(const ParamVector<Scalar>& params, const LrSchedule& sched, std::int64_t n,
                             const ParamVector<Scalar>& grad) {
  detail::check_gradient(params, grad);
  return params - static_cast<Scalar>(lr_at(sched, n)) * grad;
}

// ---------------------------------------------------------------------------
// Averaging schemes. Each is fed the raw iterate after every optimizer step
// and never feeds back into the optimizer.

/// Plain optimizer output; the averaged iterate is the raw iterate.
struct NoAveraging {};

/// Uniform mean of the last `window` raw iterates. The ring starts filled with
/// copies of the initial iterate, so before `window` steps the mean blends the
/// initial value with the iterates seen so far.
template <typename Scalar = double>
class PartialArithmetic {
 public:
  PartialArithmetic(Index window, const ParamVector<Scalar>& theta0)
      : window_(window), ring_(theta0.size(), window), theta_(theta0) {
    if (window < 1) throw std::invalid_argument("averaging window must be at least 1");
    ring_.colwise() = theta0;
  }

  void update(const ParamVector<Scalar>& raw) {
    if (window_ == 1) {
      theta_ = raw;
      return;
    }
    theta_ += (raw - ring_.col(head_)) / static_cast<Scalar>(window_);
    ring_.col(head_) = raw;
    head_ = (head_ + 1) % window_;
  }

  const ParamVector<Scalar>& theta() const { return theta_; }
  Index window() const { return window_; }

 private:
  Index window_;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> ring_;  // one column per stored iterate
  Index head_ = 0;                                              // oldest slot
  ParamVector<Scalar> theta_;
};

/// Memory-lean variant of PartialArithmetic with window groups*group_size:
/// keeps the means of the last `groups` blocks of `group_size` iterates and
/// refreshes the average only when a block completes.
template <typename Scalar = double>
class GroupedArithmetic {
 public:
  GroupedArithmetic(Index groups, Index group_size, const ParamVector<Scalar>& theta0)
      : groups_(groups),
        group_size_(group_size),
        group_acc_(ParamVector<Scalar>::Zero(theta0.size())),
        ring_(theta0.size(), groups),
        theta_(theta0) {
    if (groups < 1 || group_size < 1) throw std::invalid_argument("group count and size must be at least 1");
    ring_.colwise() = theta0;
  }

  void update(const ParamVector<Scalar>& raw, std::int64_t n) {
    group_acc_ += raw / static_cast<Scalar>(group_size_);
    if (n % group_size_ != 0) return;
    if (groups_ == 1) {
      theta_ = group_acc_;
    } else {
      theta_ += (group_acc_ - ring_.col(head_)) / static_cast<Scalar>(groups_);
      ring_.col(head_) = group_acc_;
      head_ = (head_ + 1) % groups_;
    }
    group_acc_.setZero();
  }

  /// Average as of the most recently completed group.
  const ParamVector<Scalar>& theta() const { return theta_; }
  Index groups() const { return groups_; }
  Index group_size() const { return group_size_; }

 private:
  Index groups_;
  Index group_size_;
  ParamVector<Scalar> group_acc_;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> ring_;
  Index head_ = 0;
  ParamVector<Scalar> theta_;
};

/// Exponential moving average theta <- delta*theta + (1-delta)*raw.
template <typename Scalar = double>
class Geometric {
 public:
  Geometric(Scalar delta, const ParamVector<Scalar>& theta0) : delta_(delta), theta_(theta0) {
    if (!(delta >= 0 && delta < 1)) throw std::invalid_argument("EMA decay must lie in [0,1)");
  }

  void update(const ParamVector<Scalar>& raw) { theta_ = delta_ * theta_ + (1 - delta_) * raw; }

  const ParamVector<Scalar>& theta() const { return theta_; }
  Scalar delta() const { return delta_; }

 private:
  Scalar delta_;
  ParamVector<Scalar> theta_;
};

/// Running mean of all iterates from step `start` on (start = 0 includes
/// the initial value). Tracks the raw iterate until then.
template <typename Scalar = double>
class PolyakRuppert {
 public:
  PolyakRuppert(std::int64_t start, const ParamVector<Scalar>& theta0) : start_(start), theta_(theta0) {
    if (start < 0) throw std::invalid_argument("averaging start step must be nonnegative");
  }

  void update(const ParamVector<Scalar>& raw, std::int64_t n) {
    if (n <= start_) {
      theta_ = raw;
      return;
    }
    const auto k = static_cast<Scalar>(n - start_);
    theta_ = (k / (k + 1)) * theta_ + (1 / (k + 1)) * raw;
  }

  const ParamVector<Scalar>& theta() const { return theta_; }
  std::int64_t start() const { return start_; }

 private:
  std::int64_t start_;
  ParamVector<Scalar> theta_;
};

/// Plain description of an averaging scheme, independent of dimension.
struct AveragerSpec {
  enum class Kind { none, partial, grouped, ema, polyak };
  Kind kind = Kind::none;
  Index window = 1;       // partial
  Index groups = 1;       // grouped
  Index group_size = 1;   // grouped
  double delta = 0;       // ema
  std::int64_t start = 0; // polyak

  static AveragerSpec none() { return {}; }
  static AveragerSpec partial(Index a) { return {Kind::partial, a, 1, 1, 0, 0}; }
  static AveragerSpec grouped(Index b, Index c) { return {Kind::grouped, 1, b, c, 0, 0}; }
  static AveragerSpec ema(double d) { return {Kind::ema, 1, 1, 1, d, 0}; }
  static AveragerSpec polyak(std::int64_t a) { return {Kind::polyak, 1, 1, 1, 0, a}; }

  bool operator==(const AveragerSpec&) const = default;
};

/// Parses `none`, `partial:A`, `grouped:B:C`, `ema:delta` or `polyak:A`.
AveragerSpec parse_averager(const std::string& text);
std::string to_string(const AveragerSpec& spec);

template <typename Scalar = double>
using Averager =
    std::variant<NoAveraging, PartialArithmetic<Scalar>, GroupedArithmetic<Scalar>, Geometric<Scalar>,
                 PolyakRuppert<Scalar>>;

template <typename Scalar>
Averager<Scalar> make_averager(const AveragerSpec& spec, const ParamVector<Scalar>& theta0) {
  using K = AveragerSpec::Kind;
  switch (spec.kind) {
    case K::none: return NoAveraging{};
    case K::partial: return PartialArithmetic<Scalar>(spec.window, theta0);
    case K::grouped: return GroupedArithmetic<Scalar>(spec.groups, spec.group_size, theta0);
    case K::ema: return Geometric<Scalar>(static_cast<Scalar>(spec.delta), theta0);
    case K::polyak: return PolyakRuppert<Scalar>(spec.start, theta0);
  }
  throw std::logic_error("unhandled averager kind");
}

/// Feed the raw iterate of step n (n >= 1) into the averager.
template <typename Scalar>
void averager_update(Averager<Scalar>& avg, const ParamVector<Scalar>& raw, std::int64_t n) {
  std::visit(
      [&](auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, NoAveraging>) {
        } else {
          if (raw.size() != a.theta().size()) {
            throw std::invalid_argument("iterate has dimension " + std::to_string(raw.size()) + ", expected " +
                                        std::to_string(a.theta().size()));
          }
          if constexpr (std::is_same_v<T, GroupedArithmetic<Scalar>> || std::is_same_v<T, PolyakRuppert<Scalar>>) {
            a.update(raw, n);
          } else {
            a.update(raw);
          }
        }
      },
      avg);
}

template <typename Scalar>
const ParamVector<Scalar>& averaged_params(const Averager<Scalar>& avg, const ParamVector<Scalar>& raw) {
  return std::visit(
      [&](const auto& a) -> const ParamVector<Scalar>& {
        if constexpr (std::is_same_v<std::decay_t<decltype(a)>, NoAveraging>) {
          return raw;
        } else {
          return a.theta();
        }
      },
      avg);
}

}  // namespace avgadam

#endif  // AVGADAM_OPTIM_HPP
