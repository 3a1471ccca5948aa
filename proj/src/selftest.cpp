#include "avgadam/harness.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace avgadam::harness {

namespace {

using problems::Vector;

std::string sci(double x) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << x;
  return s.str();
}

SelftestResult check(std::string name, double value, double tol) {
  return {std::move(name), value <= tol, "max deviation " + sci(value) + " (tolerance " + sci(tol) + ")"};
}

// Adam on f(x) = 0.5 * sum_i c_i (x_i - t_i)^2, written out component by component.
SelftestResult adam_reference() {
  constexpr int d = 10, steps = 1000;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  std::vector<double> curv(d), tgt(d), x(d, 0.0), m(d, 0.0), v(d, 0.0);
  for (int i = 0; i < d; ++i) {
    curv[i] = u(rng);
    tgt[i] = u(rng) - 1.0;
  }
  AdamState<double> state = AdamState<double>::start(Vector::Zero(d));
  const HyperParams<double> hp;
  const LrSchedule sched = ConstantLr{1e-2};
  double pa = 1, pb = 1, worst = 0;
  for (int n = 1; n <= steps; ++n) {
    Vector g(d);
    for (int i = 0; i < d; ++i) g[i] = curv[i] * (state.raw_params[i] - tgt[i]);
    adam_step(state, hp, sched, g);
    pa *= 0.9;
    pb *= 0.999;
    for (int i = 0; i < d; ++i) {
      const double gi = curv[i] * (x[i] - tgt[i]);
      m[i] = 0.9 * m[i] + 0.1 * gi;
      v[i] = 0.999 * v[i] + 0.001 * gi * gi;
      x[i] -= 1e-2 * (m[i] / (1 - pa)) / (1e-8 + std::sqrt(v[i] / (1 - pb)));
    }
  }
  for (int i = 0; i < d; ++i) worst = std::max(worst, std::abs(x[i] - state.raw_params[i]));
  return check("adam matches a straight-line reference", worst, 1e-12);
}

SelftestResult grouped_equivalence() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  double worst = 0;
  for (Index b : {1, 2, 4}) {
    for (Index c : {1, 2, 4}) {
      const Vector theta0 = Vector::Constant(3, 0.25);
      PartialArithmetic<double> naive(b * c, theta0);
      GroupedArithmetic<double> grouped(b, c, theta0);
      for (std::int64_t n = 1; n <= 10 * b * c; ++n) {
        Vector x(3);
        for (auto& xi : x) xi = normal(rng);
        naive.update(x);
        grouped.update(x, n);
        if (n % c == 0 && n >= b * c) worst = std::max(worst, (naive.theta() - grouped.theta()).cwiseAbs().maxCoeff());
      }
    }
  }
  return check("grouped averaging equals the sliding window", worst, 1e-12);
}

SelftestResult ema_closed_form() {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal;
  const double rho = 0.99;
  const int steps = 300;
  std::vector<double> iterates(steps + 1);
  iterates[0] = 0.5;
  Geometric<double> ema(rho, Vector::Constant(1, iterates[0]));
  for (int n = 1; n <= steps; ++n) {
    iterates[n] = normal(rng);
    ema.update(Vector::Constant(1, iterates[n]));
  }
  double expanded = std::pow(rho, steps) * iterates[0];
  for (int k = 1; k <= steps; ++k) expanded += std::pow(rho, steps - k) * (1 - rho) * iterates[k];
  return check("EMA recursion equals its expanded sum", std::abs(expanded - ema.theta()[0]), 1e-12);
}

SelftestResult network_gradient() {
  const nn::MlpSpec spec{{3, 8, 1}, nn::Activation::gelu};
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  problems::Batch batch{problems::Matrix(4, 3), Vector(4)};
  for (Index i = 0; i < batch.inputs.size(); ++i) batch.inputs.data()[i] = normal(rng);
  for (auto& t : batch.targets) t = normal(rng);
  Vector params(spec.param_count());
  for (auto& p : params) p = normal(rng);
  const Vector grad = problems::mse_loss_grad(spec, params, batch).grad;
  double worst = 0;
  const double h = 1e-5;
  for (Index i = 0; i < params.size(); ++i) {
    Vector up = params, dn = params;
    up[i] += h;
    dn[i] -= h;
    const double fd = (problems::mse_loss_grad(spec, up, batch).loss - problems::mse_loss_grad(spec, dn, batch).loss) /
                      (2 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1.0, std::abs(fd)));
  }
  return check("backprop matches central differences", worst, 1e-6);
}

SelftestResult dkm_target_mean() {
  const problems::HeatDkm prob;
  Engine rng(19);
  const Vector origin = Vector::Zero(prob.dim);
  const int draws = 200000;
  double sum = 0;
  for (int j = 0; j < draws; ++j) sum += problems::HeatDkm::initial_value(prob.diffuse(origin, rng));
  return check("heat sampling mean at the origin is 2dT", std::abs(sum / draws - 40.0), 0.3);
}

SelftestResult poly_quadrature() {
  const problems::PolyRegression prob;
  return check("polynomial test error of zero is sqrt(1/2)",
               std::abs(prob.test_error(Vector::Zero(prob.dim())) - std::sqrt(0.5)), 1e-10);
}

}  // namespace

std::vector<SelftestResult> run_selftest() {
  std::vector<SelftestResult> out;
  auto guarded = [&](SelftestResult (*fn)()) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back({"(exception)", false, e.what()});
    }
  };
  guarded(adam_reference);
  guarded(grouped_equivalence);
  guarded(ema_closed_form);
  guarded(network_gradient);
  guarded(dkm_target_mean);
  guarded(poly_quadrature);
  return out;
}

}  // namespace avgadam::harness
