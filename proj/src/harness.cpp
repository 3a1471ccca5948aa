#include "avgadam/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <thread>

namespace avgadam::harness {

#ifndef AVGADAM_VERSION
#define AVGADAM_VERSION "0.0.0"
#endif

std::string version_string() { return std::string("avgadam ") + AVGADAM_VERSION; }

std::string RunRecord::series() const {
  std::string s = to_string(optimizer);
  if (averager.kind != AveragerSpec::Kind::none) s += "+" + avgadam::to_string(averager);
  return s;
}

std::string RunRecord::file_stem() const {
  std::string avg = avgadam::to_string(averager);
  std::replace(avg.begin(), avg.end(), ':', '-');
  return to_string(optimizer) + "_" + avg + "_seed" + std::to_string(seed);
}

nn::MlpSpec network_spec(const ExperimentConfig& cfg) {
  Index input = 0;
  switch (cfg.problem) {
    case ProblemKind::poly_regression: throw ConfigError("poly_regression does not use a network");
    case ProblemKind::cubic_supervised: input = problems::SupervisedTarget::cubic().dim; break;
    case ProblemKind::gauss_supervised: input = problems::SupervisedTarget::gauss_density().dim; break;
    case ProblemKind::heat_dkm: input = problems::HeatDkm{}.dim; break;
  }
  nn::MlpSpec spec;
  spec.layer_dims.push_back(input);
  spec.layer_dims.insert(spec.layer_dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  spec.layer_dims.push_back(1);
  spec.activation = cfg.activation;
  return spec;
}

std::unique_ptr<problems::StochasticProblem> make_problem(const ExperimentConfig& cfg, std::uint64_t seed) {
  Engine test_rng = make_stream(seed, Stream::test);
  switch (cfg.problem) {
    case ProblemKind::poly_regression: return problems::make_poly_problem(problems::PolyRegression{});
    case ProblemKind::cubic_supervised:
      return problems::make_supervised_problem(problems::SupervisedTarget::cubic(), network_spec(cfg),
                                               cfg.test_points, test_rng);
    case ProblemKind::gauss_supervised:
      return problems::make_supervised_problem(problems::SupervisedTarget::gauss_density(), network_spec(cfg),
                                               cfg.test_points, test_rng);
    case ProblemKind::heat_dkm:
      return problems::make_dkm_problem(problems::HeatDkm{}, network_spec(cfg), cfg.test_points, test_rng);
  }
  throw ConfigError("unhandled problem kind");
}

std::vector<RunRecord> train(const problems::StochasticProblem& problem, const TrainOptions& opts,
                             std::span<const AveragerSpec> averagers, std::uint64_t seed) {
  using Clock = std::chrono::steady_clock;
  const auto started = Clock::now();
  auto elapsed_ms = [&] { return std::chrono::duration<double, std::milli>(Clock::now() - started).count(); };

  Engine init_rng = make_stream(seed, Stream::init);
  Engine data_rng = make_stream(seed, Stream::data);

  HyperParams<double> hp = opts.adam;
  hp.batch_size = opts.batch_size;
  hp.validate();

  const problems::Vector theta0 = problem.initial_params(init_rng);
  AdamState<double> adam = AdamState<double>::start(theta0);
  problems::Vector sgd_params = theta0;
  const bool use_adam = opts.optimizer == OptimizerKind::adam;
  auto raw = [&]() -> const problems::Vector& { return use_adam ? adam.raw_params : sgd_params; };

  std::vector<Averager<double>> avgs;
  std::vector<RunRecord> records;
  for (const auto& spec : averagers) {
    avgs.push_back(make_averager(spec, theta0));
    RunRecord r;
    r.seed = seed;
    r.version = version_string();
    r.optimizer = opts.optimizer;
    r.averager = spec;
    records.push_back(std::move(r));
  }

  auto fail_all = [&](const std::string& why) {
    for (auto& r : records) {
      r.failed = true;
      r.failure = why;
    }
  };

  // Appends one row per averager; false if a metric is non-finite.
  auto record_rows = [&](std::int64_t step, double train_loss, double lr) {
    const double raw_err = problem.test_error(raw());
    const double ms = elapsed_ms();
    bool finite = std::isfinite(train_loss) && std::isfinite(raw_err);
    for (std::size_t i = 0; i < avgs.size(); ++i) {
      const double avg_err = std::holds_alternative<NoAveraging>(avgs[i])
                                 ? raw_err
                                 : problem.test_error(averaged_params(avgs[i], raw()));
      finite = finite && std::isfinite(avg_err);
      records[i].rows.push_back({step, train_loss, raw_err, avg_err, lr, ms});
    }
    return finite;
  };

  double loss_sum = 0;
  Index loss_count = 0;
  for (std::int64_t n = 1; n <= opts.steps; ++n) {
    problems::LossGrad lg = problem.sample_loss_grad(raw(), opts.batch_size, data_rng);
    if (!std::isfinite(lg.loss)) {
      fail_all("non-finite training loss at step " + std::to_string(n));
      break;
    }
    const double lr = lr_at(opts.schedule, n);
    if (n == 1 && !record_rows(0, lg.loss, lr)) {
      fail_all("non-finite metric at step 0");
      break;
    }
    loss_sum += lg.loss;
    ++loss_count;

    try {
      if (use_adam) {
        adam_step(adam, hp, opts.schedule, lg.grad);
      } else {
        sgd_params = sgd_step(sgd_params, opts.schedule, n, lg.grad);
      }
    } catch (const std::domain_error& e) {
      fail_all(std::string(e.what()) + " at step " + std::to_string(n));
      break;
    }
    for (auto& a : avgs) averager_update(a, raw(), n);

    if (n % opts.eval_every == 0) {
      if (!record_rows(n, loss_sum / static_cast<double>(loss_count), lr)) {
        fail_all("non-finite metric at step " + std::to_string(n));
        break;
      }
      loss_sum = 0;
      loss_count = 0;
    }
  }
  return records;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::string hash = config_hash(cfg);

  struct Job {
    OptimizerKind optimizer;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto opt : cfg.optimizers) {
    for (auto seed : cfg.seeds) jobs.push_back({opt, seed});
  }

  auto run_job = [&cfg](const Job& job) {
    auto problem = make_problem(cfg, job.seed);
    TrainOptions opts;
    opts.optimizer = job.optimizer;
    opts.adam = cfg.adam;
    opts.schedule = cfg.schedule;
    opts.batch_size = cfg.batch_size;
    opts.steps = cfg.steps;
    opts.eval_every = cfg.eval_every;
    return train(*problem, opts, cfg.averagers, job.seed);
  };

  // Jobs run in batches of `workers`; results are stored by job index.
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::vector<RunRecord>> results(jobs.size());
  for (std::size_t first = 0; first < jobs.size(); first += workers) {
    const std::size_t last = std::min(jobs.size(), first + workers);
    std::vector<std::future<std::vector<RunRecord>>> pending;
    for (std::size_t j = first; j < last; ++j) {
      pending.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, run_job, jobs[j]));
    }
    for (std::size_t j = first; j < last; ++j) results[j] = pending[j - first].get();
  }

  std::vector<RunRecord> all;
  for (auto& group : results) {
    for (auto& r : group) {
      r.config_hash = hash;
      all.push_back(std::move(r));
    }
  }
  return all;
}

}  // namespace avgadam::harness
