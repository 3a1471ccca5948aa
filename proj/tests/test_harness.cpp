#include "avgadam/harness.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace avgadam;
using namespace avgadam::harness;
using problems::Vector;

namespace {

// f(theta) = 0.5 |theta - target|^2 with additive gradient noise; remembers
// every point at which a gradient was requested.
class RecordingQuadratic : public problems::StochasticProblem {
 public:
  explicit RecordingQuadratic(Index d, std::int64_t nan_after = -1) : target_(Vector::LinSpaced(d, -1, 1)), nan_after_(nan_after) {}

  Index dim() const override { return target_.size(); }
  Vector initial_params(Engine& rng) const override {
    std::normal_distribution<double> normal;
    Vector v(dim());
    for (auto& x : v) x = normal(rng);
    return v;
  }
  problems::LossGrad sample_loss_grad(const Vector& params, Index, Engine& rng) const override {
    queried_.push_back(params);
    std::normal_distribution<double> normal(0.0, 0.1);
    Vector noise(dim());
    for (auto& x : noise) x = normal(rng);
    noise_.push_back(noise);
    const Vector r = params - target_;
    double loss = 0.5 * r.squaredNorm();
    if (nan_after_ >= 0 && static_cast<std::int64_t>(queried_.size()) > nan_after_) loss = std::nan("");
    return {loss, r + noise};
  }
  double test_error(const Vector& params) const override { return (params - target_).norm(); }

  Vector target_;
  std::int64_t nan_after_;
  mutable std::vector<Vector> queried_;
  mutable std::vector<Vector> noise_;
};

std::string strip_last_column(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + '\n';
  return out;
}

std::string csv_text(const RunRecord& r) {
  std::ostringstream s;
  write_csv(r, s);
  return s.str();
}

ExperimentConfig small_poly() {
  ExperimentConfig cfg = preset("poly_regression");
  cfg.steps = 400;
  cfg.eval_every = 100;
  cfg.seeds = {3, 4};
  return cfg;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("avgadam_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("text round-trip") {
    for (const auto& info : list_presets()) {
      const ExperimentConfig cfg = preset(info.name);
      CHECK_NOTHROW(cfg.validate());
      CHECK(parse_config(to_config_text(cfg)) == cfg);
    }
    ExperimentConfig custom;
    custom.averagers = {AveragerSpec::polyak(250), AveragerSpec::grouped(3, 7), AveragerSpec::ema(0.125)};
    custom.schedule = PolyDecayLr{3e-3, 0.3};
    custom.adam.epsilon = 1e-6;
    custom.hidden = {5, 9};
    custom.activation = nn::Activation::gelu;
    CHECK(parse_config(to_config_text(custom)) == custom);
  }

  TEST_CASE("comments, blanks and layering") {
    const auto cfg = parse_config("# comment\n\npreset = poly_regression\n  steps = 2000  \nseeds=7,8\n");
    CHECK(cfg.problem == ProblemKind::poly_regression);
    CHECK(cfg.steps == 2000);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{7, 8});
    CHECK(cfg.batch_size == 64);
  }

  TEST_CASE("malformed input is rejected") {
    CHECK_THROWS_AS(parse_config("steps"), ConfigError);
    CHECK_THROWS_AS(parse_config("no_such_key=1"), ConfigError);
    CHECK_THROWS_AS(parse_config("steps=ten"), ConfigError);
    CHECK_THROWS_AS(parse_config("averager=ema:1.0"), ConfigError);
    CHECK_THROWS_AS(parse_config("averager=partial:0"), ConfigError);
    CHECK_THROWS_AS(parse_config("schedule=poly:1e-3"), ConfigError);
    CHECK_THROWS_AS(parse_config("optimizer=rmsprop"), ConfigError);
    CHECK_THROWS_AS(parse_config("problem=heat"), ConfigError);
    try {
      parse_config("steps=10\nbogus");
      FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }

  TEST_CASE("validation") {
    CHECK_THROWS_AS(parse_config("steps=0").validate(), ConfigError);
    CHECK_THROWS_AS(parse_config("batch_size=0").validate(), ConfigError);
    CHECK_THROWS_AS(parse_config("steps=1000\neval_every=300").validate(), ConfigError);
    CHECK_THROWS_AS(parse_config("steps=100\neval_every=10\naverager=grouped:20:10").validate(), ConfigError);
    CHECK_NOTHROW(parse_config("steps=200\neval_every=10\naverager=grouped:20:10").validate());
    CHECK_THROWS_AS(parse_config("seeds=").validate(), ConfigError);
    CHECK_THROWS_AS(parse_config("name=a/b").validate(), ConfigError);
    CHECK_THROWS_AS(parse_config("beta=1").validate(), ConfigError);
  }

  TEST_CASE("hash ignores seeds and output directory") {
    const ExperimentConfig a = preset("heat_dkm");
    ExperimentConfig b = a;
    b.seeds = {42};
    b.out_dir = "elsewhere";
    CHECK(config_hash(a) == config_hash(b));
    b.steps = a.steps * 2;
    CHECK(config_hash(a) != config_hash(b));
  }

  TEST_CASE("presets") {
    CHECK(preset("poly_regression").batch_size == 64);
    CHECK(to_string(preset("poly_regression").schedule) == "constant:0.01");
    CHECK(to_string(preset("cubic_supervised").schedule) == "constant:0.01");
    CHECK(to_string(preset("heat_dkm").schedule) == "constant:5e-04");
    CHECK(to_string(preset("heat_dkm_poly").schedule) == "poly:0.005:0.25");
    CHECK(preset("heat_dkm").activation == nn::Activation::gelu);
    CHECK(preset("heat_dkm").hidden == std::vector<Index>{50, 100, 50});
    CHECK(preset("gauss_supervised").optimizers == std::vector<OptimizerKind>{OptimizerKind::adam});
    CHECK(preset("poly_regression_desk").batch_size == 64);
    CHECK(preset("heat_dkm_desk").steps < preset("heat_dkm").steps);
    CHECK_THROWS_AS(preset("no_such_preset"), ConfigError);
  }

  TEST_CASE("network shape follows the problem") {
    CHECK(network_spec(preset("heat_dkm")).layer_dims == std::vector<Index>{10, 50, 100, 50, 1});
    CHECK(network_spec(preset("cubic_supervised")).input_dim() == 6);
    CHECK(network_spec(preset("gauss_supervised")).input_dim() == 20);
    CHECK_THROWS_AS(network_spec(preset("poly_regression")), ConfigError);
  }
}

TEST_SUITE("training") {
  TEST_CASE("a single step yields rows 0 and 1") {
    RecordingQuadratic prob(3);
    TrainOptions opts;
    opts.steps = 1;
    opts.eval_every = 1;
    const AveragerSpec none[] = {AveragerSpec::none()};
    const auto recs = train(prob, opts, none, 1);
    REQUIRE(recs.size() == 1);
    REQUIRE(recs[0].rows.size() == 2);
    CHECK(recs[0].rows[0].step == 0);
    CHECK(recs[0].rows[1].step == 1);
    CHECK(recs[0].rows[0].lr == 1e-3);
    CHECK_FALSE(recs[0].failed);
  }

  TEST_CASE("row count and steps follow eval_every") {
    RecordingQuadratic prob(2);
    TrainOptions opts;
    opts.steps = 120;
    opts.eval_every = 40;
    const AveragerSpec avgs[] = {AveragerSpec::ema(0.9)};
    const auto recs = train(prob, opts, avgs, 5);
    REQUIRE(recs[0].rows.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(recs[0].rows[i].step == static_cast<std::int64_t>(40 * i));
    CHECK(prob.queried_.size() == 120);
  }

  TEST_CASE("gradients are taken at the raw Adam iterate") {
    RecordingQuadratic prob(4);
    TrainOptions opts;
    opts.steps = 300;
    opts.eval_every = 100;
    opts.schedule = PolyDecayLr{0.05, 0.25};
    const AveragerSpec avgs[] = {AveragerSpec::ema(0.99), AveragerSpec::partial(50)};
    train(prob, opts, avgs, 9);
    REQUIRE(prob.queried_.size() == 300);
    auto state = AdamState<double>::start(prob.queried_[0]);
    for (std::size_t n = 0; n < prob.queried_.size(); ++n) {
      CHECK(prob.queried_[n] == state.raw_params);
      adam_step(state, HyperParams<double>{}, opts.schedule, Vector(prob.queried_[n] - prob.target_ + prob.noise_[n]));
    }
  }

  TEST_CASE("averagers do not change the trajectory") {
    TrainOptions opts;
    opts.steps = 200;
    opts.eval_every = 50;
    RecordingQuadratic a(3), b(3);
    const AveragerSpec none[] = {AveragerSpec::none()};
    const AveragerSpec many[] = {AveragerSpec::ema(0.999), AveragerSpec::grouped(4, 10), AveragerSpec::polyak(20)};
    const auto ra = train(a, opts, none, 2);
    const auto rb = train(b, opts, many, 2);
    CHECK(a.queried_ == b.queried_);
    for (const auto& r : rb) {
      for (std::size_t i = 0; i < r.rows.size(); ++i) CHECK(r.rows[i].test_error_raw == ra[0].rows[i].test_error_raw);
    }
  }

  TEST_CASE("trivial averagers are bitwise identical to the raw iterate") {
    for (auto opt : {OptimizerKind::adam, OptimizerKind::sgd}) {
      RecordingQuadratic prob(5);
      TrainOptions opts;
      opts.optimizer = opt;
      opts.steps = 500;
      opts.eval_every = 10;
      opts.schedule = ConstantLr{0.01};
      const AveragerSpec avgs[] = {AveragerSpec::none(), AveragerSpec::partial(1), AveragerSpec::ema(0.0),
                                   AveragerSpec::grouped(1, 1)};
      for (const auto& r : train(prob, opts, avgs, 4)) {
        for (const auto& row : r.rows) CHECK(row.test_error_averaged == row.test_error_raw);
      }
    }
  }

  TEST_CASE("non-finite loss marks the trajectory failed") {
    RecordingQuadratic prob(2, 30);
    TrainOptions opts;
    opts.steps = 100;
    opts.eval_every = 10;
    const AveragerSpec avgs[] = {AveragerSpec::none(), AveragerSpec::ema(0.9)};
    const auto recs = train(prob, opts, avgs, 1);
    for (const auto& r : recs) {
      CHECK(r.failed);
      CHECK(r.failure.find("step 31") != std::string::npos);
      CHECK(r.rows.size() == 4);
    }
    CHECK(prob.queried_.size() == 31);
  }

  TEST_CASE("a diverging optimizer does not affect its siblings") {
    ExperimentConfig cfg = small_poly();
    cfg.optimizers = {OptimizerKind::sgd, OptimizerKind::adam};
    cfg.averagers = {AveragerSpec::none(), AveragerSpec::ema(0.99)};
    cfg.schedule = ConstantLr{50.0};
    const auto recs = run_experiment(cfg);
    REQUIRE(recs.size() == 8);
    for (const auto& r : recs) {
      if (r.optimizer == OptimizerKind::sgd) {
        CHECK(r.failed);
      } else {
        CHECK_FALSE(r.failed);
        CHECK(r.rows.size() == 5);
      }
    }
    const auto dir = scratch_dir("diverge");
    cfg.out_dir = dir;
    CHECK_NOTHROW(emit_outputs(cfg, recs));
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("records come out in optimizer, seed, averager order") {
    ExperimentConfig cfg = small_poly();
    cfg.optimizers = {OptimizerKind::sgd, OptimizerKind::adam};
    cfg.averagers = {AveragerSpec::none(), AveragerSpec::partial(10)};
    cfg.steps = 100;
    const auto recs = run_experiment(cfg);
    REQUIRE(recs.size() == 8);
    CHECK(recs[0].series() == "sgd");
    CHECK(recs[1].series() == "sgd+partial:10");
    CHECK(recs[2].seed == 4);
    CHECK(recs[4].series() == "adam");
    for (const auto& r : recs) {
      CHECK(r.config_hash == config_hash(cfg));
      CHECK(r.version == version_string());
    }
  }

  TEST_CASE("same config and seed give identical output") {
    ExperimentConfig cfg = small_poly();
    cfg.averagers = {AveragerSpec::none(), AveragerSpec::grouped(5, 20)};
    const auto a = run_experiment(cfg);
    const auto b = run_experiment(cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(strip_last_column(csv_text(a[i])) == strip_last_column(csv_text(b[i])));

    ExperimentConfig net = preset("cubic_supervised_desk");
    net.steps = 60;
    net.eval_every = 20;
    net.seeds = {2};
    net.test_points = 200;
    net.averagers = {AveragerSpec::ema(0.9)};
    const auto c = run_experiment(net);
    const auto d = run_experiment(net);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(strip_last_column(csv_text(c[i])) == strip_last_column(csv_text(d[i])));
  }

  TEST_CASE("different seeds give different trajectories") {
    ExperimentConfig cfg = small_poly();
    cfg.optimizers = {OptimizerKind::adam};
    cfg.averagers = {AveragerSpec::none()};
    const auto recs = run_experiment(cfg);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].rows.back().test_error_raw != recs[1].rows.back().test_error_raw);
  }
}

TEST_SUITE("output") {
  TEST_CASE("csv header and single row") {
    RunRecord r;
    r.rows.push_back({0, 0.5, 0.25, 0.125, 1e-3, 0.0});
    const std::string text = csv_text(r);
    CHECK(text == std::string(kCsvHeader) + "\n0,0.5,0.25,0.125,0.001,0\n");
  }

  TEST_CASE("csv round-trip is exact") {
    RunRecord r;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(1e-9, 10.0);
    for (std::int64_t s = 0; s < 50; ++s) r.rows.push_back({s * 7, u(rng), u(rng), u(rng), u(rng), u(rng)});
    r.rows.push_back({999, std::numeric_limits<double>::denorm_min(), 1e300, 0.1, 1.0 / 3.0, 0});
    std::stringstream s;
    write_csv(r, s);
    CHECK(read_csv(s) == r.rows);
  }

  TEST_CASE("csv reader rejects malformed input") {
    std::istringstream bad_header("step,loss\n0,1\n");
    CHECK_THROWS(read_csv(bad_header));
    std::istringstream short_row(std::string(kCsvHeader) + "\n0,1,2\n");
    CHECK_THROWS(read_csv(short_row));
  }

  TEST_CASE("svg is well formed with one polyline per series") {
    ExperimentConfig cfg = small_poly();
    cfg.optimizers = {OptimizerKind::sgd, OptimizerKind::adam};
    cfg.averagers = {AveragerSpec::none(), AveragerSpec::partial(50), AveragerSpec::ema(0.99)};
    const auto recs = run_experiment(cfg);
    std::stringstream svg;
    write_svg(recs, "poly & <friends>", svg);

    boost::property_tree::ptree tree;
    REQUIRE_NOTHROW(boost::property_tree::read_xml(svg, tree));
    std::vector<std::string> series;
    for (const auto& [tag, node] : tree.get_child("svg")) {
      if (tag == "polyline") series.push_back(node.get<std::string>("<xmlattr>.data-series"));
    }
    // raw sgd, raw adam, and two averaged series for each optimizer
    CHECK(series == std::vector<std::string>{"sgd", "sgd+partial:50", "sgd+ema:0.99", "adam", "adam+partial:50",
                                             "adam+ema:0.99"});
  }

  TEST_CASE("emit_outputs writes csv, metadata and svg") {
    ExperimentConfig cfg = small_poly();
    cfg.name = "tiny";
    cfg.seeds = {1};
    cfg.optimizers = {OptimizerKind::adam};
    cfg.averagers = {AveragerSpec::none(), AveragerSpec::ema(0.9)};
    cfg.out_dir = scratch_dir("emit");
    const auto recs = run_experiment(cfg);
    const auto paths = emit_outputs(cfg, recs);
    CHECK(paths.size() == 5);
    for (const auto& p : paths) CHECK(std::filesystem::exists(p));
    const auto csv = cfg.out_dir / "tiny_adam_ema-0.9_seed1.csv";
    REQUIRE(std::filesystem::exists(csv));
    CHECK(read_csv(csv) == recs[1].rows);

    std::ifstream meta(cfg.out_dir / "tiny_adam_ema-0.9_seed1.meta");
    std::stringstream ss;
    ss << meta.rdbuf();
    const std::string m = ss.str();
    CHECK(m.find("config_hash=" + config_hash(cfg)) != std::string::npos);
    CHECK(m.find("seed=1") != std::string::npos);
    CHECK(m.find("version=" + version_string()) != std::string::npos);
    std::filesystem::remove_all(cfg.out_dir);
  }
}
