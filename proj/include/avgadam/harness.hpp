#ifndef AVGADAM_HARNESS_HPP
#define AVGADAM_HARNESS_HPP

#include "avgadam/nn.hpp"
#include "avgadam/optim.hpp"
#include "avgadam/problems.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace avgadam::harness {

/// Raised for malformed or inconsistent experiment configurations.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ProblemKind { poly_regression, cubic_supervised, gauss_supervised, heat_dkm };
enum class OptimizerKind { sgd, adam };

std::string to_string(ProblemKind kind);
std::string to_string(OptimizerKind kind);
std::string to_string(const LrSchedule& sched);
LrSchedule parse_schedule(const std::string& text);

/// One experiment: every listed optimizer is paired with every listed
/// averager and run for every seed.
struct ExperimentConfig {
  std::string name = "experiment";
  ProblemKind problem = ProblemKind::poly_regression;
  std::vector<OptimizerKind> optimizers{OptimizerKind::adam};
  std::vector<AveragerSpec> averagers{AveragerSpec::none()};
  LrSchedule schedule = ConstantLr{1e-3};
  Index batch_size = 64;
  Index steps = 1000;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  Index eval_every = 100;
  Index test_points = 20000;
  std::filesystem::path out_dir = "out";
  /// Hidden widths; ignored by poly_regression.
  std::vector<Index> hidden{64, 64};
  nn::Activation activation = nn::Activation::relu;
  HyperParams<double> adam{};

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Applies `key=value` lines on top of `base`. Blank lines and lines starting
/// with '#' are skipped; a `preset=<name>` line resets to that preset first.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});
/// Canonical key=value form; parse_config(to_config_text(c)) == c.
std::string to_config_text(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

struct PresetInfo {
  std::string name;
  std::string description;
};
std::vector<PresetInfo> list_presets();
ExperimentConfig preset(const std::string& name);

struct MetricRow {
  std::int64_t step = 0;
  double train_loss = 0;
  double test_error_raw = 0;
  double test_error_averaged = 0;
  double lr = 0;
  double wallclock_ms = 0;

  bool operator==(const MetricRow&) const = default;
};

struct RunRecord {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version;
  OptimizerKind optimizer = OptimizerKind::adam;
  AveragerSpec averager;
  bool failed = false;
  std::string failure;
  std::vector<MetricRow> rows;

  /// e.g. "adam+ema:0.999", or just "adam" when unaveraged.
  std::string series() const;
  std::string file_stem() const;
};

std::string version_string();

struct TrainOptions {
  OptimizerKind optimizer = OptimizerKind::adam;
  HyperParams<double> adam{};
  LrSchedule schedule = ConstantLr{1e-3};
  Index batch_size = 64;
  Index steps = 1000;
  Index eval_every = 100;
};

/// One training trajectory from `seed`. Gradients are always taken at the raw
/// iterate; each averager observes the same trajectory and yields its own
/// record. Row 0 is the initial point and carries the loss of the first batch.
std::vector<RunRecord> train(const problems::StochasticProblem& problem, const TrainOptions& opts,
                             std::span<const AveragerSpec> averagers, std::uint64_t seed);

std::unique_ptr<problems::StochasticProblem> make_problem(const ExperimentConfig& cfg, std::uint64_t seed);
nn::MlpSpec network_spec(const ExperimentConfig& cfg);

/// All (optimizer, averager, seed) records of an experiment, in
/// optimizer-major, seed, then averager order.
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg);

inline constexpr const char* kCsvHeader = "step,train_loss,test_error_raw,test_error_averaged,lr,wallclock_ms";

void write_csv(const RunRecord& record, std::ostream& out);
void emit_csv(const RunRecord& record, const std::filesystem::path& path);
std::vector<MetricRow> read_csv(std::istream& in);
std::vector<MetricRow> read_csv(const std::filesystem::path& path);
/// Run metadata as key=value lines.
void emit_metadata(const RunRecord& record, const ExperimentConfig& cfg, const std::filesystem::path& path);

/// Log-scale test-error chart, median over seeds, one polyline per series.
void write_svg(std::span<const RunRecord> records, const std::string& title, std::ostream& out);
void emit_svg(std::span<const RunRecord> records, const std::string& title, const std::filesystem::path& path);

/// Writes every CSV/metadata file plus the experiment SVG into cfg.out_dir.
/// Returns the paths written.
std::vector<std::filesystem::path> emit_outputs(const ExperimentConfig& cfg, std::span<const RunRecord> records);

struct SelftestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};
/// Quick oracle and invariant checks, runnable from the CLI.
std::vector<SelftestResult> run_selftest();

}  // namespace avgadam::harness

#endif  // AVGADAM_HARNESS_HPP
