#include "avgadam/harness.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace avgadam {

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& text, const char* what) {
  T value{};
  const std::string t = trim(text);
  const auto* first = t.data();
  const auto* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || t.empty()) {
    throw harness::ConfigError(std::string("cannot parse ") + what + " from '" + text + "'");
  }
  return value;
}

std::string format_number(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace

AveragerSpec parse_averager(const std::string& text) {
  const auto parts = split(trim(text), ':');
  if (parts.empty()) throw harness::ConfigError("empty averager description");
  const std::string& kind = parts[0];
  auto need = [&](std::size_t n) {
    if (parts.size() != n) throw harness::ConfigError("malformed averager '" + text + "'");
  };
  AveragerSpec spec;
  if (kind == "none") {
    need(1);
  } else if (kind == "partial") {
    need(2);
    spec = AveragerSpec::partial(parse_number<Index>(parts[1], "averaging window"));
    if (spec.window < 1) throw harness::ConfigError("averaging window must be at least 1");
  } else if (kind == "grouped") {
    need(3);
    spec = AveragerSpec::grouped(parse_number<Index>(parts[1], "group count"),
                                 parse_number<Index>(parts[2], "group size"));
    if (spec.groups < 1 || spec.group_size < 1) throw harness::ConfigError("group count and size must be at least 1");
  } else if (kind == "ema") {
    need(2);
    spec = AveragerSpec::ema(parse_number<double>(parts[1], "EMA decay"));
    if (!(spec.delta >= 0 && spec.delta < 1)) throw harness::ConfigError("EMA decay must lie in [0,1)");
  } else if (kind == "polyak") {
    need(2);
    spec = AveragerSpec::polyak(parse_number<std::int64_t>(parts[1], "averaging start"));
    if (spec.start < 0) throw harness::ConfigError("averaging start must be nonnegative");
  } else {
    throw harness::ConfigError("unknown averager '" + text + "'");
  }
  return spec;
}

std::string to_string(const AveragerSpec& spec) {
  using K = AveragerSpec::Kind;
  switch (spec.kind) {
    case K::none: return "none";
    case K::partial: return "partial:" + std::to_string(spec.window);
    case K::grouped: return "grouped:" + std::to_string(spec.groups) + ":" + std::to_string(spec.group_size);
    case K::ema: return "ema:" + format_number(spec.delta);
    case K::polyak: return "polyak:" + std::to_string(spec.start);
  }
  return "?";
}

namespace nn {

std::string to_string(Activation act) { return act == Activation::relu ? "relu" : "gelu"; }

Activation parse_activation(const std::string& text) {
  const std::string t = trim(text);
  if (t == "relu") return Activation::relu;
  if (t == "gelu") return Activation::gelu;
  throw harness::ConfigError("unknown activation '" + text + "'");
}

}  // namespace nn

namespace harness {

std::string to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::poly_regression: return "poly_regression";
    case ProblemKind::cubic_supervised: return "cubic_supervised";
    case ProblemKind::gauss_supervised: return "gauss_supervised";
    case ProblemKind::heat_dkm: return "heat_dkm";
  }
  return "?";
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

std::string to_string(const LrSchedule& sched) {
  if (const auto* c = std::get_if<ConstantLr>(&sched)) return "constant:" + format_number(c->c);
  const auto& d = std::get<PolyDecayLr>(sched);
  return "poly:" + format_number(d.c) + ":" + format_number(d.p);
}

LrSchedule parse_schedule(const std::string& text) {
  const auto parts = split(trim(text), ':');
  LrSchedule sched;
  if (parts.size() == 2 && parts[0] == "constant") {
    sched = ConstantLr{parse_number<double>(parts[1], "learning rate")};
  } else if (parts.size() == 3 && parts[0] == "poly") {
    sched = PolyDecayLr{parse_number<double>(parts[1], "learning rate"), parse_number<double>(parts[2], "decay exponent")};
  } else {
    throw ConfigError("malformed schedule '" + text + "' (expected constant:c or poly:c:p)");
  }
  try {
    validate(sched);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return sched;
}

namespace {

ProblemKind parse_problem(const std::string& text) {
  for (auto k : {ProblemKind::poly_regression, ProblemKind::cubic_supervised, ProblemKind::gauss_supervised,
                 ProblemKind::heat_dkm}) {
    if (to_string(k) == trim(text)) return k;
  }
  throw ConfigError("unknown problem '" + text + "'");
}

OptimizerKind parse_optimizer(const std::string& text) {
  const std::string t = trim(text);
  if (t == "sgd") return OptimizerKind::sgd;
  if (t == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + text + "'");
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& text, F&& parse_one) {
  std::vector<T> out;
  if (trim(text).empty()) return out;
  for (const auto& item : split(text, ',')) out.push_back(parse_one(item));
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += fmt(items[i]);
  }
  return out;
}

void apply(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "preset") {
    cfg = preset(trim(value));
  } else if (key == "name") {
    cfg.name = trim(value);
  } else if (key == "problem") {
    cfg.problem = parse_problem(value);
  } else if (key == "optimizer") {
    cfg.optimizers = parse_list<OptimizerKind>(value, parse_optimizer);
  } else if (key == "averager") {
    cfg.averagers = parse_list<AveragerSpec>(value, [](const std::string& s) { return parse_averager(s); });
  } else if (key == "schedule") {
    cfg.schedule = parse_schedule(value);
  } else if (key == "batch_size") {
    cfg.batch_size = parse_number<Index>(value, "batch_size");
  } else if (key == "steps") {
    cfg.steps = parse_number<Index>(value, "steps");
  } else if (key == "seeds") {
    cfg.seeds = parse_list<std::uint64_t>(value, [](const std::string& s) {
      return parse_number<std::uint64_t>(s, "seed");
    });
  } else if (key == "eval_every") {
    cfg.eval_every = parse_number<Index>(value, "eval_every");
  } else if (key == "test_points") {
    cfg.test_points = parse_number<Index>(value, "test_points");
  } else if (key == "out_dir") {
    cfg.out_dir = trim(value);
  } else if (key == "hidden") {
    cfg.hidden = parse_list<Index>(value, [](const std::string& s) { return parse_number<Index>(s, "hidden width"); });
  } else if (key == "activation") {
    cfg.activation = nn::parse_activation(value);
  } else if (key == "alpha") {
    cfg.adam.alpha = parse_number<double>(value, "alpha");
  } else if (key == "beta") {
    cfg.adam.beta = parse_number<double>(value, "beta");
  } else if (key == "epsilon") {
    cfg.adam.epsilon = parse_number<double>(value, "epsilon");
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (name.empty() || name.find_first_of("/\\") != std::string::npos) {
    throw ConfigError("name must be non-empty and contain no path separators");
  }
  if (optimizers.empty()) throw ConfigError("at least one optimizer is required");
  if (averagers.empty()) throw ConfigError("at least one averager is required");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (steps < 1) throw ConfigError("steps must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (eval_every < 1) throw ConfigError("eval_every must be at least 1");
  if (steps % eval_every != 0) {
    throw ConfigError("eval_every (" + std::to_string(eval_every) + ") must divide steps (" + std::to_string(steps) + ")");
  }
  if (problem != ProblemKind::poly_regression && test_points < 1) throw ConfigError("test_points must be at least 1");
  for (Index h : hidden) {
    if (h < 1) throw ConfigError("hidden widths must be positive");
  }
  for (const auto& a : averagers) {
    if (a.kind == AveragerSpec::Kind::grouped && a.groups * a.group_size > steps) {
      throw ConfigError("grouped averager window " + to_string(a) + " exceeds the number of steps");
    }
  }
  try {
    avgadam::validate(schedule);
    HyperParams<double> hp = adam;
    hp.batch_size = batch_size;
    hp.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
  ExperimentConfig cfg = std::move(base);
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
    }
    try {
      apply(cfg, trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string to_config_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "name=" << cfg.name << '\n'
      << "problem=" << to_string(cfg.problem) << '\n'
      << "optimizer=" << join(cfg.optimizers, [](OptimizerKind k) { return to_string(k); }) << '\n'
      << "averager=" << join(cfg.averagers, [](const AveragerSpec& a) { return avgadam::to_string(a); }) << '\n'
      << "schedule=" << to_string(cfg.schedule) << '\n'
      << "batch_size=" << cfg.batch_size << '\n'
      << "steps=" << cfg.steps << '\n'
      << "seeds=" << join(cfg.seeds, [](std::uint64_t s) { return std::to_string(s); }) << '\n'
      << "eval_every=" << cfg.eval_every << '\n'
      << "test_points=" << cfg.test_points << '\n'
      << "out_dir=" << cfg.out_dir.string() << '\n'
      << "hidden=" << join(cfg.hidden, [](Index h) { return std::to_string(h); }) << '\n'
      << "activation=" << nn::to_string(cfg.activation) << '\n'
      << "alpha=" << format_number(cfg.adam.alpha) << '\n'
      << "beta=" << format_number(cfg.adam.beta) << '\n'
      << "epsilon=" << format_number(cfg.adam.epsilon) << '\n';
  return out.str();
}

// FNV-1a over the canonical text, excluding seeds and output location so
// that runs of the same experiment share a hash.
std::string config_hash(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.seeds.clear();
  c.out_dir.clear();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : to_config_text(c)) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Presets. Full presets use the published batch sizes and learning rates;
// "_desk" variants divide network batch sizes by 8 and steps by 5 and use
// 3 seeds. Polynomial regression keeps its batch size.

namespace {

ExperimentConfig base_preset(std::string name, ProblemKind problem) {
  ExperimentConfig cfg;
  cfg.name = std::move(name);
  cfg.problem = problem;
  cfg.seeds = {1, 2, 3, 4, 5};
  cfg.out_dir = "out/" + cfg.name;
  return cfg;
}

ExperimentConfig desk(ExperimentConfig cfg) {
  cfg.name += "_desk";
  cfg.out_dir = "out/" + cfg.name;
  if (cfg.problem != ProblemKind::poly_regression) cfg.batch_size /= 8;
  cfg.steps /= 5;
  cfg.eval_every = cfg.steps / 20;
  cfg.seeds = {1, 2, 3};
  return cfg;
}

const std::map<std::string, std::pair<std::string, ExperimentConfig (*)()>>& preset_table() {
  static const std::map<std::string, std::pair<std::string, ExperimentConfig (*)()>> table = {
      {"poly_regression",
       {"degree-25 polynomial fit of sin(pi x), batch 64, lr 1e-2; SGD vs Adam vs averaged Adam",
        [] {
          auto c = base_preset("poly_regression", ProblemKind::poly_regression);
          c.optimizers = {OptimizerKind::sgd, OptimizerKind::adam};
          c.averagers = {AveragerSpec::none(), AveragerSpec::partial(1000), AveragerSpec::ema(0.99),
                         AveragerSpec::ema(0.999)};
          c.schedule = ConstantLr{1e-2};
          c.batch_size = 64;
          c.steps = 100000;
          c.eval_every = 1000;
          c.hidden = {};
          return c;
        }}},
      {"cubic_supervised",
       {"6-d cubic target, ReLU 64-64 network, batch 256, lr 1e-2",
        [] {
          auto c = base_preset("cubic_supervised", ProblemKind::cubic_supervised);
          c.optimizers = {OptimizerKind::sgd, OptimizerKind::adam};
          c.averagers = {AveragerSpec::none(), AveragerSpec::grouped(10, 100), AveragerSpec::ema(0.99),
                         AveragerSpec::ema(0.999)};
          c.schedule = ConstantLr{1e-2};
          c.batch_size = 256;
          c.steps = 50000;
          c.eval_every = 500;
          c.hidden = {64, 64};
          c.activation = nn::Activation::relu;
          return c;
        }}},
      {"gauss_supervised",
       {"20-d Gaussian density with noisy targets, ReLU 50-100-50 network, batch 256, lr 1e-3",
        [] {
          auto c = base_preset("gauss_supervised", ProblemKind::gauss_supervised);
          c.optimizers = {OptimizerKind::adam};
          c.averagers = {AveragerSpec::none(), AveragerSpec::grouped(10, 100), AveragerSpec::ema(0.99),
                         AveragerSpec::ema(0.999)};
          c.schedule = ConstantLr{1e-3};
          c.batch_size = 256;
          c.steps = 50000;
          c.eval_every = 500;
          c.hidden = {50, 100, 50};
          c.activation = nn::Activation::relu;
          return c;
        }}},
      {"heat_dkm",
       {"10-d heat equation via deep Kolmogorov, GELU 50-100-50, batch 2048, constant lr 5e-4",
        [] {
          auto c = base_preset("heat_dkm", ProblemKind::heat_dkm);
          c.optimizers = {OptimizerKind::sgd, OptimizerKind::adam};
          c.averagers = {AveragerSpec::none(), AveragerSpec::grouped(10, 100), AveragerSpec::ema(0.99),
                         AveragerSpec::ema(0.999)};
          c.schedule = ConstantLr{5e-4};
          c.batch_size = 2048;
          c.steps = 50000;
          c.eval_every = 500;
          c.hidden = {50, 100, 50};
          c.activation = nn::Activation::gelu;
          return c;
        }}},
      {"heat_dkm_poly",
       {"as heat_dkm with decaying lr 5e-3 * n^(-1/4)",
        [] {
          auto c = preset("heat_dkm");
          c.name = "heat_dkm_poly";
          c.out_dir = "out/" + c.name;
          c.schedule = PolyDecayLr{5e-3, 0.25};
          return c;
        }}},
  };
  return table;
}

}  // namespace

std::vector<PresetInfo> list_presets() {
  std::vector<PresetInfo> out;
  for (const auto& [name, entry] : preset_table()) {
    out.push_back({name, entry.first});
    out.push_back({name + "_desk", "desk-scale " + name + " (network batch /8, steps /5, 3 seeds)"});
  }
  return out;
}

ExperimentConfig preset(const std::string& name) {
  const auto& table = preset_table();
  if (auto it = table.find(name); it != table.end()) return it->second.second();
  const std::string suffix = "_desk";
  if (name.size() > suffix.size() && name.ends_with(suffix)) {
    const auto base = name.substr(0, name.size() - suffix.size());
    if (auto it = table.find(base); it != table.end()) return desk(it->second.second());
  }
  throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace harness
}  // namespace avgadam
