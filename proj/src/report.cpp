#include "avgadam/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace avgadam::harness {

namespace {

std::string num(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string fixed(double x, int digits = 2) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

// --- CSV ---------------------------------------------------------------------

void write_csv(const RunRecord& record, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : record.rows) {
    out << r.step << ',' << num(r.train_loss) << ',' << num(r.test_error_raw) << ',' << num(r.test_error_averaged)
        << ',' << num(r.lr) << ',' << num(r.wallclock_ms) << '\n';
  }
}

void emit_csv(const RunRecord& record, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  write_csv(record, out);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<MetricRow> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw std::runtime_error("missing or unexpected CSV header");
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw std::runtime_error("CSV row has " + std::to_string(cells.size()) + " cells");
    auto parse = [](const std::string& s, auto& value) {
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
      if (ec != std::errc{} || ptr != s.data() + s.size()) throw std::runtime_error("bad CSV number '" + s + "'");
    };
    MetricRow r;
    parse(cells[0], r.step);
    parse(cells[1], r.train_loss);
    parse(cells[2], r.test_error_raw);
    parse(cells[3], r.test_error_averaged);
    parse(cells[4], r.lr);
    parse(cells[5], r.wallclock_ms);
    rows.push_back(r);
  }
  return rows;
}

std::vector<MetricRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_csv(in);
}

void emit_metadata(const RunRecord& record, const ExperimentConfig& cfg, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << "config_hash=" << record.config_hash << '\n'
      << "seed=" << record.seed << '\n'
      << "version=" << record.version << '\n'
      << "series=" << record.series() << '\n'
      << "status=" << (record.failed ? "failed" : "ok") << '\n';
  if (record.failed) out << "failure=" << record.failure << '\n';
  out << "test_error="
      << (cfg.problem == ProblemKind::poly_regression
              ? "L2([-1,1], uniform) distance to sin(pi x), 256-point Gauss-Legendre"
              : "relative L2 error on a fixed Monte Carlo test set, noise-free targets")
      << '\n'
      << "train_loss=mean minibatch loss since the previous row (row 0: first minibatch at the initial point)\n";
  out << to_config_text(cfg);
}

// --- SVG -----------------------------------------------------------------------

namespace {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (step, median error)
};

std::vector<Series> collect_series(std::span<const RunRecord> records) {
  // label -> step -> errors across seeds
  std::vector<std::string> order;
  std::map<std::string, std::map<std::int64_t, std::vector<double>>> values;
  std::map<std::pair<std::string, std::uint64_t>, bool> raw_seen;
  auto add = [&](const std::string& label, std::int64_t step, double err) {
    if (!values.count(label)) order.push_back(label);
    values[label][step].push_back(err);
  };
  for (const auto& rec : records) {
    const std::string opt = to_string(rec.optimizer);
    const bool take_raw = !raw_seen[{opt, rec.seed}];
    raw_seen[{opt, rec.seed}] = true;
    for (const auto& row : rec.rows) {
      if (take_raw) add(opt, row.step, row.test_error_raw);
      if (rec.averager.kind != AveragerSpec::Kind::none) add(rec.series(), row.step, row.test_error_averaged);
    }
  }
  std::vector<Series> out;
  for (const auto& label : order) {
    Series s{label, {}};
    for (const auto& [step, errs] : values[label]) s.points.emplace_back(static_cast<double>(step), median(errs));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

void write_svg(std::span<const RunRecord> records, const std::string& title, std::ostream& out) {
  if (records.empty()) throw std::invalid_argument("no records to plot");
  const auto series = collect_series(records);

  constexpr double width = 820, height = 520;
  constexpr double left = 80, right = 220, top = 50, bottom = 60;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  double max_step = 1;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      max_step = std::max(max_step, x);
      if (y > 0 && std::isfinite(y)) {
        lo = std::min(lo, y);
        hi = std::max(hi, y);
      }
    }
  }
  if (!std::isfinite(lo)) {
    lo = 1e-3;
    hi = 1;
  }
  const double dec_lo = std::floor(std::log10(lo));
  double dec_hi = std::ceil(std::log10(hi));
  if (dec_hi <= dec_lo) dec_hi = dec_lo + 1;

  auto px = [&](double step) { return left + plot_w * step / max_step; };
  auto py = [&](double err) {
    const double e = std::clamp(std::log10(std::max(err, 1e-300)), dec_lo, dec_hi);
    return top + plot_h * (dec_hi - e) / (dec_hi - dec_lo);
  };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n"
      << "<text x=\"" << left << "\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\">" << xml_escape(title)
      << "</text>\n"
      << "<g font-family=\"sans-serif\" font-size=\"11\" stroke-width=\"1\">\n"
      << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double d = dec_lo; d <= dec_hi; d += 1) {
    const double y = py(std::pow(10.0, d));
    out << "<line x1=\"" << left << "\" y1=\"" << fixed(y) << "\" x2=\"" << left + plot_w << "\" y2=\"" << fixed(y)
        << "\" stroke=\"#dddddd\"/>\n"
        << "<text x=\"" << left - 8 << "\" y=\"" << fixed(y + 4) << "\" text-anchor=\"end\">1e" << d << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double step = max_step * i / 4;
    out << "<text x=\"" << fixed(px(step)) << "\" y=\"" << top + plot_h + 18 << "\" text-anchor=\"middle\">"
        << static_cast<long long>(std::llround(step)) << "</text>\n";
  }
  out << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 15
      << "\" text-anchor=\"middle\">step</text>\n"
      << "<text x=\"20\" y=\"" << top + plot_h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
      << top + plot_h / 2 << ")\">test error (median over seeds)</text>\n"
      << "</g>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = palette[i % std::size(palette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" data-series=\""
        << xml_escape(series[i].label) << "\" points=\"";
    for (std::size_t k = 0; k < series[i].points.size(); ++k) {
      const auto [x, y] = series[i].points[k];
      out << (k ? " " : "") << fixed(px(x)) << ',' << fixed(py(y));
    }
    out << "\"/>\n";
    const double ly = top + 10 + 18.0 * static_cast<double>(i);
    out << "<line x1=\"" << left + plot_w + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + plot_w + 40 << "\" y2=\""
        << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << left + plot_w + 46 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(series[i].label) << "</text>\n";
  }
  out << "</svg>\n";
}

void emit_svg(std::span<const RunRecord> records, const std::string& title, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  write_svg(records, title, out);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<std::filesystem::path> emit_outputs(const ExperimentConfig& cfg, std::span<const RunRecord> records) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + cfg.out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  for (const auto& rec : records) {
    const auto stem = cfg.out_dir / (cfg.name + "_" + rec.file_stem());
    emit_csv(rec, stem.string() + ".csv");
    emit_metadata(rec, cfg, stem.string() + ".meta");
    written.push_back(stem.string() + ".csv");
    written.push_back(stem.string() + ".meta");
  }
  if (!records.empty()) {
    const auto svg = cfg.out_dir / (cfg.name + ".svg");
    emit_svg(records, cfg.name, svg);
    written.push_back(svg);
  }
  return written;
}

}  // namespace avgadam::harness
