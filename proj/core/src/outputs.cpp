#include "abcsmooth/outputs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "abcsmooth/errors.hpp"

namespace abcsmooth {

namespace fs = std::filesystem;

std::string format_real(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << value;
  return os.str();
}

namespace {

std::string format_epsilon(const std::optional<double>& eps) {
  return eps ? format_real(*eps) : "NA";
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw OutputError("cannot write " + path.string());
  return os;
}

void check_written(std::ofstream& os, const fs::path& path) {
  os.flush();
  if (!os) throw OutputError("write failed for " + path.string());
}

template <class Writer>
void write_file(const fs::path& path, Writer&& writer) {
  auto os = open_output(path);
  writer(os);
  check_written(os, path);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_real(const std::string& s) {
  if (s == "nan") return std::nan("");
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw ConfigError("records: not a number: '" + s + "'");
  }
}

// Minimal line-plot writer: linear axes, optional error bars, legend on the right.
struct Series {
  std::string label;
  std::vector<double> x, y, err;
};

std::string fixed(double v, int digits = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string tick_label(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

void write_svg(std::ostream& os, const std::vector<Series>& series, const std::string& title,
               const std::string& xlabel, const std::string& ylabel) {
  constexpr double width = 720, height = 440, left = 80, right = 180, top = 40, bottom = 60;
  constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                     "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      const double e = s.err.empty() || !std::isfinite(s.err[i]) ? 0.0 : s.err[i];
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i] - e);
      y1 = std::max(y1, s.y[i] + e);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  y0 = std::min(y0, 0.0);
  if (x1 == x0) x0 -= 1, x1 += 1;
  if (y1 == y0) y1 = y0 + 1;
  y1 += 0.05 * (y1 - y0);

  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << fixed(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
     << title << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = x0 + (x1 - x0) * k / 5.0, yv = y0 + (y1 - y0) * k / 5.0;
    os << "<line x1=\"" << fixed(px(xv)) << "\" y1=\"" << fixed(top + ph) << "\" x2=\"" << fixed(px(xv))
       << "\" y2=\"" << fixed(top + ph + 5) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << fixed(px(xv)) << "\" y=\"" << fixed(top + ph + 18)
       << "\" text-anchor=\"middle\">" << tick_label(xv) << "</text>\n";
    os << "<line x1=\"" << fixed(left - 5) << "\" y1=\"" << fixed(py(yv)) << "\" x2=\"" << fixed(left)
       << "\" y2=\"" << fixed(py(yv)) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << fixed(left - 8) << "\" y=\"" << fixed(py(yv) + 4)
       << "\" text-anchor=\"end\">" << tick_label(yv) << "</text>\n";
  }
  os << "<text x=\"" << fixed(left + pw / 2) << "\" y=\"" << fixed(height - 15)
     << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  os << "<text transform=\"translate(20," << fixed(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
     << ylabel << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* colour = palette[si % std::size(palette)];
    std::string points;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      points += fixed(px(s.x[i])) + "," + fixed(py(s.y[i])) + " ";
      if (!s.err.empty() && std::isfinite(s.err[i]) && s.err[i] > 0) {
        os << "<line x1=\"" << fixed(px(s.x[i])) << "\" y1=\"" << fixed(py(s.y[i] - s.err[i]))
           << "\" x2=\"" << fixed(px(s.x[i])) << "\" y2=\"" << fixed(py(s.y[i] + s.err[i]))
           << "\" stroke=\"" << colour << "\"/>\n";
      }
      os << "<circle cx=\"" << fixed(px(s.x[i])) << "\" cy=\"" << fixed(py(s.y[i]))
         << "\" r=\"3\" fill=\"" << colour << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\""
       << points << "\"/>\n";
    const double ly = top + 16 + 18 * static_cast<double>(si);
    os << "<line x1=\"" << fixed(left + pw + 12) << "\" y1=\"" << fixed(ly - 4) << "\" x2=\""
       << fixed(left + pw + 32) << "\" y2=\"" << fixed(ly - 4) << "\" stroke=\"" << colour
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << fixed(left + pw + 38) << "\" y=\"" << fixed(ly) << "\">" << s.label
       << "</text>\n";
  }
  os << "</svg>\n";
}

std::size_t latest_time(std::span<const ErrorRecord> records) {
  std::size_t t = 0;
  for (const auto& r : records) t = std::max(t, r.time);
  return t;
}

bool several_times(std::span<const ErrorRecord> records) {
  for (const auto& r : records) {
    if (r.time != records.front().time) return true;
  }
  return false;
}

}  // namespace

void write_records(std::ostream& os, std::span<const ErrorRecord> records) {
  os << kRecordsHeader << '\n';
  for (const auto& r : records) {
    os << r.method << ',' << r.particles << ',' << format_epsilon(r.epsilon) << ',' << r.replicate
       << ',' << format_real(r.error) << ',' << format_real(r.walltime_ms) << ','
       << (r.degenerate ? 1 : 0) << '\n';
  }
}

void write_records_by_time(std::ostream& os, std::span<const ErrorRecord> records) {
  os << "method,N,epsilon,n,replicate,error,walltime_ms,degenerate_flag\n";
  for (const auto& r : records) {
    os << r.method << ',' << r.particles << ',' << format_epsilon(r.epsilon) << ',' << r.time << ','
       << r.replicate << ',' << format_real(r.error) << ',' << format_real(r.walltime_ms) << ','
       << (r.degenerate ? 1 : 0) << '\n';
  }
}

void write_summary(std::ostream& os, std::span<const SummaryRow> summaries) {
  os << kSummaryHeader << '\n';
  for (const auto& s : summaries) {
    os << s.method << ',' << s.particles << ',' << format_epsilon(s.epsilon) << ',' << s.time << ','
       << s.replicates << ',' << s.degenerate << ',' << format_real(s.mean_error) << ','
       << format_real(s.se_error) << ',' << format_real(s.estimate_se) << ','
       << format_real(s.mean_walltime_ms) << '\n';
  }
}

void write_estimates(std::ostream& os, std::span<const ErrorRecord> records) {
  os << "method,N,epsilon,n,replicate,component,estimate,truth\n";
  for (const auto& r : records) {
    for (std::size_t k = 0; k < r.estimate.size(); ++k) {
      os << r.method << ',' << r.particles << ',' << format_epsilon(r.epsilon) << ',' << r.time
         << ',' << r.replicate << ',' << k << ',' << format_real(r.estimate[k]) << ','
         << format_real(r.truth[k]) << '\n';
    }
  }
}

void write_truth(std::ostream& os, const Truth& truth) {
  os << "source,n,component,value,se\n";
  for (std::size_t t = 0; t < truth.times.size(); ++t) {
    for (std::size_t k = 0; k < truth.values[t].size(); ++k) {
      os << truth_source_name(truth.source) << ',' << truth.times[t] << ',' << k << ','
         << format_real(truth.values[t][k]) << ',' << format_real(truth.standard_errors[t][k]) << '\n';
    }
  }
}

void write_decomposition(std::ostream& os, std::span<const DecompositionRow> rows) {
  os << "method,N,epsilon,n,abc_error,mean_smc_error,se_smc_error,mean_total_error,se_total_error\n";
  for (const auto& d : rows) {
    os << d.method << ',' << d.particles << ',' << format_real(d.epsilon) << ',' << d.time << ','
       << format_real(d.abc_error) << ',' << format_real(d.mean_smc_error) << ','
       << format_real(d.se_smc_error) << ',' << format_real(d.mean_total_error) << ','
       << format_real(d.se_total_error) << '\n';
  }
}

std::vector<ErrorRecord> read_records(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("records: empty input");
  const bool with_time = line == "method,N,epsilon,n,replicate,error,walltime_ms,degenerate_flag";
  if (!with_time && line != kRecordsHeader) throw ConfigError("records: unexpected header '" + line + "'");
  const std::size_t columns = with_time ? 8 : 7;
  std::vector<ErrorRecord> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != columns) {
      throw ConfigError("records line " + std::to_string(line_no) + ": expected " +
                        std::to_string(columns) + " fields");
    }
    std::size_t c = 0;
    ErrorRecord r;
    r.method = f[c++];
    r.particles = static_cast<std::size_t>(std::stoull(f[c++]));
    const auto& eps = f[c++];
    if (eps != "NA") r.epsilon = parse_real(eps);
    if (with_time) r.time = static_cast<std::size_t>(std::stoull(f[c++]));
    r.replicate = static_cast<std::size_t>(std::stoull(f[c++]));
    r.error = parse_real(f[c++]);
    r.walltime_ms = parse_real(f[c++]);
    r.degenerate = f[c++] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

void write_figure_vs_particles(std::ostream& os, std::span<const SummaryRow> summaries,
                               FigureValue value, const std::string& title) {
  std::vector<Series> series;
  std::map<std::string, std::size_t> index;
  for (const auto& s : summaries) {
    auto [it, inserted] = index.try_emplace(s.method, series.size());
    if (inserted) series.push_back({s.method, {}, {}, {}});
    auto& ser = series[it->second];
    ser.x.push_back(static_cast<double>(s.particles));
    if (value == FigureValue::mean_error) {
      ser.y.push_back(s.mean_error);
      ser.err.push_back(s.se_error);
    } else {
      ser.y.push_back(s.se_error);
    }
  }
  write_svg(os, series, title, "N",
            value == FigureValue::mean_error ? "mean error (+/- SE)" : "replicate SE of error");
}

void write_figure_vs_time(std::ostream& os, std::span<const SummaryRow> summaries,
                          const std::string& title) {
  std::vector<Series> series;
  std::map<std::pair<std::string, std::size_t>, std::size_t> index;
  for (const auto& s : summaries) {
    auto [it, inserted] = index.try_emplace({s.method, s.particles}, series.size());
    if (inserted) series.push_back({s.method + " N=" + std::to_string(s.particles), {}, {}, {}});
    auto& ser = series[it->second];
    ser.x.push_back(static_cast<double>(s.time));
    ser.y.push_back(s.mean_error);
    ser.err.push_back(s.se_error);
  }
  write_svg(os, series, title, "n", "mean error (+/- SE)");
}

void emit_outputs(std::span<const ErrorRecord> records, std::span<const SummaryRow> summaries,
                  const fs::path& destination, const OutputOptions& options) {
  if (records.empty()) throw PreconditionError("emit_outputs: no records");
  std::error_code ec;
  fs::create_directories(destination, ec);
  if (ec || !fs::is_directory(destination)) {
    throw OutputError("cannot create output directory " + destination.string());
  }

  const std::size_t last = latest_time(records);
  std::vector<ErrorRecord> final_records;
  for (const auto& r : records) {
    if (r.time == last) final_records.push_back(r);
  }
  write_file(destination / "records.csv", [&](std::ostream& os) { write_records(os, final_records); });
  if (several_times(records)) {
    write_file(destination / "records_time.csv",
               [&](std::ostream& os) { write_records_by_time(os, records); });
  }
  write_file(destination / "summary.csv", [&](std::ostream& os) { write_summary(os, summaries); });

  if (!options.figures || summaries.empty()) return;
  std::vector<SummaryRow> at_last;
  for (const auto& s : summaries) {
    if (s.time == last) at_last.push_back(s);
  }
  write_file(destination / "error_vs_N.svg", [&](std::ostream& os) {
    write_figure_vs_particles(os, at_last, FigureValue::mean_error,
                              "Mean error versus N at n = " + std::to_string(last));
  });
  write_file(destination / "variability_vs_N.svg", [&](std::ostream& os) {
    write_figure_vs_particles(os, at_last, FigureValue::se_error,
                              "Replicate SE versus N at n = " + std::to_string(last));
  });
  if (several_times(records)) {
    write_file(destination / "error_vs_n.svg", [&](std::ostream& os) {
      write_figure_vs_time(os, summaries, "Mean error versus time");
    });
  }
}

void emit_experiment(const ExperimentResult& result, const fs::path& destination,
                     const OutputOptions& options) {
  emit_outputs(result.records, result.summaries, destination, options);
  write_file(destination / "truth.csv", [&](std::ostream& os) { write_truth(os, result.truth); });
  write_file(destination / "estimates.csv",
             [&](std::ostream& os) { write_estimates(os, result.records); });
  if (!result.calibrations.empty()) {
    write_file(destination / "epsilon.csv", [&](std::ostream& os) {
      os << "N,epsilon\n";
      for (const auto& [n, cal] : result.calibrations) os << n << ',' << format_real(cal.epsilon) << '\n';
    });
    for (const auto& [n, cal] : result.calibrations) {
      write_file(destination / ("calibration_N" + std::to_string(n) + ".csv"),
                 [&](std::ostream& os) { write_calibration_log(os, cal.log); });
    }
  }
  if (!result.decomposition.empty()) {
    write_file(destination / "decomposition.csv",
               [&](std::ostream& os) { write_decomposition(os, result.decomposition); });
  }
  for (const auto& c : result.chains) {
    const auto name = "chain_" + c.method + "_N" + std::to_string(c.particles) + "_r" +
                      std::to_string(c.replicate) + ".csv";
    write_file(destination / name, [&](std::ostream& os) { write_chain(os, c.chain); });
  }
}

}  // namespace abcsmooth
